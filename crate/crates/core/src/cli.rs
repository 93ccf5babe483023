//! Experiment runner behind the `egns` binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::assembly::Problem;
use crate::config::{ConfigError, MeshKind, RunConfig};
use crate::eg_space::{EGField, PressureField};
use crate::error::{MeshError, SolverError, WriteError};
use crate::mesh::{build_rect_uniform, build_step_domain, Mesh2D, Rect};
use crate::quadrature::quadrature_rule;
use crate::solver::{nu_continuation, Solution, SolveReport};
use crate::verification::{
    case_cavity, case_errors, case_noflow, case_step, case_vortex, convergence_table,
    recirculation_detect, CavityForce, StepInlet, STEP_EDDY_REGION,
};
use crate::vtk::write_vtk;

#[derive(Debug, Parser)]
#[command(name = "egns", version, about = "Enriched Galerkin solver for steady 2D Navier-Stokes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Convergence study on the manufactured vortex.
    Converge(CommonArgs),
    /// Hydrostatic no-flow test.
    Noflow(CommonArgs),
    /// Lid-driven cavity with and without a gradient body force.
    Cavity(CommonArgs),
    /// Backward-facing step.
    Step(CommonArgs),
    /// Generic problem from the `[boundary]` section.
    Run(CommonArgs),
}

#[derive(Debug, Clone, PartialEq, Eq, clap::Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`, default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Single-threaded assembly.
    #[arg(long)]
    pub serial: bool,
}

impl Command {
    pub fn args(&self) -> &CommonArgs {
        match self {
            Command::Converge(a)
            | Command::Noflow(a)
            | Command::Cavity(a)
            | Command::Step(a)
            | Command::Run(a) => a,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Write(#[from] WriteError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    /// 1 for solver failures and failed checks, 2 for configuration, mesh
    /// and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(SolverError::InvalidConfig(_)) => 2,
            CliError::Solver(SolverError::Fem(crate::error::FemError::UnknownTag(_))) => 2,
            CliError::Solver(_) | CliError::Check(_) => 1,
            CliError::Config(_) | CliError::Mesh(_) | CliError::Write(_) => 2,
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), WriteError> {
    std::fs::write(path, text).map_err(|source| WriteError {
        path: path.to_path_buf(),
        source,
    })
}

/// Everything a command needs besides the parsed configuration.
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    /// Lines printed to stdout at the end.
    pub report: String,
}

impl Context {
    pub fn new(config: RunConfig, out: Option<PathBuf>) -> Result<Self, CliError> {
        let out = out
            .or_else(|| config.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out).map_err(|source| WriteError {
            path: out.clone(),
            source,
        })?;
        Ok(Self {
            config,
            out,
            report: String::new(),
        })
    }

    fn line(&mut self, s: impl AsRef<str>) {
        log::info!("{}", s.as_ref());
        self.report.push_str(s.as_ref());
        self.report.push('\n');
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_logs(&self, name: &str, reports: &[SolveReport]) -> Result<(), WriteError> {
        let text: String = reports.iter().map(SolveReport::to_log).collect();
        write_file(&self.path(name), &text)
    }

    fn export_matrices(&self, problem: &Problem) -> Result<(), CliError> {
        if self.config.output.matrix_market {
            let system = problem
                .prepare()
                .map_err(SolverError::from)?
                .linearize(&EGField::zeros(&problem.mesh))
                .map_err(SolverError::from)?;
            system
                .export_matrix_market(&self.out)
                .map_err(|source| WriteError {
                    path: self.out.clone(),
                    source,
                })?;
        }
        Ok(())
    }

    fn solve(&mut self, problem: &Problem, schedule: &[f64]) -> Result<(Solution, Vec<SolveReport>), CliError> {
        let newton = self.config.newton()?;
        let result = nu_continuation(problem, schedule, &newton, None)?;
        for r in &result.1 {
            for w in &r.warnings {
                self.line(format!("warning: {w}"));
            }
        }
        Ok(result)
    }
}

fn unit_square(n: usize) -> Result<Arc<Mesh2D>, MeshError> {
    Ok(Arc::new(build_rect_uniform(n, n, Rect::UNIT)?))
}

fn with_quadrature(mut problem: Problem, ctx: &Context) -> Result<Problem, ConfigError> {
    problem.quadrature = ctx.config.quadrature()?;
    problem.convection = !ctx.config.physics.stokes;
    Ok(problem)
}

pub fn cmd_converge(ctx: &mut Context) -> Result<(), CliError> {
    let levels = ctx.config.levels(&[16, 32, 64, 128])?;
    let nu = ctx.config.viscosity(1.0)?;
    let schedule = ctx.config.schedule(nu)?;
    let case = case_vortex(nu);
    let (mut hs, mut errors, mut logs) = (Vec::new(), Vec::new(), Vec::new());
    let mut failure = None;
    for &n in &levels {
        let mesh = unit_square(n)?;
        let problem = with_quadrature(case.problem(mesh.clone()), ctx)?;
        match ctx.solve(&problem, &schedule) {
            Ok(((u, p), reports)) => {
                let e = case_errors(&case, &mesh, (&u, &p)).map_err(SolverError::from)?;
                let its: Vec<String> = reports.iter().map(|r| r.iterations.to_string()).collect();
                ctx.line(format!(
                    "h = 1/{n}: |u-u0| = {:.4e}, |u-u0|_1 = {:.4e}, |p-ph| = {:.4e} (Newton iterations {})",
                    e.l2_velocity,
                    e.h1_velocity,
                    e.l2_pressure,
                    its.join("+")
                ));
                hs.push(1.0 / n as f64);
                errors.push(e.as_array());
                logs.extend(reports);
            }
            Err(e) => {
                ctx.line(format!("h = 1/{n}: {e}"));
                failure = Some(e);
                break;
            }
        }
    }
    let table = convergence_table(&hs, &errors);
    write_file(&ctx.path("convergence.csv"), &table.to_csv())?;
    ctx.write_logs("newton.log", &logs)?;
    ctx.report.push_str(&table.to_csv());
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn cmd_noflow(ctx: &mut Context) -> Result<(), CliError> {
    let n = ctx.config.single_level(32)?;
    let ra = ctx.config.physics.ra.unwrap_or(1000.0);
    let threshold = ctx.config.physics.noflow_threshold.unwrap_or(1e-9 * ra);
    let nu = ctx.config.viscosity(1.0)?;
    let mut case = case_noflow(ra);
    case.nu = nu;
    let mesh = unit_square(n)?;
    let problem = with_quadrature(case.problem(mesh.clone()), ctx)?;
    ctx.export_matrices(&problem)?;
    let schedule = ctx.config.schedule(nu)?;
    let ((u, p), reports) = ctx.solve(&problem, &schedule)?;
    ctx.write_logs("newton.log", &reports)?;
    write_vtk(&mesh, &u, &p, ctx.path("noflow.vtk"))?;
    let max_x = u.vertex_values.iter().map(|v| v[0].abs()).fold(0.0, f64::max);
    let max_y = u.vertex_values.iter().map(|v| v[1].abs()).fold(0.0, f64::max);
    let speed = u.max_vertex_speed();
    ctx.line(format!("Ra = {ra}, h = 1/{n}, nu = {nu}"));
    ctx.line(format!("max |u0| = {speed:.3e} (|u0x| {max_x:.3e}, |u0y| {max_y:.3e})"));
    ctx.line(format!("max |ub| = {:.3e}", u.max_abs_edge()));
    if speed <= threshold {
        ctx.line(format!("PASS: max |u0| <= {threshold:.1e}"));
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "max |u0| = {speed:.3e} exceeds threshold {threshold:.1e}"
        )))
    }
}

/// `‖a0 − b0‖ / ‖a0‖` over the continuous velocity parts.
pub fn relative_velocity_difference(mesh: &Mesh2D, a: &EGField, b: &EGField) -> f64 {
    let rule = quadrature_rule(2).expect("degree-2 rule");
    let (mut d, mut n) = (0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangle(t);
        for (l, w) in rule.iter() {
            let mut va = [0.0; 2];
            let mut vb = [0.0; 2];
            for k in 0..3 {
                for c in 0..2 {
                    va[c] += l[k] * a.vertex_values[tri[k]][c];
                    vb[c] += l[k] * b.vertex_values[tri[k]][c];
                }
            }
            let wa = w * mesh.area(t);
            d += wa * ((va[0] - vb[0]).powi(2) + (va[1] - vb[1]).powi(2));
            n += wa * (va[0] * va[0] + va[1] * va[1]);
        }
    }
    if d == 0.0 {
        0.0
    } else {
        (d / n).sqrt()
    }
}

pub fn cmd_cavity(ctx: &mut Context) -> Result<(), CliError> {
    let n = ctx.config.single_level(32)?;
    let nu = ctx.config.viscosity(1.0)?;
    let scale = ctx.config.physics.force_scale.unwrap_or(1e6);
    let schedule = ctx.config.schedule(nu)?;
    let mesh = unit_square(n)?;
    let f2 = CavityForce::Gradient { scale };
    let p1 = with_quadrature(case_cavity(mesh.clone(), nu, CavityForce::Zero), ctx)?;
    let p2 = with_quadrature(case_cavity(mesh.clone(), nu, f2), ctx)?;
    ctx.export_matrices(&p1)?;
    let ((u1, q1), r1) = ctx.solve(&p1, &schedule)?;
    let ((u2, q2), r2) = ctx.solve(&p2, &schedule)?;
    ctx.write_logs("newton_f1.log", &r1)?;
    ctx.write_logs("newton_f2.log", &r2)?;
    write_vtk(&mesh, &u1, &q1, ctx.path("cavity_f1.vtk"))?;
    write_vtk(&mesh, &u2, &q2, ctx.path("cavity_f2.vtk"))?;
    let du = EGField::from_dofs(
        &mesh,
        &u2.to_dofs().iter().zip(u1.to_dofs()).map(|(a, b)| a - b).collect::<Vec<_>>(),
    );
    let dp = PressureField {
        values: q2.values.iter().zip(&q1.values).map(|(a, b)| a - b).collect(),
    };
    write_vtk(&mesh, &du, &dp, ctx.path("cavity_diff.vtk"))?;
    let rel = relative_velocity_difference(&mesh, &u1, &u2);
    // the pressure should absorb the potential (scale/3)(x³ + y³)
    let rule = quadrature_rule(3).expect("degree-3 rule");
    let psi: Vec<f64> = (0..mesh.num_triangles())
        .map(|t| {
            rule.iter()
                .map(|(l, w)| {
                    let [x, y] = mesh.map_barycentric(t, l);
                    w * scale / 3.0 * (x * x * x + y * y * y)
                })
                .sum()
        })
        .collect();
    let psi = PressureField { values: psi };
    let psi = psi.shifted(-psi.integral(&mesh) / mesh.total_area());
    let dev = PressureField {
        values: dp.values.iter().zip(&psi.values).map(|(a, b)| a - b).collect(),
    };
    let norm = |f: &PressureField| f.values.iter().enumerate().map(|(t, v)| mesh.area(t) * v * v).sum::<f64>().sqrt();
    let pdev = if norm(&psi) > 0.0 { norm(&dev) / norm(&psi) } else { norm(&dev) };
    ctx.line(format!("h = 1/{n}, nu = {nu}, force scale {scale:e}"));
    ctx.line(format!("relative L2 velocity difference: {rel:.3e}"));
    ctx.line(format!("pressure difference vs projected potential (relative): {pdev:.3e}"));
    Ok(())
}

pub fn cmd_step(ctx: &mut Context) -> Result<(), CliError> {
    if ctx.config.mesh.kind != MeshKind::UnitSquare && ctx.config.mesh.kind != MeshKind::Step {
        return Err(ConfigError::Invalid("the step experiment builds its own mesh".into()).into());
    }
    let h = ctx.config.mesh.h.unwrap_or(0.25);
    let mesh = Arc::new(build_step_domain(h)?);
    let nu = ctx.config.viscosity(0.01)?;
    let inlet: StepInlet = ctx
        .config
        .physics
        .inlet
        .map(Into::into)
        .unwrap_or(StepInlet::Parabolic);
    let schedule = ctx.config.schedule(nu)?;
    let problem = with_quadrature(case_step(mesh.clone(), 1.0 / nu, inlet), ctx)?;
    ctx.export_matrices(&problem)?;
    let ((u, p), reports) = ctx.solve(&problem, &schedule)?;
    ctx.write_logs("newton.log", &reports)?;
    write_vtk(&mesh, &u, &p, ctx.path("step.vtk"))?;
    let rc = recirculation_detect(&mesh, &u, STEP_EDDY_REGION).map_err(SolverError::from)?;
    ctx.line(format!(
        "Re = {}, inlet {inlet:?}, h = {}, {} Newton iterations",
        1.0 / nu,
        mesh.h() / 2f64.sqrt(),
        reports.iter().map(|r| r.iterations).sum::<usize>()
    ));
    ctx.line(format!(
        "recirculation behind step: {} (min u0x = {:.4e})",
        rc.detected, rc.min_ux
    ));
    if let Some(x) = reversed_flow_extent(&mesh, &u) {
        ctx.line(format!("reversed flow near the lower wall extends to x = {x:.3}"));
    }
    Ok(())
}

/// Largest `x > 0` of the lowest interior vertex row with `u0x < 0`, a
/// rough indicator of the eddy length.
fn reversed_flow_extent(mesh: &Mesh2D, u: &EGField) -> Option<f64> {
    let y_row = mesh
        .vertices()
        .iter()
        .map(|p| p[1])
        .filter(|&y| y > 1e-12)
        .fold(f64::INFINITY, f64::min);
    mesh.vertices()
        .iter()
        .zip(&u.vertex_values)
        .filter(|(p, v)| (p[1] - y_row).abs() < 1e-12 && p[0] > 0.0 && v[0] < 0.0)
        .map(|(p, _)| p[0])
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
}

pub fn cmd_run(ctx: &mut Context) -> Result<(), CliError> {
    let mesh = Arc::new(ctx.config.build_mesh(16, 0.25)?);
    let nu = ctx.config.viscosity(1.0)?;
    let schedule = ctx.config.schedule(nu)?;
    let problem = ctx.config.custom_problem(mesh.clone(), nu)?;
    ctx.export_matrices(&problem)?;
    let ((u, p), reports) = ctx.solve(&problem, &schedule)?;
    ctx.write_logs("newton.log", &reports)?;
    write_vtk(&mesh, &u, &p, ctx.path("run.vtk"))?;
    ctx.line(format!(
        "{}: nu = {nu:e}, {} vertices, {} triangles, {} Newton iterations",
        ctx.config.name.clone().unwrap_or_else(|| "run".into()),
        mesh.num_vertices(),
        mesh.num_triangles(),
        reports.iter().map(|r| r.iterations).sum::<usize>()
    ));
    Ok(())
}

fn configure_threads(serial: bool) {
    let threads = if serial {
        Some(1)
    } else {
        std::env::var("EGNS_THREADS").ok().and_then(|s| s.parse::<usize>().ok())
    };
    if let Some(n) = threads {
        // the global pool can only be configured once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Runs one command; returns the text report.
pub fn execute(command: Command) -> Result<String, CliError> {
    let args = command.args();
    configure_threads(args.serial);
    let config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut ctx = Context::new(config, args.out.clone())?;
    let result = match command {
        Command::Converge(_) => cmd_converge(&mut ctx),
        Command::Noflow(_) => cmd_noflow(&mut ctx),
        Command::Cavity(_) => cmd_cavity(&mut ctx),
        Command::Step(_) => cmd_step(&mut ctx),
        Command::Run(_) => cmd_run(&mut ctx),
    };
    let mut report = ctx.report;
    if let Err(e) = &result {
        let _ = writeln!(report, "error: {e}");
    }
    let _ = write_file(&ctx.out.join("report.txt"), &report);
    result.map(|_| report)
}

/// Parses arguments, runs, prints and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

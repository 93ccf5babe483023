//! Direct saddle-point solves, Newton iteration and viscosity continuation.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::assembly::{Problem, SaddleSystem};
use crate::eg_space::{EGField, PressureField};
use crate::error::SolverError;
use crate::mesh::Mesh2D;
use crate::sparse::{SparseMatrix, TripletBuilder};

pub type Solution = (EGField, PressureField);

/// Indices of the unknowns kept in the factorized system.
struct Layout {
    /// Global velocity DOF → position among the unknowns.
    velocity: Vec<Option<usize>>,
    free: Vec<usize>,
    num_pressure: usize,
    multiplier: bool,
}

impl Layout {
    fn new(system: &SaddleSystem) -> Self {
        let mut velocity = vec![None; system.dof_map.len()];
        let mut free = Vec::new();
        for (dof, slot) in velocity.iter_mut().enumerate() {
            if system.dof_map.is_free(dof) {
                *slot = Some(free.len());
                free.push(dof);
            }
        }
        Self {
            velocity,
            free,
            num_pressure: system.b.nrows(),
            multiplier: system.mean_constraint.is_some(),
        }
    }

    fn pressure(&self, t: usize) -> usize {
        self.free.len() + t
    }

    fn size(&self) -> usize {
        self.free.len() + self.num_pressure + usize::from(self.multiplier)
    }
}

/// `[A, −Bᵀ, 0; B, 0, e₀; 0, e₀ᵀ, 0]` restricted to free velocity unknowns.
///
/// When the pressure is only determined up to a constant, the extra
/// row fixes the first pressure and the matching column carries a scalar
/// multiplier that absorbs any incompatibility of the data. The zero-mean
/// representative is recovered afterwards by a shift. A row of element
/// areas would do the same in one step, but it is dense and destroys the
/// sparsity of the factors.
fn saddle_matrix(system: &SaddleSystem, layout: &Layout) -> SparseMatrix {
    let n = layout.size();
    let mut k = TripletBuilder::with_capacity(n, n, system.a.nnz() + 2 * system.b.nnz());
    for (r, c, v) in system.a.iter() {
        if let (Some(i), Some(j)) = (layout.velocity[r], layout.velocity[c]) {
            k.push(i, j, v);
        }
    }
    for (t, c, v) in system.b.iter() {
        if let Some(j) = layout.velocity[c] {
            k.push(j, layout.pressure(t), -v);
            k.push(layout.pressure(t), j, v);
        }
    }
    if system.mean_constraint.is_some() {
        let last = n - 1;
        k.push(layout.pressure(0), last, 1.0);
        k.push(last, layout.pressure(0), 1.0);
    }
    k.build()
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves one linearized system. Constrained velocity unknowns take their
/// prescribed values; the residual of the reduced system is checked against
/// `1e-10‖rhs‖` after up to three steps of iterative refinement.
pub fn solve_saddle(mesh: &Mesh2D, system: &SaddleSystem) -> Result<Solution, SolverError> {
    let layout = Layout::new(system);
    let n = layout.size();
    let k = saddle_matrix(system, &layout);
    let mut rhs = vec![0.0; n];
    for (i, &dof) in layout.free.iter().enumerate() {
        rhs[i] = system.rhs_u[dof];
    }
    for t in 0..layout.num_pressure {
        rhs[layout.pressure(t)] = system.rhs_p[t];
    }

    let triplets: Vec<Triplet<usize, usize, f64>> =
        k.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
    let matrix = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let lu = matrix.sp_lu().map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => {
            SolverError::Factorization(format!("structurally singular at pivot {index}"))
        }
        other => SolverError::Factorization(format!("{other:?}")),
    })?;
    let solve = |b: &[f64]| -> Vec<f64> {
        let x = lu.solve(Mat::<f64>::from_fn(n, 1, |i, _| b[i]));
        (0..n).map(|i| x[(i, 0)]).collect()
    };

    let rhs_norm = norm(&rhs);
    let tol = 1e-10 * rhs_norm;
    let mut x = solve(&rhs);
    let mut residual = residual_of(&k, &x, &rhs);
    for _ in 0..3 {
        if !(norm(&residual) > tol) {
            break;
        }
        let dx = solve(&residual);
        x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
        residual = residual_of(&k, &x, &rhs);
    }
    let r = norm(&residual);
    if !(r <= tol) {
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(SolverError::Factorization(format!(
                "numerically singular: non-finite solution component at unknown {i}"
            )));
        }
        return Err(SolverError::InaccurateSolve {
            residual: r,
            rhs: rhs_norm,
        });
    }

    let mut dofs: Vec<f64> = system
        .dof_map
        .constrained
        .iter()
        .map(|c| c.unwrap_or(0.0))
        .collect();
    for (i, &dof) in layout.free.iter().enumerate() {
        dofs[dof] = x[i];
    }
    let mut pressure = PressureField {
        values: (0..layout.num_pressure).map(|t| x[layout.pressure(t)]).collect(),
    };
    if let Some(areas) = &system.mean_constraint {
        let total: f64 = areas.iter().sum();
        let mean: f64 = areas.iter().zip(&pressure.values).map(|(a, p)| a * p).sum::<f64>() / total;
        pressure = pressure.shifted(-mean);
    }
    Ok((EGField::from_dofs(mesh, &dofs), pressure))
}

fn residual_of(k: &SparseMatrix, x: &[f64], rhs: &[f64]) -> Vec<f64> {
    let kx = k.mul_vec(x);
    rhs.iter().zip(&kx).map(|(b, y)| b - y).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Viscosities solved in sequence, each warm-starting the next.
    pub continuation: Option<Vec<f64>>,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-7,
            max_iter: 1000,
            continuation: None,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.rel_tol > 0.0) {
            return Err(SolverError::InvalidConfig(format!(
                "rel_tol must be positive (got {})",
                self.rel_tol
            )));
        }
        if self.max_iter == 0 {
            return Err(SolverError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if let Some(s) = &self.continuation {
            check_schedule(s)?;
        }
        Ok(())
    }
}

fn check_schedule(schedule: &[f64]) -> Result<(), SolverError> {
    if schedule.is_empty() {
        return Err(SolverError::InvalidConfig("continuation schedule is empty".into()));
    }
    if schedule.iter().any(|&nu| !(nu > 0.0)) {
        return Err(SolverError::InvalidConfig(
            "continuation viscosities must be positive".into(),
        ));
    }
    if schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(SolverError::InvalidConfig(
            "continuation schedule must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_update: f64,
    /// Relative update of every iteration.
    pub history: Vec<f64>,
    pub wall_time: Duration,
    pub warnings: Vec<String>,
    pub nu: Option<f64>,
}

impl SolveReport {
    /// One line per iteration: index and relative update.
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        if let Some(nu) = self.nu {
            let _ = writeln!(out, "# nu = {nu:e}");
        }
        for (i, u) in self.history.iter().enumerate() {
            let _ = writeln!(out, "{} {:.6e}", i + 1, u);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "# warning: {w}");
        }
        let _ = writeln!(
            out,
            "# {} iterations, final update {:.6e}, {:.3} s",
            self.iterations,
            self.final_update,
            self.wall_time.as_secs_f64()
        );
        out
    }
}

/// Last iterate and history of a failed Newton solve.
#[derive(Debug, Clone)]
pub struct NewtonFailure {
    pub last: Solution,
    pub report: SolveReport,
}

/// Anything that can produce the Newton system at a linearization point.
pub trait NonlinearProblem {
    fn mesh(&self) -> &Mesh2D;
    fn linearize(&self, u_n: &EGField) -> Result<SaddleSystem, SolverError>;
    /// A linear problem is solved by a single Newton step.
    fn is_linear(&self) -> bool {
        false
    }
}

impl NonlinearProblem for crate::assembly::PreparedProblem {
    fn mesh(&self) -> &Mesh2D {
        &self.mesh
    }

    fn linearize(&self, u_n: &EGField) -> Result<SaddleSystem, SolverError> {
        Ok(crate::assembly::PreparedProblem::linearize(self, u_n)?)
    }

    fn is_linear(&self) -> bool {
        crate::assembly::PreparedProblem::is_linear(self)
    }
}

fn stacked(solution: &Solution, free: &[bool]) -> Vec<f64> {
    let (u, p) = solution;
    u.to_dofs()
        .into_iter()
        .zip(free)
        .filter_map(|(v, &f)| f.then_some(v))
        .chain(p.values.iter().copied())
        .collect()
}

/// Newton iteration from `initial` (zero by default), stopping once
/// `‖xⁿ⁺¹ − xⁿ‖ / ‖xⁿ⁺¹‖ < rel_tol` over the free unknowns of `x = (u; p)`.
pub fn newton_solve<P: NonlinearProblem + ?Sized>(
    problem: &P,
    config: &NewtonConfig,
    initial: Option<Solution>,
) -> Result<(Solution, SolveReport), SolverError> {
    config.validate()?;
    let start = Instant::now();
    let mesh = problem.mesh();
    let mut current = initial.unwrap_or_else(|| (EGField::zeros(mesh), PressureField::zeros(mesh)));
    current.0.check(mesh)?;
    let mut report = SolveReport::default();
    for it in 1..=config.max_iter {
        let system = problem.linearize(&current.0)?;
        if it == 1 {
            report.warnings.extend(system.warnings.iter().cloned());
        }
        let free: Vec<bool> = (0..system.dof_map.len()).map(|d| system.dof_map.is_free(d)).collect();
        let next = solve_saddle(mesh, &system)?;
        let (x_old, x_new) = (stacked(&current, &free), stacked(&next, &free));
        let diff: Vec<f64> = x_new.iter().zip(&x_old).map(|(a, b)| a - b).collect();
        let (d, s) = (norm(&diff), norm(&x_new));
        let update = if d == 0.0 { 0.0 } else { d / s };
        log::debug!("newton {it}: relative update {update:e}");
        report.history.push(update);
        report.iterations = it;
        report.final_update = update;
        current = next;
        if update < config.rel_tol || problem.is_linear() {
            report.wall_time = start.elapsed();
            return Ok((current, report));
        }
        if !update.is_finite() {
            break;
        }
    }
    report.wall_time = start.elapsed();
    Err(SolverError::NotConverged {
        iterations: report.iterations,
        last_update: report.final_update,
        best: Box::new(NewtonFailure {
            last: current,
            report,
        }),
    })
}

/// Halving from `1e-3` while staying at or above the target, then the
/// target itself; a single stage when `nu_target ≥ 1e-4`.
pub fn default_schedule(nu_target: f64) -> Vec<f64> {
    if nu_target >= 1e-4 {
        return vec![nu_target];
    }
    let mut s = Vec::new();
    let mut nu = 1e-3;
    while nu >= nu_target {
        s.push(nu);
        nu /= 2.0;
    }
    if *s.last().unwrap() != nu_target {
        s.push(nu_target);
    }
    s
}

/// Solves `problem` at every viscosity of `schedule`, warm-starting each
/// stage from the previous one.
pub fn nu_continuation(
    problem: &Problem,
    schedule: &[f64],
    config: &NewtonConfig,
    initial: Option<Solution>,
) -> Result<(Solution, Vec<SolveReport>), SolverError> {
    check_schedule(schedule)?;
    let stage_config = NewtonConfig {
        continuation: None,
        ..config.clone()
    };
    let mut current = initial;
    let mut reports = Vec::with_capacity(schedule.len());
    for (stage, &nu) in schedule.iter().enumerate() {
        let prepared = problem.with_nu(nu).prepare()?;
        match newton_solve(&prepared, &stage_config, current.take()) {
            Ok((solution, mut report)) => {
                log::info!("nu = {nu:e}: {} Newton iterations", report.iterations);
                report.nu = Some(nu);
                reports.push(report);
                current = Some(solution);
            }
            Err(e) => {
                return Err(SolverError::ContinuationFailed {
                    stage,
                    nu,
                    source: Box::new(e),
                })
            }
        }
    }
    Ok((current.unwrap(), reports))
}

/// Runs `problem` with the schedule from `config`, or a plain Newton solve.
pub fn solve_problem(
    problem: &Problem,
    config: &NewtonConfig,
) -> Result<(Solution, Vec<SolveReport>), SolverError> {
    config.validate()?;
    match &config.continuation {
        Some(s) => nu_continuation(problem, s, config, None),
        None => {
            let prepared = problem.prepare()?;
            let (solution, mut report) = newton_solve(&prepared, config, None)?;
            report.nu = Some(problem.nu);
            Ok((solution, vec![report]))
        }
    }
}

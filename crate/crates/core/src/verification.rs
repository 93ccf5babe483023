//! Manufactured solutions, error norms, convergence tables and flow
//! diagnostics.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::assembly::{DirichletData, NeumannData, Problem, VectorFn};
use crate::eg_space::{cg_gradient, EGField, PressureField, Tensor2};
use crate::error::FemError;
use crate::mesh::{tags, Mesh2D, Point, Rect};
use crate::quadrature::quadrature_rule;

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type TensorFn = Arc<dyn Fn(Point) -> Tensor2 + Send + Sync>;

/// Triangle rule used for error norms.
pub const ERROR_QUADRATURE_DEGREE: usize = 10;

/// Exact solution of `−νΔu + (∇×u)×u + ∇p = f`, `∇·u = 0` with Dirichlet
/// data `u` on every side of `domain`.
#[derive(Clone)]
pub struct ManufacturedCase {
    pub name: &'static str,
    pub nu: f64,
    pub velocity: VectorFn,
    /// `[[∂x u1, ∂y u1], [∂x u2, ∂y u2]]`.
    pub velocity_gradient: TensorFn,
    pub pressure: ScalarFn,
    pub body_force: VectorFn,
    pub domain: Rect,
}

impl std::fmt::Debug for ManufacturedCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedCase")
            .field("name", &self.name)
            .field("nu", &self.nu)
            .finish_non_exhaustive()
    }
}

const SIDES: [i32; 4] = [tags::BOTTOM, tags::RIGHT, tags::TOP, tags::LEFT];

impl ManufacturedCase {
    pub fn dirichlet(&self) -> DirichletData {
        DirichletData::uniform(&SIDES, self.velocity.clone())
    }

    pub fn problem(&self, mesh: Arc<Mesh2D>) -> Problem {
        Problem::new(mesh, self.nu, self.dirichlet()).with_body_force(self.body_force.clone())
    }

    /// Largest relative mismatch between `f` and a central-difference
    /// evaluation of the momentum operator at `points`, together with the
    /// largest finite-difference divergence.
    pub fn residuals(&self, points: &[Point]) -> (f64, f64) {
        let u = &self.velocity;
        let (h1, h2) = (1e-5, 1e-4);
        let mut max_rel = 0.0f64;
        let mut max_div = 0.0f64;
        for &x in points {
            let d = |i: usize, h: f64| {
                let mut a = x;
                let mut b = x;
                a[i] += h;
                b[i] -= h;
                (u(a), u(b))
            };
            let mut grad = [[0.0; 2]; 2];
            let mut lap = [0.0; 2];
            let c = u(x);
            for i in 0..2 {
                let (a, b) = d(i, h1);
                for comp in 0..2 {
                    grad[comp][i] = (a[comp] - b[comp]) / (2.0 * h1);
                }
                let (a, b) = d(i, h2);
                for comp in 0..2 {
                    lap[comp] += (a[comp] - 2.0 * c[comp] + b[comp]) / (h2 * h2);
                }
            }
            let omega = grad[1][0] - grad[0][1];
            let p = &self.pressure;
            let dp = |i: usize| {
                let mut a = x;
                let mut b = x;
                a[i] += h1;
                b[i] -= h1;
                (p(a) - p(b)) / (2.0 * h1)
            };
            let lhs = [
                -self.nu * lap[0] - omega * c[1] + dp(0),
                -self.nu * lap[1] + omega * c[0] + dp(1),
            ];
            let f = (self.body_force)(x);
            let scale = f[0].abs().max(f[1].abs()).max(1.0);
            for k in 0..2 {
                max_rel = max_rel.max((lhs[k] - f[k]).abs() / scale);
            }
            max_div = max_div.max((grad[0][0] + grad[1][1]).abs());
        }
        (max_rel, max_div)
    }
}

fn g(s: f64) -> f64 {
    s * s * (s - 1.0) * (s - 1.0)
}
fn g1(s: f64) -> f64 {
    2.0 * s * (s - 1.0) * (2.0 * s - 1.0)
}
fn g2(s: f64) -> f64 {
    12.0 * s * s - 12.0 * s + 2.0
}
fn g3(s: f64) -> f64 {
    24.0 * s - 12.0
}

/// Vortex on the unit square with stream function `5 g(x) g(y)`,
/// `g(s) = s²(s − 1)²`, and pressure `10(2x − 1)(2y − 1)`.
pub fn case_vortex(nu: f64) -> ManufacturedCase {
    assert!(nu > 0.0, "viscosity must be positive");
    let velocity: VectorFn = Arc::new(|[x, y]| [5.0 * g(x) * g1(y), -5.0 * g1(x) * g(y)]);
    let velocity_gradient: TensorFn = Arc::new(|[x, y]| {
        [
            [5.0 * g1(x) * g1(y), 5.0 * g(x) * g2(y)],
            [-5.0 * g2(x) * g(y), -5.0 * g1(x) * g1(y)],
        ]
    });
    let body_force: VectorFn = Arc::new(move |[x, y]| {
        let u = [5.0 * g(x) * g1(y), -5.0 * g1(x) * g(y)];
        let lap = [
            5.0 * (g2(x) * g1(y) + g(x) * g3(y)),
            -5.0 * (g3(x) * g(y) + g1(x) * g2(y)),
        ];
        let omega = -5.0 * (g2(x) * g(y) + g(x) * g2(y));
        [
            -nu * lap[0] - omega * u[1] + 20.0 * (2.0 * y - 1.0),
            -nu * lap[1] + omega * u[0] + 20.0 * (2.0 * x - 1.0),
        ]
    });
    ManufacturedCase {
        name: "vortex",
        nu,
        velocity,
        velocity_gradient,
        pressure: Arc::new(|[x, y]| 10.0 * (2.0 * x - 1.0) * (2.0 * y - 1.0)),
        body_force,
        domain: Rect::UNIT,
    }
}

/// Hydrostatic balance: `u = 0`, `p = −(Ra/2)y² + Ra y − Ra/3`, `ν = 1`.
pub fn case_noflow(ra: f64) -> ManufacturedCase {
    ManufacturedCase {
        name: "noflow",
        nu: 1.0,
        velocity: Arc::new(|_| [0.0, 0.0]),
        velocity_gradient: Arc::new(|_| [[0.0; 2]; 2]),
        pressure: Arc::new(move |[_, y]| -0.5 * ra * y * y + ra * y - ra / 3.0),
        body_force: Arc::new(move |[_, y]| [0.0, ra * (1.0 - y)]),
        domain: Rect::UNIT,
    }
}

/// Body force of the lid-driven cavity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CavityForce {
    Zero,
    /// `(scale/3) ∇(x³ + y³) = scale (x², y²)`.
    Gradient { scale: f64 },
}

impl CavityForce {
    pub const F2: CavityForce = CavityForce::Gradient { scale: 1e6 };

    pub fn eval(&self, [x, y]: Point) -> Point {
        match *self {
            CavityForce::Zero => [0.0, 0.0],
            CavityForce::Gradient { scale } => [scale * x * x, scale * y * y],
        }
    }
}

/// Unit lid velocity on the top side, no-slip elsewhere. At the two top
/// corners the lid value is used.
pub fn cavity_dirichlet() -> DirichletData {
    let zero: VectorFn = Arc::new(|_| [0.0, 0.0]);
    DirichletData::new()
        .with(tags::TOP, Arc::new(|_| [1.0, 0.0]))
        .with(tags::BOTTOM, zero.clone())
        .with(tags::LEFT, zero.clone())
        .with(tags::RIGHT, zero)
}

pub fn case_cavity(mesh: Arc<Mesh2D>, nu: f64, force: CavityForce) -> Problem {
    let problem = Problem::new(mesh, nu, cavity_dirichlet());
    match force {
        CavityForce::Zero => problem,
        f => problem.with_body_force(Arc::new(move |x| f.eval(x))),
    }
}

/// Inflow profile of the backward-facing step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepInlet {
    /// `(6(y − 1)(2 − y), 0)`, unit mean velocity.
    Parabolic,
    Constant,
}

impl StepInlet {
    pub fn eval(&self, [_, y]: Point) -> Point {
        match self {
            StepInlet::Parabolic => [6.0 * (y - 1.0) * (2.0 - y), 0.0],
            StepInlet::Constant => [1.0, 0.0],
        }
    }
}

/// Backward-facing step at `Re = 1/ν`: inflow on the inlet, no-slip walls
/// (walls win at the inlet corners) and the do-nothing condition on the
/// outlet.
pub fn case_step(mesh: Arc<Mesh2D>, reynolds: f64, inlet: StepInlet) -> Problem {
    let dirichlet = DirichletData::new()
        .with(tags::WALL, Arc::new(|_| [0.0, 0.0]))
        .with(tags::INLET, Arc::new(move |x| inlet.eval(x)));
    Problem::new(mesh, 1.0 / reynolds, dirichlet).with_neumann(NeumannData {
        tags: vec![tags::OUTLET],
        data: None,
    })
}

/// Region behind the step where the primary eddy forms.
pub const STEP_EDDY_REGION: Rect = Rect {
    x0: 0.0,
    x1: 4.0,
    y0: 0.0,
    y1: 1.0,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub l2_velocity: f64,
    pub h1_velocity: f64,
    pub l2_pressure: f64,
}

impl ErrorNorms {
    pub fn as_array(&self) -> [f64; 3] {
        [self.l2_velocity, self.h1_velocity, self.l2_pressure]
    }
}

/// `‖u − u0‖`, broken `|u − u0|₁` and `‖p − p_h‖` by element quadrature.
pub fn error_norms<U, G, P>(
    mesh: &Mesh2D,
    solution: (&EGField, &PressureField),
    u: U,
    grad_u: G,
    p: P,
) -> Result<ErrorNorms, FemError>
where
    U: Fn(Point) -> Point,
    G: Fn(Point) -> Tensor2,
    P: Fn(Point) -> f64,
{
    let (uh, ph) = solution;
    uh.check(mesh)?;
    if ph.values.len() != mesh.num_triangles() {
        return Err(FemError::DimensionMismatch {
            what: "pressure values",
            got: ph.values.len(),
            expected: mesh.num_triangles(),
        });
    }
    let rule = quadrature_rule(ERROR_QUADRATURE_DEGREE)?;
    let (mut eu, mut eg, mut ep) = (0.0, 0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let area = mesh.area(t);
        let tri = mesh.triangle(t);
        let local = uh.local(mesh, t);
        let gh = cg_gradient(mesh, t, &local);
        for (l, w) in rule.iter() {
            let x = mesh.map_barycentric(t, l);
            let mut u0 = [0.0; 2];
            for k in 0..3 {
                let v = uh.vertex_values[tri[k]];
                u0[0] += l[k] * v[0];
                u0[1] += l[k] * v[1];
            }
            let ue = u(x);
            eu += w * area * ((ue[0] - u0[0]).powi(2) + (ue[1] - u0[1]).powi(2));
            let ge = grad_u(x);
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    s += (ge[i][j] - gh[i][j]).powi(2);
                }
            }
            eg += w * area * s;
            ep += w * area * (p(x) - ph.values[t]).powi(2);
        }
    }
    Ok(ErrorNorms {
        l2_velocity: eu.sqrt(),
        h1_velocity: eg.sqrt(),
        l2_pressure: ep.sqrt(),
    })
}

pub fn case_errors(
    case: &ManufacturedCase,
    mesh: &Mesh2D,
    solution: (&EGField, &PressureField),
) -> Result<ErrorNorms, FemError> {
    error_norms(
        mesh,
        solution,
        |x| (case.velocity)(x),
        |x| (case.velocity_gradient)(x),
        |x| (case.pressure)(x),
    )
}

/// `‖f‖_{L²(Ω)}`.
pub fn l2_norm<F: Fn(Point) -> Point>(mesh: &Mesh2D, f: F) -> Result<f64, FemError> {
    let rule = quadrature_rule(ERROR_QUADRATURE_DEGREE)?;
    let mut s = 0.0;
    for t in 0..mesh.num_triangles() {
        for (l, w) in rule.iter() {
            let v = f(mesh.map_barycentric(t, l));
            s += w * mesh.area(t) * (v[0] * v[0] + v[1] * v[1]);
        }
    }
    Ok(s.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub errors: [f64; 3],
    /// Order against the previous row; `None` on the first row or when an
    /// error vanishes.
    pub orders: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

pub fn observed_order(e: [f64; 2], h: [f64; 2]) -> Option<f64> {
    if e[0] > 0.0 && e[1] > 0.0 {
        Some((e[0] / e[1]).ln() / (h[0] / h[1]).ln())
    } else {
        None
    }
}

/// Orders between consecutive levels; `h` must be strictly decreasing.
pub fn convergence_table(h: &[f64], errors: &[[f64; 3]]) -> ConvergenceTable {
    assert_eq!(h.len(), errors.len(), "one error triple per level");
    assert!(
        h.windows(2).all(|w| w[1] < w[0]),
        "mesh sizes must be strictly decreasing"
    );
    let rows = (0..h.len())
        .map(|i| ConvergenceRow {
            h: h[i],
            errors: errors[i],
            orders: std::array::from_fn(|k| {
                (i > 0)
                    .then(|| observed_order([errors[i - 1][k], errors[i][k]], [h[i - 1], h[i]]))
                    .flatten()
            }),
        })
        .collect();
    ConvergenceTable { rows }
}

impl ConvergenceTable {
    /// `h, e_l2, order, e_h1, order, e_p, order`; undefined orders are blank.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,e_l2,order,e_h1,order,e_p,order\n");
        for row in &self.rows {
            let _ = write!(out, "{:.6e}", row.h);
            for k in 0..3 {
                let _ = write!(out, ",{:.4e},", row.errors[k]);
                if let Some(o) = row.orders[k] {
                    let _ = write!(out, "{o:.2}");
                }
            }
            out.push('\n');
        }
        out
    }
}

/// `p_T − ½ (1/|T|) ∫_T |u0|²`, the element mean being exact for P1 `u0`.
pub fn kinematic_pressure(mesh: &Mesh2D, u: &EGField, p: &PressureField) -> PressureField {
    let rule = quadrature_rule(2).expect("degree-2 rule");
    let values = (0..mesh.num_triangles())
        .map(|t| {
            let tri = mesh.triangle(t);
            let mean: f64 = rule
                .iter()
                .map(|(l, w)| {
                    let mut v = [0.0; 2];
                    for k in 0..3 {
                        v[0] += l[k] * u.vertex_values[tri[k]][0];
                        v[1] += l[k] * u.vertex_values[tri[k]][1];
                    }
                    w * (v[0] * v[0] + v[1] * v[1])
                })
                .sum();
            p.values[t] - 0.5 * mean
        })
        .collect();
    PressureField { values }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recirculation {
    pub detected: bool,
    pub min_ux: f64,
}

pub const RECIRCULATION_THRESHOLD: f64 = -1e-3;

/// Reversed flow `u0,x < −1e-3` at a vertex inside the closed box.
pub fn recirculation_detect(
    mesh: &Mesh2D,
    u: &EGField,
    region: Rect,
) -> Result<Recirculation, FemError> {
    let inside = |p: Point| {
        p[0] >= region.x0 && p[0] <= region.x1 && p[1] >= region.y0 && p[1] <= region.y1
    };
    let min_ux = mesh
        .vertices()
        .iter()
        .zip(&u.vertex_values)
        .filter(|(p, _)| inside(**p))
        .map(|(_, v)| v[0])
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
        .ok_or(FemError::EmptyRegion {
            x0: region.x0,
            x1: region.x1,
            y0: region.y0,
            y1: region.y1,
        })?;
    Ok(Recirculation {
        detected: min_ux < RECIRCULATION_THRESHOLD,
        min_ux,
    })
}

//! Global operators of the enriched Galerkin discretization.
//!
//! Velocity unknowns follow [`DofMap`]; pressure unknowns are indexed by
//! triangle. Element contributions are computed in parallel and accumulated
//! in element order, so results do not depend on the thread count.

use std::sync::Arc;

use rayon::prelude::*;

use crate::eg_space::{
    curl_operator, edge_mean, gradient_gram_local, local_dof_indices, stab_local, DofMap,
    EGField, LocalMatrix, DEFAULT_EDGE_POINTS,
};
use crate::error::FemError;
use crate::mesh::{Mesh2D, Point};
use crate::quadrature::{gauss_legendre, quadrature_rule, QuadratureRule};
use crate::reconstruction::rt_basis;
use crate::sparse::{SparseMatrix, TripletBuilder};

/// Analytic vector field.
pub type VectorFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Quadrature choices for the different integrands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Triangle rule for the convection term (integrand is quadratic).
    pub convection_degree: usize,
    /// Triangle rule for body-force loads.
    pub load_degree: usize,
    /// Gauss points for edge means of analytic data.
    pub edge_points: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            convection_degree: 2,
            load_degree: 5,
            edge_points: DEFAULT_EDGE_POINTS,
        }
    }
}

fn element_map<T, F>(mesh: &Mesh2D, f: F) -> Result<Vec<T>, FemError>
where
    T: Send,
    F: Fn(usize) -> Result<T, FemError> + Sync + Send,
{
    (0..mesh.num_triangles()).into_par_iter().map(f).collect()
}

fn num_velocity_dofs(mesh: &Mesh2D) -> usize {
    2 * mesh.num_vertices() + mesh.num_edges()
}

fn scatter_local(builder: &mut TripletBuilder, dofs: &[usize; 9], local: &LocalMatrix) {
    for i in 0..9 {
        for j in 0..9 {
            builder.push(dofs[i], dofs[j], local[i][j]);
        }
    }
}

/// `ν (∇_m w, ∇_m v) + s(w, v)`; both terms carry the viscosity.
pub fn assemble_a(mesh: &Mesh2D, nu: f64) -> Result<SparseMatrix, FemError> {
    let locals = element_map(mesh, |t| {
        let g = gradient_gram_local(mesh, t)?;
        let s = stab_local(mesh, t)?;
        let mut m = [[0.0; 9]; 9];
        for i in 0..9 {
            for j in 0..9 {
                m[i][j] = nu * (g[i][j] + s[i][j]);
            }
        }
        Ok(m)
    })?;
    let n = num_velocity_dofs(mesh);
    let mut b = TripletBuilder::with_capacity(n, n, 81 * locals.len());
    for (t, local) in locals.iter().enumerate() {
        scatter_local(&mut b, &local_dof_indices(mesh, t), local);
    }
    Ok(b.build())
}

/// `b(v, q) = (∇_m · v, q)`: row `T` holds `σ_e |e|` on the three edge
/// unknowns of `T`.
pub fn assemble_b(mesh: &Mesh2D) -> SparseMatrix {
    let n = num_velocity_dofs(mesh);
    let offset = 2 * mesh.num_vertices();
    let mut b = TripletBuilder::with_capacity(mesh.num_triangles(), n, 3 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let edges = mesh.triangle_edges(t);
        let signs = mesh.triangle_signs(t);
        for k in 0..3 {
            b.push(t, offset + edges[k], signs[k] * mesh.edge_length(edges[k]));
        }
    }
    b.build()
}

/// `M[j][k] = ∫_T φ_j ∧ φ_k` over the local RT basis, `a ∧ b = a1 b2 − a2 b1`.
pub fn rt_wedge_local(mesh: &Mesh2D, t: usize, rule: &QuadratureRule) -> [[f64; 3]; 3] {
    let area = mesh.area(t);
    let mut m = [[0.0; 3]; 3];
    for (l, w) in rule.iter() {
        let phi = rt_basis(mesh, t, mesh.map_barycentric(t, l));
        for j in 0..3 {
            for k in 0..3 {
                m[j][k] += w * area * (phi[j][0] * phi[k][1] - phi[j][1] * phi[k][0]);
            }
        }
    }
    m
}

/// Newton linearization of `c(u, u, v) = ((∇×u0) × Ru, Rv)` at `u_n`.
///
/// Returns the matrix of `c(δ, u_n, v) + c(u_n, δ, v)` and the vector
/// `c(u_n, u_n, v)`. With `ω = ∇×w0` constant per element and
/// `(ω × a) · b = ω (a ∧ b)`, the form reduces to `ω ∫ Rz ∧ Rv`.
pub fn assemble_c_linearized(
    mesh: &Mesh2D,
    u_n: &EGField,
    degree: usize,
) -> Result<(SparseMatrix, Vec<f64>), FemError> {
    u_n.check(mesh)?;
    let rule = quadrature_rule(degree)?;
    let locals = element_map(mesh, |t| {
        let local = u_n.local(mesh, t);
        let curl = curl_operator(mesh, t);
        let omega: f64 = curl.iter().zip(&local).map(|(c, u)| c * u).sum();
        let wedge = rt_wedge_local(mesh, t, rule);
        let mut m = [[0.0; 9]; 9];
        let mut v = [0.0; 9];
        for k in 0..3 {
            let s: f64 = (0..3).map(|j| local[6 + j] * wedge[j][k]).sum();
            for j in 0..3 {
                m[6 + k][6 + j] = omega * wedge[j][k];
            }
            for (col, &c) in curl.iter().enumerate().take(6) {
                m[6 + k][col] = c * s;
            }
            v[6 + k] = omega * s;
        }
        Ok((m, v))
    })?;
    let n = num_velocity_dofs(mesh);
    let mut b = TripletBuilder::with_capacity(n, n, 27 * locals.len());
    let mut rhs = vec![0.0; n];
    for (t, (m, v)) in locals.iter().enumerate() {
        let dofs = local_dof_indices(mesh, t);
        for k in 6..9 {
            for j in 0..9 {
                b.push(dofs[k], dofs[j], m[k][j]);
            }
            rhs[dofs[k]] += v[k];
        }
    }
    Ok((b.build(), rhs))
}

/// Direct evaluation of `c(w, z, v)` by quadrature.
pub fn trilinear_form(
    mesh: &Mesh2D,
    w: &EGField,
    z: &EGField,
    v: &EGField,
    degree: usize,
) -> Result<f64, FemError> {
    let rule = quadrature_rule(degree)?;
    let parts = element_map(mesh, |t| {
        let curl = curl_operator(mesh, t);
        let lw = w.local(mesh, t);
        let omega: f64 = curl.iter().zip(&lw).map(|(c, u)| c * u).sum();
        let wedge = rt_wedge_local(mesh, t, rule);
        let (lz, lv) = (z.local(mesh, t), v.local(mesh, t));
        let mut sum = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                sum += lz[6 + j] * lv[6 + k] * wedge[j][k];
            }
        }
        Ok(omega * sum)
    })?;
    Ok(parts.iter().sum())
}

/// `(f, Rv)` for every velocity unknown; vertex entries are zero since the
/// reconstruction only sees edge values.
pub fn assemble_load<F>(mesh: &Mesh2D, f: F, degree: usize) -> Result<Vec<f64>, FemError>
where
    F: Fn(Point) -> Point + Sync + Send,
{
    let rule = quadrature_rule(degree)?;
    let locals = element_map(mesh, |t| {
        let area = mesh.area(t);
        let mut v = [0.0; 3];
        for (l, w) in rule.iter() {
            let x = mesh.map_barycentric(t, l);
            let fx = f(x);
            let phi = rt_basis(mesh, t, x);
            for k in 0..3 {
                v[k] += w * area * (fx[0] * phi[k][0] + fx[1] * phi[k][1]);
            }
        }
        Ok(v)
    })?;
    let mut rhs = vec![0.0; num_velocity_dofs(mesh)];
    let offset = 2 * mesh.num_vertices();
    for (t, v) in locals.iter().enumerate() {
        let edges = mesh.triangle_edges(t);
        for k in 0..3 {
            rhs[offset + edges[k]] += v[k];
        }
    }
    Ok(rhs)
}

fn edge_set(mesh: &Mesh2D, tags: &[i32]) -> Vec<usize> {
    mesh.boundary_edges()
        .filter(|&e| tags.contains(&mesh.boundary_tag(e).unwrap()))
        .collect()
}

/// Data terms `⟨n_e × u_N, n_e × v0⟩ + ⟨u_N · n_e, v_b⟩` on the Neumann
/// edges, with `n × a = n1 a2 − n2 a1`.
pub fn assemble_neumann_data<F>(
    mesh: &Mesh2D,
    tags: &[i32],
    u_neumann: F,
    edge_points: usize,
) -> Vec<f64>
where
    F: Fn(Point) -> Point,
{
    let mut rhs = vec![0.0; num_velocity_dofs(mesh)];
    let offset = 2 * mesh.num_vertices();
    for e in edge_set(mesh, tags) {
        let [a, b] = mesh.edge(e);
        let (p, q) = (mesh.vertex(a), mesh.vertex(b));
        let n = mesh.edge_normal(e);
        let len = mesh.edge_length(e);
        for &(s, w) in gauss_legendre(edge_points) {
            let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
            let g = u_neumann(x);
            let cross = n[0] * g[1] - n[1] * g[0];
            for (vertex, hat) in [(a, 1.0 - s), (b, s)] {
                rhs[2 * vertex] += w * len * cross * (-n[1]) * hat;
                rhs[2 * vertex + 1] += w * len * cross * n[0] * hat;
            }
            rhs[offset + e] += w * len * (g[0] * n[0] + g[1] * n[1]);
        }
    }
    rhs
}

/// Newton linearization of `d(u, u, v) = ½⟨|u0|², v_b⟩` on the Neumann
/// edges, using the bilinear extension `d(w, z, v) = ½⟨w0 · z0, v_b⟩`.
///
/// Returns the matrix of `d(δ, u_n, v) + d(u_n, δ, v)` and the vector
/// `d(u_n, u_n, v)`.
pub fn assemble_d_linearized(
    mesh: &Mesh2D,
    tags: &[i32],
    u_n: &EGField,
) -> (SparseMatrix, Vec<f64>) {
    let n = num_velocity_dofs(mesh);
    let offset = 2 * mesh.num_vertices();
    let mut b = TripletBuilder::new(n, n);
    let mut rhs = vec![0.0; n];
    for e in edge_set(mesh, tags) {
        let [a, c] = mesh.edge(e);
        let len = mesh.edge_length(e);
        let (ua, uc) = (u_n.vertex_values[a], u_n.vertex_values[c]);
        let row = offset + e;
        for comp in 0..2 {
            // ∫ φ_a u0 = |e| (u_a / 3 + u_c / 6)
            b.push(row, 2 * a + comp, len * (ua[comp] / 3.0 + uc[comp] / 6.0));
            b.push(row, 2 * c + comp, len * (ua[comp] / 6.0 + uc[comp] / 3.0));
        }
        let dot = |x: Point, y: Point| x[0] * y[0] + x[1] * y[1];
        rhs[row] += 0.5 * len * (dot(ua, ua) + dot(ua, uc) + dot(uc, uc)) / 3.0;
    }
    (b.build(), rhs)
}

/// Dirichlet data per boundary tag. Where segments with different tags meet,
/// the vertex takes the value of the segment listed first.
#[derive(Clone, Default)]
pub struct DirichletData {
    segments: Vec<(i32, VectorFn)>,
}

impl std::fmt::Debug for DirichletData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tags: Vec<i32> = self.segments.iter().map(|(t, _)| *t).collect();
        f.debug_struct("DirichletData").field("tags", &tags).finish()
    }
}

impl DirichletData {
    pub fn new() -> Self {
        Self::default()
    }

    /// Same data on every listed tag.
    pub fn uniform(tags: &[i32], g: VectorFn) -> Self {
        Self {
            segments: tags.iter().map(|&t| (t, g.clone())).collect(),
        }
    }

    pub fn with(mut self, tag: i32, g: VectorFn) -> Self {
        self.segments.push((tag, g));
        self
    }

    pub fn tags(&self) -> Vec<i32> {
        self.segments.iter().map(|(t, _)| *t).collect()
    }

    fn priority(&self, tag: i32) -> Option<usize> {
        self.segments.iter().position(|(t, _)| *t == tag)
    }
}

/// Prescribed values: nodal values of `u_D` at Dirichlet vertices and edge
/// means of `u_D · n_e` on Dirichlet edges.
pub fn dirichlet_dofs(
    mesh: &Mesh2D,
    data: &DirichletData,
    edge_points: usize,
) -> Result<DofMap, FemError> {
    for tag in data.tags() {
        if mesh.edges_with_tag(tag).next().is_none() {
            return Err(FemError::UnknownTag(tag));
        }
    }
    let mut map = DofMap::unconstrained(mesh);
    let mut vertex_source: Vec<Option<usize>> = vec![None; mesh.num_vertices()];
    for e in mesh.boundary_edges() {
        let Some(prio) = data.priority(mesh.boundary_tag(e).unwrap()) else {
            continue;
        };
        let g = &data.segments[prio].1;
        let n = mesh.edge_normal(e);
        let value = edge_mean(mesh, e, |x| {
            let v = g(x);
            v[0] * n[0] + v[1] * n[1]
        }, edge_points);
        let dof = map.edge_dof(e);
        map.constrained[dof] = Some(value);
        for v in mesh.edge(e) {
            match vertex_source[v] {
                Some(p) if p <= prio => {
                    let other = g(mesh.vertex(v));
                    let kept = data.segments[p].1(mesh.vertex(v));
                    if other != kept {
                        log::debug!(
                            "vertex {v}: Dirichlet tags {} and {} disagree, keeping {:?}",
                            data.segments[p].0,
                            data.segments[prio].0,
                            kept
                        );
                    }
                }
                _ => vertex_source[v] = Some(prio),
            }
        }
    }
    for (v, src) in vertex_source.iter().enumerate() {
        if let Some(p) = src {
            let value = data.segments[*p].1(mesh.vertex(v));
            let (dx, dy) = (map.vertex_dof(v, 0), map.vertex_dof(v, 1));
            map.constrained[dx] = Some(value[0]);
            map.constrained[dy] = Some(value[1]);
        }
    }
    Ok(map)
}

/// One linearized saddle-point system
/// `[A, −Bᵀ; B, 0] (u; p) = (rhs_u; rhs_p)` before constraint elimination.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_p: Vec<f64>,
    /// Element areas when the pressure must have zero mean.
    pub mean_constraint: Option<Vec<f64>>,
    pub dof_map: DofMap,
    pub warnings: Vec<String>,
}

impl SaddleSystem {
    pub fn new(
        mesh: &Mesh2D,
        a: SparseMatrix,
        b: SparseMatrix,
        rhs_u: Vec<f64>,
        pure_dirichlet: bool,
    ) -> Self {
        let mean_constraint =
            pure_dirichlet.then(|| (0..mesh.num_triangles()).map(|t| mesh.area(t)).collect());
        Self {
            rhs_p: vec![0.0; b.nrows()],
            a,
            b,
            rhs_u,
            mean_constraint,
            dof_map: DofMap::unconstrained(mesh),
            warnings: Vec::new(),
        }
    }
}

impl SaddleSystem {
    /// Writes `A.mtx` and `B.mtx` (Matrix Market coordinate format) to `dir`.
    pub fn export_matrix_market(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(dir.join("A.mtx"), self.a.to_matrix_market())?;
        std::fs::write(dir.join("B.mtx"), self.b.to_matrix_market())
    }
}

/// Fixes the constrained unknowns and moves their contributions to the
/// right-hand sides (rows of constrained unknowns are ignored by the solver).
pub fn apply_dirichlet(
    mut system: SaddleSystem,
    mesh: &Mesh2D,
    dofs: &DofMap,
) -> SaddleSystem {
    let g: Vec<f64> = dofs.constrained.iter().map(|c| c.unwrap_or(0.0)).collect();
    if g.iter().any(|&x| x != 0.0) {
        let ag = system.a.mul_vec(&g);
        let bg = system.b.mul_vec(&g);
        system.rhs_u.iter_mut().zip(&ag).for_each(|(r, x)| *r -= x);
        system.rhs_p.iter_mut().zip(&bg).for_each(|(r, x)| *r -= x);
    }
    if system.mean_constraint.is_some() {
        let flux = boundary_flux(mesh, dofs);
        let perimeter: f64 = mesh.boundary_edges().map(|e| mesh.edge_length(e)).sum();
        if flux.abs() > 1e-10 * perimeter {
            let msg = format!("Dirichlet data carries a net boundary flux of {flux:e}");
            log::warn!("{msg}");
            system.warnings.push(msg);
        }
    }
    system.dof_map = dofs.clone();
    system
}

/// `Σ_{e ⊂ ∂Ω} |e| u_b` over constrained boundary edges.
pub fn boundary_flux(mesh: &Mesh2D, dofs: &DofMap) -> f64 {
    mesh.boundary_edges()
        .filter_map(|e| dofs.constrained[dofs.edge_dof(e)].map(|v| mesh.edge_length(e) * v))
        .sum()
}

/// Traction-type boundary condition of the mixed problem.
#[derive(Clone)]
pub struct NeumannData {
    pub tags: Vec<i32>,
    /// Boundary data `u_N`; `None` is the do-nothing condition.
    pub data: Option<VectorFn>,
}

/// A steady problem: mesh, viscosity, body force and boundary conditions.
#[derive(Clone)]
pub struct Problem {
    pub mesh: Arc<Mesh2D>,
    pub nu: f64,
    pub body_force: Option<VectorFn>,
    pub dirichlet: DirichletData,
    pub neumann: Option<NeumannData>,
    /// Set to `false` to drop the convection term (Stokes).
    pub convection: bool,
    pub quadrature: QuadratureOptions,
}

impl Problem {
    pub fn new(mesh: Arc<Mesh2D>, nu: f64, dirichlet: DirichletData) -> Self {
        Self {
            mesh,
            nu,
            body_force: None,
            dirichlet,
            neumann: None,
            convection: true,
            quadrature: QuadratureOptions::default(),
        }
    }

    pub fn with_body_force(mut self, f: VectorFn) -> Self {
        self.body_force = Some(f);
        self
    }

    pub fn with_neumann(mut self, neumann: NeumannData) -> Self {
        self.neumann = Some(neumann);
        self
    }

    pub fn with_nu(&self, nu: f64) -> Self {
        let mut p = self.clone();
        p.nu = nu;
        p
    }

    pub fn pure_dirichlet(&self) -> bool {
        match &self.neumann {
            None => true,
            Some(n) => edge_set(&self.mesh, &n.tags).is_empty(),
        }
    }

    /// Assembles everything that does not depend on the linearization point.
    pub fn prepare(&self) -> Result<PreparedProblem, FemError> {
        let mesh = &self.mesh;
        let a = assemble_a(mesh, self.nu)?;
        let b = assemble_b(mesh);
        let mut load = match &self.body_force {
            Some(f) => assemble_load(mesh, |x| f(x), self.quadrature.load_degree)?,
            None => vec![0.0; num_velocity_dofs(mesh)],
        };
        let neumann_tags = self
            .neumann
            .as_ref()
            .map(|n| n.tags.clone())
            .unwrap_or_default();
        if let Some(NeumannData {
            tags,
            data: Some(g),
        }) = &self.neumann
        {
            let extra = assemble_neumann_data(mesh, tags, |x| g(x), self.quadrature.edge_points);
            load.iter_mut().zip(&extra).for_each(|(l, x)| *l += x);
        }
        let dofs = dirichlet_dofs(mesh, &self.dirichlet, self.quadrature.edge_points)?;
        Ok(PreparedProblem {
            mesh: self.mesh.clone(),
            a,
            b,
            load,
            dofs,
            neumann_tags,
            pure_dirichlet: self.pure_dirichlet(),
            convection: self.convection,
            convection_degree: self.quadrature.convection_degree,
        })
    }
}

/// Assembled linear parts of a [`Problem`]; produces the Newton system at
/// any linearization point.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    pub mesh: Arc<Mesh2D>,
    pub a: SparseMatrix,
    pub b: SparseMatrix,
    pub load: Vec<f64>,
    pub dofs: DofMap,
    pub neumann_tags: Vec<i32>,
    pub pure_dirichlet: bool,
    pub convection: bool,
    pub convection_degree: usize,
}

impl PreparedProblem {
    pub fn is_linear(&self) -> bool {
        !self.convection
    }

    /// `a(u, v) + c(u_n, u, v) + c(u, u_n, v) + d(..) − b(v, p) = (f, Rv)
    /// + c(u_n, u_n, v) + d(u_n, u_n, v)`, with constraints applied.
    pub fn linearize(&self, u_n: &EGField) -> Result<SaddleSystem, FemError> {
        let mesh = &*self.mesh;
        let mut a = self.a.clone();
        let mut rhs = self.load.clone();
        if self.convection {
            let (c, cv) = assemble_c_linearized(mesh, u_n, self.convection_degree)?;
            a = a.add(&c);
            rhs.iter_mut().zip(&cv).for_each(|(r, x)| *r += x);
            if !self.neumann_tags.is_empty() {
                let (d, dv) = assemble_d_linearized(mesh, &self.neumann_tags, u_n);
                a = a.add(&d);
                rhs.iter_mut().zip(&dv).for_each(|(r, x)| *r += x);
            }
        }
        let system = SaddleSystem::new(mesh, a, self.b.clone(), rhs, self.pure_dirichlet);
        Ok(apply_dirichlet(system, mesh, &self.dofs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eg_space::{interpolate_qh, modified_divergence_local, triple_norm};
    use crate::mesh::{build_rect_uniform, tags, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(mesh: &Mesh2D, rng: &mut ChaCha8Rng, interior_only: bool) -> EGField {
        let mut f = EGField::zeros(mesh);
        for v in f.vertex_values.iter_mut() {
            *v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        }
        for x in f.edge_values.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        if interior_only {
            for e in mesh.boundary_edges().collect::<Vec<_>>() {
                f.edge_values[e] = 0.0;
                for v in mesh.edge(e) {
                    f.vertex_values[v] = [0.0, 0.0];
                }
            }
        }
        f
    }

    #[test]
    fn a_is_linear_in_viscosity() {
        let mesh = build_rect_uniform(3, 3, Rect::UNIT).unwrap();
        let a1 = assemble_a(&mesh, 0.7).unwrap();
        let a2 = assemble_a(&mesh, 1.4).unwrap();
        for (r, c, v) in a1.iter() {
            assert_eq!(a2.get(r, c), 2.0 * v);
        }
    }

    #[test]
    fn a_is_symmetric() {
        let mesh = build_rect_uniform(3, 2, Rect::UNIT).unwrap();
        let a = assemble_a(&mesh, 1.0).unwrap();
        for (r, c, v) in a.iter() {
            assert!((a.get(c, r) - v).abs() < 1e-13);
        }
    }

    #[test]
    fn energy_identity() {
        let mesh = build_rect_uniform(4, 4, Rect::UNIT).unwrap();
        let nu = 0.37;
        let a = assemble_a(&mesh, nu).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let f = random_field(&mesh, &mut rng, true);
            let x = f.to_dofs();
            let n = triple_norm(&f, &mesh).unwrap();
            let lhs = a.bilinear(&x, &x);
            assert!((lhs - nu * n * n).abs() <= 1e-12 * lhs);
        }
    }

    #[test]
    fn b_structure_and_divergence() {
        let mesh = build_rect_uniform(3, 3, Rect::UNIT).unwrap();
        let b = assemble_b(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_field(&mesh, &mut rng, false);
        let bv = b.mul_vec(&f.to_dofs());
        for t in 0..mesh.num_triangles() {
            let cols: Vec<usize> = b.row(t).map(|(c, _)| c).collect();
            assert!(cols.len() <= 3);
            assert!(cols.iter().all(|&c| c >= 2 * mesh.num_vertices()));
            let l = f.local(&mesh, t);
            let d = modified_divergence_local(&mesh, t, [l[6], l[7], l[8]]).unwrap();
            assert!((bv[t] / mesh.area(t) - d).abs() < 1e-12);
        }
        // divergence-free linear field
        let w = interpolate_qh(&mesh, |x| [x[0] - 2.0 * x[1], 3.0 * x[0] - x[1]], 2);
        assert!(b.mul_vec(&w.to_dofs()).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn discrete_divergence_theorem() {
        let mesh = build_rect_uniform(4, 3, Rect::UNIT).unwrap();
        let b = assemble_b(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(&mesh, &mut rng, true);
        let total: f64 = b.mul_vec(&f.to_dofs()).iter().sum();
        assert!(total.abs() < 1e-13);
    }

    #[test]
    fn zero_linearization_point() {
        let mesh = build_rect_uniform(2, 2, Rect::UNIT).unwrap();
        let (c, v) = assemble_c_linearized(&mesh, &EGField::zeros(&mesh), 2).unwrap();
        assert!(c.iter().all(|(_, _, x)| x == 0.0));
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn convection_is_skew() {
        let mesh = build_rect_uniform(4, 4, Rect::UNIT).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let v = random_field(&mesh, &mut rng, false);
            let w = random_field(&mesh, &mut rng, false);
            let c = trilinear_form(&mesh, &v, &w, &w, 2).unwrap();
            assert!(c.abs() < 1e-13);
        }
    }

    /// Independent quadrature loop: evaluates curl from barycentric
    /// gradients and the reconstruction pointwise.
    fn brute_trilinear(mesh: &Mesh2D, w: &EGField, z: &EGField, v: &EGField) -> f64 {
        let rule = quadrature_rule(6).unwrap();
        let mut total = 0.0;
        for t in 0..mesh.num_triangles() {
            let g = mesh.barycentric_gradients(t);
            let tri = mesh.triangle(t);
            let mut omega = 0.0;
            for k in 0..3 {
                let u = w.vertex_values[tri[k]];
                omega += u[1] * g[k][0] - u[0] * g[k][1];
            }
            for (l, wq) in rule.iter() {
                let x = mesh.map_barycentric(t, l);
                let rz = crate::reconstruction::rt_value(mesh, z.local(mesh, t)[6..].try_into().unwrap(), t, x);
                let rv = crate::reconstruction::rt_value(mesh, v.local(mesh, t)[6..].try_into().unwrap(), t, x);
                let cross = [-omega * rz[1], omega * rz[0]];
                total += wq * mesh.area(t) * (cross[0] * rv[0] + cross[1] * rv[1]);
            }
        }
        total
    }

    #[test]
    fn linearization_matches_brute_force() {
        let mesh = build_rect_uniform(2, 2, Rect::UNIT).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let un = random_field(&mesh, &mut rng, false);
            let d = random_field(&mesh, &mut rng, false);
            let v = random_field(&mesh, &mut rng, false);
            let (c, vec) = assemble_c_linearized(&mesh, &un, 2).unwrap();
            let from_matrix = c.bilinear(&v.to_dofs(), &d.to_dofs());
            let expected = brute_trilinear(&mesh, &d, &un, &v) + brute_trilinear(&mesh, &un, &d, &v);
            assert!((from_matrix - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            let from_vec: f64 = vec.iter().zip(v.to_dofs()).map(|(a, b)| a * b).sum();
            let expected = brute_trilinear(&mesh, &un, &un, &v);
            assert!((from_vec - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    #[test]
    fn load_of_constant_force() {
        let mesh = build_rect_uniform(2, 2, Rect::UNIT).unwrap();
        let c = [1.5, -0.5];
        let load = assemble_load(&mesh, |_| c, 2).unwrap();
        let offset = 2 * mesh.num_vertices();
        assert!(load[..offset].iter().all(|&x| x == 0.0));
        let mut expected = vec![0.0; mesh.num_edges()];
        for t in 0..mesh.num_triangles() {
            let cen = mesh.centroid(t);
            let pts = mesh.triangle_points(t);
            for k in 0..3 {
                let e = mesh.triangle_edges(t)[k];
                let s = mesh.triangle_signs(t)[k] * mesh.edge_length(e) / 2.0;
                expected[e] += s * (c[0] * (cen[0] - pts[k][0]) + c[1] * (cen[1] - pts[k][1]));
            }
        }
        for e in 0..mesh.num_edges() {
            assert!((load[offset + e] - expected[e]).abs() < 1e-14);
        }
        assert!(assemble_load(&mesh, |_| [0.0, 0.0], 5).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn d_form_constant_speed() {
        let mesh = build_rect_uniform(2, 2, Rect::UNIT).unwrap();
        let mut un = EGField::zeros(&mesh);
        un.vertex_values.iter_mut().for_each(|v| *v = [1.0, 0.0]);
        let (m, v) = assemble_d_linearized(&mesh, &[tags::RIGHT], &un);
        let offset = 2 * mesh.num_vertices();
        for e in 0..mesh.num_edges() {
            let expected = if mesh.boundary_tag(e) == Some(tags::RIGHT) {
                0.5 * mesh.edge_length(e)
            } else {
                0.0
            };
            assert!((v[offset + e] - expected).abs() < 1e-15);
        }
        // Newton consistency: J u_n − d(u_n, u_n, ·) = d(u_n, u_n, ·)
        let ju = m.mul_vec(&un.to_dofs());
        for i in 0..ju.len() {
            assert!((ju[i] - v[i] - v[i]).abs() < 1e-15);
        }
        let zero = EGField::zeros(&mesh);
        let (m0, v0) = assemble_d_linearized(&mesh, &[tags::RIGHT], &zero);
        assert!(m0.iter().all(|(_, _, x)| x == 0.0) && v0.iter().all(|&x| x == 0.0));
        let data = assemble_neumann_data(&mesh, &[tags::RIGHT], |_| [0.0, 0.0], 3);
        assert!(data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn neumann_data_terms() {
        let mesh = build_rect_uniform(2, 2, Rect::UNIT).unwrap();
        // right side, n_e = (1, 0): n × g = g2, u_N · n = g1
        let data = assemble_neumann_data(&mesh, &[tags::RIGHT], |x| [2.0, x[1]], 3);
        let offset = 2 * mesh.num_vertices();
        for e in mesh.edges_with_tag(tags::RIGHT) {
            assert!((data[offset + e] - 2.0 * mesh.edge_length(e)).abs() < 1e-15);
        }
        // y-component test against the hat functions: Σ over vertices = ∫ y dy = 1/2
        let total_y: f64 = (0..mesh.num_vertices()).map(|v| data[2 * v + 1]).sum();
        assert!((total_y - 0.5).abs() < 1e-15);
        let total_x: f64 = (0..mesh.num_vertices()).map(|v| data[2 * v]).sum();
        assert!(total_x.abs() < 1e-15);
    }

    #[test]
    fn lid_edges_carry_zero_flux() {
        let mesh = build_rect_uniform(4, 4, Rect::UNIT).unwrap();
        let zero: VectorFn = Arc::new(|_| [0.0, 0.0]);
        let data = DirichletData::new()
            .with(tags::TOP, Arc::new(|_| [1.0, 0.0]))
            .with(tags::LEFT, zero.clone())
            .with(tags::RIGHT, zero.clone())
            .with(tags::BOTTOM, zero);
        let dofs = dirichlet_dofs(&mesh, &data, 2).unwrap();
        for e in mesh.edges_with_tag(tags::TOP) {
            assert_eq!(dofs.constrained[dofs.edge_dof(e)], Some(0.0));
        }
        // corner (1, 1) takes the lid value
        let corner = mesh
            .vertices()
            .iter()
            .position(|&p| p == [1.0, 1.0])
            .unwrap();
        assert_eq!(dofs.constrained[dofs.vertex_dof(corner, 0)], Some(1.0));
        let interior = mesh.vertices().iter().position(|&p| p == [0.5, 0.5]).unwrap();
        assert!(dofs.is_free(dofs.vertex_dof(interior, 0)));
        assert_eq!(boundary_flux(&mesh, &dofs), 0.0);
        assert!(dirichlet_dofs(&mesh, &DirichletData::new().with(99, Arc::new(|_| [0.0; 2])), 2).is_err());
    }

    #[test]
    fn homogeneous_dirichlet_leaves_rhs() {
        let mesh = Arc::new(build_rect_uniform(3, 3, Rect::UNIT).unwrap());
        let zero: VectorFn = Arc::new(|_| [0.0, 0.0]);
        let data = DirichletData::uniform(&[tags::BOTTOM, tags::RIGHT, tags::TOP, tags::LEFT], zero);
        let problem = Problem::new(mesh.clone(), 1.0, data)
            .with_body_force(Arc::new(|x| [x[1], -x[0]]));
        let prepared = problem.prepare().unwrap();
        let sys = prepared.linearize(&EGField::zeros(&mesh)).unwrap();
        assert_eq!(sys.rhs_u, prepared.load);
        assert!(sys.rhs_p.iter().all(|&x| x == 0.0));
        assert!(sys.mean_constraint.is_some());
        assert!(sys.warnings.is_empty());
        let free = sys.dof_map.num_free();
        let interior_vertices = 4;
        let interior_edges = mesh.num_edges() - 12;
        assert_eq!(free, 2 * interior_vertices + interior_edges);
    }
}

//! Enriched Galerkin velocity space: a continuous piecewise-linear vector
//! field plus one scalar per edge that replaces the normal flux of the CG
//! part on that edge.
//!
//! Local degrees of freedom on a triangle are always ordered as
//! `(v0x at local vertices 0..3, v0y at local vertices 0..3, v_b at local
//! edges 0..3)`, local edge `k` being opposite local vertex `k`.

use crate::error::FemError;
use crate::mesh::{Mesh2D, Point};
use crate::quadrature::gauss_legendre;

pub type LocalDofs = [f64; 9];
pub type LocalMatrix = [[f64; 9]; 9];
/// `G[i][j] = ∂_j v_i`.
pub type Tensor2 = [[f64; 2]; 2];

/// Default number of Gauss-Legendre points for edge averages of analytic
/// fields (exact for traces up to degree 9).
pub const DEFAULT_EDGE_POINTS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct EGField {
    pub vertex_values: Vec<Point>,
    pub edge_values: Vec<f64>,
}

impl EGField {
    pub fn zeros(mesh: &Mesh2D) -> Self {
        Self {
            vertex_values: vec![[0.0; 2]; mesh.num_vertices()],
            edge_values: vec![0.0; mesh.num_edges()],
        }
    }

    pub fn check(&self, mesh: &Mesh2D) -> Result<(), FemError> {
        if self.vertex_values.len() != mesh.num_vertices() {
            return Err(FemError::DimensionMismatch {
                what: "vertex values",
                got: self.vertex_values.len(),
                expected: mesh.num_vertices(),
            });
        }
        if self.edge_values.len() != mesh.num_edges() {
            return Err(FemError::DimensionMismatch {
                what: "edge values",
                got: self.edge_values.len(),
                expected: mesh.num_edges(),
            });
        }
        Ok(())
    }

    /// Unpacks a global velocity vector laid out as in [`DofMap`].
    pub fn from_dofs(mesh: &Mesh2D, dofs: &[f64]) -> Self {
        let nv = mesh.num_vertices();
        debug_assert_eq!(dofs.len(), 2 * nv + mesh.num_edges());
        Self {
            vertex_values: (0..nv).map(|v| [dofs[2 * v], dofs[2 * v + 1]]).collect(),
            edge_values: dofs[2 * nv..].to_vec(),
        }
    }

    pub fn to_dofs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.vertex_values.len() + self.edge_values.len());
        for v in &self.vertex_values {
            out.extend_from_slice(v);
        }
        out.extend_from_slice(&self.edge_values);
        out
    }

    pub fn local(&self, mesh: &Mesh2D, t: usize) -> LocalDofs {
        let tri = mesh.triangle(t);
        let edges = mesh.triangle_edges(t);
        let mut out = [0.0; 9];
        for k in 0..3 {
            out[k] = self.vertex_values[tri[k]][0];
            out[3 + k] = self.vertex_values[tri[k]][1];
            out[6 + k] = self.edge_values[edges[k]];
        }
        out
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            vertex_values: self
                .vertex_values
                .iter()
                .map(|v| [alpha * v[0], alpha * v[1]])
                .collect(),
            edge_values: self.edge_values.iter().map(|x| alpha * x).collect(),
        }
    }

    /// Membership in the space with vanishing boundary values.
    pub fn in_vh0(&self, mesh: &Mesh2D) -> bool {
        mesh.boundary_edges().all(|e| {
            let [a, b] = mesh.edge(e);
            self.edge_values[e] == 0.0
                && self.vertex_values[a] == [0.0, 0.0]
                && self.vertex_values[b] == [0.0, 0.0]
        })
    }

    pub fn max_vertex_speed(&self) -> f64 {
        self.vertex_values
            .iter()
            .map(|v| v[0].hypot(v[1]))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_edge(&self) -> f64 {
        self.edge_values.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }
}

/// Piecewise-constant pressure, one value per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub values: Vec<f64>,
}

impl PressureField {
    pub fn zeros(mesh: &Mesh2D) -> Self {
        Self {
            values: vec![0.0; mesh.num_triangles()],
        }
    }

    /// `∫_Ω p`.
    pub fn integral(&self, mesh: &Mesh2D) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(t, p)| mesh.area(t) * p)
            .sum()
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|p| p + c).collect(),
        }
    }
}

/// Global layout of velocity unknowns: `(x, y)` pairs per vertex followed by
/// one scalar per edge, plus the set of Dirichlet-constrained unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub num_vertices: usize,
    pub num_edges: usize,
    /// Prescribed value for every constrained unknown, `None` if free.
    pub constrained: Vec<Option<f64>>,
}

impl DofMap {
    pub fn unconstrained(mesh: &Mesh2D) -> Self {
        let n = 2 * mesh.num_vertices() + mesh.num_edges();
        Self {
            num_vertices: mesh.num_vertices(),
            num_edges: mesh.num_edges(),
            constrained: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        2 * self.num_vertices + self.num_edges
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn vertex_dof(&self, v: usize, component: usize) -> usize {
        2 * v + component
    }

    pub fn edge_dof_offset(&self) -> usize {
        2 * self.num_vertices
    }

    pub fn edge_dof(&self, e: usize) -> usize {
        2 * self.num_vertices + e
    }

    pub fn is_free(&self, dof: usize) -> bool {
        self.constrained[dof].is_none()
    }

    pub fn num_free(&self) -> usize {
        self.constrained.iter().filter(|c| c.is_none()).count()
    }
}

/// Global indices of the nine local unknowns of triangle `t`.
pub fn local_dof_indices(mesh: &Mesh2D, t: usize) -> [usize; 9] {
    let nv = mesh.num_vertices();
    let tri = mesh.triangle(t);
    let edges = mesh.triangle_edges(t);
    let mut out = [0; 9];
    for k in 0..3 {
        out[k] = 2 * tri[k];
        out[3 + k] = 2 * tri[k] + 1;
        out[6 + k] = 2 * nv + edges[k];
    }
    out
}

/// Mean normal trace `(1/|e|) ∫_e v0 · n_e` of a linear field given by its
/// endpoint values.
pub fn qb_edge_average(a: Point, b: Point, normal: Point) -> f64 {
    0.5 * ((a[0] + b[0]) * normal[0] + (a[1] + b[1]) * normal[1])
}

/// Nodal interpolation of the CG part and edge means of the normal trace.
pub fn interpolate_qh<F>(mesh: &Mesh2D, u: F, edge_points: usize) -> EGField
where
    F: Fn(Point) -> Point,
{
    let vertex_values = mesh.vertices().iter().map(|&x| u(x)).collect();
    let edge_values = (0..mesh.num_edges())
        .map(|e| edge_mean(mesh, e, |x| {
            let v = u(x);
            let n = mesh.edge_normal(e);
            v[0] * n[0] + v[1] * n[1]
        }, edge_points))
        .collect();
    EGField {
        vertex_values,
        edge_values,
    }
}

/// `(1/|e|) ∫_e g ds` by an `points`-point Gauss-Legendre rule.
pub fn edge_mean<G: Fn(Point) -> f64>(mesh: &Mesh2D, e: usize, g: G, points: usize) -> f64 {
    let [a, b] = mesh.edge(e);
    let (p, q) = (mesh.vertex(a), mesh.vertex(b));
    gauss_legendre(points)
        .iter()
        .map(|&(s, w)| {
            let x = [p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1])];
            w * g(x)
        })
        .sum()
}

fn check_nondegenerate(mesh: &Mesh2D, t: usize) -> Result<(), FemError> {
    let h = mesh.diameter(t);
    let threshold = 1e-14 * h * h;
    let area = mesh.area(t);
    if !(area >= threshold) || h == 0.0 {
        return Err(FemError::DegenerateElement {
            triangle: t,
            area,
            threshold,
        });
    }
    Ok(())
}

/// Linear map from local unknowns to the modified gradient, rows ordered
/// `G00, G01, G10, G11`.
///
/// Testing the defining identity against constant tensors gives
/// `|T| G = Σ_e |e| (v_b σ_e n nᵀ + (t · v̄0) t nᵀ)` with `n` the outward
/// normal, `t` its counterclockwise rotation and `v̄0` the midpoint value.
pub fn gradient_operator(mesh: &Mesh2D, t: usize) -> Result<[[f64; 9]; 4], FemError> {
    check_nondegenerate(mesh, t)?;
    let area = mesh.area(t);
    let edges = mesh.triangle_edges(t);
    let signs = mesh.triangle_signs(t);
    let mut op = [[0.0; 9]; 4];
    for k in 0..3 {
        let len = mesh.edge_length(edges[k]);
        let n = mesh.outward_normal(t, k);
        let tan = [-n[1], n[0]];
        let scale = len / area;
        for i in 0..2 {
            for j in 0..2 {
                let row = 2 * i + j;
                op[row][6 + k] += scale * signs[k] * n[i] * n[j];
                let tn = scale * tan[i] * n[j];
                for end in [(k + 1) % 3, (k + 2) % 3] {
                    op[row][end] += 0.5 * tn * tan[0];
                    op[row][3 + end] += 0.5 * tn * tan[1];
                }
            }
        }
    }
    Ok(op)
}

pub fn modified_gradient_local(
    mesh: &Mesh2D,
    t: usize,
    dofs: &LocalDofs,
) -> Result<Tensor2, FemError> {
    let op = gradient_operator(mesh, t)?;
    let mut g = [[0.0; 2]; 2];
    for (row, coeffs) in op.iter().enumerate() {
        g[row / 2][row % 2] = coeffs.iter().zip(dofs).map(|(c, d)| c * d).sum();
    }
    Ok(g)
}

/// `(1/|T|) Σ_e |e| σ_e v_b[e]`.
pub fn modified_divergence_local(
    mesh: &Mesh2D,
    t: usize,
    edge_dofs: [f64; 3],
) -> Result<f64, FemError> {
    check_nondegenerate(mesh, t)?;
    let edges = mesh.triangle_edges(t);
    let signs = mesh.triangle_signs(t);
    let area = mesh.area(t);
    Ok((0..3)
        .map(|k| edge_dofs[k] * (signs[k] * mesh.edge_length(edges[k]) / area))
        .sum())
}

/// Per-edge mismatch `Q_b v_{0,n} − v_b` as rows over the local unknowns.
fn mismatch_rows(mesh: &Mesh2D, t: usize) -> [[f64; 9]; 3] {
    let edges = mesh.triangle_edges(t);
    let mut rows = [[0.0; 9]; 3];
    for k in 0..3 {
        let n = mesh.edge_normal(edges[k]);
        for end in [(k + 1) % 3, (k + 2) % 3] {
            rows[k][end] = 0.5 * n[0];
            rows[k][3 + end] = 0.5 * n[1];
        }
        rows[k][6 + k] = -1.0;
    }
    rows
}

/// Stabilization kernel `h_T^{-1} Σ_e |e| g_e g_eᵀ` without the viscosity.
pub fn stab_local(mesh: &Mesh2D, t: usize) -> Result<LocalMatrix, FemError> {
    check_nondegenerate(mesh, t)?;
    let edges = mesh.triangle_edges(t);
    let rows = mismatch_rows(mesh, t);
    let inv_h = 1.0 / mesh.diameter(t);
    let mut m = [[0.0; 9]; 9];
    for k in 0..3 {
        let w = inv_h * mesh.edge_length(edges[k]);
        for i in 0..9 {
            if rows[k][i] == 0.0 {
                continue;
            }
            for j in 0..9 {
                m[i][j] += w * rows[k][i] * rows[k][j];
            }
        }
    }
    Ok(m)
}

/// `|T| Dᵀ D` for the gradient operator `D`.
pub fn gradient_gram_local(mesh: &Mesh2D, t: usize) -> Result<LocalMatrix, FemError> {
    let op = gradient_operator(mesh, t)?;
    let area = mesh.area(t);
    let mut m = [[0.0; 9]; 9];
    for row in &op {
        for i in 0..9 {
            if row[i] == 0.0 {
                continue;
            }
            for j in 0..9 {
                m[i][j] += area * row[i] * row[j];
            }
        }
    }
    Ok(m)
}

/// Scalar curl `∂x v2 − ∂y v1` of the CG part as coefficients over the
/// local unknowns (edge entries are zero).
pub fn curl_operator(mesh: &Mesh2D, t: usize) -> [f64; 9] {
    let g = mesh.barycentric_gradients(t);
    let mut c = [0.0; 9];
    for k in 0..3 {
        c[k] = -g[k][1];
        c[3 + k] = g[k][0];
    }
    c
}

/// Gradient of the CG part, constant on each triangle.
pub fn cg_gradient(mesh: &Mesh2D, t: usize, dofs: &LocalDofs) -> Tensor2 {
    let g = mesh.barycentric_gradients(t);
    let mut out = [[0.0; 2]; 2];
    for k in 0..3 {
        for j in 0..2 {
            out[0][j] += dofs[k] * g[k][j];
            out[1][j] += dofs[3 + k] * g[k][j];
        }
    }
    out
}

/// Mesh-dependent energy norm
/// `(Σ_T ‖∇_m v‖²_T + Σ_T h_T^{-1} ‖Q_b v_{0,n} − v_b‖²_{∂T})^{1/2}`.
pub fn triple_norm(field: &EGField, mesh: &Mesh2D) -> Result<f64, FemError> {
    field.check(mesh)?;
    let mut sum = 0.0;
    for t in 0..mesh.num_triangles() {
        let local = field.local(mesh, t);
        let g = modified_gradient_local(mesh, t, &local)?;
        let frob: f64 = g.iter().flatten().map(|x| x * x).sum();
        sum += mesh.area(t) * frob;
        let edges = mesh.triangle_edges(t);
        let inv_h = 1.0 / mesh.diameter(t);
        for (k, row) in mismatch_rows(mesh, t).iter().enumerate() {
            let jump: f64 = row.iter().zip(&local).map(|(r, d)| r * d).sum();
            sum += inv_h * mesh.edge_length(edges[k]) * jump * jump;
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rect_uniform, Rect};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_mesh() -> Mesh2D {
        Mesh2D::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]], &[]).unwrap()
    }

    fn quad_form(m: &LocalMatrix, x: &LocalDofs) -> f64 {
        (0..9)
            .map(|i| (0..9).map(|j| x[i] * m[i][j] * x[j]).sum::<f64>())
            .sum()
    }

    /// Consistent local DOFs of a linear field `u(x) = c + M x`.
    fn linear_local(mesh: &Mesh2D, t: usize, c: Point, m: Tensor2) -> LocalDofs {
        let u = |x: Point| {
            [
                c[0] + m[0][0] * x[0] + m[0][1] * x[1],
                c[1] + m[1][0] * x[0] + m[1][1] * x[1],
            ]
        };
        interpolate_qh(mesh, u, 2).local(mesh, t)
    }

    #[test]
    fn qb_examples() {
        assert_eq!(qb_edge_average([1.0, 0.0], [1.0, 0.0], [1.0, 0.0]), 1.0);
        assert_eq!(qb_edge_average([0.0, 0.0], [2.0, 0.0], [1.0, 0.0]), 1.0);
        // (x², 0) on the edge x = 0 vanishes at both endpoints and in mean
        let f = |x: Point| [x[0] * x[0], 0.0];
        assert_eq!(qb_edge_average(f([0.0, 0.0]), f([0.0, 1.0]), [1.0, 0.0]), 0.0);
    }

    #[test]
    fn constant_interpolation() {
        let mesh = build_rect_uniform(3, 3, Rect::UNIT).unwrap();
        let f = interpolate_qh(&mesh, |_| [1.0, 2.0], 2);
        for e in 0..mesh.num_edges() {
            let n = mesh.edge_normal(e);
            assert!((f.edge_values[e] - (n[0] + 2.0 * n[1])).abs() < 1e-15);
        }
        assert!(f.vertex_values.iter().all(|&v| v == [1.0, 2.0]));
    }

    #[test]
    fn constant_field_has_zero_gradient() {
        let mesh = reference_mesh();
        let local = linear_local(&mesh, 0, [0.7, -1.3], [[0.0; 2]; 2]);
        let g = modified_gradient_local(&mesh, 0, &local).unwrap();
        assert!(g.iter().flatten().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn gradient_exact_on_linears() {
        let mesh = build_rect_uniform(2, 3, Rect::UNIT).unwrap();
        let m = [[0.3, -1.7], [2.2, 0.9]];
        for t in 0..mesh.num_triangles() {
            let local = linear_local(&mesh, t, [0.5, 0.25], m);
            let g = modified_gradient_local(&mesh, t, &local).unwrap();
            for i in 0..2 {
                for j in 0..2 {
                    assert!((g[i][j] - m[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    /// Brute force: assemble the 4x4 Gram system against the basis tensors,
    /// with edge integrals by 4-point Gauss quadrature.
    fn brute_force_gradient(mesh: &Mesh2D, t: usize, dofs: &LocalDofs) -> Tensor2 {
        let edges = mesh.triangle_edges(t);
        let signs = mesh.triangle_signs(t);
        let mut rhs = [0.0; 4];
        for b in 0..4 {
            let mut sigma = [[0.0; 2]; 2];
            sigma[b / 2][b % 2] = 1.0;
            for k in 0..3 {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                let len = mesh.edge_length(edges[k]);
                let n = mesh.outward_normal(t, k);
                let sn = [
                    sigma[0][0] * n[0] + sigma[0][1] * n[1],
                    sigma[1][0] * n[0] + sigma[1][1] * n[1],
                ];
                for &(s, w) in gauss_legendre(4).iter() {
                    let v0 = [
                        (1.0 - s) * dofs[i] + s * dofs[j],
                        (1.0 - s) * dofs[3 + i] + s * dofs[3 + j],
                    ];
                    let nsn = n[0] * sn[0] + n[1] * sn[1];
                    let n_x_v = n[0] * v0[1] - n[1] * v0[0];
                    let n_x_sn = n[0] * sn[1] - n[1] * sn[0];
                    rhs[b] += w * len * (dofs[6 + k] * signs[k] * nsn + n_x_v * n_x_sn);
                }
            }
        }
        // basis tensors are orthogonal with Gram |T| I
        let area = mesh.area(t);
        [[rhs[0] / area, rhs[1] / area], [rhs[2] / area, rhs[3] / area]]
    }

    #[test]
    fn gradient_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mesh = reference_mesh();
        let skew = Mesh2D::new(vec![[0.1, 0.2], [1.3, -0.1], [0.4, 0.9]], vec![[0, 1, 2]], &[])
            .unwrap();
        for m in [&mesh, &skew] {
            for _ in 0..20 {
                let dofs: LocalDofs = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                let g = modified_gradient_local(m, 0, &dofs).unwrap();
                let b = brute_force_gradient(m, 0, &dofs);
                for i in 0..2 {
                    for j in 0..2 {
                        assert!((g[i][j] - b[i][j]).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn divergence_examples() {
        let mesh = reference_mesh();
        assert_eq!(modified_divergence_local(&mesh, 0, [0.0; 3]).unwrap(), 0.0);
        let signs = mesh.triangle_signs(0);
        let dofs = [signs[0], signs[1], signs[2]];
        let d = modified_divergence_local(&mesh, 0, dofs).unwrap();
        assert!((d - 2.0 * (2.0 + 2f64.sqrt())).abs() < 1e-13);
        // divergence-free linear field: (x + y, -y)
        let local = linear_local(&mesh, 0, [0.0, 0.0], [[1.0, 1.0], [0.0, -1.0]]);
        let d = modified_divergence_local(&mesh, 0, [local[6], local[7], local[8]]).unwrap();
        assert!(d.abs() < 1e-14);
    }

    #[test]
    fn divergence_is_trace_of_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mesh = build_rect_uniform(2, 2, Rect::UNIT).unwrap();
        for t in 0..mesh.num_triangles() {
            let dofs: LocalDofs = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let g = modified_gradient_local(&mesh, t, &dofs).unwrap();
            let d = modified_divergence_local(&mesh, t, [dofs[6], dofs[7], dofs[8]]).unwrap();
            assert!((g[0][0] + g[1][1] - d).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let mesh = Mesh2D::new_unchecked(
            vec![[0.0, 0.0], [1.0, 0.0], [2.0, 1e-20]],
            vec![[0, 1, 2]],
        );
        assert!(matches!(
            modified_divergence_local(&mesh, 0, [1.0; 3]),
            Err(FemError::DegenerateElement { .. })
        ));
        assert!(stab_local(&mesh, 0).is_err());
        assert!(gradient_operator(&mesh, 0).is_err());
    }

    #[test]
    fn stabilization_kernel() {
        let mesh = reference_mesh();
        let s = stab_local(&mesh, 0).unwrap();
        let local = linear_local(&mesh, 0, [0.2, 0.1], [[1.0, 2.0], [-0.5, 0.3]]);
        assert!(quad_form(&s, &local).abs() < 1e-14);

        let h = mesh.diameter(0);
        for k in 0..3 {
            let mut x = [0.0; 9];
            x[6 + k] = 1.0;
            let e = mesh.triangle_edges(0)[k];
            assert!((quad_form(&s, &x) - mesh.edge_length(e) / h).abs() < 1e-14);
        }
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(s[i][j], s[j][i]);
            }
        }
    }

    #[test]
    fn stabilization_matches_finite_difference_hessian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mesh = Mesh2D::new(vec![[0.1, 0.2], [1.3, -0.1], [0.4, 0.9]], vec![[0, 1, 2]], &[])
            .unwrap();
        let s = stab_local(&mesh, 0).unwrap();
        let edges = mesh.triangle_edges(0);
        // independent evaluation of the quadratic form from its definition
        let q = |x: &LocalDofs| -> f64 {
            let mut total = 0.0;
            for k in 0..3 {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                let n = mesh.edge_normal(edges[k]);
                let qb = qb_edge_average([x[i], x[3 + i]], [x[j], x[3 + j]], n);
                total += mesh.edge_length(edges[k]) * (qb - x[6 + k]).powi(2);
            }
            total / mesh.diameter(0)
        };
        let base: LocalDofs = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let step = 1e-3;
        for i in 0..9 {
            for j in 0..9 {
                let shift = |di: f64, dj: f64| {
                    let mut x = base;
                    x[i] += di;
                    x[j] += dj;
                    q(&x)
                };
                let fd = (shift(step, step) - shift(step, -step) - shift(-step, step)
                    + shift(-step, -step))
                    / (4.0 * step * step);
                // quadratic form: Hessian is 2S
                assert!((fd - 2.0 * s[i][j]).abs() < 1e-8, "{i} {j}");
            }
        }
    }

    #[test]
    fn triple_norm_basics() {
        let mesh = build_rect_uniform(4, 4, Rect::UNIT).unwrap();
        assert_eq!(triple_norm(&EGField::zeros(&mesh), &mesh).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = EGField::zeros(&mesh);
        for v in f.vertex_values.iter_mut() {
            *v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        }
        for x in f.edge_values.iter_mut() {
            *x = rng.gen_range(-1.0..1.0);
        }
        let n = triple_norm(&f, &mesh).unwrap();
        let n3 = triple_norm(&f.scaled(-3.0), &mesh).unwrap();
        assert!((n3 - 3.0 * n).abs() <= 1e-13 * n3);
    }

    #[test]
    fn dof_round_trip_and_membership() {
        let mesh = build_rect_uniform(2, 2, Rect::UNIT).unwrap();
        let mut f = EGField::zeros(&mesh);
        assert!(f.in_vh0(&mesh));
        let interior = (0..mesh.num_edges()).find(|&e| !mesh.is_boundary_edge(e)).unwrap();
        f.edge_values[interior] = 1.5;
        f.vertex_values[4] = [0.5, -0.5];
        assert!(f.in_vh0(&mesh));
        assert_eq!(EGField::from_dofs(&mesh, &f.to_dofs()), f);
        let boundary = mesh.boundary_edges().next().unwrap();
        f.edge_values[boundary] = 1.0;
        assert!(!f.in_vh0(&mesh));
        let local = local_dof_indices(&mesh, 0);
        let dofs = f.to_dofs();
        let l = f.local(&mesh, 0);
        for k in 0..9 {
            assert_eq!(dofs[local[k]], l[k]);
        }
    }
}

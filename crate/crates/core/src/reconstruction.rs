//! Lowest-order Raviart-Thomas reconstruction of enriched Galerkin fields.
//!
//! The basis function of local edge `k` on triangle `T` is
//! `φ_k(x) = σ_k |e_k| / (2|T|) (x − p_k)`, with `p_k` the opposite vertex.
//! Its normal component along the assigned edge normal is identically one
//! on its own edge and zero on the other two, so the coefficient of every
//! edge is exactly the edge value `v_b` of the source field.

use crate::eg_space::EGField;
use crate::error::FemError;
use crate::mesh::{Mesh2D, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct RTField {
    pub edge_coeff: Vec<f64>,
}

impl RTField {
    pub fn zeros(mesh: &Mesh2D) -> Self {
        Self {
            edge_coeff: vec![0.0; mesh.num_edges()],
        }
    }

    pub fn local(&self, mesh: &Mesh2D, t: usize) -> [f64; 3] {
        mesh.triangle_edges(t).map(|e| self.edge_coeff[e])
    }
}

pub fn reconstruct(field: &EGField) -> RTField {
    RTField {
        edge_coeff: field.edge_values.clone(),
    }
}

/// Values of the three local basis functions at `x`.
pub fn rt_basis(mesh: &Mesh2D, t: usize, x: Point) -> [Point; 3] {
    let pts = mesh.triangle_points(t);
    let edges = mesh.triangle_edges(t);
    let signs = mesh.triangle_signs(t);
    let two_area = 2.0 * mesh.area(t);
    std::array::from_fn(|k| {
        let s = signs[k] * mesh.edge_length(edges[k]) / two_area;
        [s * (x[0] - pts[k][0]), s * (x[1] - pts[k][1])]
    })
}

/// Constant divergences `σ_k |e_k| / |T|` of the local basis functions.
pub fn rt_basis_divergence(mesh: &Mesh2D, t: usize) -> [f64; 3] {
    let edges = mesh.triangle_edges(t);
    let signs = mesh.triangle_signs(t);
    let area = mesh.area(t);
    std::array::from_fn(|k| signs[k] * mesh.edge_length(edges[k]) / area)
}

/// Evaluates the RT field on triangle `t` without checking containment.
pub fn rt_value(mesh: &Mesh2D, coeff: [f64; 3], t: usize, x: Point) -> Point {
    let phi = rt_basis(mesh, t, x);
    let mut v = [0.0; 2];
    for k in 0..3 {
        v[0] += coeff[k] * phi[k][0];
        v[1] += coeff[k] * phi[k][1];
    }
    v
}

pub fn rt_evaluate(mesh: &Mesh2D, field: &RTField, t: usize, x: Point) -> Result<Point, FemError> {
    let l = mesh.barycentric(t, x);
    if l.iter().any(|&c| c < -1e-12) {
        return Err(FemError::OutsideElement {
            triangle: t,
            x: x[0],
            y: x[1],
        });
    }
    Ok(rt_value(mesh, field.local(mesh, t), t, x))
}

pub fn rt_divergence(mesh: &Mesh2D, field: &RTField, t: usize) -> f64 {
    let c = field.local(mesh, t);
    let d = rt_basis_divergence(mesh, t);
    c.iter().zip(&d).map(|(a, b)| a * b).sum()
}

/// Cell-average of the reconstruction (its value at the centroid).
pub fn rt_cell_average(mesh: &Mesh2D, field: &RTField, t: usize) -> Point {
    rt_value(mesh, field.local(mesh, t), t, mesh.centroid(t))
}

//! Legacy ASCII VTK output.

use std::fmt::Write as _;
use std::path::Path;

use crate::eg_space::{curl_operator, EGField, PressureField};
use crate::error::WriteError;
use crate::mesh::Mesh2D;
use crate::reconstruction::{reconstruct, rt_cell_average, rt_divergence};
use crate::verification::kinematic_pressure;

/// Unstructured grid with `u0` as point data and, per cell, the pressure,
/// kinematic pressure, modified divergence, scalar curl of `u0` and the
/// reconstructed velocity at the centroid.
pub fn vtk_string(mesh: &Mesh2D, u: &EGField, p: &PressureField, title: &str) -> String {
    let mut out = String::new();
    let title = title.replace('\n', " ");
    let _ = write!(
        out,
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n"
    );
    let _ = writeln!(out, "POINTS {} double", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:e} {:e} 0", v[0], v[1]);
    }
    let nt = mesh.num_triangles();
    let _ = writeln!(out, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(out, "CELL_TYPES {nt}");
    for _ in 0..nt {
        out.push_str("5\n");
    }

    let _ = writeln!(out, "POINT_DATA {}", mesh.num_vertices());
    out.push_str("VECTORS velocity double\n");
    for v in &u.vertex_values {
        let _ = writeln!(out, "{:e} {:e} 0", v[0], v[1]);
    }

    let rt = reconstruct(u);
    let kin = kinematic_pressure(mesh, u, p);
    let _ = writeln!(out, "CELL_DATA {nt}");
    let scalar = |out: &mut String, name: &str, f: &dyn Fn(usize) -> f64| {
        let _ = writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for t in 0..nt {
            let _ = writeln!(out, "{:e}", f(t));
        }
    };
    scalar(&mut out, "pressure", &|t| p.values[t]);
    scalar(&mut out, "kinematic_pressure", &|t| kin.values[t]);
    scalar(&mut out, "divergence", &|t| rt_divergence(mesh, &rt, t));
    scalar(&mut out, "curl", &|t| {
        let local = u.local(mesh, t);
        curl_operator(mesh, t)
            .iter()
            .zip(&local)
            .map(|(c, v)| c * v)
            .sum()
    });
    out.push_str("VECTORS reconstructed_velocity double\n");
    for t in 0..nt {
        let v = rt_cell_average(mesh, &rt, t);
        let _ = writeln!(out, "{:e} {:e} 0", v[0], v[1]);
    }
    out
}

pub fn write_vtk(
    mesh: &Mesh2D,
    u: &EGField,
    p: &PressureField,
    path: impl AsRef<Path>,
) -> Result<(), WriteError> {
    let path = path.as_ref();
    let title = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "egns".into());
    std::fs::write(path, vtk_string(mesh, u, p, &title)).map_err(|source| WriteError {
        path: path.to_path_buf(),
        source,
    })
}

//! Triangular meshes with edge topology, globally assigned edge normals and
//! boundary tags.
//!
//! Local conventions used throughout the crate: triangles are stored
//! counterclockwise, and local edge `k` of a triangle is the edge opposite
//! its local vertex `k`. For every edge the assigned unit normal `n_e` is the
//! counterclockwise rotation of the unit tangent from the lower to the higher
//! vertex index, except on the boundary, where `n_e` always points outward.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::MeshError;

pub type Point = [f64; 2];

/// Boundary tags produced by the built-in generators.
pub mod tags {
    /// Untagged boundary edge (imported meshes without a segment entry).
    pub const UNTAGGED: i32 = 0;
    pub const BOTTOM: i32 = 1;
    pub const RIGHT: i32 = 2;
    pub const TOP: i32 = 3;
    pub const LEFT: i32 = 4;
    pub const INLET: i32 = 5;
    pub const OUTLET: i32 = 6;
    pub const WALL: i32 = 7;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_normal: Vec<Point>,
    edge_length: Vec<f64>,
    edge_triangles: Vec<(usize, Option<usize>)>,
    triangle_edges: Vec<[usize; 3]>,
    triangle_signs: Vec<[f64; 3]>,
    boundary_tags: Vec<Option<i32>>,
    area: Vec<f64>,
    diameter: Vec<f64>,
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Mesh2D {
    /// Builds a mesh from vertices, counterclockwise triangles and tagged
    /// boundary segments. Boundary edges without a segment keep
    /// [`tags::UNTAGGED`].
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        segments: &[(usize, usize, i32)],
    ) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            check_triangle(&vertices, t, tri, t + 1)?;
        }
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let key = edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let c = counts.entry(key).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(MeshError::NonManifoldEdge {
                        line: t + 1,
                        triangle: t,
                        a: key.0,
                        b: key.1,
                    });
                }
            }
        }
        let mut mesh = Self::new_unchecked(vertices, triangles);
        mesh.apply_segments(segments, |i| i + 1)?;
        Ok(mesh)
    }

    /// Builds the topology without rejecting invalid input. Edges shared by
    /// more than two triangles keep only the first two incidences; use
    /// [`Mesh2D::validate`] to list what is wrong.
    pub fn new_unchecked(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Self {
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_triangles: Vec<(usize, Option<usize>)> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for k in 0..3 {
                let key = edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let e = *index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_triangles.push((t, None));
                    edges.len() - 1
                });
                if edge_triangles[e].0 != t && edge_triangles[e].1.is_none() {
                    edge_triangles[e].1 = Some(t);
                }
                local[k] = e;
            }
            triangle_edges.push(local);
        }

        let mut edge_normal = Vec::with_capacity(edges.len());
        let mut edge_length = Vec::with_capacity(edges.len());
        for &[a, b] in &edges {
            let t = sub(vertices[b], vertices[a]);
            let len = norm(t);
            edge_length.push(len);
            edge_normal.push([-t[1] / len, t[0] / len]);
        }

        let outward = |t: usize, k: usize| -> Point {
            let tri = triangles[t];
            let d = sub(vertices[tri[(k + 2) % 3]], vertices[tri[(k + 1) % 3]]);
            let len = norm(d);
            [d[1] / len, -d[0] / len]
        };

        let mut boundary_tags = vec![None; edges.len()];
        for (e, &(t, other)) in edge_triangles.iter().enumerate() {
            if other.is_none() {
                let k = triangle_edges[t].iter().position(|&x| x == e).unwrap();
                let n = outward(t, k);
                let ne = edge_normal[e];
                if ne[0] * n[0] + ne[1] * n[1] < 0.0 {
                    edge_normal[e] = [-ne[0], -ne[1]];
                }
                boundary_tags[e] = Some(tags::UNTAGGED);
            }
        }

        let mut triangle_signs = Vec::with_capacity(triangles.len());
        for t in 0..triangles.len() {
            let mut s = [0.0; 3];
            for k in 0..3 {
                let n = outward(t, k);
                let ne = edge_normal[triangle_edges[t][k]];
                s[k] = if ne[0] * n[0] + ne[1] * n[1] >= 0.0 {
                    1.0
                } else {
                    -1.0
                };
            }
            triangle_signs.push(s);
        }

        let area: Vec<f64> = triangles
            .iter()
            .map(|tri| signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]))
            .collect();
        let diameter = triangle_edges
            .iter()
            .map(|es| es.iter().map(|&e| edge_length[e]).fold(0.0, f64::max))
            .collect();

        Self {
            vertices,
            triangles,
            edges,
            edge_normal,
            edge_length,
            edge_triangles,
            triangle_edges,
            triangle_signs,
            boundary_tags,
            area,
            diameter,
        }
    }

    fn from_classifier(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        classify: impl Fn(Point) -> i32,
    ) -> Self {
        let mut mesh = Self::new_unchecked(vertices, triangles);
        for e in 0..mesh.num_edges() {
            if mesh.boundary_tags[e].is_some() {
                mesh.boundary_tags[e] = Some(classify(mesh.edge_midpoint(e)));
            }
        }
        mesh
    }

    fn apply_segments(
        &mut self,
        segments: &[(usize, usize, i32)],
        line_of: impl Fn(usize) -> usize,
    ) -> Result<(), MeshError> {
        let lookup: HashMap<(usize, usize), usize> = self
            .edges
            .iter()
            .enumerate()
            .map(|(e, &[a, b])| ((a, b), e))
            .collect();
        for (s, &(a, b, tag)) in segments.iter().enumerate() {
            match lookup.get(&edge_key(a, b)) {
                Some(&e) if self.boundary_tags[e].is_some() => self.boundary_tags[e] = Some(tag),
                _ => {
                    return Err(MeshError::NotBoundaryEdge {
                        line: line_of(s),
                        a,
                        b,
                    })
                }
            }
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn edge_normal(&self, e: usize) -> Point {
        self.edge_normal[e]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        self.edge_length[e]
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        let (p, q) = (self.vertices[a], self.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }

    /// Incident triangles of an edge; the second is `None` on the boundary.
    pub fn edge_triangles(&self, e: usize) -> (usize, Option<usize>) {
        self.edge_triangles[e]
    }

    /// Edges of a triangle, local edge `k` opposite local vertex `k`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.triangle_edges[t]
    }

    /// `n_e · n` for each local edge of the triangle.
    pub fn triangle_signs(&self, t: usize) -> [f64; 3] {
        self.triangle_signs[t]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.boundary_tags[e].is_some()
    }

    pub fn boundary_tag(&self, e: usize) -> Option<i32> {
        self.boundary_tags[e]
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&e| self.boundary_tags[e].is_some())
    }

    pub fn edges_with_tag(&self, tag: i32) -> impl Iterator<Item = usize> + '_ {
        (0..self.edges.len()).filter(move |&e| self.boundary_tags[e] == Some(tag))
    }

    pub fn area(&self, t: usize) -> f64 {
        self.area[t]
    }

    /// Longest edge of the triangle.
    pub fn diameter(&self, t: usize) -> f64 {
        self.diameter[t]
    }

    pub fn h(&self) -> f64 {
        self.diameter.iter().copied().fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.area.iter().sum()
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Outward unit normal of triangle `t` on its local edge `k`.
    pub fn outward_normal(&self, t: usize, k: usize) -> Point {
        let s = self.triangle_signs[t][k];
        let n = self.edge_normal[self.triangle_edges[t][k]];
        [s * n[0], s * n[1]]
    }

    /// Gradients of the barycentric coordinates of triangle `t`.
    pub fn barycentric_gradients(&self, t: usize) -> [Point; 3] {
        let p = self.triangle_points(t);
        let two_area = 2.0 * self.area[t];
        let mut g = [[0.0; 2]; 3];
        for k in 0..3 {
            let a = p[(k + 1) % 3];
            let b = p[(k + 2) % 3];
            g[k] = [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
        }
        g
    }

    /// Barycentric coordinates of `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        let total = signed_area(a, b, c);
        [
            signed_area(x, b, c) / total,
            signed_area(a, x, c) / total,
            signed_area(a, b, x) / total,
        ]
    }

    pub fn map_barycentric(&self, t: usize, l: [f64; 3]) -> Point {
        let [a, b, c] = self.triangle_points(t);
        [
            l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
            l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
        ]
    }

    /// Writes the mesh in the `.m2d` text format.
    pub fn to_m2d_string(&self) -> String {
        let boundary: Vec<usize> = self.boundary_edges().collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {}",
            self.vertices.len(),
            self.triangles.len(),
            boundary.len()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "{:?} {:?}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for e in boundary {
            let [a, b] = self.edges[e];
            let _ = writeln!(out, "{} {} {}", a, b, self.boundary_tags[e].unwrap());
        }
        out
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<(), MeshError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_m2d_string()).map_err(|source| MeshError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Checks every structural invariant and collects quality statistics.
    pub fn validate(&self) -> MeshReport {
        let mut violations = Vec::new();
        let mut min_area = f64::INFINITY;
        let mut min_angle = f64::INFINITY;
        let mut shape_ratio = Vec::with_capacity(self.triangles.len());

        let mut incidence: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            let p = self.triangle_points(t);
            let area = signed_area(p[0], p[1], p[2]);
            if area <= 0.0 {
                violations.push(Violation::NonPositiveArea { triangle: t, area });
            }
            min_area = min_area.min(area);
            let lengths: Vec<f64> = (0..3)
                .map(|k| norm(sub(p[(k + 2) % 3], p[(k + 1) % 3])))
                .collect();
            for k in 0..3 {
                let u = sub(p[(k + 1) % 3], p[k]);
                let v = sub(p[(k + 2) % 3], p[k]);
                let cos = (u[0] * v[0] + u[1] * v[1]) / (norm(u) * norm(v));
                min_angle = min_angle.min(cos.clamp(-1.0, 1.0).acos());
            }
            let perimeter: f64 = lengths.iter().sum();
            let inradius = 2.0 * area.abs() / perimeter;
            shape_ratio.push(lengths.iter().copied().fold(0.0, f64::max) / inradius);

            for k in 0..3 {
                *incidence
                    .entry(edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]))
                    .or_insert(0) += 1;
            }

            // closed-boundary identity: sum of |e| sigma_e n_e vanishes
            let mut closure = [0.0; 2];
            for k in 0..3 {
                let e = self.triangle_edges[t][k];
                let s = self.triangle_signs[t][k] * self.edge_length[e];
                closure[0] += s * self.edge_normal[e][0];
                closure[1] += s * self.edge_normal[e][1];
            }
            let scale = lengths.iter().sum::<f64>();
            if norm(closure) > 1e-12 * scale {
                violations.push(Violation::OpenBoundary { triangle: t });
            }
        }

        for (&(a, b), &count) in &incidence {
            if count > 2 {
                violations.push(Violation::ExcessIncidence { a, b, count });
            }
        }
        let mut stored: Vec<(usize, usize)> = self.edges.iter().map(|&[a, b]| (a, b)).collect();
        stored.sort_unstable();
        let before = stored.len();
        stored.dedup();
        if stored.len() != before || stored.len() != incidence.len() {
            violations.push(Violation::EdgeSetMismatch);
        }

        for e in 0..self.edges.len() {
            let n = self.edge_normal[e];
            if (norm(n) - 1.0).abs() > 1e-14 {
                violations.push(Violation::NonUnitNormal { edge: e });
            }
            let signs: Vec<f64> = self
                .incident(e)
                .map(|(t, k)| self.triangle_signs[t][k])
                .collect();
            match signs.as_slice() {
                [s] if *s != 1.0 => violations.push(Violation::SignMismatch { edge: e }),
                [s, r] if s + r != 0.0 => violations.push(Violation::SignMismatch { edge: e }),
                _ => {}
            }
        }

        violations.sort_by_key(|v| format!("{v:?}"));
        MeshReport {
            violations,
            min_angle,
            min_area,
            h: self.h(),
            shape_ratio,
        }
    }

    /// `(triangle, local edge)` pairs incident to edge `e`.
    pub fn incident(&self, e: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (t0, t1) = self.edge_triangles[e];
        std::iter::once(t0).chain(t1).map(move |t| {
            let k = self.triangle_edges[t].iter().position(|&x| x == e).unwrap();
            (t, k)
        })
    }
}

fn check_triangle(
    vertices: &[Point],
    t: usize,
    tri: &[usize; 3],
    line: usize,
) -> Result<(), MeshError> {
    for &v in tri {
        if v >= vertices.len() {
            return Err(MeshError::VertexOutOfRange {
                line,
                triangle: t,
                vertex: v,
                count: vertices.len(),
            });
        }
    }
    for k in 0..3 {
        if tri[k] == tri[(k + 1) % 3] {
            return Err(MeshError::DuplicateVertexIndex {
                line,
                triangle: t,
                vertex: tri[k],
            });
        }
    }
    let area = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    if area <= 0.0 {
        return Err(MeshError::InvertedTriangle {
            line,
            triangle: t,
            area,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveArea { triangle: usize, area: f64 },
    ExcessIncidence { a: usize, b: usize, count: usize },
    EdgeSetMismatch,
    NonUnitNormal { edge: usize },
    SignMismatch { edge: usize },
    OpenBoundary { triangle: usize },
}

#[derive(Debug, Clone)]
pub struct MeshReport {
    pub violations: Vec<Violation>,
    /// Smallest interior angle in radians.
    pub min_angle: f64,
    pub min_area: f64,
    pub h: f64,
    /// Longest edge over inradius, per triangle.
    pub shape_ratio: Vec<f64>,
}

impl MeshReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn max_shape_ratio(&self) -> f64 {
        self.shape_ratio.iter().copied().fold(0.0, f64::max)
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
}

/// Uniform `nx x ny` grid with every cell split along its lower-left to
/// upper-right diagonal. Sides are tagged with [`tags::BOTTOM`],
/// [`tags::RIGHT`], [`tags::TOP`] and [`tags::LEFT`].
pub fn build_rect_uniform(nx: usize, ny: usize, domain: Rect) -> Result<Mesh2D, MeshError> {
    let width = domain.x1 - domain.x0;
    let height = domain.y1 - domain.y0;
    if !(width > 0.0 && height > 0.0) {
        return Err(MeshError::DegenerateRectangle { width, height });
    }
    if nx == 0 || ny == 0 {
        return Err(MeshError::EmptyGrid { nx, ny });
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                grid_coord(domain.x0, domain.x1, i, nx),
                grid_coord(domain.y0, domain.y1, j, ny),
            ]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let tol = 1e-9 * width.min(height);
    Ok(Mesh2D::from_classifier(vertices, triangles, |m| {
        if (m[1] - domain.y0).abs() < tol {
            tags::BOTTOM
        } else if (m[0] - domain.x1).abs() < tol {
            tags::RIGHT
        } else if (m[1] - domain.y1).abs() < tol {
            tags::TOP
        } else {
            tags::LEFT
        }
    }))
}

fn grid_coord(lo: f64, hi: f64, i: usize, n: usize) -> f64 {
    if i == n {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / (n as f64)
    }
}

/// Backward-facing step domain `(-4, 20) x (0, 2)` minus `[-4, 0] x [0, 1]`.
///
/// The grid spacing is snapped to `1/m` with `m = round(1/h_target)` so that
/// the step corner is a grid vertex; the resulting mesh size is `mesh.h()`.
pub fn build_step_domain(h_target: f64) -> Result<Mesh2D, MeshError> {
    if !(h_target > 0.0) || !h_target.is_finite() {
        return Err(MeshError::NonPositiveSize(h_target));
    }
    let m = (1.0 / h_target).round().max(1.0) as usize;
    let spacing = 1.0 / m as f64;
    if (spacing - h_target).abs() > 1e-12 {
        log::info!("step mesh: requested spacing {h_target} snapped to {spacing}");
    }
    let (nx, ny) = (24 * m, 2 * m);
    let x = |i: usize| -4.0 + i as f64 * spacing;
    let y = |j: usize| j as f64 * spacing;

    let mut map = vec![usize::MAX; (nx + 1) * (ny + 1)];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut vid = |i: usize, j: usize, vertices: &mut Vec<Point>| {
        let slot = &mut map[j * (nx + 1) + i];
        if *slot == usize::MAX {
            *slot = vertices.len();
            vertices.push([x(i), y(j)]);
        }
        *slot
    };
    for j in 0..ny {
        for i in 0..nx {
            let (cx, cy) = (x(i) + 0.5 * spacing, y(j) + 0.5 * spacing);
            if cx < 0.0 && cy < 1.0 {
                continue;
            }
            let a = vid(i, j, &mut vertices);
            let b = vid(i + 1, j, &mut vertices);
            let c = vid(i + 1, j + 1, &mut vertices);
            let d = vid(i, j + 1, &mut vertices);
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let tol = 1e-9 * spacing;
    Ok(Mesh2D::from_classifier(vertices, triangles, |m| {
        if (m[0] + 4.0).abs() < tol {
            tags::INLET
        } else if (m[0] - 20.0).abs() < tol {
            tags::OUTLET
        } else {
            tags::WALL
        }
    }))
}

/// Reads a mesh in the `.m2d` text format. Topology, normals and signs are
/// always rebuilt from the connectivity.
pub fn import_mesh(path: impl AsRef<Path>) -> Result<Mesh2D, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_m2d(&text)
}

pub fn parse_m2d(text: &str) -> Result<Mesh2D, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    fn fields<T: std::str::FromStr>(
        line: Option<(usize, &str)>,
        n: usize,
        what: &str,
    ) -> Result<(usize, Vec<T>), MeshError> {
        let (no, l) = line.ok_or(MeshError::Parse {
            line: 0,
            message: format!("unexpected end of file while reading {what}"),
        })?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() != n {
            return Err(MeshError::Parse {
                line: no,
                message: format!("expected {n} fields for {what}, found {}", parts.len()),
            });
        }
        let values = parts
            .iter()
            .map(|p| {
                p.parse::<T>().map_err(|_| MeshError::Parse {
                    line: no,
                    message: format!("cannot parse `{p}` in {what}"),
                })
            })
            .collect::<Result<Vec<T>, _>>()?;
        Ok((no, values))
    }

    let (_, header) = fields::<usize>(lines.next(), 3, "header")?;
    let (nv, nt, nb) = (header[0], header[1], header[2]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (_, xy) = fields::<f64>(lines.next(), 2, "vertex")?;
        vertices.push([xy[0], xy[1]]);
    }

    let mut triangles = Vec::with_capacity(nt);
    let mut tri_lines = Vec::with_capacity(nt);
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for t in 0..nt {
        let (no, ijk) = fields::<usize>(lines.next(), 3, "triangle")?;
        let tri = [ijk[0], ijk[1], ijk[2]];
        check_triangle(&vertices, t, &tri, no)?;
        for k in 0..3 {
            let key = edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let c = counts.entry(key).or_insert(0);
            *c += 1;
            if *c > 2 {
                return Err(MeshError::NonManifoldEdge {
                    line: no,
                    triangle: t,
                    a: key.0,
                    b: key.1,
                });
            }
        }
        triangles.push(tri);
        tri_lines.push(no);
    }

    let mut segments = Vec::with_capacity(nb);
    let mut seg_lines = Vec::with_capacity(nb);
    for _ in 0..nb {
        let (no, raw) = fields::<i64>(lines.next(), 3, "boundary segment")?;
        if raw[0] < 0 || raw[1] < 0 {
            return Err(MeshError::Parse {
                line: no,
                message: "negative vertex index in boundary segment".into(),
            });
        }
        segments.push((raw[0] as usize, raw[1] as usize, raw[2] as i32));
        seg_lines.push(no);
    }
    if let Some((no, _)) = lines.next() {
        return Err(MeshError::Parse {
            line: no,
            message: "trailing content after boundary segments".into(),
        });
    }

    let mut mesh = Mesh2D::new_unchecked(vertices, triangles);
    mesh.apply_segments(&segments, |s| seg_lines[s])?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_grid() {
        let m = build_rect_uniform(1, 1, Rect::UNIT).unwrap();
        assert_eq!(
            (m.num_triangles(), m.num_edges(), m.num_vertices()),
            (2, 5, 4)
        );
        assert!(m.validate().is_valid());
    }

    #[test]
    fn sixteen_grid_size() {
        let m = build_rect_uniform(16, 16, Rect::UNIT).unwrap();
        assert_eq!(m.num_triangles(), 512);
        assert!((m.h() - 2f64.sqrt() / 16.0).abs() < 1e-15);
        assert!(m.validate().is_valid());
    }

    #[test]
    fn two_by_one_topology() {
        let m = build_rect_uniform(2, 1, Rect::UNIT).unwrap();
        assert_eq!((m.num_triangles(), m.num_edges()), (4, 9));
        let mut interior = 0;
        for e in 0..m.num_edges() {
            let signs: Vec<f64> = m.incident(e).map(|(t, k)| m.triangle_signs(t)[k]).collect();
            if m.is_boundary_edge(e) {
                assert_eq!(signs, vec![1.0]);
            } else {
                interior += 1;
                assert_eq!(signs.len(), 2);
                assert_eq!(signs[0] * signs[1], -1.0);
            }
        }
        // two diagonals plus the middle vertical edge
        assert_eq!(interior, 3);
    }

    #[test]
    fn degenerate_rectangle_rejected() {
        let r = Rect {
            x0: 0.0,
            x1: 0.0,
            y0: 0.0,
            y1: 1.0,
        };
        assert!(matches!(
            build_rect_uniform(2, 2, r),
            Err(MeshError::DegenerateRectangle { .. })
        ));
        assert!(build_rect_uniform(0, 2, Rect::UNIT).is_err());
    }

    #[test]
    fn normals_follow_convention() {
        let m = build_rect_uniform(3, 2, Rect::UNIT).unwrap();
        for e in 0..m.num_edges() {
            let [a, b] = m.edge(e);
            assert!(a < b);
            let (p, q) = (m.vertex(a), m.vertex(b));
            let l = m.edge_length(e);
            let rot = [-(q[1] - p[1]) / l, (q[0] - p[0]) / l];
            let n = m.edge_normal(e);
            if m.is_boundary_edge(e) {
                let (t, k) = m.incident(e).next().unwrap();
                let out = m.outward_normal(t, k);
                assert_eq!(n, out);
                assert!((n[0] * rot[0] + n[1] * rot[1]).abs() > 0.999);
            } else {
                assert_eq!(n, rot);
            }
        }
    }

    #[test]
    fn refinement_quarters_area_and_halves_h() {
        let coarse = build_rect_uniform(4, 4, Rect::UNIT).unwrap();
        let fine = build_rect_uniform(8, 8, Rect::UNIT).unwrap();
        assert!((fine.h() - 0.5 * coarse.h()).abs() < 1e-15);
        for t in 0..fine.num_triangles() {
            assert!((fine.area(t) - coarse.area(0) / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_ratio_is_refinement_invariant() {
        let expected = 2.0 * 2f64.sqrt() + 2.0;
        for n in [2, 4, 8, 16] {
            let r = build_rect_uniform(n, n, Rect::UNIT).unwrap().validate();
            assert!((r.max_shape_ratio() - expected).abs() < 1e-12);
            assert!((r.min_angle - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicated_triangle_is_reported() {
        let base = build_rect_uniform(1, 1, Rect::UNIT).unwrap();
        let mut tris = base.triangles().to_vec();
        tris.push(tris[0]);
        let m = Mesh2D::new_unchecked(base.vertices().to_vec(), tris);
        let report = m.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::ExcessIncidence { count: 3, .. })));
    }

    #[test]
    fn step_mesh_excludes_block() {
        let m = build_step_domain(0.5).unwrap();
        for t in 0..m.num_triangles() {
            let c = m.centroid(t);
            assert!(!(c[0] < 0.0 && c[1] < 1.0));
        }
        assert!(m.validate().is_valid());
        assert!((m.total_area() - 44.0).abs() < 1e-9);
    }

    #[test]
    fn step_mesh_tag_counts() {
        let m = build_step_domain(1.0).unwrap();
        assert!(m.validate().is_valid());
        assert_eq!(m.edges_with_tag(tags::INLET).count(), 1);
        assert_eq!(m.edges_with_tag(tags::OUTLET).count(), 2);
        assert!(m.boundary_edges().all(|e| m.boundary_tag(e) != Some(tags::UNTAGGED)));
    }

    #[test]
    fn step_mesh_snaps_spacing() {
        let m = build_step_domain(0.3).unwrap();
        // 1/0.3 rounds to 3 cells per unit length
        assert!((m.h() - 2f64.sqrt() / 3.0).abs() < 1e-12);
        assert!(m.validate().is_valid());
        assert!(build_step_domain(0.0).is_err());
    }

    #[test]
    fn import_matches_builder() {
        let text = "# unit square\n4 2 4\n0 0\n1 0\n0 1\n1 1\n0 1 3\n0 3 2\n0 1 1\n1 3 2\n2 3 3\n0 2 4\n";
        let m = parse_m2d(text).unwrap();
        let b = build_rect_uniform(1, 1, Rect::UNIT).unwrap();
        assert_eq!(m, b);
    }

    #[test]
    fn import_rejects_clockwise() {
        let text = "3 1 0\n0 0\n1 0\n0 1\n0 2 1\n";
        match parse_m2d(text) {
            Err(MeshError::InvertedTriangle { line, triangle, .. }) => {
                assert_eq!((line, triangle), (5, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn import_rejects_non_manifold() {
        // edge (0, 1) is shared by all three triangles
        let text = "5 3 0\n0 0\n1 0\n0 1\n1 -1\n0.5 2\n0 1 2\n0 3 1\n0 1 4\n";
        match parse_m2d(text) {
            Err(MeshError::NonManifoldEdge { line, triangle, a, b }) => {
                assert_eq!((line, triangle, a, b), (9, 2, 0, 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn import_reports_parse_line() {
        let text = "3 1 0\n0 0\nx 0\n0 1\n0 1 2\n";
        assert!(matches!(parse_m2d(text), Err(MeshError::Parse { line: 3, .. })));
        let text = "3 1 0\n0 0\n1 0\n0 1\n0 1 1\n";
        assert!(matches!(
            parse_m2d(text),
            Err(MeshError::DuplicateVertexIndex { line: 5, .. })
        ));
    }

    #[test]
    fn export_round_trip() {
        let m = build_step_domain(0.5).unwrap();
        let s = m.to_m2d_string();
        let back = parse_m2d(&s).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_m2d_string(), s);
    }
}

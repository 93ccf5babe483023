use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("degenerate rectangle: width {width}, height {height}")]
    DegenerateRectangle { width: f64, height: f64 },
    #[error("grid resolution must be at least 1 in each direction (got {nx}x{ny})")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("mesh size must be positive (got {0})")]
    NonPositiveSize(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: triangle {triangle} is not counterclockwise (signed area {area:e})")]
    InvertedTriangle {
        line: usize,
        triangle: usize,
        area: f64,
    },
    #[error("line {line}: triangle {triangle} repeats vertex index {vertex}")]
    DuplicateVertexIndex {
        line: usize,
        triangle: usize,
        vertex: usize,
    },
    #[error("line {line}: triangle {triangle} references vertex {vertex}, but only {count} vertices exist")]
    VertexOutOfRange {
        line: usize,
        triangle: usize,
        vertex: usize,
        count: usize,
    },
    #[error("line {line}: edge ({a}, {b}) of triangle {triangle} is shared by more than two triangles")]
    NonManifoldEdge {
        line: usize,
        triangle: usize,
        a: usize,
        b: usize,
    },
    #[error("line {line}: boundary segment ({a}, {b}) is not a boundary edge of the mesh")]
    NotBoundaryEdge { line: usize, a: usize, b: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error)]
pub enum FemError {
    #[error("triangle {triangle} is degenerate (area {area:e} below {threshold:e})")]
    DegenerateElement {
        triangle: usize,
        area: f64,
        threshold: f64,
    },
    #[error("point ({x}, {y}) lies outside triangle {triangle}")]
    OutsideElement { triangle: usize, x: f64, y: f64 },
    #[error("no quadrature rule of degree {requested}; supported degrees are {supported:?}")]
    UnsupportedDegree {
        requested: usize,
        supported: Vec<usize>,
    },
    #[error("field has {got} {what}, mesh expects {expected}")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("boundary tag {0} does not occur on the mesh")]
    UnknownTag(i32),
    #[error("region [{x0}, {x1}] x [{y0}, {y1}] contains no mesh vertex")]
    EmptyRegion { x0: f64, x1: f64, y0: f64, y1: f64 },
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve left a residual of {residual:e} (relative to right-hand side {rhs:e})")]
    InaccurateSolve { residual: f64, rhs: f64 },
    #[error("Newton iteration did not converge after {iterations} iterations (last relative update {last_update:e})")]
    NotConverged {
        iterations: usize,
        last_update: f64,
        best: Box<crate::solver::NewtonFailure>,
    },
    #[error("continuation stage {stage} (nu = {nu:e}) failed: {source}")]
    ContinuationFailed {
        stage: usize,
        nu: f64,
        #[source]
        source: Box<SolverError>,
    },
    #[error("invalid Newton configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Fem(#[from] FemError),
}

#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct WriteError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

//! Run configuration: a TOML file with one optional section per concern.
//! Unknown keys are rejected, and everything is resolved and checked before
//! any assembly starts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::assembly::{DirichletData, NeumannData, Problem, QuadratureOptions, VectorFn};
use crate::error::MeshError;
use crate::mesh::{build_rect_uniform, build_step_domain, import_mesh, Mesh2D, Rect};
use crate::solver::{default_schedule, NewtonConfig};
use crate::verification::StepInlet;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form label written into reports.
    pub name: Option<String>,
    #[serde(default)]
    pub mesh: MeshConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    #[default]
    UnitSquare,
    Step,
    File,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    #[serde(default)]
    pub kind: MeshKind,
    /// Cells per side of the unit square, one entry per level.
    pub n: Option<Vec<usize>>,
    /// Target spacing of the step mesh.
    pub h: Option<f64>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ReynoldsConvention {
    /// `Re = 1/ν` (unit inlet height and mean velocity).
    #[default]
    Step,
    /// `Re = 2 · 0.05 · 1/ν = 1/(10ν)` (cylinder of radius 0.05).
    Cylinder,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    pub nu: Option<f64>,
    pub reynolds: Option<f64>,
    #[serde(default)]
    pub reynolds_convention: ReynoldsConvention,
    /// Use the halving schedule from `1e-3` when `ν < 1e-4`.
    #[serde(default)]
    pub continuation: bool,
    /// Explicit continuation viscosities; the last one is the target.
    pub schedule: Option<Vec<f64>>,
    pub ra: Option<f64>,
    pub noflow_threshold: Option<f64>,
    pub force_scale: Option<f64>,
    pub inlet: Option<InletKind>,
    /// Drop the convection term (Stokes flow).
    #[serde(default)]
    pub stokes: bool,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InletKind {
    Parabolic,
    Constant,
}

impl From<InletKind> for StepInlet {
    fn from(k: InletKind) -> Self {
        match k {
            InletKind::Parabolic => StepInlet::Parabolic,
            InletKind::Constant => StepInlet::Constant,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Listed first wins where two segments meet.
    #[serde(default)]
    pub dirichlet: Vec<DirichletEntry>,
    /// Tags with the do-nothing condition.
    #[serde(default)]
    pub neumann: Vec<i32>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DirichletEntry {
    pub tag: i32,
    pub profile: ProfileKind,
    pub value: Option<[f64; 2]>,
    pub y0: Option<f64>,
    pub y1: Option<f64>,
    pub peak: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Constant,
    Parabolic,
}

impl DirichletEntry {
    pub fn profile(&self) -> Result<Profile, ConfigError> {
        let tag = self.tag;
        match self.profile {
            ProfileKind::Constant => match (self.value, self.y0, self.y1, self.peak) {
                (Some(value), None, None, None) => Ok(Profile::Constant { value }),
                _ => invalid(format!("tag {tag}: a constant profile takes only `value`")),
            },
            ProfileKind::Parabolic => match (self.value, self.y0, self.y1, self.peak) {
                (None, Some(y0), Some(y1), Some(peak)) if y1 > y0 => {
                    Ok(Profile::Parabolic { y0, y1, peak })
                }
                (None, Some(_), Some(_), Some(_)) => {
                    invalid(format!("tag {tag}: parabolic profile needs y1 > y0"))
                }
                _ => invalid(format!("tag {tag}: a parabolic profile takes `y0`, `y1` and `peak`")),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Constant { value: [f64; 2] },
    /// `(4 peak (y − y0)(y1 − y)/(y1 − y0)², 0)`.
    Parabolic { y0: f64, y1: f64, peak: f64 },
}

impl Profile {
    pub fn function(self) -> VectorFn {
        match self {
            Profile::Constant { value } => Arc::new(move |_| value),
            Profile::Parabolic { y0, y1, peak } => {
                let s = 4.0 * peak / ((y1 - y0) * (y1 - y0));
                Arc::new(move |[_, y]| [s * (y - y0) * (y1 - y), 0.0])
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    pub rel_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    pub convection_degree: Option<usize>,
    pub load_degree: Option<usize>,
    pub edge_points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Also write `A.mtx`/`B.mtx` of the first Newton system.
    #[serde(default)]
    pub matrix_market: bool,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn newton(&self) -> Result<NewtonConfig, ConfigError> {
        let d = NewtonConfig::default();
        let config = NewtonConfig {
            rel_tol: self.newton.rel_tol.unwrap_or(d.rel_tol),
            max_iter: self.newton.max_iter.unwrap_or(d.max_iter),
            continuation: None,
        };
        config
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(config)
    }

    pub fn quadrature(&self) -> Result<QuadratureOptions, ConfigError> {
        let d = QuadratureOptions::default();
        let q = QuadratureOptions {
            convection_degree: self.quadrature.convection_degree.unwrap_or(d.convection_degree),
            load_degree: self.quadrature.load_degree.unwrap_or(d.load_degree),
            edge_points: self.quadrature.edge_points.unwrap_or(d.edge_points),
        };
        for deg in [q.convection_degree, q.load_degree] {
            if !crate::quadrature::SUPPORTED_DEGREES.contains(&deg) {
                return invalid(format!("quadrature degree {deg} is not supported"));
            }
        }
        if q.convection_degree < 2 {
            return invalid("convection_degree must be at least 2 (the integrand is quadratic)");
        }
        if !(1..=20).contains(&q.edge_points) {
            return invalid("edge_points must be between 1 and 20");
        }
        Ok(q)
    }

    /// Target viscosity from `nu` or `reynolds`, `default` if neither is set.
    pub fn viscosity(&self, default: f64) -> Result<f64, ConfigError> {
        let p = &self.physics;
        let nu = match (p.nu, p.reynolds, &p.schedule) {
            (Some(_), Some(_), _) => return invalid("set either physics.nu or physics.reynolds"),
            (Some(nu), None, _) => nu,
            (None, Some(re), _) => {
                if !(re > 0.0) {
                    return invalid("physics.reynolds must be positive");
                }
                match p.reynolds_convention {
                    ReynoldsConvention::Step => 1.0 / re,
                    ReynoldsConvention::Cylinder => 1.0 / (10.0 * re),
                }
            }
            (None, None, Some(s)) if !s.is_empty() => *s.last().unwrap(),
            (None, None, _) => default,
        };
        if !(nu > 0.0) || !nu.is_finite() {
            return invalid(format!("viscosity must be positive (got {nu})"));
        }
        if let Some(s) = &p.schedule {
            if s.last() != Some(&nu) {
                return invalid("the last entry of physics.schedule must equal the target viscosity");
            }
        }
        Ok(nu)
    }

    /// Viscosity stages to run for target `nu`.
    pub fn schedule(&self, nu: f64) -> Result<Vec<f64>, ConfigError> {
        let s = match &self.physics.schedule {
            Some(s) => s.clone(),
            None if self.physics.continuation => default_schedule(nu),
            None => vec![nu],
        };
        let check = NewtonConfig {
            continuation: Some(s.clone()),
            ..NewtonConfig::default()
        };
        check
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(s)
    }

    pub fn levels(&self, default: &[usize]) -> Result<Vec<usize>, ConfigError> {
        let n = self.mesh.n.clone().unwrap_or_else(|| default.to_vec());
        if n.is_empty() || n.contains(&0) {
            return invalid("mesh.n must list positive resolutions");
        }
        if n.windows(2).any(|w| w[1] <= w[0]) {
            return invalid("mesh.n must be strictly increasing (h strictly decreasing)");
        }
        Ok(n)
    }

    /// A single unit-square resolution.
    pub fn single_level(&self, default: usize) -> Result<usize, ConfigError> {
        let n = self.levels(&[default])?;
        if n.len() != 1 {
            return invalid("this experiment uses a single mesh level");
        }
        Ok(n[0])
    }

    /// Mesh for step/file runs; the unit square uses `single_level`.
    pub fn build_mesh(&self, default_n: usize, default_h: f64) -> Result<Mesh2D, ConfigError> {
        match self.mesh.kind {
            MeshKind::UnitSquare => Ok(build_rect_uniform(
                self.single_level(default_n)?,
                self.single_level(default_n)?,
                Rect::UNIT,
            )?),
            MeshKind::Step => Ok(build_step_domain(self.mesh.h.unwrap_or(default_h))?),
            MeshKind::File => match &self.mesh.path {
                Some(p) => Ok(import_mesh(p)?),
                None => invalid("mesh.kind = \"file\" requires mesh.path"),
            },
        }
    }

    /// Generic problem from the `[boundary]` section.
    pub fn custom_problem(&self, mesh: Arc<Mesh2D>, nu: f64) -> Result<Problem, ConfigError> {
        let b = &self.boundary;
        if b.dirichlet.is_empty() {
            return invalid("boundary.dirichlet must list at least one tag");
        }
        let mut dirichlet = DirichletData::new();
        for entry in &b.dirichlet {
            let profile = entry.profile()?;
            if b.neumann.contains(&entry.tag) {
                return invalid(format!("tag {} is both Dirichlet and Neumann", entry.tag));
            }
            dirichlet = dirichlet.with(entry.tag, profile.function());
        }
        for &tag in b.dirichlet.iter().map(|e| &e.tag).chain(&b.neumann) {
            if mesh.edges_with_tag(tag).next().is_none() {
                return invalid(format!("boundary tag {tag} does not occur on the mesh"));
            }
        }
        let mut problem = Problem::new(mesh, nu, dirichlet);
        if !b.neumann.is_empty() {
            problem = problem.with_neumann(NeumannData {
                tags: b.neumann.clone(),
                data: None,
            });
        }
        problem.convection = !self.physics.stokes;
        problem.quadrature = self.quadrature()?;
        Ok(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::parse(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_config_uses_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.viscosity(1.0).unwrap(), 1.0);
        assert_eq!(c.newton().unwrap(), NewtonConfig::default());
        assert_eq!(c.quadrature().unwrap(), QuadratureOptions::default());
        assert_eq!(c.levels(&[16, 32]).unwrap(), vec![16, 32]);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(parse("nu = 1.0"), Err(ConfigError::Parse { .. })));
        assert!(parse("[physics]\nviscosity = 1.0").is_err());
        assert!(parse("[mesh]\nkind = \"hexagon\"").is_err());
    }

    #[test]
    fn reynolds_conventions() {
        let c = parse("[physics]\nreynolds = 100").unwrap();
        assert_eq!(c.viscosity(1.0).unwrap(), 0.01);
        let c = parse("[physics]\nreynolds = 5\nreynolds_convention = \"cylinder\"").unwrap();
        assert!((c.viscosity(1.0).unwrap() - 0.02).abs() < 1e-15);
        assert!(parse("[physics]\nreynolds = 5\nnu = 1").unwrap().viscosity(1.0).is_err());
    }

    #[test]
    fn continuation_schedule() {
        let c = parse("[physics]\nnu = 1e-5\ncontinuation = true").unwrap();
        assert_eq!(c.schedule(1e-5).unwrap().len(), 8);
        let c = parse("[physics]\nschedule = [1e-2, 1e-3]").unwrap();
        assert_eq!(c.viscosity(1.0).unwrap(), 1e-3);
        assert_eq!(c.schedule(1e-3).unwrap(), vec![1e-2, 1e-3]);
        let c = parse("[physics]\nschedule = [1e-3, 1e-2]").unwrap();
        assert!(c.schedule(1e-2).is_err());
    }

    #[test]
    fn boundary_recipe() {
        let text = r#"
[mesh]
kind = "step"
h = 0.5
[boundary]
neumann = [6]
[[boundary.dirichlet]]
tag = 7
profile = "constant"
value = [0.0, 0.0]
[[boundary.dirichlet]]
tag = 5
profile = "parabolic"
y0 = 1.0
y1 = 2.0
peak = 1.5
"#;
        let c = parse(text).unwrap();
        let mesh = Arc::new(c.build_mesh(16, 0.25).unwrap());
        let p = c.custom_problem(mesh, 0.01).unwrap();
        assert_eq!(p.dirichlet.tags(), vec![7, 5]);
        let f = c.boundary.dirichlet[1].profile().unwrap().function();
        assert_eq!(f([-4.0, 1.5]), [1.5, 0.0]);
        let bad = text.replace("neumann = [6]", "neumann = [9]");
        let c = parse(&bad).unwrap();
        let mesh = Arc::new(c.build_mesh(16, 0.25).unwrap());
        assert!(c.custom_problem(mesh, 0.01).is_err());
    }

    #[test]
    fn invalid_values() {
        assert!(parse("[newton]\nrel_tol = -1.0").unwrap().newton().is_err());
        assert!(parse("[quadrature]\nload_degree = 12").unwrap().quadrature().is_err());
        assert!(parse("[mesh]\nn = [32, 16]").unwrap().levels(&[]).is_err());
        assert!(parse("[mesh]\nkind = \"file\"").unwrap().build_mesh(4, 0.5).is_err());
    }
}

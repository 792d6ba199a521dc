//! JSON run configuration and its validation into a [`PlateProblem`].

use std::fmt;
use std::path::PathBuf;

use plate_core::adapt::{MarkingParams, Strategy, StudyConfig};
use plate_core::mesh::{BcKind, BoundarySegment, Mesh, MeshError, Vertex};
use plate_core::model::{DistributedLoad, LineLoad, LoadSpec, Material, ModelError, PlateProblem, PointLoad, Region};
use serde::Deserialize;

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_MAX_DOFS: usize = 3000;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Used to name output files.
    #[serde(default)]
    pub name: Option<String>,
    pub geometry: GeometryConfig,
    pub material: MaterialConfig,
    #[serde(default)]
    pub loads: LoadsConfig,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<BoundaryConfig>,
    /// Constrain vertex 0 when every edge is free.
    #[serde(default)]
    pub pin_rigid_motion: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub path: Vec<usize>,
    pub bc: BcName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcName {
    Clamped,
    SimplySupported,
    Free,
}

impl From<BcName> for BcKind {
    fn from(b: BcName) -> Self {
        match b {
            BcName::Clamped => BcKind::Clamped,
            BcName::SimplySupported => BcKind::SimplySupported,
            BcName::Free => BcKind::Free,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub thickness: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadsConfig {
    #[serde(default)]
    pub distributed: Vec<DistributedConfig>,
    #[serde(default)]
    pub line: Option<LineConfig>,
    #[serde(default)]
    pub points: Vec<PointConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributedConfig {
    pub region: RegionConfig,
    pub value: f64,
}

/// `"whole"` or `{"rect": {"x0": .., "x1": .., "y0": .., "y1": ..}}`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionConfig {
    Whole,
    Rect { x0: f64, x1: f64, y0: f64, y1: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub polyline: Vec<[f64; 2]>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub at: [f64; 2],
    pub magnitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Uniform,
    Adaptive,
}

impl From<StrategyName> for Strategy {
    fn from(s: StrategyName) -> Self {
        match s {
            StrategyName::Uniform => Strategy::Uniform,
            StrategyName::Adaptive => Strategy::Adaptive,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "default_strategy")]
    pub strategy: StrategyName,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_max_dofs")]
    pub max_dofs: usize,
    #[serde(default)]
    pub max_steps: Option<usize>,
}

fn default_strategy() -> StrategyName {
    StrategyName::Adaptive
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

fn default_max_dofs() -> usize {
    DEFAULT_MAX_DOFS
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            theta: DEFAULT_THETA,
            max_dofs: DEFAULT_MAX_DOFS,
            max_steps: None,
        }
    }
}

impl StudySection {
    pub fn validate(&self) -> Result<StudyConfig, ConfigError> {
        let marking = MarkingParams::new(self.theta).map_err(|e| {
            ConfigError::field("study.theta", format!("must lie strictly between 0 and 1, got {}", e.0))
        })?;
        if self.max_dofs == 0 {
            return Err(ConfigError::field("study.max_dofs", "must be positive"));
        }
        if self.max_steps == Some(0) {
            return Err(ConfigError::field("study.max_steps", "must be positive"));
        }
        Ok(StudyConfig {
            strategy: self.strategy.into(),
            marking,
            max_dofs: self.max_dofs,
            max_steps: self.max_steps,
        })
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub vtk_dir: Option<PathBuf>,
    /// Deflection sampled on a regular grid over the bounding box of the
    /// final mesh.
    #[serde(default)]
    pub samples: Option<SampleGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGrid {
    pub nx: usize,
    pub ny: usize,
}

/// A problem with a dotted field path such as `study.theta`, or a JSON
/// syntax error with its position.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: Some(field.into()),
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration")?;
        if let Some(field) = &self.field {
            write!(f, " at `{field}`")?;
        }
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, " (line {l}, column {c})")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.inner();
            let (line, column) = (inner.line(), inner.column());
            ConfigError {
                field: (path != ".").then_some(path),
                line: (line > 0).then_some(line),
                column: (line > 0).then_some(column),
                message: inner.to_string(),
            }
        })
    }

    pub fn material(&self) -> Result<Material, ConfigError> {
        let m = &self.material;
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(m.youngs_modulus) {
            return Err(ConfigError::field(
                "material.youngs_modulus",
                format!("must be positive, got {}", m.youngs_modulus),
            ));
        }
        if !(0.0..=0.5).contains(&m.poisson_ratio) {
            return Err(ConfigError::field(
                "material.poisson_ratio",
                format!("must lie in [0, 0.5], got {}", m.poisson_ratio),
            ));
        }
        if !positive(m.thickness) {
            return Err(ConfigError::field(
                "material.thickness",
                format!("must be positive, got {}", m.thickness),
            ));
        }
        Material::new(m.youngs_modulus, m.poisson_ratio, m.thickness)
            .map_err(|e| ConfigError::field("material", e.to_string()))
    }

    pub fn loads(&self) -> LoadSpec {
        LoadSpec {
            distributed: self
                .loads
                .distributed
                .iter()
                .map(|d| DistributedLoad {
                    region: match d.region {
                        RegionConfig::Whole => Region::Whole,
                        RegionConfig::Rect { x0, x1, y0, y1 } => Region::Rect { x0, x1, y0, y1 },
                    },
                    value: d.value,
                })
                .collect(),
            line: self.loads.line.as_ref().map(|l| LineLoad {
                polyline: l.polyline.clone(),
                value: l.value,
            }),
            points: self
                .loads
                .points
                .iter()
                .map(|p| PointLoad {
                    at: p.at,
                    magnitude: p.magnitude,
                })
                .collect(),
        }
    }

    pub fn mesh(&self) -> Result<Mesh, ConfigError> {
        let g = &self.geometry;
        let vertices = g.vertices.iter().map(|p| Vertex::new(p[0], p[1])).collect();
        let segments = g
            .boundary
            .iter()
            .map(|b| BoundarySegment {
                path: b.path.clone(),
                kind: b.bc.into(),
            })
            .collect();
        let line = self.loads.line.as_ref().map(|l| l.polyline.clone());
        Mesh::build(vertices, &g.triangles, segments, line).map_err(mesh_error)
    }

    /// Validates everything and returns the problem and study settings.
    pub fn validate(&self) -> Result<(PlateProblem, StudyConfig), ConfigError> {
        let study = self.study.validate()?;
        if let Some(s) = self.output.samples {
            if s.nx < 2 || s.ny < 2 {
                return Err(ConfigError::field("output.samples", "nx and ny must be at least 2"));
            }
        }
        let material = self.material()?;
        let mesh = self.mesh()?;
        let loads = self.loads();
        let problem = if self.geometry.pin_rigid_motion {
            PlateProblem::new_pinned(mesh, material, loads)
        } else {
            PlateProblem::new(mesh, material, loads)
        }
        .map_err(model_error)?;
        Ok((problem, study))
    }
}

fn mesh_error(e: MeshError) -> ConfigError {
    let field = match &e {
        MeshError::Empty | MeshError::NonConforming(_) => "geometry.triangles".to_string(),
        MeshError::NonFiniteVertex(i) => format!("geometry.vertices[{i}]"),
        MeshError::VertexOutOfRange { triangle, .. } => format!("geometry.triangles[{triangle}]"),
        MeshError::RepeatedVertex(t) | MeshError::DegenerateTriangle(t) => format!("geometry.triangles[{t}]"),
        MeshError::SegmentNotOnBoundary { segment, .. } => format!("geometry.boundary[{segment}]"),
        MeshError::ConflictingBoundaryTag { .. } | MeshError::UntaggedBoundaryEdge { .. } => {
            "geometry.boundary".to_string()
        }
        MeshError::LineLoadPointNotVertex(i) => format!("loads.line.polyline[{i}]"),
        MeshError::LineLoadNotCovered(_) | MeshError::LineLoadOnBoundary { .. } => "loads.line.polyline".to_string(),
        MeshError::MarkedOutOfRange { .. } => "geometry".to_string(),
    };
    ConfigError::field(field, e.to_string())
}

fn model_error(e: ModelError) -> ConfigError {
    let field = match &e {
        ModelError::Material(_) => "material".to_string(),
        ModelError::PointNotAtVertex { index, .. } => format!("loads.points[{index}].at"),
        ModelError::LineLoadMismatch => "loads.line".to_string(),
        ModelError::RegionNotAligned { region, .. } => format!("loads.distributed[{region}].region"),
        ModelError::Load(_) => "loads".to_string(),
        ModelError::UnconstrainedPlate => "geometry.boundary".to_string(),
    };
    let mut err = ConfigError::field(field, e.to_string());
    if matches!(e, ModelError::UnconstrainedPlate) {
        err.message.push_str(" (set geometry.pin_rigid_motion to pin vertex 0)");
    }
    err
}

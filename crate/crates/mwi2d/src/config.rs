//! Case configuration: a strict TOML schema mapped onto solver structures.
//!
//! Unknown keys are rejected everywhere, so typos fail loudly before any
//! solve starts.

use crate::adjoint::{AdjointSourceModel, MwiMode, Objective, ObjectiveKind};
use crate::bc::{Boundary, ScalBc, VelBc};
use crate::cases::Case;
use crate::fields::{CellField, FaceField};
use crate::geom::Vec2;
use crate::mesh::{build_structured_mesh, Mesh};
use crate::primal::{BetaForm, BodyForceModel, MwiVariant, SolverConfig, SourceConcept};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    /// [x0, x1, y0, y1]
    pub bounds: [f64; 4],
    #[serde(default = "one_pair")]
    pub stretch: [f64; 2],
    #[serde(default)]
    pub skew: f64,
}

fn one_pair() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidSpec {
    pub rho: f64,
    pub mu: f64,
    #[serde(default = "default_mu_phi")]
    pub mu_phi: f64,
}

fn default_mu_phi() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub mwi: MwiVariant,
    #[serde(default = "default_concept")]
    pub concept: SourceConcept,
    #[serde(default = "default_beta")]
    pub beta_form: BetaForm,
    #[serde(default)]
    pub nonortho_correction: bool,
    #[serde(default)]
    pub quad_wall_correction: bool,
    #[serde(default = "default_blend")]
    pub convection_blend: f64,
    #[serde(default)]
    pub solve_scalar: bool,
}

fn default_concept() -> SourceConcept {
    SourceConcept::C1
}
fn default_beta() -> BetaForm {
    BetaForm::VolumeOverDiag
}
fn default_blend() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default = "d07")]
    pub omega_v: f64,
    #[serde(default = "d03")]
    pub omega_p: f64,
    #[serde(default = "d09")]
    pub omega_phi: f64,
    /// Pseudo-time step; `inf` runs fully steady.
    #[serde(default = "dinf")]
    pub dt: f64,
    #[serde(default = "dtol")]
    pub tol_v: f64,
    #[serde(default = "dtol")]
    pub tol_p: f64,
    #[serde(default = "dtol")]
    pub tol_phi: f64,
    #[serde(default = "dmax")]
    pub max_outer: usize,
    #[serde(default = "dtol")]
    pub lin_tol: f64,
    #[serde(default = "dmax")]
    pub lin_max_iter: usize,
}

fn d07() -> f64 {
    0.7
}
fn d03() -> f64 {
    0.3
}
fn d09() -> f64 {
    0.9
}
fn dinf() -> f64 {
    f64::INFINITY
}
fn dtol() -> f64 {
    1e-8
}
fn dmax() -> usize {
    2000
}

impl Default for RunSpec {
    fn default() -> Self {
        toml::from_str("").expect("defaults are complete")
    }
}

/// Velocity condition for one patch, data-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum VelBcSpec {
    Fixed { value: [f64; 2] },
    ZeroGradient,
    Slip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum ScalBcSpec {
    Fixed { value: f64 },
    ZeroGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub patch: String,
    pub velocity: VelBcSpec,
    pub pressure: ScalBcSpec,
    #[serde(default = "default_scalar_bc")]
    pub scalar: ScalBcSpec,
}

fn default_scalar_bc() -> ScalBcSpec {
    ScalBcSpec::ZeroGradient
}

/// Analytic body-force selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum ForceSpec {
    None,
    Constant {
        value: [f64; 2],
    },
    /// Recirculating cell pattern scaled to the domain:
    /// amplitude (sin(pi x~) cos(2 pi y~), -sin(pi y~) cos(2 pi x~)).
    Vortex {
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum ScalarSourceSpec {
    None,
    /// amplitude * exp(-|x - center|^2 / width_sq)
    Blob {
        center: [f64; 2],
        amplitude: f64,
        width_sq: f64,
    },
}

/// Axis-aligned region; omitted limits are unbounded.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub y_min: Option<f64>,
    pub y_max: Option<f64>,
}

impl RegionSpec {
    pub fn contains(&self, x: Vec2) -> bool {
        self.x_min.is_none_or(|v| x.x >= v)
            && self.x_max.is_none_or(|v| x.x <= v)
            && self.y_min.is_none_or(|v| x.y >= v)
            && self.y_max.is_none_or(|v| x.y <= v)
    }

    pub fn weight(&self, mesh: &Mesh) -> CellField<f64> {
        CellField(
            mesh.cells
                .iter()
                .map(|c| if self.contains(c.centroid) { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjointSpec {
    pub mode: MwiMode,
    pub objective: ObjectiveKind,
    /// Volume weight region of the objective.
    #[serde(default)]
    pub region: RegionSpec,
    /// Boundary patches carrying a unit surface objective density.
    #[serde(default)]
    pub surface_patches: Vec<String>,
    /// Control region and direction of the volumetric sensitivity.
    #[serde(default)]
    pub control_region: RegionSpec,
    #[serde(default = "unit_x")]
    pub control_direction: [f64; 2],
    /// FD perturbation magnitudes.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
}

fn unit_x() -> [f64; 2] {
    [1.0, 0.0]
}
fn default_epsilons() -> Vec<f64> {
    vec![1e-4, 1e-5, 1e-6]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default = "default_true")]
    pub write_fields: bool,
    /// Residual CSV decimation (1 = every outer iteration).
    #[serde(default = "default_freq")]
    pub residual_stride: usize,
}

fn default_true() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        toml::from_str("").expect("defaults are complete")
    }
}
fn default_freq() -> usize {
    1
}
fn default_scalar_source() -> ScalarSourceSpec {
    ScalarSourceSpec::None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub mesh: MeshSpec,
    pub fluid: FluidSpec,
    pub scheme: SchemeSpec,
    #[serde(default)]
    pub run: RunSpec,
    pub boundary: Vec<PatchSpec>,
    pub force: ForceSpec,
    #[serde(default = "default_scalar_source")]
    pub scalar_source: ScalarSourceSpec,
    /// dq/dphi buoyancy coupling.
    #[serde(default)]
    pub dq_dphi: Option<[f64; 2]>,
    pub adjoint: Option<AdjointSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl CaseConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: CaseConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return invalid("mesh dimensions must be positive".into());
        }
        if !(self.fluid.rho > 0.0 && self.fluid.mu > 0.0) {
            return invalid("rho and mu must be positive".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.boundary {
            if !seen.insert(p.patch.as_str()) {
                return invalid(format!("patch '{}' configured twice", p.patch));
            }
        }
        for name in ["west", "east", "south", "north"] {
            if !seen.contains(name) {
                return invalid(format!("patch '{name}' has no boundary conditions"));
            }
        }
        Ok(())
    }

    pub fn build_mesh(&self) -> Result<Mesh, ConfigError> {
        build_structured_mesh(
            self.mesh.nx,
            self.mesh.ny,
            self.mesh.bounds,
            (self.mesh.stretch[0], self.mesh.stretch[1]),
            self.mesh.skew,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            rho: self.fluid.rho,
            mu: self.fluid.mu,
            mu_phi: self.fluid.mu_phi,
            omega_v: self.run.omega_v,
            omega_p: self.run.omega_p,
            omega_phi: self.run.omega_phi,
            dt: self.run.dt,
            convection_blend: self.scheme.convection_blend,
            mwi: self.scheme.mwi,
            concept: self.scheme.concept,
            beta_form: self.scheme.beta_form,
            nonortho_correction: self.scheme.nonortho_correction,
            quad_wall_correction: self.scheme.quad_wall_correction,
            solve_scalar: self.scheme.solve_scalar,
            tol_v: self.run.tol_v,
            tol_p: self.run.tol_p,
            tol_phi: self.run.tol_phi,
            max_outer: self.run.max_outer,
            lin_tol: self.run.lin_tol,
            lin_max_iter: self.run.lin_max_iter,
        }
    }

    pub fn build_boundary(&self, mesh: &Mesh) -> Result<Boundary, ConfigError> {
        let mut boundary = Boundary::new(mesh);
        for p in &self.boundary {
            let patch = mesh
                .patch(&p.patch)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            for &fi in &patch.faces {
                boundary.vel[fi] = Some(match &p.velocity {
                    VelBcSpec::Fixed { value } => VelBc::Fixed(Vec2::new(value[0], value[1])),
                    VelBcSpec::ZeroGradient => VelBc::ZeroGradient,
                    VelBcSpec::Slip => crate::bc::slip_for_face(mesh.faces[fi].area),
                });
                boundary.p[fi] = Some(match &p.pressure {
                    ScalBcSpec::Fixed { value } => ScalBc::Fixed(*value),
                    ScalBcSpec::ZeroGradient => ScalBc::ZeroGradient,
                });
                boundary.phi[fi] = Some(match &p.scalar {
                    ScalBcSpec::Fixed { value } => ScalBc::Fixed(*value),
                    ScalBcSpec::ZeroGradient => ScalBc::ZeroGradient,
                });
            }
        }
        Ok(boundary)
    }

    pub fn build_force(&self, mesh: &Mesh) -> BodyForceModel {
        let q = match &self.force {
            ForceSpec::None => CellField::zeros(mesh),
            ForceSpec::Constant { value } => {
                CellField::constant(mesh, Vec2::new(value[0], value[1]))
            }
            ForceSpec::Vortex { amplitude } => {
                let [x0, x1, y0, y1] = self.mesh.bounds;
                CellField(
                    mesh.cells
                        .iter()
                        .map(|c| {
                            let x = (c.centroid.x - x0) / (x1 - x0);
                            let y = (c.centroid.y - y0) / (y1 - y0);
                            Vec2::new(
                                (std::f64::consts::PI * x).sin()
                                    * (2.0 * std::f64::consts::PI * y).cos(),
                                -(std::f64::consts::PI * y).sin()
                                    * (2.0 * std::f64::consts::PI * x).cos(),
                            ) * *amplitude
                        })
                        .collect(),
                )
            }
        };
        BodyForceModel {
            q,
            concept: self.scheme.concept,
            dq_dphi: self.dq_dphi.map(|c| Vec2::new(c[0], c[1])),
        }
    }

    pub fn build_scalar_source(&self, mesh: &Mesh) -> CellField<f64> {
        match &self.scalar_source {
            ScalarSourceSpec::None => CellField::zeros(mesh),
            ScalarSourceSpec::Blob { center, amplitude, width_sq } => CellField(
                mesh.cells
                    .iter()
                    .map(|c| {
                        let r2 = (c.centroid - Vec2::new(center[0], center[1])).norm_sq();
                        amplitude * (-r2 / width_sq).exp()
                    })
                    .collect(),
            ),
        }
    }

    pub fn build_case(&self) -> Result<Case, ConfigError> {
        let mesh = self.build_mesh()?;
        let boundary = self.build_boundary(&mesh)?;
        let bodyforce = self.build_force(&mesh);
        let scalar_source = self.build_scalar_source(&mesh);
        Ok(Case {
            cfg: self.solver_config(),
            bodyforce,
            scalar_source,
            boundary,
            mesh,
        })
    }

    pub fn build_objective(&self, mesh: &Mesh) -> Result<Objective, ConfigError> {
        let adj = self
            .adjoint
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("config has no [adjoint] section".into()))?;
        let weight = adj.region.weight(mesh);
        let surface_weight = if adj.surface_patches.is_empty() {
            None
        } else {
            let mut sw = FaceField::zeros(mesh);
            for name in &adj.surface_patches {
                let patch = mesh
                    .patch(name)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                for &fi in &patch.faces {
                    sw[fi] = 1.0;
                }
            }
            Some(sw)
        };
        let objective = Objective { kind: adj.objective, weight, surface_weight };
        objective
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(objective)
    }

    pub fn adjoint_sources(&self) -> AdjointSourceModel {
        AdjointSourceModel {
            dq_dphi: self.dq_dphi.map(|c| Vec2::new(c[0], c[1])),
            ..Default::default()
        }
    }

    pub fn control_direction(&self, mesh: &Mesh) -> Result<CellField<Vec2>, ConfigError> {
        let adj = self
            .adjoint
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("config has no [adjoint] section".into()))?;
        let dir = Vec2::new(adj.control_direction[0], adj.control_direction[1]);
        let mut e = CellField::zeros(mesh);
        for (ci, cell) in mesh.cells.iter().enumerate() {
            if adj.control_region.contains(cell.centroid) {
                e[ci] = dir;
            }
        }
        Ok(e)
    }
}

pub const EXAMPLE_CONFIG: &str = r#"# Closed box driven by a recirculating force, transported scalar front,
# scalar-mismatch objective downstream.

[mesh]
nx = 48
ny = 24
bounds = [0.0, 3.0, 0.0, 1.0]
stretch = [1.04, 1.03]

[fluid]
rho = 1.0
mu = 0.05
mu_phi = 0.01

[scheme]
mwi = "classical"
convection_blend = 1.0
solve_scalar = true

[run]
tol_v = 1e-10
tol_p = 1e-10
tol_phi = 1e-10
max_outer = 8000
lin_tol = 1e-12
lin_max_iter = 2000

[[boundary]]
patch = "west"
velocity = { kind = "fixed", value = [0.0, 0.0] }
pressure = { kind = "zero_gradient" }
scalar = { kind = "fixed", value = 0.0 }

[[boundary]]
patch = "east"
velocity = { kind = "fixed", value = [0.0, 0.0] }
pressure = { kind = "zero_gradient" }
scalar = { kind = "fixed", value = 0.0 }

[[boundary]]
patch = "south"
velocity = { kind = "fixed", value = [0.0, 0.0] }
pressure = { kind = "zero_gradient" }
scalar = { kind = "fixed", value = 0.0 }

[[boundary]]
patch = "north"
velocity = { kind = "fixed", value = [0.0, 0.0] }
pressure = { kind = "zero_gradient" }
scalar = { kind = "fixed", value = 0.0 }

[force]
kind = "vortex"
amplitude = 1.0

[scalar_source]
kind = "blob"
center = [0.8, 0.5]
amplitude = 2.0
width_sq = 0.01

[adjoint]
mode = "e3"
objective = { kind = "scalar_mismatch", target = 0.0 }
region = { x_min = 2.2 }
control_region = { x_min = 0.95, x_max = 1.05, y_min = 0.45, y_max = 0.55 }
control_direction = [1.0, 0.0]
epsilons = [1e-3, 1e-4, 1e-5]
"#;

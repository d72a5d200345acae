//! Run configuration: a TOML file with one table per concern. Unknown keys
//! are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary::{DirichletTarget, NeumannPolicy};
use crate::error::{Error, Result};
use crate::geometry::{Domain, Surface};
use crate::observables::{DerivedParams, Experiment, ParamRules, SpacingRule};
use crate::stepper::{ForceModel, SimParams};
use crate::{Real, Vec3};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "BLOBFLOW_OUT";
const FALLBACK_OUT_DIR: &str = "blobflow-out";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub domain: DomainSpec,
    #[serde(rename = "patch")]
    pub patches: Vec<PatchSpec>,
    pub params: ParamsSection,
    #[serde(default)]
    pub boundary: BoundarySection,
    #[serde(default)]
    pub fields: FieldsSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Preset the config came from, or "custom".
    pub experiment: String,
    /// Particle count driving the resolution rules.
    pub n: usize,
    pub seed: u64,
    pub t_end: f64,
    /// Snapshot cadence in steps; 0 writes only the final state.
    #[serde(default)]
    pub snapshot_every: usize,
    /// Start from `n` particles placed uniformly in the domain instead of
    /// an empty one.
    #[serde(default)]
    pub initial_fill: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    Cylinder {
        base: [f64; 3],
        axis: [f64; 3],
        length: f64,
        radius: f64,
    },
}

impl DomainSpec {
    pub fn build<T: Real>(&self) -> Result<Domain<T>> {
        match self {
            DomainSpec::Sphere { center, radius } => {
                Domain::sphere(Vec3::from_f64(*center), T::lit(*radius))
            }
            DomainSpec::Box { min, max } => {
                Domain::aabb(Vec3::from_f64(*min), Vec3::from_f64(*max))
            }
            DomainSpec::Cylinder {
                base,
                axis,
                length,
                radius,
            } => Domain::cylinder(
                Vec3::from_f64(*base),
                Vec3::from_f64(*axis),
                T::lit(*length),
                T::lit(*radius),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurfaceSpec {
    SphereShell,
    BoxFace { axis: usize, upper: bool },
    CylinderLateral,
    CapDisc { top: bool, radius: f64 },
    CapAnnulus { top: bool, inner: f64 },
}

impl SurfaceSpec {
    pub fn build<T: Real>(&self) -> Surface<T> {
        match *self {
            SurfaceSpec::SphereShell => Surface::SphereShell,
            SurfaceSpec::BoxFace { axis, upper } => Surface::BoxFace { axis, upper },
            SurfaceSpec::CylinderLateral => Surface::CylinderLateral,
            SurfaceSpec::CapDisc { top, radius } => Surface::CapDisc {
                top,
                radius: T::lit(radius),
            },
            SurfaceSpec::CapAnnulus { top, inner } => Surface::CapAnnulus {
                top,
                inner: T::lit(inner),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    Dirichlet,
    Neumann,
    Wall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub id: usize,
    pub surface: SurfaceSpec,
    pub condition: ConditionKind,
    /// Density for Dirichlet patches, inward flux for Neumann patches.
    #[serde(default)]
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub kappa: f64,
    /// Mass carried by `n` particles.
    pub total_mass: f64,
    pub spacing: SpacingRule<f64>,
    pub beta_prefactor: f64,
    /// Length `L` in `b = sqrt(L * spacing)`.
    pub layer_scale: f64,
    /// `dt = cfl * spacing^2 / kappa`; must not exceed 1.
    #[serde(default = "one")]
    pub cfl: f64,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub force_model: ForceModel,
    /// Reference density inside the entropy logarithm.
    #[serde(default = "one")]
    pub rho_ref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_cutoff() -> f64 {
    crate::blobs::KernelParams::<f64>::DEFAULT_CUTOFF
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    #[serde(default)]
    pub dirichlet_target: DirichletTarget,
    #[serde(default = "yes")]
    pub carry_remainder: bool,
    #[serde(default = "yes")]
    pub carry_deficit: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub starvation_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_ceiling: Option<f64>,
}

impl Default for BoundarySection {
    fn default() -> Self {
        Self {
            dirichlet_target: DirichletTarget::default(),
            carry_remainder: true,
            carry_deficit: true,
            starvation_limit: None,
            density_ceiling: None,
        }
    }
}

impl BoundarySection {
    pub fn policy(&self) -> NeumannPolicy {
        NeumannPolicy {
            carry_remainder: self.carry_remainder,
            carry_deficit: self.carry_deficit,
            starvation_limit: self.starvation_limit,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VelocitySpec {
    #[default]
    None,
    Uniform {
        value: [f64; 3],
    },
    Rotation {
        center: [f64; 3],
        axis: [f64; 3],
        omega: f64,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSection {
    #[serde(default)]
    pub velocity: VelocitySpec,
    /// Uniform volumetric growth rate `s`.
    #[serde(default)]
    pub source_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Particle counts of the convergence sweep.
    #[serde(default)]
    pub n: Vec<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn rules(&self) -> ParamRules<f64> {
        ParamRules {
            spacing: self.params.spacing,
            beta_prefactor: self.params.beta_prefactor,
            layer_scale: self.params.layer_scale,
            cfl: self.params.cfl,
            kappa: self.params.kappa,
            total_mass: self.params.total_mass,
        }
    }

    /// Derived parameters at `run.n` with explicit overrides applied.
    pub fn derived(&self) -> Result<DerivedParams<f64>> {
        let mut d = self.rules().derive(self.run.n)?;
        let p = &self.params;
        if let Some(beta) = p.beta {
            d.beta = beta;
        }
        if let Some(b) = p.b {
            d.b = b;
        }
        if let Some(dt) = p.dt {
            d.dt = dt;
            d.penalty = 1.0 / dt;
        }
        if let Some(c) = p.penalty {
            d.penalty = c;
        }
        Ok(d)
    }

    /// Fully resolved and validated simulation parameters.
    pub fn sim_params<T: Real>(&self) -> Result<SimParams<T>> {
        let d = self.derived()?;
        let params = SimParams {
            kappa: T::lit(self.params.kappa),
            dt: T::lit(d.dt),
            t_end: T::lit(self.run.t_end),
            penalty: T::lit(d.penalty),
            beta: T::lit(d.beta),
            b: T::lit(d.b),
            spacing: T::lit(d.spacing),
            rho_ref: T::lit(self.params.rho_ref),
            seed: self.run.seed,
            force_model: self.params.force_model,
            mass: T::lit(d.mass),
            cutoff: T::lit(self.params.cutoff),
        };
        params.validate()?;
        Ok(params)
    }

    /// Directory for outputs: the configured one, else `$BLOBFLOW_OUT`, else
    /// `./blobflow-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.run.out_dir.clone().unwrap_or_else(default_out_dir)
    }

    pub fn experiment(&self) -> Option<Experiment> {
        self.run.experiment.parse().ok()
    }
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

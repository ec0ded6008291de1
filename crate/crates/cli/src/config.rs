//! Experiment configuration files.

use std::path::{Path, PathBuf};

use monompc::grid::WVector;
use monompc::ocp::{matrix_from_rows, OcpSpec, OcpSpecJson};
use monompc::plant::PlantModel;
use monompc::splitting::{Scheme, SplitConfig};
use monompc::mpc::StartMode;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// Closed-loop driver selected by a config or on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "mpc", alias = "instantaneous")]
    Mpc,
    #[serde(rename = "dae_splitting")]
    DaeSplitting,
    #[serde(rename = "lie_trotter")]
    LieTrotter,
    #[serde(rename = "suboptimal_proxpoint", alias = "proxpoint")]
    SuboptimalProxPoint,
    #[serde(rename = "suboptimal_forward_backward", alias = "forward_backward")]
    SuboptimalForwardBackward,
    #[serde(rename = "suboptimal_peaceman_rachford", alias = "peaceman_rachford")]
    SuboptimalPeacemanRachford,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self, String> {
        serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| {
            format!(
                "unknown scheme \"{s}\" (expected mpc, instantaneous, dae_splitting, lie_trotter, \
                 suboptimal_proxpoint, proxpoint, suboptimal_forward_backward or suboptimal_peaceman_rachford)"
            )
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Mpc => "mpc",
            Mode::DaeSplitting => "dae_splitting",
            Mode::LieTrotter => "lie_trotter",
            Mode::SuboptimalProxPoint => "suboptimal_proxpoint",
            Mode::SuboptimalForwardBackward => "suboptimal_forward_backward",
            Mode::SuboptimalPeacemanRachford => "suboptimal_peaceman_rachford",
        }
    }

    /// Inner scheme handed to the core drivers.
    pub fn inner_scheme(self) -> Scheme {
        match self {
            Mode::Mpc | Mode::DaeSplitting => Scheme::Instantaneous,
            Mode::LieTrotter | Mode::SuboptimalProxPoint => Scheme::ProxPoint,
            Mode::SuboptimalForwardBackward => Scheme::ForwardBackward,
            Mode::SuboptimalPeacemanRachford => Scheme::PeacemanRachford,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlantConfig {
    /// `ẋ = A x + B_p u`; `B` defaults to the OCP input matrix.
    Linear {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B", default)]
        b: Option<Vec<Vec<f64>>>,
    },
    Builtin {
        name: String,
        #[serde(rename = "B", default)]
        b: Option<Vec<Vec<f64>>>,
    },
}

fn default_eps() -> f64 {
    1.0
}
fn default_j() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub h: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_j")]
    pub j: usize,
    pub scheme: Mode,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_oracle_tol() -> f64 {
    1e-10
}
fn default_compare_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub spec: OcpSpecJson,
    pub plant: PlantConfig,
    pub split: SplitSection,
    pub steps: usize,
    pub xp0: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_oracle_tol")]
    pub oracle_tol: f64,
    #[serde(default = "default_compare_tol")]
    pub compare_tolerance: f64,
    #[serde(default)]
    pub start: Start,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    #[default]
    Warm,
    Cold,
}

impl From<Start> for StartMode {
    fn from(s: Start) -> Self {
        match s {
            Start::Warm => StartMode::Warm,
            Start::Cold => StartMode::Cold,
        }
    }
}

/// A config after semantic validation.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub raw: ExperimentConfig,
    pub spec: OcpSpec,
    pub plant: PlantModel,
    pub split: SplitConfig,
    pub mode: Mode,
    pub xp0: DVector<f64>,
    pub output_dir: PathBuf,
}

impl Experiment {
    pub fn zero_w(&self) -> WVector {
        WVector::zeros(self.spec.grid, self.spec.n())
    }

    /// The same experiment run with a different driver.
    pub fn with_mode(&self, mode: Mode) -> Self {
        let mut e = self.clone();
        e.mode = mode;
        e.split.scheme = mode.inner_scheme();
        e
    }
}

pub fn load(path: &Path) -> Result<Experiment, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let raw: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut at = e.path().to_string();
        // serde reports a missing field at its parent; name the field itself
        let msg = e.inner().to_string();
        if let Some(field) = msg.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            at = if at == "." { field.to_string() } else { format!("{at}.{field}") };
        }
        if at == "." {
            e.inner().to_string()
        } else {
            format!("{at}: {}", e.inner())
        }
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    validate(raw, base)
}

fn validate(raw: ExperimentConfig, base: &Path) -> Result<Experiment, String> {
    if raw.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "schema_version: unsupported value {} (expected {SCHEMA_VERSION})",
            raw.schema_version
        ));
    }
    let spec = OcpSpec::from_json(&raw.spec).map_err(|e| format!("spec: {e}"))?;
    let bp = |b: &Option<Vec<Vec<f64>>>| -> Result<nalgebra::DMatrix<f64>, String> {
        match b {
            Some(rows) => matrix_from_rows(rows, "B").map_err(|e| format!("plant.B: {e}")),
            None => Ok(spec.b.clone()),
        }
    };
    let plant = match &raw.plant {
        PlantConfig::Linear { a, b } => {
            let a = matrix_from_rows(a, "A").map_err(|e| format!("plant.A: {e}"))?;
            PlantModel::linear(a, bp(b)?).map_err(|e| format!("plant: {e}"))?
        }
        PlantConfig::Builtin { name, b } => match name.as_str() {
            "saturating_gradient" => PlantModel::saturating_gradient(bp(b)?),
            other => return Err(format!("plant.name: unknown builtin plant \"{other}\"")),
        },
    };
    if plant.n() != spec.n() || plant.m() != spec.m() {
        return Err(format!(
            "plant: dimensions n={}, m={} do not match the OCP (n={}, m={})",
            plant.n(),
            plant.m(),
            spec.n(),
            spec.m()
        ));
    }
    if raw.xp0.len() != spec.n() {
        return Err(format!("xp0: expected {} entries, got {}", spec.n(), raw.xp0.len()));
    }
    if raw.xp0.iter().any(|v| !v.is_finite()) {
        return Err("xp0: entries must be finite".into());
    }
    if raw.steps == 0 {
        return Err("steps: must be at least 1".into());
    }
    for (name, v) in [("oracle_tol", raw.oracle_tol), ("compare_tolerance", raw.compare_tolerance)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(format!("{name}: must be positive"));
        }
    }
    let mode = raw.split.scheme;
    let split = SplitConfig::new(raw.split.h, raw.split.eps, raw.split.j, mode.inner_scheme(), raw.split.tol)
        .map_err(|e| format!("split: {e}"))?;
    let output_dir = match std::env::var_os(crate::OUTPUT_DIR_ENV) {
        Some(dir) => PathBuf::from(dir),
        None => {
            let dir = raw.output_dir.clone().unwrap_or_else(|| PathBuf::from("monompc-out"));
            if dir.is_absolute() {
                dir
            } else {
                base.join(dir)
            }
        }
    };
    Ok(Experiment {
        xp0: DVector::from_column_slice(&raw.xp0),
        raw,
        spec,
        plant,
        split,
        mode,
        output_dir,
    })
}

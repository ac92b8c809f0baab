//! Run configuration shared by the CLI subcommands.
//!
//! A JSON document (schema version 1):
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "system": { "name": "dubins3d", "v": 0.6, "u_min": -1.1, "u_max": 1.1, "radius": 0.25,
//!               "mode": "avoid", "horizon": 1.0 },
//!   "value_function": { "grid": "out/value.grid",
//!                       "perturbations": [ { "kind": "uniform_bias", "bias": -0.2 } ] },
//!   "groundtruth": { "counts": [61, 61, 61], "output": "value.grid" },
//!   "verify": { "epsilon": 0.01, "beta": 1e-9, "seed": 7, "bins": 1 },
//!   "validate": { "samples": 100000, "seed": 8, "truth": "out/value.grid" },
//!   "output_dir": "out"
//! }
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.
//! The value-function block names exactly one of `grid`, `weights` or
//! `analytic`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{Mode, SystemKind, SystemModel};
use crate::error::{Error, Result};
use crate::groundtruth::read_grid_file;
use crate::validate::SliceSpec;
use crate::valuefn::{analytic_by_name, load_network, Perturbation, ValueFunctionHandle};
use crate::verify::VerifyConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    #[serde(flatten)]
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_upper: Option<Vec<f64>>,
}

impl SystemConfig {
    pub fn build(&self) -> Result<SystemModel> {
        let mut sys = SystemModel::from_kind(&self.kind)?;
        if let Some(mode) = self.mode {
            sys = sys.with_mode(mode);
        }
        if let Some(t) = self.horizon {
            sys = sys.with_horizon(t)?;
        }
        match (&self.state_lower, &self.state_upper) {
            (None, None) => {}
            (lo, hi) => {
                let lo = lo.clone().unwrap_or_else(|| sys.state_lower().to_vec());
                let hi = hi.clone().unwrap_or_else(|| sys.state_upper().to_vec());
                sys = sys.with_state_box(lo, hi)?;
            }
        }
        Ok(sys)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueFunctionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<String>,
    /// Applied in order on top of the source.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perturbations: Vec<Perturbation>,
}

fn default_slices() -> usize {
    11
}

fn default_grid_output() -> PathBuf {
    PathBuf::from("value.grid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthConfig {
    pub counts: Vec<usize>,
    /// Solver step; half the CFL limit when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_slices")]
    pub slices: usize,
    /// File name inside the output directory.
    #[serde(default = "default_grid_output")]
    pub output: PathBuf,
}

fn default_bins() -> usize {
    1
}

fn default_predictor_samples() -> usize {
    2000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyBlock {
    #[serde(flatten)]
    pub config: VerifyConfig,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Scored-points CSV for the binned partition; trained from rollouts when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor_file: Option<PathBuf>,
    #[serde(default = "default_predictor_samples")]
    pub predictor_samples: usize,
}

fn default_validation_samples() -> usize {
    100_000
}

fn default_validation_seed() -> u64 {
    1
}

fn default_trained_samples() -> usize {
    10_000
}

fn default_histogram_bins() -> usize {
    40
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateBlock {
    #[serde(default = "default_validation_samples")]
    pub samples: usize,
    #[serde(default = "default_validation_seed")]
    pub seed: u64,
    /// Ground-truth grid for containment checks and slice truth columns.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    /// Uniform samples for the volume and containment estimates; `samples` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume_samples: Option<usize>,
    /// Trained-set rollouts for the comparison histogram.
    #[serde(default = "default_trained_samples")]
    pub trained_histogram_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_edges: Option<Vec<f64>>,
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
    /// Slices to export; the Dubins family defaults to headings −π/2, 0 and π.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<Vec<SliceSpec>>,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        serde_json::from_str("{}").expect("validate block defaults")
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_function: Option<ValueFunctionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundtruth: Option<GroundTruthConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateBlock>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.base_dir = base_dir.into();
        if let Some(vf) = &cfg.value_function {
            let sources = usize::from(vf.grid.is_some()) + usize::from(vf.weights.is_some()) + usize::from(vf.analytic.is_some());
            if sources != 1 {
                return Err(Error::Config(format!(
                    "value_function must name exactly one of grid, weights, analytic (found {sources})"
                )));
            }
        }
        if let Some(v) = &cfg.verify {
            v.config.validate().map_err(|e| Error::Config(e.to_string()))?;
            if v.bins == 0 {
                return Err(Error::Config("verify.bins must be at least 1".into()));
            }
        }
        cfg.system.build().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// SHA-256 of the canonical serialization (paths as written).
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn system(&self) -> Result<SystemModel> {
        self.system.build()
    }

    pub fn verify_block(&self) -> Result<&VerifyBlock> {
        self.verify
            .as_ref()
            .ok_or_else(|| Error::Config("config has no verify block".into()))
    }

    /// Path that must exist, resolved.
    pub fn existing(&self, p: &Path, what: &str) -> Result<PathBuf> {
        let full = self.resolve(p);
        if !full.is_file() {
            return Err(Error::Config(format!("{what} file {} does not exist", full.display())));
        }
        Ok(full)
    }

    /// Loads the configured value function for `system`.
    pub fn value_function(&self, system: &SystemModel) -> Result<ValueFunctionHandle> {
        let block = self
            .value_function
            .as_ref()
            .ok_or_else(|| Error::Config("config has no value_function block".into()))?;
        let mut vf = if let Some(p) = &block.grid {
            let gvf = read_grid_file(self.existing(p, "grid")?)?;
            if gvf.mode() != system.mode() {
                log::warn!("grid was solved in {:?} mode, system is {:?}", gvf.mode(), system.mode());
            }
            ValueFunctionHandle::grid(Arc::new(gvf), system)?
        } else if let Some(p) = &block.weights {
            ValueFunctionHandle::network(Arc::new(load_network(self.existing(p, "weights")?)?), system)?
        } else {
            let name = block.analytic.as_deref().expect("one source checked at load");
            analytic_by_name(name, system)?
        };
        for p in &block.perturbations {
            vf = ValueFunctionHandle::perturb(vf, p.clone())?;
        }
        Ok(vf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"{
        "schema_version": 1,
        "system": {"name": "dubins3d", "v": 0.6, "u_min": -1.1, "u_max": 1.1, "radius": 0.25, "mode": "reach"},
        "value_function": {"analytic": "target", "perturbations": [{"kind": "uniform_bias", "bias": -0.2}]},
        "verify": {"epsilon": 0.001, "beta": 1e-16, "seed": 3}
    }"#;

    #[test]
    fn parses_and_builds() {
        let cfg = RunConfig::from_json(BASIC, "/tmp").unwrap();
        let sys = cfg.system().unwrap();
        assert_eq!(sys.mode(), Mode::Reach);
        assert_eq!(cfg.verify_block().unwrap().config.sample_count().unwrap(), 75683);
        assert_eq!(cfg.verify_block().unwrap().bins, 1);
        let vf = cfg.value_function(&sys).unwrap();
        assert_eq!(vf.value(&[0.0, 0.0, 0.0], 0.0), -0.45);
        assert_eq!(cfg.output_dir(), PathBuf::from("/tmp/out"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_json(BASIC, "/a").unwrap();
        let b = RunConfig::from_json(BASIC, "/b").unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.verify.as_mut().unwrap().config.seed = 4;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        let two = BASIC.replace(r#""analytic": "target""#, r#""analytic": "target", "grid": "x.grid""#);
        assert!(matches!(RunConfig::from_json(&two, "."), Err(Error::Config(_))));
        let version = BASIC.replace(r#""schema_version": 1"#, r#""schema_version": 2"#);
        assert!(RunConfig::from_json(&version, ".").is_err());
        let speed = BASIC.replace(r#""v": 0.6"#, r#""v": -0.6"#);
        assert!(RunConfig::from_json(&speed, ".").is_err());
        let eps = BASIC.replace("0.001", "2.0");
        assert!(RunConfig::from_json(&eps, ".").is_err());
        let unknown = BASIC.replace(r#""schema_version": 1"#, r#""schema_version": 1, "bogus": 0"#);
        assert!(RunConfig::from_json(&unknown, ".").is_err());
    }

    #[test]
    fn missing_weights_is_a_config_error() {
        let cfg = RunConfig::from_json(&BASIC.replace(r#""analytic": "target""#, r#""weights": "nope.bin""#), "/nonexistent").unwrap();
        let sys = cfg.system().unwrap();
        assert!(matches!(cfg.value_function(&sys), Err(Error::Config(_))));
    }

    #[test]
    fn validate_defaults() {
        let v = ValidateBlock::default();
        assert_eq!((v.samples, v.seed, v.trained_histogram_samples), (100_000, 1, 10_000));
    }
}

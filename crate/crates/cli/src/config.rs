//! Experiment configuration: JSON file, dotted flag overrides, validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use tdesim::events::EventFormat;
use tdesim::mismatch::{check_variant_pair, DEFAULT_DELTA_TS};
use tdesim::{MismatchSpec, TdeParams, TdeVariant, TextureConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Step,
    Sweep,
    Montecarlo,
    OpticalFlow,
    GenEvents,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Step => "step",
            Experiment::Sweep => "sweep",
            Experiment::Montecarlo => "montecarlo",
            Experiment::OpticalFlow => "optical-flow",
            Experiment::GenEvents => "gen-events",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MismatchPair {
    pub old: MismatchSpec,
    pub new: MismatchSpec,
}

impl Default for MismatchPair {
    fn default() -> Self {
        MismatchPair {
            old: MismatchSpec::calibrated(TdeVariant::OldSingleBranch),
            new: MismatchSpec::calibrated(TdeVariant::NewDualDpi),
        }
    }
}

impl MismatchPair {
    pub fn for_variant(&self, variant: TdeVariant) -> &MismatchSpec {
        match variant {
            TdeVariant::OldSingleBranch => &self.old,
            TdeVariant::NewDualDpi => &self.new,
        }
    }
}

/// Single FAC/TRG pair protocol used by `step` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepConfig {
    /// FAC at 0, TRG at `delta_t` (s).
    pub delta_t: f64,
    /// Simulated time after the TRG event (s).
    pub window: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        StepConfig {
            delta_t: 12e-3,
            window: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_units: usize,
    /// Draw every unit's parameters from the mismatch spec of the simulated
    /// variant instead of sharing the nominal set.
    pub per_unit_mismatch: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_units: 100,
            per_unit_mismatch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsConfig {
    /// Output format of `gen-events`.
    pub format: EventFormat,
    /// Event file replacing the synthetic stimulus in `optical-flow`.
    pub input: Option<PathBuf>,
}

impl Default for EventsConfig {
    fn default() -> Self {
        EventsConfig {
            format: EventFormat::Csv,
            input: None,
        }
    }
}

/// Everything an experiment needs. Every field has a default, so an empty
/// JSON object is a valid config.
///
/// Randomness is derived from `seed` through named substreams (`stimulus`,
/// `jitter`, `network`, `mismatch`); `texture.seed` is replaced by the
/// `stimulus` substream when a command runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When set, the config may only be run by the matching subcommand.
    pub experiment: Option<Experiment>,
    pub variant: TdeVariant,
    pub nominal: TdeParams,
    pub mismatch: MismatchPair,
    pub texture: TextureConfig,
    pub network: NetworkConfig,
    pub step: StepConfig,
    pub events: EventsConfig,
    /// Δt grid (s) of `sweep` and `montecarlo`.
    pub delta_ts: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: None,
            variant: TdeVariant::NewDualDpi,
            nominal: TdeParams::default(),
            mismatch: MismatchPair::default(),
            texture: TextureConfig::default(),
            network: NetworkConfig::default(),
            step: StepConfig::default(),
            events: EventsConfig::default(),
            delta_ts: DEFAULT_DELTA_TS.to_vec(),
            n_trials: 2000,
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Applies `(dotted.path, raw value)` overrides. Values are read as JSON
    /// when they parse, otherwise as plain strings.
    pub fn with_overrides(self, overrides: &[(String, String)]) -> Result<Self, CliError> {
        if overrides.is_empty() {
            return Ok(self);
        }
        let mut tree = serde_json::to_value(&self).map_err(|e| CliError::Config(e.to_string()))?;
        for (path, raw) in overrides {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            set_path(&mut tree, path, value)?;
        }
        serde_json::from_value(tree).map_err(|e| CliError::Config(format!("after overrides: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: tdesim::Error| CliError::Config(e.to_string());
        self.nominal.validate().map_err(cfg)?;
        check_variant_pair(&self.mismatch.old, &self.mismatch.new).map_err(cfg)?;
        self.texture.validate().map_err(cfg)?;
        let n = self.network.n_units;
        if n == 0 || !n.is_multiple_of(4) {
            return Err(CliError::Config(format!(
                "network.n_units must be a positive multiple of 4, got {n}"
            )));
        }
        if self.delta_ts.is_empty() || self.delta_ts.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(CliError::Config(format!(
                "delta_ts must be non-empty, finite and > 0, got {:?}",
                self.delta_ts
            )));
        }
        if self.n_trials < 2 {
            return Err(CliError::Config(format!(
                "n_trials must be >= 2, got {}",
                self.n_trials
            )));
        }
        let s = &self.step;
        if !(s.delta_t >= 0.0)
            || !s.delta_t.is_finite()
            || !(s.window > 0.0)
            || !s.window.is_finite()
        {
            return Err(CliError::Config(format!(
                "step needs finite delta_t >= 0 and window > 0, got {} and {}",
                s.delta_t, s.window
            )));
        }
        Ok(())
    }
}

/// Sets `path` inside `tree`. Intermediate keys must exist; the last key may be
/// new, and unknown fields are then rejected when the tree is deserialized.
fn set_path(tree: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("malformed override --{path}")));
    }
    let (last, parents) = keys.split_last().expect("split yields at least one key");
    let mut node = tree;
    for key in parents {
        node = match node.get_mut(*key) {
            Some(child) if child.is_object() => child,
            _ => return Err(CliError::Config(format!("unknown config field --{path}"))),
        };
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert((*last).to_string(), value);
            Ok(())
        }
        None => Err(CliError::Config(format!("unknown config field --{path}"))),
    }
}

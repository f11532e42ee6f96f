//! Experiment configs and the runners behind the command line.

mod analyze;
mod run;
mod sweep;

pub use analyze::{analyze, AnalysisKind, AnalyzeRequest};
pub use run::{run_experiment, RunOutcome, RunStatus};
pub use sweep::{aggregate, quantile, run_sweep, AggregateRow, SweepOutcome};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::gatelib::{GateConfig, Variant};
use crate::train::{Seeds, TaskSpec, TrainConfig};

/// Variants, seeds and quantiles of a grid sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variants: Vec<Variant>,
    /// Init seeds; every run shares the config's data seed.
    pub init_seeds: Vec<u64>,
    #[serde(default = "default_quantiles")]
    pub quantiles: (f64, f64),
    /// Reuse finished runs whose directory holds the same config.
    #[serde(default)]
    pub resume: bool,
}

fn default_quantiles() -> (f64, f64) {
    (0.2, 0.8)
}

/// A complete, self-describing experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub cell: CellKind,
    pub gate: GateConfig,
    pub hidden: usize,
    pub train: TrainConfig,
    pub seeds: Seeds,
    /// Output directory; the `--out` flag overrides it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Batch size for gate-activation snapshots at the first and last
    /// step; 0 turns them off.
    #[serde(default)]
    pub gate_snapshot: usize,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

impl ExperimentConfig {
    /// Parses JSON, reporting the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path.is_empty() { "config".into() } else { path }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.train.validate()?;
        self.gate.validate(self.hidden)?;
        if let Some(s) = &self.sweep {
            if s.variants.is_empty() {
                return Err(Error::config("sweep.variants", "must not be empty"));
            }
            if s.init_seeds.is_empty() {
                return Err(Error::config("sweep.init_seeds", "must not be empty"));
            }
            let (lo, hi) = s.quantiles;
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::config("sweep.quantiles", "need 0 <= lo <= hi <= 1"));
            }
        }
        Ok(())
    }

    /// The same experiment with another variant, gate knobs kept.
    pub fn with_variant(&self, v: Variant) -> Self {
        let mut c = self.clone();
        let mut g = GateConfig::for_variant(v);
        g.forget_bias = self.gate.forget_bias;
        g.t_max = self.gate.t_max;
        g.eps = self.gate.eps;
        g.downsize_c = self.gate.downsize_c;
        c.gate = g;
        c.sweep = None;
        c
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::config("out", "no output directory (set \"out\" or pass --out)"))
    }
}

/// File-name-safe form of a variant name: dashes dropped, `--` is `std`.
pub fn variant_slug(v: Variant) -> String {
    match v {
        Variant::Standard => "std".into(),
        _ => v.name().replace('-', ""),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SAMPLE: &str = r#"{
        "task": {"kind": "copy", "n": 5},
        "cell": "lstm",
        "gate": {"variant": "UR"},
        "hidden": 8,
        "train": {"steps": 4, "batch_size": 2, "eval_batch": 4, "eval_interval": 2},
        "seeds": {"init": 1, "data": 2}
    }"#;

    #[test]
    fn round_trip_is_identity() {
        let a = ExperimentConfig::from_json(SAMPLE).unwrap();
        let b = ExperimentConfig::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.gate.variant(), Variant::UniformRefine);
    }

    #[test]
    fn field_level_errors() {
        let bad = SAMPLE.replace("\"UR\"", "\"XX\"");
        let msg = ExperimentConfig::from_json(&bad).unwrap_err().to_string();
        assert!(msg.starts_with("gate"), "{msg}");
        for v in Variant::ALL {
            assert!(msg.contains(v.name()), "{msg}");
        }
        let bad = SAMPLE.replace("\"hidden\": 8", "\"hidden\": 8, \"hiden\": 3");
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().to_string().contains("hiden"));
        let bad = SAMPLE.replace("\"steps\": 4", "\"steps\": 4, \"clip_norm\": -1");
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().to_string().contains("train.clip_norm"));
        let bad = SAMPLE.replace("\"n\": 5", "\"n\": \"five\"");
        assert!(ExperimentConfig::from_json(&bad).unwrap_err().to_string().contains("task"));
    }

    #[test]
    fn with_variant_keeps_knobs() {
        let mut a = ExperimentConfig::from_json(SAMPLE).unwrap();
        a.gate.forget_bias = 2.0;
        let b = a.with_variant(Variant::Standard);
        assert_eq!(b.gate.variant(), Variant::Standard);
        assert_eq!(b.gate.forget_bias, 2.0);
        assert_eq!(variant_slug(Variant::Refine), "R");
        assert_eq!(variant_slug(Variant::Standard), "std");
    }
}

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{Precision, Rng};
use crate::tasks::{bit_reversal_perm, gen_adding, gen_copy, load_idx, synthetic_digits, PixelDataset, TaskBatch};

use super::AdamConfig;

/// Benchmark task and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TaskSpec {
    Copy {
        n: usize,
    },
    Adding {
        n: usize,
    },
    /// Adding with every forget bias pushed to `bias_offset` before training.
    Forgetting {
        n: usize,
        #[serde(default = "default_bias_offset")]
        bias_offset: f64,
    },
    /// Pixel-by-pixel classification. Reads IDX files when both paths are
    /// given, otherwise generates `synthetic` digit images.
    Pixel {
        #[serde(default)]
        images: Option<PathBuf>,
        #[serde(default)]
        labels: Option<PathBuf>,
        #[serde(default)]
        synthetic: Option<usize>,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default)]
        permuted: bool,
    },
}

fn default_bias_offset() -> f64 {
    6.0
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Copy { .. } => "copy",
            TaskSpec::Adding { .. } => "adding",
            TaskSpec::Forgetting { .. } => "forgetting",
            TaskSpec::Pixel { .. } => "pixel",
        }
    }

    /// Forget bias forced onto the model after initialization.
    pub fn forget_bias_override(&self) -> Option<f64> {
        match self {
            TaskSpec::Forgetting { bias_offset, .. } if *bias_offset != 0.0 => Some(*bias_offset),
            _ => None,
        }
    }

    pub fn default_learning_rate(&self) -> f64 {
        match self {
            TaskSpec::Forgetting { .. } => 1e-4,
            _ => 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskSpec::Copy { n } if *n < 1 => Err(Error::config("task.n", "copy needs n >= 1")),
            TaskSpec::Adding { n } | TaskSpec::Forgetting { n, .. } if *n < 2 || n % 2 == 1 => {
                Err(Error::config("task.n", "adding needs an even n >= 2"))
            }
            TaskSpec::Forgetting { bias_offset, .. } if !bias_offset.is_finite() => {
                Err(Error::config("task.bias_offset", "must be finite"))
            }
            TaskSpec::Pixel { images, labels, synthetic, limit, .. } => {
                match (images, labels, synthetic) {
                    (Some(_), Some(_), None) => {}
                    (None, None, Some(n)) if *n > 0 => {}
                    (None, None, Some(_)) => return Err(Error::config("task.synthetic", "must be positive")),
                    _ => {
                        return Err(Error::config(
                            "task",
                            "pixel needs either both images and labels, or synthetic",
                        ))
                    }
                }
                if *limit == Some(0) {
                    return Err(Error::config("task.limit", "must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Optimization protocol of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// `None` picks the task default.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub steps: usize,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: usize,
    #[serde(default = "default_eval_batch")]
    pub eval_batch: usize,
    /// Batch shards for the data-parallel gradient; the sum order is fixed.
    #[serde(default = "default_shards")]
    pub shards: usize,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub deterministic: bool,
    /// Stop once the eval loss drops below this value.
    #[serde(default)]
    pub target_loss: Option<f64>,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_clip() -> f64 {
    1.0
}
fn default_batch() -> usize {
    32
}
fn default_eval_interval() -> usize {
    100
}
fn default_eval_batch() -> usize {
    1024
}
fn default_shards() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: None,
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            clip_norm: default_clip(),
            batch_size: default_batch(),
            steps: 1000,
            eval_interval: default_eval_interval(),
            eval_batch: default_eval_batch(),
            shards: default_shards(),
            precision: Precision::F64,
            deterministic: false,
            target_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(lr) = self.learning_rate {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::config("train.learning_rate", "must be finite and non-negative"));
            }
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::config("train.clip_norm", "must be positive"));
        }
        for (name, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, "must lie in [0, 1)"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::config("train.adam_eps", "must be positive"));
        }
        for (name, v) in [
            ("train.batch_size", self.batch_size),
            ("train.eval_interval", self.eval_interval),
            ("train.eval_batch", self.eval_batch),
            ("train.shards", self.shards),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn adam(&self, task: &TaskSpec) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate.unwrap_or_else(|| task.default_learning_rate()),
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Batch generator for a task; pixel tasks hold their dataset.
#[derive(Clone, Debug)]
pub struct TaskSource {
    spec: TaskSpec,
    dataset: Option<PixelDataset>,
}

impl TaskSource {
    /// `rng` seeds synthetic image generation only.
    pub fn new(spec: &TaskSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let dataset = match spec {
            TaskSpec::Pixel { images, labels, synthetic, limit, permuted } => {
                let (mut imgs, mut labs) = match (images, labels, synthetic) {
                    (Some(i), Some(l), _) => load_idx(i, l)?,
                    (_, _, Some(n)) => synthetic_digits(*n, rng),
                    _ => unreachable!("validated"),
                };
                if let Some(k) = *limit {
                    let k = k.min(imgs.count);
                    imgs.data.truncate(k * imgs.pixels());
                    imgs.count = k;
                    labs.truncate(k);
                }
                let perm = permuted.then(|| bit_reversal_perm(imgs.pixels()));
                Some(PixelDataset::new(imgs, labs, perm)?)
            }
            _ => None,
        };
        Ok(TaskSource { spec: spec.clone(), dataset })
    }

    pub fn spec(&self) -> &TaskSpec {
        &self.spec
    }

    pub fn dataset(&self) -> Option<&PixelDataset> {
        self.dataset.as_ref()
    }

    pub fn input_size(&self) -> usize {
        match self.spec {
            TaskSpec::Copy { .. } => crate::tasks::COPY_ALPHABET,
            TaskSpec::Adding { .. } | TaskSpec::Forgetting { .. } => 2,
            TaskSpec::Pixel { .. } => 1,
        }
    }

    pub fn output_size(&self) -> usize {
        match &self.spec {
            TaskSpec::Copy { .. } => crate::tasks::COPY_ALPHABET,
            TaskSpec::Adding { .. } | TaskSpec::Forgetting { .. } => 1,
            TaskSpec::Pixel { .. } => self.dataset.as_ref().map_or(10, |d| d.classes),
        }
    }

    /// A fresh batch drawn from `rng`.
    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<TaskBatch> {
        match &self.spec {
            TaskSpec::Copy { n } => Ok(gen_copy(*n, batch, rng)?.to_task()),
            TaskSpec::Adding { n } | TaskSpec::Forgetting { n, .. } => Ok(gen_adding(*n, batch, rng)?.to_task()),
            TaskSpec::Pixel { .. } => {
                let d = self.dataset.as_ref().expect("pixel dataset");
                d.batch(&d.sample_indices(batch, rng))
            }
        }
    }
}

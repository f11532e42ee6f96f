//! Benchmark generators and image ingestion.

mod batch_cache;
mod idx;
mod perm;
mod pixel;
mod synthetic;

pub use batch_cache::{read_batch_cache, write_batch_cache, BATCH_CACHE_MAGIC};
pub use idx::{load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels, IdxImages};
pub use perm::{bit_reversal_perm, is_permutation};
pub use pixel::{scanline_sequence, synthetic_digits, PixelDataset, PixelSequence};
pub use synthetic::{
    forgetting_scenario, gen_adding, gen_copy, AddingBatch, CopyBatch, ForgettingScenario,
    COPY_ALPHABET, COPY_MARKER, COPY_MEMORY,
};

use serde::{Deserialize, Serialize};

use crate::ndmath::Matrix;

/// What a batch is scored against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// Class labels at the listed steps; `labels[k][b]` belongs to `steps[k]`.
    Classes { steps: Vec<usize>, labels: Vec<Vec<usize>>, classes: usize },
    /// One real target per sequence, read at `step`.
    Regression { step: usize, values: Vec<f64> },
}

/// Model-ready batch: one `batch x channels` matrix per time step.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskBatch {
    pub inputs: Vec<Matrix<f64>>,
    pub target: Target,
}

impl TaskBatch {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }

    pub fn channels(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::cols)
    }

    /// Steps whose outputs enter the loss.
    pub fn scored_steps(&self) -> Vec<usize> {
        match &self.target {
            Target::Classes { steps, .. } => steps.clone(),
            Target::Regression { step, .. } => vec![*step],
        }
    }

    /// Rows `[start, start + count)` of every step.
    pub fn slice(&self, start: usize, count: usize) -> TaskBatch {
        let inputs = self.inputs.iter().map(|m| m.slice_rows(start, count)).collect();
        let target = match &self.target {
            Target::Classes { steps, labels, classes } => Target::Classes {
                steps: steps.clone(),
                labels: labels.iter().map(|l| l[start..start + count].to_vec()).collect(),
                classes: *classes,
            },
            Target::Regression { step, values } => Target::Regression {
                step: *step,
                values: values[start..start + count].to_vec(),
            },
        };
        TaskBatch { inputs, target }
    }
}

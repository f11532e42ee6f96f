use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::Matrix;

pub const HISTOGRAM_BINS: usize = 50;

/// Histogram of per-unit mean activations over `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateHistogram {
    /// `HISTOGRAM_BINS + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub unit_means: Vec<f64>,
}

/// Mean of each unit over every batch row and time step of a recording
/// (one `batch x hidden` matrix per step).
pub fn unit_means(recording: &[Matrix<f64>]) -> Result<Vec<f64>> {
    let first = recording.first().ok_or(Error::EmptySequence)?;
    let (_, hidden) = first.shape();
    if first.rows() == 0 || hidden == 0 {
        return Err(Error::EmptyVector);
    }
    let mut sums = vec![0.0; hidden];
    let mut n = 0usize;
    for m in recording {
        if m.cols() != hidden {
            return Err(Error::shape("gate_histogram", format!("{hidden} units"), m.cols()));
        }
        for r in 0..m.rows() {
            for (s, &x) in sums.iter_mut().zip(m.row(r)) {
                *s += x;
            }
        }
        n += m.rows();
    }
    Ok(sums.into_iter().map(|s| s / n as f64).collect())
}

/// Reduces a recording over batch and time, then bins the unit means.
pub fn gate_histogram(recording: &[Matrix<f64>]) -> Result<GateHistogram> {
    let unit_means = unit_means(recording)?;
    let mut counts = vec![0; HISTOGRAM_BINS];
    for &m in &unit_means {
        let b = ((m * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1);
        counts[b] += 1;
    }
    let edges = (0..=HISTOGRAM_BINS).map(|k| k as f64 / HISTOGRAM_BINS as f64).collect();
    Ok(GateHistogram { edges, counts, unit_means })
}

/// Fraction of values strictly outside `[lo, hi]`.
pub fn fraction_outside(values: &[f64], lo: f64, hi: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v < lo || v > hi).count() as f64 / values.len() as f64
}

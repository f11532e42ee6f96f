use super::{Target, TaskBatch};
use crate::error::{Error, Result};
use crate::ndmath::{Matrix, Rng};

/// Token alphabet size of the copy task.
pub const COPY_ALPHABET: usize = 10;
/// Number of memorized tokens.
pub const COPY_MEMORY: usize = 10;
/// Token marking the recall phase.
pub const COPY_MARKER: u8 = 9;

/// Copy task: remember 10 digits over `n` blank steps.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyBatch {
    pub n: usize,
    /// `batch` sequences of length `n + 20`.
    pub tokens: Vec<Vec<u8>>,
    pub targets: Vec<[u8; COPY_MEMORY]>,
}

/// Adding task: sum the two marked values.
#[derive(Clone, Debug, PartialEq)]
pub struct AddingBatch {
    pub n: usize,
    pub values: Vec<Vec<f64>>,
    pub markers: Vec<(usize, usize)>,
    pub targets: Vec<f64>,
}

pub fn gen_copy(n: usize, batch: usize, rng: &mut Rng) -> Result<CopyBatch> {
    if n < 1 {
        return Err(Error::config("task.n", "copy task needs n >= 1"));
    }
    let len = n + 2 * COPY_MEMORY;
    let mut tokens = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..batch {
        let mut seq = vec![0u8; len];
        let mut t = [0u8; COPY_MEMORY];
        for (k, slot) in t.iter_mut().enumerate() {
            *slot = 1 + rng.below(8) as u8;
            seq[k] = *slot;
        }
        for s in &mut seq[n + COPY_MEMORY..] {
            *s = COPY_MARKER;
        }
        tokens.push(seq);
        targets.push(t);
    }
    Ok(CopyBatch { n, tokens, targets })
}

impl CopyBatch {
    pub fn len(&self) -> usize {
        self.n + 2 * COPY_MEMORY
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Scored steps: the final 10.
    pub fn mask(&self) -> Vec<usize> {
        (self.n + COPY_MEMORY..self.len()).collect()
    }

    /// One-hot inputs, class targets on the last 10 steps.
    pub fn to_task(&self) -> TaskBatch {
        let b = self.tokens.len();
        let inputs = (0..self.len())
            .map(|t| {
                let mut m = Matrix::zeros(b, COPY_ALPHABET);
                for (r, seq) in self.tokens.iter().enumerate() {
                    m.set(r, seq[t] as usize, 1.0);
                }
                m
            })
            .collect();
        let labels = (0..COPY_MEMORY)
            .map(|k| self.targets.iter().map(|t| t[k] as usize).collect())
            .collect();
        TaskBatch {
            inputs,
            target: Target::Classes { steps: self.mask(), labels, classes: COPY_ALPHABET },
        }
    }
}

pub fn gen_adding(n: usize, batch: usize, rng: &mut Rng) -> Result<AddingBatch> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::config("task.n", format!("adding task needs an even n >= 2, got {n}")));
    }
    let half = (n / 2) as u64;
    let mut values = Vec::with_capacity(batch);
    let mut markers = Vec::with_capacity(batch);
    let mut targets = Vec::with_capacity(batch);
    for _ in 0..batch {
        let v: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        let i0 = rng.below(half) as usize;
        let i1 = (half + rng.below(half)) as usize;
        targets.push(v[i0] + v[i1]);
        values.push(v);
        markers.push((i0, i1));
    }
    Ok(AddingBatch { n, values, markers, targets })
}

impl AddingBatch {
    /// Channel 0 holds the values, channel 1 the two markers.
    pub fn to_task(&self) -> TaskBatch {
        let b = self.values.len();
        let inputs = (0..self.n)
            .map(|t| {
                let mut m = Matrix::zeros(b, 2);
                for r in 0..b {
                    m.set(r, 0, self.values[r][t]);
                    let (i0, i1) = self.markers[r];
                    if t == i0 || t == i1 {
                        m.set(r, 1, 1.0);
                    }
                }
                m
            })
            .collect();
        TaskBatch {
            inputs,
            target: Target::Regression { step: self.n - 1, values: self.targets.clone() },
        }
    }
}

/// Adding-task setup with saturated forget gates.
#[derive(Clone, Debug, PartialEq)]
pub struct ForgettingScenario {
    pub hidden: usize,
    pub n: usize,
    pub learning_rate: f64,
    /// Constant every forget bias is set to before training; `None` leaves
    /// the variant's own initialization.
    pub forget_bias: Option<f64>,
}

/// `bias_offset = 0` gives the plain adding setup.
pub fn forgetting_scenario(hidden: usize, n: usize, bias_offset: f64) -> ForgettingScenario {
    ForgettingScenario {
        hidden,
        n,
        learning_rate: 1e-4,
        forget_bias: (bias_offset != 0.0).then_some(bias_offset),
    }
}

impl Default for ForgettingScenario {
    fn default() -> Self {
        forgetting_scenario(64, 100, 6.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_structure() {
        let b = gen_copy(3, 4, &mut Rng::new(1, 0)).unwrap();
        assert_eq!(b.len(), 23);
        for (seq, t) in b.tokens.iter().zip(&b.targets) {
            assert_eq!(seq.len(), 23);
            assert!(seq[..10].iter().all(|&x| (1..=8).contains(&x)));
            assert_eq!(&seq[..10], &t[..]);
            assert_eq!(&seq[10..13], &[0, 0, 0]);
            assert!(seq[13..].iter().all(|&x| x == 9));
        }
        assert_eq!(b.mask(), (13..23).collect::<Vec<_>>());
        assert!(gen_copy(0, 1, &mut Rng::new(1, 0)).is_err());
    }

    #[test]
    fn copy_digits_uniform_chi_square() {
        let b = gen_copy(1, 10_000, &mut Rng::new(2, 0)).unwrap();
        let mut counts = [0f64; 8];
        for t in &b.targets {
            for &d in t {
                counts[d as usize - 1] += 1.0;
            }
        }
        let e = 100_000.0 / 8.0;
        let chi2: f64 = counts.iter().map(|c| (c - e) * (c - e) / e).sum();
        // 1% critical value, 7 degrees of freedom
        assert!(chi2 < 18.475, "{chi2}");
    }

    #[test]
    fn copy_task_one_hot() {
        let b = gen_copy(2, 3, &mut Rng::new(3, 0)).unwrap();
        let t = b.to_task();
        assert_eq!(t.len(), 22);
        assert_eq!(t.channels(), 10);
        assert!(t.inputs.iter().all(|m| (0..3).all(|r| m.row(r).iter().sum::<f64>() == 1.0)));
        assert_eq!(t.scored_steps().len(), 10);
    }

    #[test]
    fn adding_structure() {
        let b = gen_adding(2, 5, &mut Rng::new(4, 0)).unwrap();
        for r in 0..5 {
            assert_eq!(b.markers[r], (0, 1));
            assert_eq!(b.targets[r], b.values[r][0] + b.values[r][1]);
        }
        let b = gen_adding(50, 200, &mut Rng::new(5, 0)).unwrap();
        let task = b.to_task();
        for r in 0..200 {
            let (i0, i1) = b.markers[r];
            assert!(i0 < 25 && (25..50).contains(&i1));
            let marked: Vec<f64> = (0..50)
                .filter(|&t| task.inputs[t].get(r, 1) == 1.0)
                .map(|t| task.inputs[t].get(r, 0))
                .collect();
            assert_eq!(marked.len(), 2);
            assert_eq!(marked[0] + marked[1], b.targets[r]);
        }
        assert!(gen_adding(3, 1, &mut Rng::new(1, 0)).is_err());
        assert!(gen_adding(0, 1, &mut Rng::new(1, 0)).is_err());
    }

    #[test]
    fn adding_target_moments() {
        let b = gen_adding(4, 1_000_000, &mut Rng::new(6, 0)).unwrap();
        let n = b.targets.len() as f64;
        let mean = b.targets.iter().sum::<f64>() / n;
        assert!((mean - 1.0).abs() < 0.002, "{mean}");
        let mse = b.targets.iter().map(|t| (1.0 - t) * (1.0 - t)).sum::<f64>() / n;
        assert!((mse - 1.0 / 6.0).abs() < 0.001, "{mse}");
    }

    #[test]
    fn identical_seed_identical_data() {
        let a = gen_copy(5, 8, &mut Rng::new(9, 1)).unwrap();
        let b = gen_copy(5, 8, &mut Rng::new(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forgetting_defaults() {
        let s = ForgettingScenario::default();
        assert_eq!((s.hidden, s.n, s.learning_rate, s.forget_bias), (64, 100, 1e-4, Some(6.0)));
        let f = crate::ndmath::sigmoid(6.0f64);
        assert!((f - 0.997_527_376_843_365_2).abs() < 1e-15);
        assert_eq!(forgetting_scenario(64, 100, 0.0).forget_bias, None);
    }
}

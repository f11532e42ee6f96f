use crate::error::{Error, Result};
use crate::ndmath::{Matrix, Scalar};

/// Negative log-likelihood of `label` under `softmax(logits)`; writes
/// `scale * (p - onehot)` into `grad` when given.
pub fn softmax_xent_row<T: Scalar>(logits: &[T], label: usize, scale: T, grad: Option<&mut [T]>) -> f64 {
    let max = logits.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
    let sum: T = logits.iter().map(|&x| (x - max).exp()).sum();
    let log_z = max + sum.ln();
    if let Some(g) = grad {
        for (k, (gk, &x)) in g.iter_mut().zip(logits).enumerate() {
            let p = (x - log_z).exp();
            *gk = scale * if k == label { p - T::one() } else { p };
        }
    }
    (log_z - logits[label]).as_f64()
}

/// Mean cross-entropy over the masked steps and the batch.
///
/// `logits[t]` is `batch x classes`; `targets[t][b]` the label of row `b`.
pub fn cross_entropy_masked(logits: &[Matrix<f64>], targets: &[Vec<usize>], mask: &[bool]) -> Result<f64> {
    if logits.len() != targets.len() || logits.len() != mask.len() {
        return Err(Error::shape(
            "cross_entropy_masked",
            format!("{} steps of logits, targets and mask", logits.len()),
            format!("{} / {}", targets.len(), mask.len()),
        ));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for ((l, y), _) in logits.iter().zip(targets).zip(mask).filter(|(_, &m)| m) {
        for (b, &label) in y.iter().enumerate() {
            total += softmax_xent_row(l.row(b), label, 1.0, None);
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(total / n as f64)
}

/// Mean squared error over the batch.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
}

use super::{Matrix, Rng, Scalar, Vector};
use crate::error::{Error, Result};

/// Logistic sigmoid, evaluated on the branch that never overflows.
#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid_vec<T: Scalar>(v: &[T]) -> Vector<T> {
    v.iter().map(|&x| sigmoid(x)).collect()
}

/// `log(p / (1 - p))` after clamping `p` into `[eps, 1 - eps]`.
pub fn inverse_sigmoid<T: Scalar>(p: T, eps: T) -> T {
    let p = p.max(eps).min(T::one() - eps);
    (p / (T::one() - p)).ln()
}

#[inline]
pub fn tanh_act<T: Scalar>(x: T) -> T {
    x.tanh()
}

pub fn tanh_vec<T: Scalar>(v: &[T]) -> Vector<T> {
    v.iter().map(|&x| x.tanh()).collect()
}

/// Max-subtracted softmax written into `out`. `v` must be non-empty.
pub fn softmax_into<T: Scalar>(v: &[T], out: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &x) in out.iter_mut().zip(v) {
        *o = (x - max).exp();
        sum += *o;
    }
    let inv = T::one() / sum;
    out.iter_mut().for_each(|o| *o *= inv);
}

pub fn softmax<T: Scalar>(v: &[T]) -> Result<Vector<T>> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    let mut out = Vector::zeros(v.len());
    softmax_into(v, &mut out);
    Ok(out)
}

/// Cumulative softmax. Writes the softmax probabilities into `probs` and the
/// left-to-right running sum into `out`. The last entry is pinned to exactly 1.
pub fn cumax_into<T: Scalar>(v: &[T], probs: &mut [T], out: &mut [T]) {
    softmax_into(v, probs);
    let mut acc = T::zero();
    for (o, &p) in out.iter_mut().zip(probs.iter()) {
        acc += p;
        *o = acc.min(T::one());
    }
    if let Some(last) = out.last_mut() {
        *last = T::one();
    }
}

pub fn cumax<T: Scalar>(v: &[T]) -> Result<Vector<T>> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    let mut probs = Vector::zeros(v.len());
    let mut out = Vector::zeros(v.len());
    cumax_into(v, &mut probs, &mut out);
    Ok(out)
}

/// Reverse of [`cumax_into`]: given upstream gradient `d_out` on the cumax
/// output and the cached softmax `probs`, writes the gradient on the logits.
pub fn cumax_backward_into<T: Scalar>(probs: &[T], d_out: &[T], d_logits: &mut [T]) {
    // cumsum^T is a reverse running sum.
    let mut acc = T::zero();
    for j in (0..probs.len()).rev() {
        acc += d_out[j];
        d_logits[j] = acc;
    }
    let dot: T = probs.iter().zip(d_logits.iter()).map(|(&p, &d)| p * d).sum();
    for (d, &p) in d_logits.iter_mut().zip(probs) {
        *d = p * (*d - dot);
    }
}

/// `W x + b`.
pub fn affine<T: Scalar>(w: &Matrix<T>, x: &[T], b: &[T]) -> Result<Vector<T>> {
    if w.cols() != x.len() {
        return Err(Error::shape(
            "affine",
            format!("input of length {}", w.cols()),
            format!("length {}", x.len()),
        ));
    }
    if w.rows() != b.len() {
        return Err(Error::shape(
            "affine",
            format!("bias of length {}", w.rows()),
            format!("length {}", b.len()),
        ));
    }
    Ok((0..w.rows())
        .map(|r| {
            let dot: T = w.row(r).iter().zip(x).map(|(&a, &b)| a * b).sum();
            dot + b[r]
        })
        .collect())
}

/// `n` i.i.d. draws from `[lo, hi)`.
pub fn rng_uniform(rng: &mut Rng, lo: f64, hi: f64, n: usize) -> Result<Vector<f64>> {
    if !(lo < hi) {
        return Err(Error::InvalidRange { lo, hi });
    }
    Ok((0..n).map(|_| rng.uniform_in(lo, hi)).collect())
}

/// Euclidean norm over the concatenation of all slices.
pub fn global_norm<T: Scalar>(parts: &[&[T]]) -> T {
    let mut sq = T::zero();
    for part in parts {
        for &x in part.iter() {
            sq += x * x;
        }
    }
    sq.sqrt()
}

/// Rescales all slices in place so their global norm is at most `max_norm`.
/// Returns the norm measured before clipping.
pub fn clip_by_global_norm<T: Scalar>(parts: &mut [&mut [T]], max_norm: T) -> T {
    let norm = {
        let views: Vec<&[T]> = parts.iter().map(|p| &**p).collect();
        global_norm(&views)
    };
    if norm > max_norm {
        let scale = max_norm / norm;
        for part in parts.iter_mut() {
            part.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use crate::ndmath::Rng;

    // Reference values computed with mpmath at 30 significant digits.
    const SIGMOID_1: f64 = 0.731_058_578_630_004_879_251_159;
    const TANH_1: f64 = 0.761_594_155_955_764_888_119_458;
    const LOGIT_0999: f64 = 6.906_754_778_648_553_518_553_8;
    const SOFTMAX_10_0: [f64; 2] = [0.999_954_602_131_297_565_6, 4.539_786_870_243_439_450e-5];

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((1.0 - sigmoid(40.0f64)).abs() < 1e-15);
        assert_relative_eq!(sigmoid(1.0), SIGMOID_1, epsilon = 1e-15);
        assert!(sigmoid(-700.0f64) >= 0.0 && sigmoid(700.0f64) <= 1.0);
        assert!(sigmoid(-800.0f64).is_finite());
    }

    #[test]
    fn inverse_sigmoid_values() {
        assert_eq!(inverse_sigmoid(0.5, 1e-3), 0.0);
        assert_relative_eq!(inverse_sigmoid(sigmoid(2.0), 1e-6), 2.0, epsilon = 1e-10);
        assert_relative_eq!(inverse_sigmoid(1.0, 1e-3), LOGIT_0999, epsilon = 1e-10);
    }

    #[test]
    fn tanh_values() {
        assert_eq!(tanh_act(0.0), 0.0);
        assert_eq!(tanh_act(-0.3), -tanh_act(0.3));
        assert_relative_eq!(tanh_act(1.0), TANH_1, epsilon = 1e-15);
    }

    #[test]
    fn softmax_values() {
        assert_eq!(softmax(&[0.0; 4]).unwrap().to_vec(), vec![0.25; 4]);
        let s = softmax(&[10.0, 0.0]).unwrap();
        assert_relative_eq!(s[0], SOFTMAX_10_0[0], epsilon = 1e-15);
        assert_relative_eq!(s[1], SOFTMAX_10_0[1], max_relative = 1e-12);
        let shifted = softmax(&[3.0 + 7.5, 4.0 + 7.5]).unwrap();
        let base = softmax(&[3.0, 4.0]).unwrap();
        assert_relative_eq!(shifted[0], base[0], epsilon = 1e-15);
        assert!(matches!(softmax::<f64>(&[]), Err(Error::EmptyVector)));
    }

    #[test]
    fn cumax_values() {
        assert_eq!(cumax(&[0.0; 4]).unwrap().to_vec(), vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(cumax(&[3.0]).unwrap().to_vec(), vec![1.0]);
        let c = cumax(&[10.0, 0.0]).unwrap();
        assert_relative_eq!(c[0], SOFTMAX_10_0[0], epsilon = 1e-15);
        assert_eq!(c[1], 1.0);
        assert!(cumax::<f64>(&[]).is_err());
    }

    #[test]
    fn cumax_backward_matches_finite_differences() {
        let logits = [0.3, -1.2, 0.8, 0.1, -0.4];
        let weights = [0.7, -0.2, 1.1, 0.4, -0.9];
        let loss = |z: &[f64]| -> f64 {
            let c = cumax(z).unwrap();
            c.iter().zip(weights).map(|(a, w)| a * w).sum()
        };
        let mut probs = [0.0; 5];
        let mut out = [0.0; 5];
        cumax_into(&logits, &mut probs, &mut out);
        let mut grad = [0.0; 5];
        cumax_backward_into(&probs, &weights, &mut grad);
        for k in 0..5 {
            let mut zp = logits;
            let mut zm = logits;
            zp[k] += 1e-6;
            zm[k] -= 1e-6;
            let fd = (loss(&zp) - loss(&zm)) / 2e-6;
            assert_relative_eq!(grad[k], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn affine_values() {
        let id = Matrix::<f64>::identity(3);
        assert_eq!(affine(&id, &[1.0, 2.0, 3.0], &[0.0; 3]).unwrap().to_vec(), vec![1.0, 2.0, 3.0]);
        let zero = Matrix::<f64>::zeros(2, 3);
        assert_eq!(affine(&zero, &[1.0, 2.0, 3.0], &[5.0, 6.0]).unwrap().to_vec(), vec![5.0, 6.0]);
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(affine(&w, &[1.0, 1.0], &[0.0, 0.0]).unwrap().to_vec(), vec![3.0, 7.0]);
        let err = affine(&w, &[1.0], &[0.0, 0.0]).unwrap_err().to_string();
        assert!(err.contains("length 2") && err.contains("length 1"), "{err}");
    }

    #[test]
    fn rng_uniform_contract() {
        let a = rng_uniform(&mut Rng::new(9, 0), 0.0, 1.0, 3).unwrap();
        let b = rng_uniform(&mut Rng::new(9, 0), 0.0, 1.0, 3).unwrap();
        assert_eq!(a, b);
        assert!(rng_uniform(&mut Rng::new(9, 0), 1.0, 1.0, 3).is_err());
        let draws = rng_uniform(&mut Rng::new(1, 2), 0.0, 1.0, 100_000).unwrap();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!(draws.iter().all(|&x| (0.0..1.0).contains(&x)));
    }

    #[test]
    fn clipping() {
        let mut a = [0.3, 0.4];
        clip_by_global_norm(&mut [&mut a[..]], 1.0);
        assert_eq!(a, [0.3, 0.4]);
        let mut z = [0.0, 0.0];
        clip_by_global_norm(&mut [&mut z[..]], 1.0);
        assert_eq!(z, [0.0, 0.0]);
        let mut v = [3.0, 4.0];
        let before = clip_by_global_norm(&mut [&mut v[..]], 1.0);
        assert_eq!(before, 5.0);
        assert_relative_eq!(v[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(v[1], 0.8, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn sigmoid_round_trip(p in 1e-6f64..(1.0 - 1e-6)) {
            let back = sigmoid(inverse_sigmoid(p, 1e-6));
            prop_assert!((back - p).abs() < 1e-10);
        }

        #[test]
        fn cumax_monotone(v in proptest::collection::vec(-50.0f64..50.0, 1..4096)) {
            let c = cumax(&v).unwrap();
            prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(c.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((c[c.len() - 1] - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn affine_is_linear(
            w in proptest::collection::vec(-3.0f64..3.0, 12),
            x in proptest::collection::vec(-3.0f64..3.0, 4),
            y in proptest::collection::vec(-3.0f64..3.0, 4),
        ) {
            let w = Matrix::from_vec(3, 4, w).unwrap();
            let zero = [0.0; 3];
            let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let lhs = affine(&w, &xy, &zero).unwrap();
            let ax = affine(&w, &x, &zero).unwrap();
            let ay = affine(&w, &y, &zero).unwrap();
            for i in 0..3 {
                let rhs = ax[i] + ay[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn clipped_norm_bounded(v in proptest::collection::vec(-100.0f64..100.0, 1..64), max in 0.01f64..10.0) {
            let mut v = v;
            clip_by_global_norm(&mut [&mut v[..]], max);
            prop_assert!(global_norm(&[&v[..]]) <= max + 1e-9);
        }
    }
}

use crate::error::{Error, Result};
use crate::ndmath::{Scalar, Vector};

/// `alpha(f) = f (1 - f)`.
#[inline]
pub fn adjustment<T: Scalar>(f: T) -> T {
    f * (T::one() - f)
}

/// `g = f + alpha(f) (2r - 1)`, the interpolation between `f^2` and `1 - (1 - f)^2`.
#[inline]
pub fn refine<T: Scalar>(f: T, r: T) -> T {
    let two = T::one() + T::one();
    f + adjustment(f) * (two * r - T::one())
}

/// `g = 2 r f + (1 - 2r) f^2`, the polynomial form of [`refine`].
#[inline]
pub fn refine_alt<T: Scalar>(f: T, r: T) -> T {
    let two = T::one() + T::one();
    two * r * f + (T::one() - two * r) * f * f
}

fn same_len(op: &'static str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("length {a}"), format!("length {b}")));
    }
    Ok(())
}

pub fn refine_compose<T: Scalar>(f: &[T], r: &[T]) -> Result<Vector<T>> {
    same_len("refine_compose", f.len(), r.len())?;
    Ok(f.iter().zip(r).map(|(&f, &r)| refine(f, r)).collect())
}

/// Combines fine gates with master gates through the overlap `w = mf * mi`.
///
/// Returns `(f * w + mf - w, i * w + mi - w)`.
pub fn master_compose<T: Scalar>(
    f: &[T],
    i: &[T],
    mf: &[T],
    mi: &[T],
) -> Result<(Vector<T>, Vector<T>)> {
    same_len("master_compose", f.len(), i.len())?;
    same_len("master_compose", f.len(), mf.len())?;
    same_len("master_compose", f.len(), mi.len())?;
    let mut ef = Vector::zeros(f.len());
    let mut ei = Vector::zeros(f.len());
    for k in 0..f.len() {
        let w = mf[k] * mi[k];
        ef[k] = f[k] * w + mf[k] - w;
        ei[k] = i[k] * w + mi[k] - w;
    }
    Ok((ef, ei))
}

/// Master composition with tied gates (`mi = 1 - mf`, `i = 1 - f`) and the
/// overlap term doubled: `f_hat = 2 f w + mf - w`, `i_hat = 1 - f_hat`.
///
/// This is the refine gate with the master gate as the main gate and `f` as
/// the refining gate.
pub fn tied_master_rescaled<T: Scalar>(f: &[T], mf: &[T]) -> Result<(Vector<T>, Vector<T>)> {
    same_len("tied_master_rescaled", f.len(), mf.len())?;
    let two = T::one() + T::one();
    let ef: Vector<T> = f
        .iter()
        .zip(mf)
        .map(|(&f, &m)| {
            let w = m * (T::one() - m);
            two * f * w + m - w
        })
        .collect();
    let ei = ef.map(|g| T::one() - g);
    Ok((ef, ei))
}

/// Repeats every master value `c` times.
pub fn master_downsize_expand<T: Scalar>(master: &[T], c: usize) -> Result<Vector<T>> {
    if c == 0 {
        return Err(Error::config("downsize_c", "must be at least 1"));
    }
    Ok(master.iter().flat_map(|&m| std::iter::repeat_n(m, c)).collect())
}

/// Number of master values for `hidden` units in chunks of `c`.
pub fn master_size_for(hidden: usize, c: usize) -> Result<usize> {
    if c == 0 || hidden % c != 0 {
        return Err(Error::config(
            "downsize_c",
            format!("{c} does not divide hidden size {hidden}"),
        ));
    }
    Ok(hidden / c)
}

/// Admissible band `[f^2, 1 - (1 - f)^2]` of the refined gate.
pub fn refine_band(f: f64) -> (f64, f64) {
    (f * f, 1.0 - (1.0 - f) * (1.0 - f))
}

/// Norm of the gradient of `g` with respect to the forget and refine
/// pre-activations, written in terms of `(f, g)`.
pub fn refine_grad_norm(f: f64, g: f64) -> Result<f64> {
    let (lo, hi) = refine_band(f);
    let tol = 1e-12;
    if !(f > 0.0 && f < 1.0) || g < lo - tol || g > hi + tol {
        return Err(Error::OutsideBand { f, g, lo, hi });
    }
    let a = adjustment(f);
    let d = g - f * f;
    let gx = d * (1.0 - 2.0 * f) + 2.0 * f * f * (1.0 - f);
    let gy = d * (1.0 - d / (2.0 * a));
    Ok((gx * gx + gy * gy).sqrt())
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_slice, ExecPolicy};
use crate::gatelib::{refine, refine_grad_norm};

/// Dense grid size before refinement.
pub const GRID_POINTS: usize = 1024;
const TOL: f64 = 1e-6;

/// Extremes of the refine-gate gradient norm over all `f` that reach `g`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradBound {
    pub g: f64,
    pub min: f64,
    pub max: f64,
    /// `g (1 - g)`, the gradient of a plain sigmoid gate.
    pub standard: f64,
    /// Norm on the `r = 1/2` path, where `f = g`.
    pub at_half: f64,
}

/// Maximizes `h` on `[a, b]` by golden-section search to width `tol`.
/// Returns `(argmax, max)`.
pub fn golden_section_max(h: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut hc, mut hd) = (h(c), h(d));
    while b - a > tol {
        if hc > hd {
            b = d;
            d = c;
            hd = hc;
            c = b - phi * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + phi * (b - a);
            hd = h(d);
        }
    }
    let x = (a + b) / 2.0;
    (x, h(x))
}

/// `f` range that can produce `g`: `f^2 <= g <= 1 - (1 - f)^2`.
fn admissible(g: f64) -> (f64, f64) {
    (1.0 - (1.0 - g).sqrt(), g.sqrt())
}

fn extreme(g: f64, sign: f64) -> f64 {
    let (lo, hi) = admissible(g);
    let h = |f: f64| sign * refine_grad_norm(f.clamp(lo, hi), g).unwrap_or(f64::NAN);
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let mut best = (g, h(g));
    for k in 0..GRID_POINTS {
        let f = lo + step * k as f64;
        let v = h(f);
        if v > best.1 {
            best = (f, v);
        }
    }
    let a = (best.0 - step).max(lo);
    let b = (best.0 + step).min(hi);
    let (_, v) = golden_section_max(h, a, b, TOL);
    sign * v.max(best.1)
}

/// Numeric min and max of the gradient norm at each `g` in `(0, 1)`.
pub fn grad_norm_bounds(g_grid: &[f64], policy: ExecPolicy) -> Result<Vec<GradBound>> {
    if let Some(&g) = g_grid.iter().find(|&&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::config("g", format!("{g} is outside (0, 1)")));
    }
    map_slice(policy, g_grid, |&g| {
        Ok(GradBound {
            g,
            min: extreme(g, -1.0),
            max: extreme(g, 1.0),
            standard: g * (1.0 - g),
            at_half: refine_grad_norm(g, g)?,
        })
    })
    .into_iter()
    .collect()
}

/// `g(f, r)` on a grid; row `i` is `r_grid[i]`, column `j` is `f_grid[j]`.
pub fn g_contour(f_grid: &[f64], r_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    if let Some(&x) = f_grid.iter().chain(r_grid).find(|&&x| !(0.0..=1.0).contains(&x)) {
        return Err(Error::config("grid", format!("{x} is outside [0, 1]")));
    }
    Ok(r_grid.iter().map(|&r| f_grid.iter().map(|&f| refine(f, r)).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let (x, v) = golden_section_max(|x| -(x - 0.3) * (x - 0.3) + 2.0, 0.0, 1.0, 1e-9);
        // a flat peak pins x only to about sqrt(machine eps)
        assert!((x - 0.3).abs() < 1e-7 && (v - 2.0).abs() < 1e-14, "{x} {v}");
    }

    #[test]
    fn half_example() {
        let b = grad_norm_bounds(&[0.5], ExecPolicy::Sequential).unwrap()[0];
        assert!((b.at_half - 0.279_508_497_187_473_7).abs() < 1e-15);
        assert!(b.at_half > b.standard && b.standard == 0.25);
        assert!(b.min <= b.at_half && b.at_half <= b.max);
    }

    #[test]
    fn max_bound_beats_standard_near_one() {
        let grid = linspace(0.95, 0.999, 50);
        for b in grad_norm_bounds(&grid, ExecPolicy::Parallel).unwrap() {
            assert!(b.max > b.standard, "{b:?}");
            assert!(b.min >= 0.0);
        }
    }

    #[test]
    fn bounds_bracket_the_half_path() {
        let grid = linspace(0.01, 0.99, 99);
        for b in grad_norm_bounds(&grid, ExecPolicy::Parallel).unwrap() {
            assert!(b.min <= b.at_half && b.at_half <= b.max, "{b:?}");
        }
        assert!(grad_norm_bounds(&[1.0], ExecPolicy::Sequential).is_err());
    }

    #[test]
    fn refinement_beats_dense_brute_force() {
        // A 10^5 point scan never exceeds the refined max by more than the tolerance.
        for g in [0.2, 0.6, 0.97] {
            let b = grad_norm_bounds(&[g], ExecPolicy::Sequential).unwrap()[0];
            let (lo, hi) = admissible(g);
            let brute = linspace(lo, hi, 100_000)
                .into_iter()
                .filter_map(|f| refine_grad_norm(f, g).ok())
                .fold(f64::MIN, f64::max);
            assert!(b.max >= brute - 1e-9, "{g}: {} vs {brute}", b.max);
        }
    }

    #[test]
    fn contour_examples() {
        let f = linspace(0.0, 1.0, 11);
        let r = vec![0.0, 0.5, 1.0];
        let c = g_contour(&f, &r).unwrap();
        for (j, &fj) in f.iter().enumerate() {
            assert!((c[1][j] - fj).abs() < 1e-15);
        }
        assert!((c[2][5] - 0.75).abs() < 1e-15);
        assert!((g_contour(&[0.9], &[1.0]).unwrap()[0][0] - 0.99).abs() < 1e-15);
        assert!(g_contour(&[1.5], &[0.0]).is_err());
    }

    #[test]
    fn contour_is_monotone() {
        let f = linspace(0.0, 1.0, 41);
        let r = linspace(0.0, 1.0, 41);
        let c = g_contour(&f, &r).unwrap();
        for i in 0..41 {
            for j in 0..41 {
                if j + 1 < 41 {
                    assert!(c[i][j + 1] >= c[i][j]);
                }
                if i + 1 < 41 {
                    assert!(c[i + 1][j] >= c[i][j]);
                }
            }
        }
    }
}

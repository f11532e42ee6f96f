use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndmath::{sigmoid, Rng};

/// Characteristic timescale `1 / (1 - f)` of a forget activation.
pub fn decay_period(f: f64) -> Result<f64> {
    if f >= 1.0 {
        return Err(Error::InfiniteTimescale);
    }
    if !(f >= 0.0) {
        return Err(Error::config("f", format!("{f} is not a gate activation in [0, 1)")));
    }
    Ok(1.0 / (1.0 - f))
}

/// Interval of timescales a refine gate can reach from timescale `d`.
pub fn refine_timescale_band(d: f64) -> (f64, f64) {
    (d / 2.0, d * d)
}

/// Initialization whose decay-period distribution is sampled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TimescaleInit {
    /// Every unit has bias `bias`.
    Constant { bias: f64 },
    /// Bias `ln u`, `u ~ U[1, t_max - 1]`.
    Chrono { t_max: usize },
    /// Activation `f ~ U[eps, 1 - eps]`.
    Uniform { eps: f64 },
    /// Activation `j / size` at a uniformly drawn cumax position `j < size`.
    Cumax { size: usize },
}

/// `n` decay periods of units drawn from an initialization.
pub fn timescale_sampler(init: TimescaleInit, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("n", "must be at least 1"));
    }
    let f_of = |rng: &mut Rng| -> Result<f64> {
        Ok(match init {
            TimescaleInit::Constant { bias } => sigmoid(bias),
            TimescaleInit::Chrono { t_max } => {
                if t_max < 3 {
                    return Err(Error::config("t_max", "chrono needs t_max >= 3"));
                }
                let u = rng.uniform_in(1.0, t_max as f64 - 1.0);
                u / (1.0 + u)
            }
            TimescaleInit::Uniform { eps } => {
                if !(0.0..0.5).contains(&eps) {
                    return Err(Error::config("eps", "must lie in [0, 0.5)"));
                }
                eps + (1.0 - 2.0 * eps) * rng.uniform()
            }
            TimescaleInit::Cumax { size } => {
                if size == 0 {
                    return Err(Error::config("size", "must be at least 1"));
                }
                rng.below(size as u64) as f64 / size as f64
            }
        })
    };
    (0..n)
        .map(|_| {
            let f = f_of(rng)?;
            // The logistic form keeps 1 + e^b exact for constant biases.
            match init {
                TimescaleInit::Constant { bias } => Ok(1.0 + bias.exp()),
                TimescaleInit::Chrono { .. } => Ok(1.0 + f / (1.0 - f)),
                _ => decay_period(f),
            }
        })
        .collect()
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic one-sample KS critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_61 / (n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimescaleReport {
    pub periods: Vec<f64>,
    /// `(q, value)` at q = 0.1, 0.25, 0.5, 0.75, 0.9.
    pub quantiles: Vec<(f64, f64)>,
}

/// Per-unit decay periods of mean forget activations.
pub fn timescale_report(unit_means: &[f64]) -> Result<TimescaleReport> {
    if unit_means.is_empty() {
        return Err(Error::EmptyVector);
    }
    let periods = unit_means.iter().map(|&f| decay_period(f)).collect::<Result<Vec<_>>>()?;
    let mut sorted = periods.clone();
    sorted.sort_by(f64::total_cmp);
    let quantiles = [0.1, 0.25, 0.5, 0.75, 0.9]
        .into_iter()
        .map(|q| {
            let pos = q * (sorted.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            (q, sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
        })
        .collect();
    Ok(TimescaleReport { periods, quantiles })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_examples() {
        assert_eq!(decay_period(0.5).unwrap(), 2.0);
        assert!((decay_period(0.9).unwrap() - 10.0).abs() < 1e-12);
        let (lo, hi) = refine_timescale_band(decay_period(0.9).unwrap());
        assert!((lo - 5.0).abs() < 1e-12 && (hi - 100.0).abs() < 1e-10);
        // sigma(1) gives 1 + e
        let d = decay_period(sigmoid(1.0)).unwrap();
        assert!((d - (1.0 + 1f64.exp())).abs() < 1e-12);
        assert!((d - 3.7).abs() < 0.02);
        assert_eq!(decay_period(1.0).unwrap_err().to_string(), "infinite timescale");
        assert!(decay_period(f64::NAN).is_err());
    }

    #[test]
    fn constant_bias_is_a_point_mass() {
        let d = timescale_sampler(TimescaleInit::Constant { bias: 1.0 }, 100, &mut Rng::new(0, 0)).unwrap();
        assert!(d.iter().all(|&x| x == 1.0 + 1f64.exp()));
    }

    #[test]
    fn chrono_range() {
        let d = timescale_sampler(TimescaleInit::Chrono { t_max: 100 }, 10_000, &mut Rng::new(1, 0)).unwrap();
        assert!(d.iter().all(|&x| (2.0..=100.0).contains(&x)));
        assert!(timescale_sampler(TimescaleInit::Chrono { t_max: 2 }, 1, &mut Rng::new(1, 0)).is_err());
    }

    #[test]
    fn uniform_survival_is_one_over_x() {
        let d = timescale_sampler(TimescaleInit::Uniform { eps: 0.0 }, 100_000, &mut Rng::new(2, 0)).unwrap();
        for x in [2.0, 5.0, 10.0] {
            let p = d.iter().filter(|&&v| v > x).count() as f64 / d.len() as f64;
            assert!((p - 1.0 / x).abs() < 0.01, "{x} {p}");
        }
        let ks = ks_statistic(&d, |x| if x < 1.0 { 0.0 } else { 1.0 - 1.0 / x });
        assert!(ks < ks_critical_1pct(d.len()), "{ks}");
    }

    #[test]
    fn cumax_survival_is_one_over_x() {
        let d = timescale_sampler(TimescaleInit::Cumax { size: 4096 }, 100_000, &mut Rng::new(3, 0)).unwrap();
        for x in [2.0, 5.0, 10.0] {
            let p = d.iter().filter(|&&v| v > x).count() as f64 / d.len() as f64;
            assert!((p - 1.0 / x).abs() < 0.01, "{x} {p}");
        }
    }

    #[test]
    fn ks_detects_wrong_distribution() {
        let mut rng = Rng::new(4, 0);
        let u: Vec<f64> = (0..10_000).map(|_| rng.uniform()).collect();
        assert!(ks_statistic(&u, |x| x.clamp(0.0, 1.0)) < ks_critical_1pct(u.len()));
        assert!(ks_statistic(&u, |x| (x * x).clamp(0.0, 1.0)) > ks_critical_1pct(u.len()));
    }

    #[test]
    fn report_quantiles() {
        let r = timescale_report(&[0.0, 0.5, 0.75]).unwrap();
        assert_eq!(r.periods, vec![1.0, 2.0, 4.0]);
        assert_eq!(r.quantiles[2], (0.5, 2.0));
        assert!(timescale_report(&[]).is_err());
    }
}

use serde::{Deserialize, Serialize};

use crate::ndmath::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments for a list of flat tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![T::zero(); n], vec![T::zero(); n])).unzip();
        Adam { m, v, t: 0 }
    }

    /// One bias-corrected update of every tensor.
    pub fn step(&mut self, cfg: &AdamConfig, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(params.len(), self.m.len(), "adam: tensor count changed");
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        let lr = T::of(cfg.learning_rate);
        let (c1, c2, eps) = (T::of(c1), T::of(c2), T::of(cfg.eps));
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = b1 * m[j] + ob1 * gj;
                v[j] = b2 * v[j] + ob2 * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Scalar Adam step, handy for tests and simulations.
pub fn adam_step(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, t: u64, cfg: &AdamConfig) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let mh = *m / (1.0 - cfg.beta1.powi(t as i32));
    let vh = *v / (1.0 - cfg.beta2.powi(t as i32));
    *p -= cfg.learning_rate * mh / (vh.sqrt() + cfg.eps);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_leaves_params_and_decays_moments() {
        let mut a = Adam::<f64>::new([2]);
        a.m[0] = vec![1.0, -1.0];
        a.v[0] = vec![1.0, 1.0];
        let mut p = vec![0.5, 0.5];
        let cfg = AdamConfig::default();
        let before = p.clone();
        // Moments decay; with a nonzero first moment the parameters still move.
        a.step(&cfg, &mut [&mut p[..]], &[&[0.0, 0.0]]);
        assert!((a.m[0][0] - 0.9).abs() < 1e-15 && (a.v[0][0] - 0.999).abs() < 1e-15);
        let mut fresh = Adam::<f64>::new([2]);
        let mut q = before.clone();
        fresh.step(&cfg, &mut [&mut q[..]], &[&[0.0, 0.0]]);
        assert_eq!(q, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        for g in [3.0, -0.01, 1e-3] {
            let mut a = Adam::<f64>::new([1]);
            let mut p = vec![0.0];
            a.step(&cfg, &mut [&mut p[..]], &[&[g]]);
            let want = cfg.learning_rate * g.abs() / (g.abs() + cfg.eps);
            assert!((p[0].abs() - want).abs() < 1e-15);
            assert_eq!(p[0].signum(), -g.signum());
        }
    }

    #[test]
    fn quadratic_converges() {
        let cfg = AdamConfig { learning_rate: 0.1, ..Default::default() };
        let (mut w, mut m, mut v) = (1.0, 0.0, 0.0);
        for t in 1..=100 {
            let g = 2.0 * w;
            adam_step(&mut w, g, &mut m, &mut v, t, &cfg);
        }
        assert!(w.abs() < 0.05, "{w}");
        // the vector form agrees with the scalar form
        let mut a = Adam::<f64>::new([1]);
        let mut p = vec![1.0];
        for _ in 0..100 {
            let g = 2.0 * p[0];
            a.step(&cfg, &mut [&mut p[..]], &[&[g]]);
        }
        assert_eq!(p[0], w);
    }
}

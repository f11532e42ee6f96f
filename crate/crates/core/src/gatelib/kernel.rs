//! Batched gate forward/backward over pre-activation blocks.
//!
//! A gate layout owns the leading columns of a cell's pre-activation matrix:
//!
//! ```text
//! [ forget (H) | input or refine (H, optional) | master forget (M) | master input (M) ]
//! ```
//!
//! with `M = H / C`, master blocks present only for master variants. Biases
//! are already folded into the pre-activations.

use super::compose::refine;
use super::{AuxKind, BiasInit, GateConfig, InitKind};
use crate::error::{Error, Result};
use crate::ndmath::{cumax_backward_into, cumax_into, sigmoid, Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Act {
    Sigmoid,
    Cumax,
    OneMinusCumax,
}

impl Act {
    fn forward<T: Scalar>(self, pre: &[T], out: &mut [T], probs: Option<&mut [T]>) {
        match self {
            Act::Sigmoid => {
                for (o, &p) in out.iter_mut().zip(pre) {
                    *o = sigmoid(p);
                }
            }
            Act::Cumax | Act::OneMinusCumax => {
                let probs = probs.expect("cumax activation needs a probability buffer");
                cumax_into(pre, probs, out);
                if self == Act::OneMinusCumax {
                    out.iter_mut().for_each(|o| *o = T::one() - *o);
                }
            }
        }
    }

    fn backward<T: Scalar>(self, out: &[T], probs: Option<&[T]>, d_out: &[T], d_pre: &mut [T]) {
        match self {
            Act::Sigmoid => {
                for k in 0..out.len() {
                    d_pre[k] = d_out[k] * out[k] * (T::one() - out[k]);
                }
            }
            Act::Cumax | Act::OneMinusCumax => {
                let probs = probs.expect("cumax activation needs cached probabilities");
                cumax_backward_into(probs, d_out, d_pre);
                if self == Act::OneMinusCumax {
                    d_pre.iter_mut().for_each(|d| *d = -*d);
                }
            }
        }
    }

    fn needs_probs(self) -> bool {
        self != Act::Sigmoid
    }
}

/// Column layout and activation plan for one gate variant.
#[derive(Clone, Debug, PartialEq)]
pub struct GateLayout {
    cfg: GateConfig,
    hidden: usize,
    master: usize,
    input_gate: bool,
}

/// Activations saved by [`GateLayout::forward`]; one row per batch element.
#[derive(Clone, Debug)]
pub struct GateCache<T> {
    /// Main forget activation (sigmoid or cumax).
    pub f: Matrix<T>,
    pub f_probs: Option<Matrix<T>>,
    /// Input gate or refine gate, when that block exists.
    pub s: Option<Matrix<T>>,
    pub s_probs: Option<Matrix<T>>,
    pub mf: Option<Matrix<T>>,
    pub mf_probs: Option<Matrix<T>>,
    pub mi: Option<Matrix<T>>,
    pub mi_probs: Option<Matrix<T>>,
    pub eff_f: Matrix<T>,
    pub eff_i: Matrix<T>,
}

impl GateLayout {
    /// `input_gate` asks for a separate input gate block; without it the input
    /// is tied to `1 - f` before any master composition.
    pub fn new(cfg: &GateConfig, hidden: usize, input_gate: bool) -> Result<Self> {
        cfg.validate(hidden)?;
        let master = if cfg.aux_kind == AuxKind::Master {
            cfg.master_size(hidden)
        } else {
            0
        };
        Ok(GateLayout {
            cfg: *cfg,
            hidden,
            master,
            input_gate,
        })
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn master_size(&self) -> usize {
        self.master
    }

    pub fn downsize(&self) -> usize {
        self.cfg.downsize_c
    }

    fn is_refine(&self) -> bool {
        self.cfg.aux_kind == AuxKind::Refine
    }

    fn is_master(&self) -> bool {
        self.cfg.aux_kind == AuxKind::Master
    }

    fn ordered(&self) -> bool {
        self.cfg.init_kind == InitKind::OrderedCumax
    }

    /// Whether the second block (input or refine gate) is present.
    pub fn has_second(&self) -> bool {
        self.is_refine() || self.input_gate
    }

    /// Whether the second block is a free input gate.
    fn input_is_free(&self) -> bool {
        self.input_gate && !self.is_refine()
    }

    fn main_act(&self) -> Act {
        if self.ordered() && !self.is_master() {
            Act::Cumax
        } else {
            Act::Sigmoid
        }
    }

    fn second_act(&self) -> Act {
        if self.ordered() && self.cfg.aux_kind == AuxKind::None {
            Act::OneMinusCumax
        } else {
            Act::Sigmoid
        }
    }

    fn master_acts(&self) -> (Act, Act) {
        if self.ordered() {
            (Act::Cumax, Act::OneMinusCumax)
        } else {
            (Act::Sigmoid, Act::Sigmoid)
        }
    }

    pub fn second_offset(&self) -> usize {
        self.hidden
    }

    pub fn master_offset(&self) -> usize {
        self.hidden + if self.has_second() { self.hidden } else { 0 }
    }

    /// Total number of gate columns.
    pub fn width(&self) -> usize {
        self.master_offset() + 2 * self.master
    }

    /// `(name, first column, width)` for every block.
    pub fn blocks(&self) -> Vec<(&'static str, usize, usize)> {
        let h = self.hidden;
        let mut out = vec![("forget", 0, h)];
        if self.is_refine() {
            out.push(("refine", h, h));
        } else if self.input_gate {
            out.push(("input", h, h));
        }
        if self.is_master() {
            let m0 = self.master_offset();
            out.push(("master_forget", m0, self.master));
            out.push(("master_input", m0 + self.master, self.master));
        }
        out
    }

    /// Bias values for the gate columns.
    ///
    /// Non-master variants put the forget bias on the forget block, the input
    /// bias on an input block and the negated forget bias on a refine block.
    /// Master variants put the init on the master blocks and zero on the fine
    /// gates.
    pub fn initial_bias(&self, b: &BiasInit) -> Result<Vec<f64>> {
        let want = if self.is_master() { self.master } else { self.hidden };
        if b.len() != want || b.input_bias.len() != want {
            return Err(Error::shape(
                "GateLayout::initial_bias",
                format!("{want} bias entries"),
                format!("{}/{}", b.forget_bias.len(), b.input_bias.len()),
            ));
        }
        let mut out = vec![0.0; self.width()];
        let h = self.hidden;
        if self.is_master() {
            let m0 = self.master_offset();
            out[m0..m0 + self.master].copy_from_slice(&b.forget_bias);
            out[m0 + self.master..].copy_from_slice(&b.input_bias);
        } else {
            out[..h].copy_from_slice(&b.forget_bias);
            if self.is_refine() {
                for k in 0..h {
                    out[h + k] = -b.forget_bias[k];
                }
            } else if self.input_gate {
                out[h..2 * h].copy_from_slice(&b.input_bias);
            }
        }
        Ok(out)
    }

    /// Runs the gate activations on the first [`width`](Self::width) columns of `pre`.
    pub fn forward<T: Scalar>(&self, pre: &Matrix<T>) -> GateCache<T> {
        assert!(pre.cols() >= self.width(), "gate pre-activations too narrow");
        let b = pre.rows();
        let h = self.hidden;
        let m = self.master;
        let c = self.cfg.downsize_c;
        let main = self.main_act();
        let second = self.second_act();
        let (act_mf, act_mi) = self.master_acts();

        let mut cache = GateCache {
            f: Matrix::zeros(b, h),
            f_probs: main.needs_probs().then(|| Matrix::zeros(b, h)),
            s: self.has_second().then(|| Matrix::zeros(b, h)),
            s_probs: (self.has_second() && second.needs_probs()).then(|| Matrix::zeros(b, h)),
            mf: self.is_master().then(|| Matrix::zeros(b, m)),
            mf_probs: (self.is_master() && act_mf.needs_probs()).then(|| Matrix::zeros(b, m)),
            mi: self.is_master().then(|| Matrix::zeros(b, m)),
            mi_probs: (self.is_master() && act_mi.needs_probs()).then(|| Matrix::zeros(b, m)),
            eff_f: Matrix::zeros(b, h),
            eff_i: Matrix::zeros(b, h),
        };
        let s0 = self.second_offset();
        let m0 = self.master_offset();

        for row in 0..b {
            let p = pre.row(row);
            main.forward(
                &p[..h],
                cache.f.row_mut(row),
                cache.f_probs.as_mut().map(|m| m.row_mut(row)),
            );
            if let Some(s) = cache.s.as_mut() {
                second.forward(
                    &p[s0..s0 + h],
                    s.row_mut(row),
                    cache.s_probs.as_mut().map(|m| m.row_mut(row)),
                );
            }
            if let (Some(mf), Some(mi)) = (cache.mf.as_mut(), cache.mi.as_mut()) {
                act_mf.forward(
                    &p[m0..m0 + m],
                    mf.row_mut(row),
                    cache.mf_probs.as_mut().map(|x| x.row_mut(row)),
                );
                act_mi.forward(
                    &p[m0 + m..m0 + 2 * m],
                    mi.row_mut(row),
                    cache.mi_probs.as_mut().map(|x| x.row_mut(row)),
                );
            }

            let f = cache.f.row(row);
            let s = cache.s.as_ref().map(|s| s.row(row));
            let mf = cache.mf.as_ref().map(|x| x.row(row));
            let mi = cache.mi.as_ref().map(|x| x.row(row));
            let (ef, ei) = (cache.eff_f.row_mut(row), cache.eff_i.row_mut(row));
            for k in 0..h {
                let (gf, gi) = match self.cfg.aux_kind {
                    AuxKind::Refine => {
                        let g = refine(f[k], s.unwrap()[k]);
                        (g, T::one() - g)
                    }
                    AuxKind::None => {
                        let i = if self.input_is_free() { s.unwrap()[k] } else { T::one() - f[k] };
                        (f[k], i)
                    }
                    AuxKind::Master => {
                        let i = if self.input_is_free() { s.unwrap()[k] } else { T::one() - f[k] };
                        let (a, bm) = (mf.unwrap()[k / c], mi.unwrap()[k / c]);
                        let w = a * bm;
                        (f[k] * w + a - w, i * w + bm - w)
                    }
                };
                ef[k] = gf;
                ei[k] = gi;
            }
        }
        cache
    }

    /// Backpropagates `d_eff_f`, `d_eff_i` into the first `width` columns of `d_pre`.
    ///
    /// Those columns are overwritten; the rest of `d_pre` is left alone.
    pub fn backward<T: Scalar>(
        &self,
        cache: &GateCache<T>,
        d_eff_f: &Matrix<T>,
        d_eff_i: &Matrix<T>,
        d_pre: &mut Matrix<T>,
    ) {
        let b = cache.f.rows();
        let h = self.hidden;
        let m = self.master;
        let c = self.cfg.downsize_c;
        let two = T::one() + T::one();
        let s0 = self.second_offset();
        let m0 = self.master_offset();
        let (act_mf, act_mi) = self.master_acts();

        let mut d_f = vec![T::zero(); h];
        let mut d_s = vec![T::zero(); h];
        let mut d_mf = vec![T::zero(); m];
        let mut d_mi = vec![T::zero(); m];

        for row in 0..b {
            let f = cache.f.row(row);
            let s = cache.s.as_ref().map(|s| s.row(row));
            let def = d_eff_f.row(row);
            let dei = d_eff_i.row(row);
            match self.cfg.aux_kind {
                AuxKind::Refine => {
                    let r = s.unwrap();
                    for k in 0..h {
                        let dg = def[k] - dei[k];
                        d_f[k] = dg * (T::one() + (T::one() - two * f[k]) * (two * r[k] - T::one()));
                        d_s[k] = dg * two * f[k] * (T::one() - f[k]);
                    }
                }
                AuxKind::None => {
                    for k in 0..h {
                        if self.input_is_free() {
                            d_f[k] = def[k];
                            d_s[k] = dei[k];
                        } else {
                            d_f[k] = def[k] - dei[k];
                        }
                    }
                }
                AuxKind::Master => {
                    let mf = cache.mf.as_ref().unwrap().row(row);
                    let mi = cache.mi.as_ref().unwrap().row(row);
                    d_mf.iter_mut().for_each(|x| *x = T::zero());
                    d_mi.iter_mut().for_each(|x| *x = T::zero());
                    for k in 0..h {
                        let (a, bm) = (mf[k / c], mi[k / c]);
                        let w = a * bm;
                        let i = if self.input_is_free() { s.unwrap()[k] } else { T::one() - f[k] };
                        let dw = def[k] * (f[k] - T::one()) + dei[k] * (i - T::one());
                        if self.input_is_free() {
                            d_f[k] = def[k] * w;
                            d_s[k] = dei[k] * w;
                        } else {
                            d_f[k] = (def[k] - dei[k]) * w;
                        }
                        d_mf[k / c] += def[k] + dw * bm;
                        d_mi[k / c] += dei[k] + dw * a;
                    }
                }
            }

            let out = d_pre.row_mut(row);
            self.main_act().backward(
                f,
                cache.f_probs.as_ref().map(|p| p.row(row)),
                &d_f,
                &mut out[..h],
            );
            if let Some(s) = s {
                self.second_act().backward(
                    s,
                    cache.s_probs.as_ref().map(|p| p.row(row)),
                    &d_s,
                    &mut out[s0..s0 + h],
                );
            }
            if self.is_master() {
                act_mf.backward(
                    cache.mf.as_ref().unwrap().row(row),
                    cache.mf_probs.as_ref().map(|p| p.row(row)),
                    &d_mf,
                    &mut out[m0..m0 + m],
                );
                act_mi.backward(
                    cache.mi.as_ref().unwrap().row(row),
                    cache.mi_probs.as_ref().map(|p| p.row(row)),
                    &d_mi,
                    &mut out[m0 + m..m0 + 2 * m],
                );
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gatelib::Variant;
    use crate::ndmath::Rng;

    fn random_pre(rng: &mut Rng, rows: usize, cols: usize) -> Matrix<f64> {
        let data = (0..rows * cols).map(|_| rng.uniform_in(-2.0, 2.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    // Scalar objective sum(a * eff_f + b * eff_i) for fixed random weights a, b.
    fn objective(l: &GateLayout, pre: &Matrix<f64>, a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
        let c = l.forward(pre);
        let x: f64 = c.eff_f.as_slice().iter().zip(a.as_slice()).map(|(x, y)| x * y).sum();
        let y: f64 = c.eff_i.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
        x + y
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = Rng::new(3, 0);
        for v in Variant::ALL {
            for input_gate in [true, false] {
                let mut cfg = GateConfig::for_variant(v);
                cfg.downsize_c = 2;
                let l = GateLayout::new(&cfg, 6, input_gate).unwrap();
                let pre = random_pre(&mut rng, 2, l.width());
                let a = random_pre(&mut rng, 2, 6);
                let b = random_pre(&mut rng, 2, 6);
                let cache = l.forward(&pre);
                let mut d = Matrix::zeros(2, l.width());
                l.backward(&cache, &a, &b, &mut d);
                for idx in 0..pre.as_slice().len() {
                    let h = 1e-6;
                    let mut p = pre.clone();
                    p.as_mut_slice()[idx] += h;
                    let up = objective(&l, &p, &a, &b);
                    p.as_mut_slice()[idx] -= 2.0 * h;
                    let dn = objective(&l, &p, &a, &b);
                    let fd = (up - dn) / (2.0 * h);
                    let an = d.as_slice()[idx];
                    assert!(
                        (fd - an).abs() < 1e-7 * (1.0 + fd.abs()),
                        "{v} input_gate={input_gate} col {idx}: {an} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn widths_and_blocks() {
        let mut cfg = GateConfig::for_variant(Variant::UniformMaster);
        cfg.downsize_c = 4;
        let l = GateLayout::new(&cfg, 8, true).unwrap();
        assert_eq!(l.width(), 8 + 8 + 2 + 2);
        let names: Vec<_> = l.blocks().iter().map(|b| b.0).collect();
        assert_eq!(names, ["forget", "input", "master_forget", "master_input"]);
        let l = GateLayout::new(&GateConfig::for_variant(Variant::Standard), 8, false).unwrap();
        assert_eq!(l.width(), 8);
        let l = GateLayout::new(&GateConfig::for_variant(Variant::Refine), 8, false).unwrap();
        assert_eq!(l.width(), 16);
    }
}

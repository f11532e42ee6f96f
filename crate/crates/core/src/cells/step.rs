use super::{CellKind, CellParams};
use crate::error::{Error, Result};
use crate::gatelib::{GateCache, GateConfig};
use crate::ndmath::{gemm, sigmoid, Matrix, Scalar};

/// Recurrent state for a batch; `c` exists only for the LSTM.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState<T> {
    pub h: Matrix<T>,
    pub c: Option<Matrix<T>>,
}

impl<T: Scalar> CellState<T> {
    pub fn zeros(kind: CellKind, batch: usize, hidden: usize) -> Self {
        CellState {
            h: Matrix::zeros(batch, hidden),
            c: (kind == CellKind::Lstm).then(|| Matrix::zeros(batch, hidden)),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.c.as_ref().is_none_or(Matrix::is_finite)
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Clone, Debug)]
pub struct StepCache<T> {
    pub kind: CellKind,
    /// `[x, h_prev]`.
    pub z: Matrix<T>,
    pub gates: GateCache<T>,
    /// Update candidate (LSTM, JANET) or reset gate (GRU).
    pub a: Matrix<T>,
    pub o: Option<Matrix<T>>,
    pub tanh_c: Option<Matrix<T>>,
    pub c_prev: Option<Matrix<T>>,
    /// GRU: `[x, reset * h_prev]` and the candidate.
    pub zn: Option<Matrix<T>>,
    pub n: Option<Matrix<T>>,
}

impl<T: Scalar> StepCache<T> {
    pub fn batch(&self) -> usize {
        self.z.rows()
    }

    /// Effective forget gate `g` (or `f` for untouched variants).
    pub fn effective_forget(&self) -> &Matrix<T> {
        &self.gates.eff_f
    }

    /// Raw forget activation before any auxiliary gate.
    pub fn raw_forget(&self) -> &Matrix<T> {
        &self.gates.f
    }
}

fn concat_cols<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let (r, ca, cb) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(r, ca + cb);
    for i in 0..r {
        let row = out.row_mut(i);
        row[..ca].copy_from_slice(a.row(i));
        row[ca..].copy_from_slice(b.row(i));
    }
    out
}

fn affine_rows<T: Scalar>(z: &Matrix<T>, w: &Matrix<T>, b: &[T]) -> Matrix<T> {
    let mut p = Matrix::zeros(z.rows(), w.cols());
    for i in 0..p.rows() {
        p.row_mut(i).copy_from_slice(b);
    }
    gemm(T::one(), z, false, w, false, T::one(), &mut p);
    p
}

fn add_col_sums<T: Scalar>(d: &Matrix<T>, col0: usize, out: &mut [T]) {
    for i in 0..d.rows() {
        for (o, &x) in out.iter_mut().zip(&d.row(i)[col0..]) {
            *o += x;
        }
    }
}

impl<T: Scalar> CellParams<T> {
    fn check_step(&self, x: &Matrix<T>, state: &CellState<T>) -> Result<()> {
        let b = state.h.rows();
        if x.rows() != b || x.cols() != self.input {
            return Err(Error::shape(
                "cell step input",
                format!("{b}x{}", self.input),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        if state.h.cols() != self.hidden {
            return Err(Error::shape(
                "cell step state",
                format!("{} hidden units", self.hidden),
                format!("{}", state.h.cols()),
            ));
        }
        let want_c = self.kind == CellKind::Lstm;
        match &state.c {
            Some(c) if want_c && c.shape() == state.h.shape() => Ok(()),
            None if !want_c => Ok(()),
            _ => Err(Error::shape(
                "cell step state",
                if want_c { "a cell state matching h" } else { "no cell state" },
                "a different state layout",
            )),
        }
    }

    /// One batched forward step.
    pub fn step(&self, x: &Matrix<T>, state: &CellState<T>) -> Result<(CellState<T>, StepCache<T>)> {
        self.check_step(x, state)?;
        let (bsz, h) = (x.rows(), self.hidden);
        let z = concat_cols(x, &state.h);
        let p = affine_rows(&z, &self.w, &self.b);
        let gates = self.layout.forward(&p);
        let g0 = self.layout.width();
        let (ef, ei) = (&gates.eff_f, &gates.eff_i);
        let mut a = Matrix::zeros(bsz, h);
        let mut h_new = Matrix::zeros(bsz, h);

        let cache = match self.kind {
            CellKind::Lstm => {
                let c_prev = state.c.clone().expect("checked");
                let mut o = Matrix::zeros(bsz, h);
                let mut c_new = Matrix::zeros(bsz, h);
                let mut tc = Matrix::zeros(bsz, h);
                for r in 0..bsz {
                    let pr = p.row(r);
                    for k in 0..h {
                        let u = pr[g0 + k].tanh();
                        let og = sigmoid(pr[g0 + h + k]);
                        let c = ef.get(r, k) * c_prev.get(r, k) + ei.get(r, k) * u;
                        let t = c.tanh();
                        a.set(r, k, u);
                        o.set(r, k, og);
                        c_new.set(r, k, c);
                        tc.set(r, k, t);
                        h_new.set(r, k, og * t);
                    }
                }
                let cache = StepCache {
                    kind: self.kind,
                    z,
                    gates,
                    a,
                    o: Some(o),
                    tanh_c: Some(tc),
                    c_prev: Some(c_prev),
                    zn: None,
                    n: None,
                };
                return Ok((CellState { h: h_new, c: Some(c_new) }, cache));
            }
            CellKind::Janet => {
                for r in 0..bsz {
                    let pr = p.row(r);
                    for k in 0..h {
                        let u = pr[g0 + k].tanh();
                        a.set(r, k, u);
                        h_new.set(r, k, ef.get(r, k) * state.h.get(r, k) + ei.get(r, k) * u);
                    }
                }
                StepCache {
                    kind: self.kind,
                    z,
                    gates,
                    a,
                    o: None,
                    tanh_c: None,
                    c_prev: None,
                    zn: None,
                    n: None,
                }
            }
            CellKind::Gru => {
                let mut zn = Matrix::zeros(bsz, self.input + h);
                for r in 0..bsz {
                    let pr = p.row(r);
                    let row = zn.row_mut(r);
                    row[..self.input].copy_from_slice(x.row(r));
                    for k in 0..h {
                        let rho = sigmoid(pr[g0 + k]);
                        a.set(r, k, rho);
                        row[self.input + k] = rho * state.h.get(r, k);
                    }
                }
                let wn = self.wn.as_ref().expect("gru has candidate weights");
                let bn = self.bn.as_ref().expect("gru has candidate bias");
                let mut n = affine_rows(&zn, wn, bn);
                for r in 0..bsz {
                    for k in 0..h {
                        let nv = n.get(r, k).tanh();
                        n.set(r, k, nv);
                        h_new.set(r, k, ef.get(r, k) * state.h.get(r, k) + ei.get(r, k) * nv);
                    }
                }
                StepCache {
                    kind: self.kind,
                    z,
                    gates,
                    a,
                    o: None,
                    tanh_c: None,
                    c_prev: None,
                    zn: Some(zn),
                    n: Some(n),
                }
            }
        };
        Ok((CellState { h: h_new, c: None }, cache))
    }

    /// Reverse of [`step`](Self::step). Accumulates parameter gradients into
    /// `grads` and returns `(dh_prev, dc_prev, dx)`.
    pub fn step_backward(
        &self,
        cache: &StepCache<T>,
        dh: &Matrix<T>,
        dc: Option<&Matrix<T>>,
        grads: &mut CellParams<T>,
    ) -> Result<(Matrix<T>, Option<Matrix<T>>, Matrix<T>)> {
        let (bsz, h, inp) = (cache.batch(), self.hidden, self.input);
        if cache.kind != self.kind || cache.z.cols() != inp + h || cache.gates.f.cols() != h {
            return Err(Error::CacheMismatch(format!(
                "cache from a {} step with {} columns, cell is {} with {} inputs and {} units",
                cache.kind,
                cache.z.cols(),
                self.kind,
                inp,
                h
            )));
        }
        if dh.shape() != (bsz, h) {
            return Err(Error::shape("step_backward dh", format!("{bsz}x{h}"), format!("{}x{}", dh.rows(), dh.cols())));
        }
        let g0 = self.layout.width();
        let (ef, ei) = (&cache.gates.eff_f, &cache.gates.eff_i);
        let mut dp = Matrix::zeros(bsz, self.w.cols());
        let mut d_ef = Matrix::zeros(bsz, h);
        let mut d_ei = Matrix::zeros(bsz, h);
        let mut dh_direct = Matrix::zeros(bsz, h);
        let mut dc_prev = None;
        let mut dx = Matrix::zeros(bsz, inp);
        let h_prev = |r: usize, k: usize| cache.z.get(r, inp + k);

        match self.kind {
            CellKind::Lstm => {
                let o = cache.o.as_ref().unwrap();
                let tc = cache.tanh_c.as_ref().unwrap();
                let cp = cache.c_prev.as_ref().unwrap();
                let mut dcp = Matrix::zeros(bsz, h);
                for r in 0..bsz {
                    for k in 0..h {
                        let t = tc.get(r, k);
                        let og = o.get(r, k);
                        let u = cache.a.get(r, k);
                        let dhv = dh.get(r, k);
                        let dcv = dc.map_or(T::zero(), |m| m.get(r, k)) + dhv * og * (T::one() - t * t);
                        d_ef.set(r, k, dcv * cp.get(r, k));
                        d_ei.set(r, k, dcv * u);
                        dcp.set(r, k, dcv * ef.get(r, k));
                        let du = dcv * ei.get(r, k);
                        dp.set(r, g0 + k, du * (T::one() - u * u));
                        dp.set(r, g0 + h + k, dhv * t * og * (T::one() - og));
                    }
                }
                dc_prev = Some(dcp);
            }
            CellKind::Janet => {
                for r in 0..bsz {
                    for k in 0..h {
                        let u = cache.a.get(r, k);
                        let dhv = dh.get(r, k);
                        d_ef.set(r, k, dhv * h_prev(r, k));
                        d_ei.set(r, k, dhv * u);
                        dh_direct.set(r, k, dhv * ef.get(r, k));
                        dp.set(r, g0 + k, dhv * ei.get(r, k) * (T::one() - u * u));
                    }
                }
            }
            CellKind::Gru => {
                let n = cache.n.as_ref().unwrap();
                let zn = cache.zn.as_ref().unwrap();
                let mut dpn = Matrix::zeros(bsz, h);
                for r in 0..bsz {
                    for k in 0..h {
                        let nv = n.get(r, k);
                        let dhv = dh.get(r, k);
                        d_ef.set(r, k, dhv * h_prev(r, k));
                        d_ei.set(r, k, dhv * nv);
                        dh_direct.set(r, k, dhv * ef.get(r, k));
                        dpn.set(r, k, dhv * ei.get(r, k) * (T::one() - nv * nv));
                    }
                }
                let (gwn, gbn) = (grads.wn.as_mut().unwrap(), grads.bn.as_mut().unwrap());
                gemm(T::one(), zn, true, &dpn, false, T::one(), gwn);
                add_col_sums(&dpn, 0, gbn);
                let mut dzn = Matrix::zeros(bsz, inp + h);
                gemm(T::one(), &dpn, false, self.wn.as_ref().unwrap(), true, T::zero(), &mut dzn);
                for r in 0..bsz {
                    for j in 0..inp {
                        dx.set(r, j, dzn.get(r, j));
                    }
                    for k in 0..h {
                        let d_rh = dzn.get(r, inp + k);
                        let rho = cache.a.get(r, k);
                        let hp = h_prev(r, k);
                        dh_direct.set(r, k, dh_direct.get(r, k) + d_rh * rho);
                        dp.set(r, g0 + k, d_rh * hp * rho * (T::one() - rho));
                    }
                }
            }
        }

        self.layout.backward(&cache.gates, &d_ef, &d_ei, &mut dp);
        gemm(T::one(), &cache.z, true, &dp, false, T::one(), &mut grads.w);
        add_col_sums(&dp, 0, &mut grads.b);
        let mut dz = Matrix::zeros(bsz, inp + h);
        gemm(T::one(), &dp, false, &self.w, true, T::zero(), &mut dz);
        let mut dh_prev = dh_direct;
        for r in 0..bsz {
            for j in 0..inp {
                dx.set(r, j, dx.get(r, j) + dz.get(r, j));
            }
            for k in 0..h {
                dh_prev.set(r, k, dh_prev.get(r, k) + dz.get(r, inp + k));
            }
        }
        Ok((dh_prev, dc_prev, dx))
    }
}

fn single_step<T: Scalar>(
    want: CellKind,
    params: &CellParams<T>,
    cfg: &GateConfig,
    x: &[T],
    state: &CellState<T>,
) -> Result<(CellState<T>, StepCache<T>)> {
    if params.kind() != want || params.gate() != cfg {
        return Err(Error::CacheMismatch(format!(
            "parameters are for a {} {} cell, asked for {} {}",
            params.gate().variant(),
            params.kind(),
            cfg.variant(),
            want
        )));
    }
    let x = Matrix::from_vec(1, x.len(), x.to_vec())?;
    params.step(&x, state)
}

/// Single-sequence LSTM step.
pub fn lstm_forward<T: Scalar>(
    params: &CellParams<T>,
    cfg: &GateConfig,
    x: &[T],
    state: &CellState<T>,
) -> Result<(CellState<T>, StepCache<T>)> {
    single_step(CellKind::Lstm, params, cfg, x, state)
}

/// Single-sequence GRU step.
pub fn gru_forward<T: Scalar>(
    params: &CellParams<T>,
    cfg: &GateConfig,
    x: &[T],
    state: &CellState<T>,
) -> Result<(CellState<T>, StepCache<T>)> {
    single_step(CellKind::Gru, params, cfg, x, state)
}

/// Single-sequence JANET step.
pub fn janet_forward<T: Scalar>(
    params: &CellParams<T>,
    cfg: &GateConfig,
    x: &[T],
    state: &CellState<T>,
) -> Result<(CellState<T>, StepCache<T>)> {
    single_step(CellKind::Janet, params, cfg, x, state)
}

/// Gradients of one step: `(parameter grads, dh_prev, dc_prev, dx)`.
#[allow(clippy::type_complexity)]
pub fn cell_backward<T: Scalar>(
    params: &CellParams<T>,
    cache: &StepCache<T>,
    dh: &Matrix<T>,
    dc: Option<&Matrix<T>>,
) -> Result<(CellParams<T>, Matrix<T>, Option<Matrix<T>>, Matrix<T>)> {
    let mut grads = params.zeros_like();
    let (dh_prev, dc_prev, dx) = params.step_backward(cache, dh, dc, &mut grads)?;
    Ok((grads, dh_prev, dc_prev, dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gatelib::Variant;
    use crate::ndmath::Rng;

    fn cfg(v: Variant) -> GateConfig {
        GateConfig::for_variant(v)
    }

    #[test]
    fn zero_lstm_with_forget_bias() {
        let c = cfg(Variant::Standard);
        let mut p = CellParams::<f64>::zeros(CellKind::Lstm, &c, 2, 3).unwrap();
        p.set_forget_bias(2.0);
        let state = CellState { h: Matrix::zeros(1, 3), c: Some(Matrix::filled(1, 3, 0.8)) };
        let (s, _) = lstm_forward(&p, &c, &[0.3, -0.1], &state).unwrap();
        let c_new = sigmoid(2.0) * 0.8;
        for k in 0..3 {
            assert!((s.c.as_ref().unwrap().get(0, k) - c_new).abs() < 1e-15);
            assert!((s.h.get(0, k) - 0.5 * c_new.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_ur_lstm_halves_cell() {
        let c = cfg(Variant::UniformRefine);
        let p = CellParams::<f64>::zeros(CellKind::Lstm, &c, 2, 3).unwrap();
        let state = CellState { h: Matrix::zeros(1, 3), c: Some(Matrix::filled(1, 3, 0.6)) };
        let (s, cache) = lstm_forward(&p, &c, &[1.0, 2.0], &state).unwrap();
        assert_eq!(cache.effective_forget().as_slice(), &[0.5; 3]);
        assert_eq!(s.c.unwrap().as_slice(), &[0.3; 3]);
    }

    #[test]
    fn zero_gru_halves_state() {
        let c = cfg(Variant::UniformRefine);
        let p = CellParams::<f64>::zeros(CellKind::Gru, &c, 2, 3).unwrap();
        let state = CellState { h: Matrix::filled(1, 3, 0.4), c: None };
        let (s, cache) = gru_forward(&p, &c, &[1.0, -1.0], &state).unwrap();
        assert_eq!(s.h.as_slice(), &[0.2; 3]);
        assert_eq!(cache.a.as_slice(), &[0.5; 3]);
    }

    #[test]
    fn janet_boundaries() {
        let c = cfg(Variant::Standard);
        let mut rng = Rng::new(2, 0);
        let mut p = CellParams::<f64>::init(CellKind::Janet, &c, 2, 3, &mut rng).unwrap();
        let state = CellState { h: Matrix::from_vec(1, 3, vec![0.1, -0.7, 0.3]).unwrap(), c: None };
        p.set_forget_bias(60.0);
        let (s, _) = janet_forward(&p, &c, &[0.2, 0.1], &state).unwrap();
        assert_eq!(s.h, state.h);
        p.set_forget_bias(-60.0);
        let (s, cache) = janet_forward(&p, &c, &[0.2, 0.1], &state).unwrap();
        assert_eq!(s.h, cache.a);
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = Rng::new(5, 0);
        for kind in CellKind::ALL {
            let c = cfg(Variant::UniformRefine);
            let p = CellParams::<f64>::init(kind, &c, 2, 4, &mut rng).unwrap();
            let state = CellState::zeros(kind, 2, 4);
            let x = Matrix::filled(2, 2, 0.5);
            let (_, cache) = p.step(&x, &state).unwrap();
            let (g, dh, _, dx) = cell_backward(&p, &cache, &Matrix::zeros(2, 4), None).unwrap();
            assert!(g.tensors().iter().all(|t| t.3.iter().all(|&v| v == 0.0)));
            assert!(dh.as_slice().iter().all(|&v| v == 0.0));
            assert!(dx.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn single_unit_dc_prev_is_forget() {
        let c = cfg(Variant::Standard);
        let mut rng = Rng::new(6, 0);
        let p = CellParams::<f64>::init(CellKind::Lstm, &c, 1, 1, &mut rng).unwrap();
        let state = CellState { h: Matrix::filled(1, 1, 0.2), c: Some(Matrix::filled(1, 1, -0.4)) };
        let (_, cache) = lstm_forward(&p, &c, &[0.7], &state).unwrap();
        let one = Matrix::filled(1, 1, 1.0);
        let (_, _, dcp, _) = cell_backward(&p, &cache, &Matrix::zeros(1, 1), Some(&one)).unwrap();
        assert_eq!(dcp.unwrap().get(0, 0), cache.effective_forget().get(0, 0));
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let c = cfg(Variant::Standard);
        let p = CellParams::<f64>::zeros(CellKind::Lstm, &c, 2, 3).unwrap();
        let q = CellParams::<f64>::zeros(CellKind::Janet, &c, 2, 3).unwrap();
        let (_, cache) = q.step(&Matrix::zeros(1, 2), &CellState::zeros(CellKind::Janet, 1, 3)).unwrap();
        let err = cell_backward(&p, &cache, &Matrix::zeros(1, 3), None).unwrap_err();
        assert!(matches!(err, Error::CacheMismatch(_)));
        assert!(lstm_forward(&q, &c, &[0.0, 0.0], &CellState::zeros(CellKind::Lstm, 1, 3)).is_err());
    }
}

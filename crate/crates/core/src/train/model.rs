use serde_json::json;

use crate::cells::{bptt, unroll, CellKind, CellParams, CellState, Checkpoint, NamedTensor};
use crate::error::{Error, Result};
use crate::exec::{map_slice, ExecPolicy};
use crate::gatelib::GateConfig;
use crate::ndmath::{gemm, Matrix, Rng, Scalar, Vector};
use crate::tasks::{Target, TaskBatch};

use super::loss::softmax_xent_row;

/// A recurrent cell followed by a linear readout.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub cell: CellParams<T>,
    /// `hidden x outputs`.
    pub wy: Matrix<T>,
    pub by: Vector<T>,
}

/// Which gate activation a recording keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateTap {
    /// Forget gate before any auxiliary gate.
    Raw,
    /// Gate that actually multiplies the state.
    Effective,
}

fn to_scalar<T: Scalar>(m: &Matrix<f64>) -> Matrix<T> {
    m.convert()
}

/// Splits `n` rows into `k` contiguous `(start, len)` shards.
pub fn shard_ranges(n: usize, k: usize) -> Vec<(usize, usize)> {
    let k = k.clamp(1, n.max(1));
    let (base, extra) = (n / k, n % k);
    let mut at = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = (at, len);
            at += len;
            r
        })
        .collect()
}

impl<T: Scalar> Model<T> {
    pub fn init(
        kind: CellKind,
        gate: &GateConfig,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let cell = CellParams::init(kind, gate, input, hidden, rng)?;
        let s = 1.0 / (hidden as f64).sqrt();
        let data = (0..hidden * output).map(|_| T::of(rng.uniform_in(-s, s))).collect();
        Ok(Model { cell, wy: Matrix::from_vec(hidden, output, data)?, by: Vector::zeros(output) })
    }

    pub fn output_size(&self) -> usize {
        self.wy.cols()
    }

    pub fn zeros_like(&self) -> Self {
        Model {
            cell: self.cell.zeros_like(),
            wy: Matrix::zeros(self.wy.rows(), self.wy.cols()),
            by: Vector::zeros(self.by.len()),
        }
    }

    /// `(name, rows, cols, data)` in a fixed order.
    pub fn tensors(&self) -> Vec<(String, usize, usize, &[T])> {
        let mut out: Vec<_> = self
            .cell
            .tensors()
            .into_iter()
            .map(|(n, r, c, d)| (n.to_string(), r, c, d))
            .collect();
        out.push(("readout.w".into(), self.wy.rows(), self.wy.cols(), self.wy.as_slice()));
        out.push(("readout.b".into(), 1, self.by.len(), &self.by[..]));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = self.cell.tensors_mut();
        out.push(self.wy.as_mut_slice());
        out.push(&mut self.by[..]);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.3.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        let src: Vec<Vec<T>> = other.tensors().into_iter().map(|t| t.3.to_vec()).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.3.iter().all(|x| x.is_finite()))
    }

    pub fn convert<U: Scalar>(&self) -> Model<U> {
        Model {
            cell: self.cell.convert(),
            wy: self.wy.convert(),
            by: self.by.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }

    fn check_batch(&self, batch: &TaskBatch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::EmptySequence);
        }
        if batch.channels() != self.cell.input_size() {
            return Err(Error::shape("model input", self.cell.input_size(), batch.channels()));
        }
        let want = match &batch.target {
            Target::Classes { classes, .. } => *classes,
            Target::Regression { .. } => 1,
        };
        if want != self.output_size() {
            return Err(Error::shape("model output", want, self.output_size()));
        }
        Ok(())
    }

    /// Logits (or predictions) for a `batch x hidden` output.
    pub fn readout(&self, h: &Matrix<T>) -> Matrix<T> {
        let mut y = Matrix::zeros(h.rows(), self.wy.cols());
        for r in 0..y.rows() {
            y.row_mut(r).copy_from_slice(&self.by);
        }
        gemm(T::one(), h, false, &self.wy, false, T::one(), &mut y);
        y
    }

    /// Loss terms at step `t` (summed, times `scale`) and their gradient
    /// with respect to the readout output.
    fn step_loss(&self, target: &Target, t: usize, y: &Matrix<T>, scale: T, want_grad: bool) -> (f64, Option<Matrix<T>>) {
        let mut dy = want_grad.then(|| Matrix::zeros(y.rows(), y.cols()));
        let mut total = 0.0;
        match target {
            Target::Classes { steps, labels, .. } => {
                let k = steps.iter().position(|&s| s == t).expect("scored step");
                for r in 0..y.rows() {
                    let g = dy.as_mut().map(|d| d.row_mut(r));
                    total += softmax_xent_row(y.row(r), labels[k][r], scale, g);
                }
            }
            Target::Regression { values, .. } => {
                for r in 0..y.rows() {
                    let e = y.get(r, 0) - T::of(values[r]);
                    total += e.as_f64() * e.as_f64();
                    if let Some(d) = dy.as_mut() {
                        d.set(r, 0, (T::one() + T::one()) * e * scale);
                    }
                }
            }
        }
        (total * scale.as_f64(), dy)
    }

    fn loss_denominator(batch: &TaskBatch) -> f64 {
        (batch.batch_size() * batch.scored_steps().len()) as f64
    }

    /// Summed loss and gradients for one shard, both times `scale`.
    fn shard_grad(&self, batch: &TaskBatch, scale: f64) -> Result<(f64, Model<T>)> {
        let xs: Vec<Matrix<T>> = batch.inputs.iter().map(to_scalar).collect();
        let init = CellState::zeros(self.cell.kind(), batch.batch_size(), self.cell.hidden_size());
        let un = unroll(&self.cell, &xs, init)?;
        let mut grads = self.zeros_like();
        let mut dh: Vec<Option<Matrix<T>>> = vec![None; un.len()];
        let mut loss = 0.0;
        for t in batch.scored_steps() {
            let h = un.output(t);
            let y = self.readout(h);
            let (l, dy) = self.step_loss(&batch.target, t, &y, T::of(scale), true);
            let dy = dy.expect("requested");
            loss += l;
            gemm(T::one(), h, true, &dy, false, T::one(), &mut grads.wy);
            for r in 0..dy.rows() {
                for (b, &d) in grads.by.iter_mut().zip(dy.row(r)) {
                    *b += d;
                }
            }
            let mut d = Matrix::zeros(h.rows(), h.cols());
            gemm(T::one(), &dy, false, &self.wy, true, T::zero(), &mut d);
            dh[t] = Some(d);
        }
        bptt(&self.cell, &un, &dh, &mut grads.cell)?;
        Ok((loss, grads))
    }

    /// Mean loss over the batch and its gradient.
    ///
    /// The batch is cut into `shards` contiguous pieces that may run in
    /// parallel; their gradients are summed in shard order, so the result
    /// does not depend on the execution policy.
    pub fn loss_and_grad(&self, batch: &TaskBatch, policy: ExecPolicy, shards: usize) -> Result<(f64, Model<T>)> {
        self.check_batch(batch)?;
        let scale = 1.0 / Self::loss_denominator(batch);
        let ranges = shard_ranges(batch.batch_size(), shards);
        let parts = map_slice(policy, &ranges, |&(s, n)| {
            if ranges.len() == 1 {
                self.shard_grad(batch, scale)
            } else {
                self.shard_grad(&batch.slice(s, n), scale)
            }
        });
        let mut loss = 0.0;
        let mut total: Option<Model<T>> = None;
        for part in parts {
            let (l, g) = part?;
            loss += l;
            match total.as_mut() {
                None => total = Some(g),
                Some(t) => t.add_assign(&g),
            }
        }
        Ok((loss, total.expect("at least one shard")))
    }

    /// Forward-only summed loss of a shard; caches are dropped step by step.
    fn shard_loss(&self, batch: &TaskBatch, scale: f64) -> Result<f64> {
        let scored = batch.scored_steps();
        let mut state = CellState::zeros(self.cell.kind(), batch.batch_size(), self.cell.hidden_size());
        let mut loss = 0.0;
        for (t, x) in batch.inputs.iter().enumerate() {
            state = self.cell.step(&to_scalar(x), &state)?.0;
            if scored.contains(&t) {
                let y = self.readout(&state.h);
                loss += self.step_loss(&batch.target, t, &y, T::of(scale), false).0;
            }
        }
        Ok(loss)
    }

    /// Mean loss without gradients.
    pub fn loss(&self, batch: &TaskBatch, policy: ExecPolicy, shards: usize) -> Result<f64> {
        self.check_batch(batch)?;
        let scale = 1.0 / Self::loss_denominator(batch);
        let ranges = shard_ranges(batch.batch_size(), shards);
        map_slice(policy, &ranges, |&(s, n)| self.shard_loss(&batch.slice(s, n), scale))
            .into_iter()
            .sum()
    }

    /// Forget-gate activations at every step, `batch x hidden` each.
    pub fn record_gates(&self, batch: &TaskBatch, tap: GateTap) -> Result<Vec<Matrix<f64>>> {
        self.check_batch(batch)?;
        let mut state = CellState::zeros(self.cell.kind(), batch.batch_size(), self.cell.hidden_size());
        let mut out = Vec::with_capacity(batch.len());
        for x in &batch.inputs {
            let (s, cache) = self.cell.step(&to_scalar(x), &state)?;
            let g = match tap {
                GateTap::Raw => cache.raw_forget(),
                GateTap::Effective => cache.effective_forget(),
            };
            out.push(g.convert());
            state = s;
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = json!({
            "cell": self.cell.kind(),
            "gate": self.cell.gate(),
            "input": self.cell.input_size(),
            "hidden": self.cell.hidden_size(),
            "output": self.output_size(),
        });
        let tensors = self
            .tensors()
            .into_iter()
            .map(|(name, rows, cols, d)| NamedTensor {
                name,
                rows,
                cols,
                data: d.iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        Checkpoint { precision: T::PRECISION, meta, tensors }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = &ckpt.meta;
        let field = |k: &str| {
            meta.get(k).cloned().ok_or_else(|| Error::config(format!("checkpoint.meta.{k}"), "missing"))
        };
        let kind: CellKind = serde_json::from_value(field("cell")?)?;
        let gate: GateConfig = serde_json::from_value(field("gate")?)?;
        let size = |k: &str| -> Result<usize> { Ok(serde_json::from_value(field(k)?)?) };
        let cell = CellParams::<T>::zeros(kind, &gate, size("input")?, size("hidden")?)?;
        let (h, o) = (size("hidden")?, size("output")?);
        let mut model = Model { cell, wy: Matrix::zeros(h, o), by: Vector::zeros(o) };
        let expected: Vec<(String, usize, usize)> =
            model.tensors().into_iter().map(|(n, r, c, _)| (n, r, c)).collect();
        if expected.len() != ckpt.tensors.len() {
            return Err(Error::CacheMismatch(format!(
                "checkpoint has {} tensors, model needs {}",
                ckpt.tensors.len(),
                expected.len()
            )));
        }
        for ((dst, (name, r, c)), src) in model.tensors_mut().into_iter().zip(expected).zip(&ckpt.tensors) {
            if src.name != name || src.rows != r || src.cols != c {
                return Err(Error::CacheMismatch(format!(
                    "checkpoint tensor {} {}x{} where {name} {r}x{c} was expected",
                    src.name, src.rows, src.cols
                )));
            }
            for (d, &s) in dst.iter_mut().zip(&src.data) {
                *d = T::of(s);
            }
        }
        Ok(model)
    }
}

//! LSTM, GRU and JANET cells with hand-written backward passes.
//!
//! All cells use one fused weight matrix over `z = [x, h_prev]`:
//! `P = z W + b`, with the gate columns of [`GateLayout`] first and the
//! cell-specific columns after them.

mod checkpoint;
mod step;
mod unroll;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, NamedTensor, CHECKPOINT_MAGIC};
pub use step::{cell_backward, gru_forward, janet_forward, lstm_forward, CellState, StepCache};
pub use unroll::{bptt, unroll, Unrolled};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gatelib::{init_for, AuxKind, BiasInit, GateConfig, GateLayout};
use crate::ndmath::{Matrix, Rng, Scalar, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
    Janet,
}

impl CellKind {
    pub const ALL: [CellKind; 3] = [CellKind::Lstm, CellKind::Gru, CellKind::Janet];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
            CellKind::Janet => "janet",
        }
    }

    /// Only the LSTM carries a separate input gate, and only when it is not
    /// tied through a refine gate.
    fn input_gate(self, cfg: &GateConfig) -> bool {
        self == CellKind::Lstm && cfg.aux_kind != AuxKind::Refine
    }

    fn extra_blocks(self) -> &'static [&'static str] {
        match self {
            CellKind::Lstm => &["update", "output"],
            CellKind::Gru => &["reset"],
            CellKind::Janet => &["update"],
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CellKind::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config("cell", format!("unknown cell {s:?}; expected lstm, gru or janet")))
    }
}

impl std::fmt::Display for CellKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Weights of one recurrent cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams<T> {
    kind: CellKind,
    gate: GateConfig,
    layout: GateLayout,
    input: usize,
    hidden: usize,
    /// `(input + hidden) x cols`, rows ordered `[x; h]`.
    pub w: Matrix<T>,
    pub b: Vector<T>,
    /// GRU candidate weights over `[x; reset * h]`.
    pub wn: Option<Matrix<T>>,
    pub bn: Option<Vector<T>>,
}

impl<T: Scalar> CellParams<T> {
    /// All-zero parameters (biases included).
    pub fn zeros(kind: CellKind, gate: &GateConfig, input: usize, hidden: usize) -> Result<Self> {
        let layout = GateLayout::new(gate, hidden, kind.input_gate(gate))?;
        let cols = layout.width() + kind.extra_blocks().len() * hidden;
        let gru = kind == CellKind::Gru;
        Ok(CellParams {
            kind,
            gate: *gate,
            layout,
            input,
            hidden,
            w: Matrix::zeros(input + hidden, cols),
            b: Vector::zeros(cols),
            wn: gru.then(|| Matrix::zeros(input + hidden, hidden)),
            bn: gru.then(|| Vector::zeros(hidden)),
        })
    }

    /// Fan-in uniform weights in `+-1/sqrt(input + hidden)`, gate biases from
    /// the variant's initializer, all other biases zero.
    pub fn init(
        kind: CellKind,
        gate: &GateConfig,
        input: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut p = Self::zeros(kind, gate, input, hidden)?;
        let scale = 1.0 / ((input + hidden) as f64).sqrt();
        for x in p.w.as_mut_slice() {
            *x = T::of(rng.uniform_in(-scale, scale));
        }
        if let Some(wn) = p.wn.as_mut() {
            for x in wn.as_mut_slice() {
                *x = T::of(rng.uniform_in(-scale, scale));
            }
        }
        let bias = init_for(gate, hidden, rng)?;
        p.set_gate_bias(&bias)?;
        Ok(p)
    }

    /// Overwrites the gate-column biases from `bias`.
    pub fn set_gate_bias(&mut self, bias: &BiasInit) -> Result<()> {
        let vals = self.layout.initial_bias(bias)?;
        for (dst, v) in self.b.iter_mut().zip(vals) {
            *dst = T::of(v);
        }
        Ok(())
    }

    /// Sets every fine forget-gate bias to `value`.
    pub fn set_forget_bias(&mut self, value: f64) {
        for x in &mut self.b[..self.hidden] {
            *x = T::of(value);
        }
    }

    pub fn kind(&self) -> CellKind {
        self.kind
    }

    pub fn gate(&self) -> &GateConfig {
        &self.gate
    }

    pub fn layout(&self) -> &GateLayout {
        &self.layout
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// `(name, first column, width)` of every column block of `w` and `b`.
    pub fn column_blocks(&self) -> Vec<(&'static str, usize, usize)> {
        let mut out = self.layout.blocks();
        let mut at = self.layout.width();
        for &name in self.kind.extra_blocks() {
            out.push((name, at, self.hidden));
            at += self.hidden;
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, _, _, d)| d.len()).sum()
    }

    /// `(name, rows, cols, data)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, usize, usize, &[T])> {
        let mut out = vec![
            ("w", self.w.rows(), self.w.cols(), self.w.as_slice()),
            ("b", 1, self.b.len(), &self.b[..]),
        ];
        if let (Some(wn), Some(bn)) = (&self.wn, &self.bn) {
            out.push(("wn", wn.rows(), wn.cols(), wn.as_slice()));
            out.push(("bn", 1, bn.len(), &bn[..]));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![self.w.as_mut_slice(), &mut self.b[..]];
        if let (Some(wn), Some(bn)) = (self.wn.as_mut(), self.bn.as_mut()) {
            out.push(wn.as_mut_slice());
            out.push(&mut bn[..]);
        }
        out
    }

    /// Zeroed copy with the same shapes, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|x| *x = T::zero());
        }
        z
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &Self) {
        let src: Vec<&[T]> = other.tensors().into_iter().map(|t| t.3).collect();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += *s;
            }
        }
    }

    pub fn convert<U: Scalar>(&self) -> CellParams<U> {
        CellParams {
            kind: self.kind,
            gate: self.gate,
            layout: self.layout.clone(),
            input: self.input,
            hidden: self.hidden,
            w: self.w.convert(),
            b: self.b.iter().map(|x| U::of(x.as_f64())).collect(),
            wn: self.wn.as_ref().map(Matrix::convert),
            bn: self.bn.as_ref().map(|v| v.iter().map(|x| U::of(x.as_f64())).collect()),
        }
    }
}

//! Gate initializers, activations and auxiliary-gate compositions.

mod compose;
mod config;
mod init;
mod kernel;

pub use compose::{
    adjustment, master_compose, master_downsize_expand, master_size_for, refine, refine_alt,
    refine_band, refine_compose, refine_grad_norm, tied_master_rescaled,
};
pub use config::{AuxKind, GateConfig, InitKind, Variant};
pub use init::{init_chrono, init_for, init_standard, init_uniform, init_uniform_eps, BiasInit};
pub use kernel::{GateCache, GateLayout};

use crate::error::{Error, Result};
use crate::ndmath::{Matrix, Vector};

/// Raw gate pre-activations for one step, biases not yet applied.
#[derive(Clone, Debug, Default)]
pub struct GatePreacts<'a> {
    pub forget: &'a [f64],
    /// Input gate for non-refine variants, refine gate for refine variants.
    pub second: Option<&'a [f64]>,
    pub master_forget: Option<&'a [f64]>,
    pub master_input: Option<&'a [f64]>,
}

/// Every gate value produced for one step.
#[derive(Clone, Debug, PartialEq)]
pub struct GatePack {
    pub effective_forget: Vector<f64>,
    pub effective_input: Vector<f64>,
    pub forget: Vector<f64>,
    pub input: Option<Vector<f64>>,
    pub refine: Option<Vector<f64>>,
    /// Master gates and overlap, expanded to the hidden size.
    pub master_forget: Option<Vector<f64>>,
    pub master_input: Option<Vector<f64>>,
    pub omega: Option<Vector<f64>>,
}

/// Gate values for one step of an LSTM-style cell (free input gate).
pub fn effective_gates(cfg: &GateConfig, pre: &GatePreacts<'_>, bias: &BiasInit) -> Result<GatePack> {
    let hidden = pre.forget.len();
    let layout = GateLayout::new(cfg, hidden, true)?;
    let variant = cfg.variant().name();
    let missing = |what| Error::MissingPreactivation { variant, what };

    let second = pre.second.ok_or_else(|| {
        missing(if cfg.aux_kind == AuxKind::Refine { "refine" } else { "input" })
    })?;
    let mut row = Vec::with_capacity(layout.width());
    row.extend_from_slice(pre.forget);
    row.extend_from_slice(second);
    if cfg.aux_kind == AuxKind::Master {
        row.extend_from_slice(pre.master_forget.ok_or_else(|| missing("master forget"))?);
        row.extend_from_slice(pre.master_input.ok_or_else(|| missing("master input"))?);
    }
    if row.len() != layout.width() {
        return Err(Error::shape(
            "effective_gates",
            format!("{} pre-activation entries", layout.width()),
            format!("{}", row.len()),
        ));
    }
    for (x, b) in row.iter_mut().zip(layout.initial_bias(bias)?) {
        *x += b;
    }
    let pre = Matrix::from_vec(1, row.len(), row)?;
    let cache = layout.forward(&pre);

    let vec = |m: &Matrix<f64>| Vector::from(m.row(0).to_vec());
    let expand = |m: &Option<Matrix<f64>>| {
        m.as_ref().map(|m| master_downsize_expand(m.row(0), cfg.downsize_c)).transpose()
    };
    let master_forget = expand(&cache.mf)?;
    let master_input = expand(&cache.mi)?;
    let omega = match (&master_forget, &master_input) {
        (Some(a), Some(b)) => Some(a.iter().zip(b.iter()).map(|(x, y)| x * y).collect()),
        _ => None,
    };
    let s = cache.s.as_ref().map(vec);
    let (input, refine) = if cfg.aux_kind == AuxKind::Refine { (None, s) } else { (s, None) };
    Ok(GatePack {
        effective_forget: vec(&cache.eff_f),
        effective_input: vec(&cache.eff_i),
        forget: vec(&cache.f),
        input,
        refine,
        master_forget,
        master_input,
        omega,
    })
}

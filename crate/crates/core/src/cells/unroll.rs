use super::{CellParams, CellState, StepCache};
use crate::error::{Error, Result};
use crate::ndmath::{Matrix, Scalar};

/// Forward trajectory of one unrolled sequence batch.
#[derive(Clone, Debug)]
pub struct Unrolled<T> {
    /// `states[0]` is the initial state, `states[t + 1]` follows input `t`.
    pub states: Vec<CellState<T>>,
    pub caches: Vec<StepCache<T>>,
}

impl<T: Scalar> Unrolled<T> {
    pub fn len(&self) -> usize {
        self.caches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }

    /// Hidden output after step `t`.
    pub fn output(&self, t: usize) -> &Matrix<T> {
        &self.states[t + 1].h
    }
}

/// Runs the cell over `xs` (one `batch x input` matrix per step).
pub fn unroll<T: Scalar>(
    params: &CellParams<T>,
    xs: &[Matrix<T>],
    init: CellState<T>,
) -> Result<Unrolled<T>> {
    if xs.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut states = Vec::with_capacity(xs.len() + 1);
    let mut caches = Vec::with_capacity(xs.len());
    states.push(init);
    for x in xs {
        let (s, c) = params.step(x, states.last().unwrap())?;
        states.push(s);
        caches.push(c);
    }
    Ok(Unrolled { states, caches })
}

/// Backpropagation through time.
///
/// `dh[t]` is the loss gradient with respect to the output of step `t`
/// (`None` for unscored steps). Parameter gradients are added into `grads`;
/// returns the gradient with respect to the initial state.
pub fn bptt<T: Scalar>(
    params: &CellParams<T>,
    un: &Unrolled<T>,
    dh: &[Option<Matrix<T>>],
    grads: &mut CellParams<T>,
) -> Result<CellState<T>> {
    if dh.len() != un.len() {
        return Err(Error::shape("bptt", format!("{} output gradients", un.len()), dh.len()));
    }
    let first = &un.states[0];
    let (b, h) = first.h.shape();
    let mut carry_h = Matrix::zeros(b, h);
    let mut carry_c = first.c.as_ref().map(|_| Matrix::zeros(b, h));
    for t in (0..un.len()).rev() {
        if let Some(d) = &dh[t] {
            for (c, &x) in carry_h.as_mut_slice().iter_mut().zip(d.as_slice()) {
                *c += x;
            }
        }
        let (dhp, dcp, _) = params.step_backward(&un.caches[t], &carry_h, carry_c.as_ref(), grads)?;
        carry_h = dhp;
        carry_c = dcp;
    }
    Ok(CellState { h: carry_h, c: carry_c })
}

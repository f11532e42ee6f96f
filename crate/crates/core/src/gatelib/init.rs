use serde::{Deserialize, Serialize};

use super::{AuxKind, GateConfig, InitKind};
use crate::error::{Error, Result};
use crate::ndmath::{inverse_sigmoid, Rng, Vector};

/// Per-unit forget and input bias vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasInit {
    pub forget_bias: Vector<f64>,
    pub input_bias: Vector<f64>,
}

impl BiasInit {
    pub fn zeros(n: usize) -> Self {
        BiasInit {
            forget_bias: Vector::zeros(n),
            input_bias: Vector::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.forget_bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forget_bias.is_empty()
    }

    /// Overwrites every forget bias with `value`, keeping input biases.
    pub fn with_constant_forget(mut self, value: f64) -> Self {
        self.forget_bias.iter_mut().for_each(|b| *b = value);
        self
    }
}

/// Constant forget bias, zero input bias.
pub fn init_standard(hidden: usize, forget_bias: f64) -> BiasInit {
    BiasInit {
        forget_bias: Vector::filled(hidden, forget_bias),
        input_bias: Vector::zeros(hidden),
    }
}

/// Forget activations drawn from `U[1/d, 1 - 1/d]`, biases through the
/// inverse sigmoid, input biases negated.
pub fn init_uniform(hidden: usize, rng: &mut Rng) -> Result<BiasInit> {
    if hidden < 2 {
        return Err(Error::config(
            "hidden",
            format!("uniform initialization needs at least 2 units, got {hidden}"),
        ));
    }
    Ok(init_uniform_eps(hidden, 1.0 / hidden as f64, rng))
}

/// Uniform initialization over `U[eps, 1 - eps]`.
pub fn init_uniform_eps(hidden: usize, eps: f64, rng: &mut Rng) -> BiasInit {
    let forget: Vector<f64> = (0..hidden)
        .map(|_| {
            let u = rng.uniform_in(eps, 1.0 - eps);
            inverse_sigmoid(u, eps)
        })
        .collect();
    let input = forget.map(|b| -b);
    BiasInit {
        forget_bias: forget,
        input_bias: input,
    }
}

/// Chrono initialization: `b_f = log(u)`, `u ~ U[1, t_max - 1]`, `b_i = -b_f`.
pub fn init_chrono(hidden: usize, t_max: usize, rng: &mut Rng) -> Result<BiasInit> {
    if t_max < 2 {
        return Err(Error::config("gate.t_max", format!("must be at least 2, got {t_max}")));
    }
    let hi = (t_max - 1) as f64;
    let forget: Vector<f64> = (0..hidden).map(|_| rng.uniform_in(1.0, hi).ln()).collect();
    let input = forget.map(|b| -b);
    Ok(BiasInit {
        forget_bias: forget,
        input_bias: input,
    })
}

/// Bias initialization for the gate that carries the variant's init kind.
///
/// For master variants the returned vectors have `hidden / C` entries and
/// belong to the master gates; the fine forget/input gates start at zero.
pub fn init_for(cfg: &GateConfig, hidden: usize, rng: &mut Rng) -> Result<BiasInit> {
    cfg.validate(hidden)?;
    let n = if cfg.aux_kind == AuxKind::Master {
        cfg.master_size(hidden)
    } else {
        hidden
    };
    match cfg.init_kind {
        InitKind::StandardBias => Ok(init_standard(n, cfg.forget_bias)),
        InitKind::UniformInit => Ok(init_uniform_eps(n, cfg.eps_for(hidden), rng)),
        InitKind::ChronoInit => init_chrono(n, cfg.t_max_for(hidden), rng),
        InitKind::OrderedCumax => Ok(BiasInit::zeros(n)),
    }
}

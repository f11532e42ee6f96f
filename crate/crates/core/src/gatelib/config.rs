use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the primary gate is initialized or activated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitKind {
    StandardBias,
    UniformInit,
    ChronoInit,
    OrderedCumax,
}

/// Auxiliary gate modulating the primary forget gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuxKind {
    None,
    Refine,
    Master,
}

/// One row of the ablation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Standard,
    Chrono,
    Ordered,
    Uniform,
    Refine,
    OrderedMaster,
    UniformMaster,
    OrderedRefine,
    UniformRefine,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Standard,
        Variant::Chrono,
        Variant::Ordered,
        Variant::Uniform,
        Variant::Refine,
        Variant::OrderedMaster,
        Variant::UniformMaster,
        Variant::OrderedRefine,
        Variant::UniformRefine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "--",
            Variant::Chrono => "C-",
            Variant::Ordered => "O-",
            Variant::Uniform => "U-",
            Variant::Refine => "-R",
            Variant::OrderedMaster => "OM",
            Variant::UniformMaster => "UM",
            Variant::OrderedRefine => "OR",
            Variant::UniformRefine => "UR",
        }
    }

    pub fn parts(self) -> (InitKind, AuxKind) {
        use {AuxKind as A, InitKind as I};
        match self {
            Variant::Standard => (I::StandardBias, A::None),
            Variant::Chrono => (I::ChronoInit, A::None),
            Variant::Ordered => (I::OrderedCumax, A::None),
            Variant::Uniform => (I::UniformInit, A::None),
            Variant::Refine => (I::StandardBias, A::Refine),
            Variant::OrderedMaster => (I::OrderedCumax, A::Master),
            Variant::UniformMaster => (I::UniformInit, A::Master),
            Variant::OrderedRefine => (I::OrderedCumax, A::Refine),
            Variant::UniformRefine => (I::UniformInit, A::Refine),
        }
    }

    /// The variant for an (init, aux) pair; `None` for the pairs outside the matrix.
    pub fn from_parts(init: InitKind, aux: AuxKind) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.parts() == (init, aux))
    }

    pub fn uses_refine(self) -> bool {
        self.parts().1 == AuxKind::Refine
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Gate mechanism selection plus its scalar knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GateConfigRepr", into = "GateConfigRepr")]
pub struct GateConfig {
    pub init_kind: InitKind,
    pub aux_kind: AuxKind,
    /// Constant forget bias for `StandardBias`.
    pub forget_bias: f64,
    /// Chrono horizon; `None` resolves to the hidden size.
    pub t_max: Option<usize>,
    /// Uniform-init clamp; `None` resolves to `1 / hidden`.
    pub eps: Option<f64>,
    /// Master-gate chunk size.
    pub downsize_c: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateConfigRepr {
    variant: Variant,
    #[serde(default = "default_forget_bias")]
    forget_bias: f64,
    #[serde(default)]
    t_max: Option<usize>,
    #[serde(default)]
    eps: Option<f64>,
    #[serde(default = "default_downsize")]
    downsize_c: usize,
}

fn default_forget_bias() -> f64 {
    1.0
}

fn default_downsize() -> usize {
    1
}

impl TryFrom<GateConfigRepr> for GateConfig {
    type Error = Error;

    fn try_from(r: GateConfigRepr) -> Result<Self> {
        let mut cfg = GateConfig::for_variant(r.variant);
        cfg.forget_bias = r.forget_bias;
        cfg.t_max = r.t_max;
        cfg.eps = r.eps;
        cfg.downsize_c = r.downsize_c;
        cfg.check_knobs()?;
        Ok(cfg)
    }
}

impl From<GateConfig> for GateConfigRepr {
    fn from(c: GateConfig) -> Self {
        GateConfigRepr {
            variant: c.variant(),
            forget_bias: c.forget_bias,
            t_max: c.t_max,
            eps: c.eps,
            downsize_c: c.downsize_c,
        }
    }
}

impl GateConfig {
    pub fn for_variant(v: Variant) -> Self {
        let (init_kind, aux_kind) = v.parts();
        GateConfig {
            init_kind,
            aux_kind,
            forget_bias: 1.0,
            t_max: None,
            eps: None,
            downsize_c: 1,
        }
    }

    /// Builds a config from an (init, aux) pair, rejecting pairs outside the matrix.
    pub fn new(init_kind: InitKind, aux_kind: AuxKind) -> Result<Self> {
        let v = Variant::from_parts(init_kind, aux_kind).ok_or_else(|| {
            Error::config(
                "gate",
                format!("({init_kind:?}, {aux_kind:?}) is not one of the nine gate variants"),
            )
        })?;
        Ok(GateConfig::for_variant(v))
    }

    pub fn variant(&self) -> Variant {
        Variant::from_parts(self.init_kind, self.aux_kind)
            .expect("GateConfig always holds a valid pair")
    }

    pub fn t_max_for(&self, hidden: usize) -> usize {
        self.t_max.unwrap_or(hidden)
    }

    pub fn eps_for(&self, hidden: usize) -> f64 {
        self.eps.unwrap_or(1.0 / hidden as f64)
    }

    /// Number of distinct master-gate values (`hidden / C`).
    pub fn master_size(&self, hidden: usize) -> usize {
        hidden / self.downsize_c.max(1)
    }

    fn check_knobs(&self) -> Result<()> {
        if !self.forget_bias.is_finite() {
            return Err(Error::config("gate.forget_bias", "must be finite"));
        }
        if self.downsize_c == 0 {
            return Err(Error::config("gate.downsize_c", "must be at least 1"));
        }
        if let Some(t) = self.t_max {
            if t < 2 {
                return Err(Error::config("gate.t_max", format!("must be at least 2, got {t}")));
            }
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e < 0.5) {
                return Err(Error::config("gate.eps", format!("must lie in (0, 0.5), got {e}")));
            }
        }
        Ok(())
    }

    /// Checks every constraint that depends on the hidden size.
    pub fn validate(&self, hidden: usize) -> Result<()> {
        self.check_knobs()?;
        if hidden == 0 {
            return Err(Error::config("hidden", "must be at least 1"));
        }
        if hidden % self.downsize_c != 0 {
            return Err(Error::config(
                "gate.downsize_c",
                format!("{} does not divide hidden size {hidden}", self.downsize_c),
            ));
        }
        if self.init_kind == InitKind::ChronoInit && self.t_max_for(hidden) < 2 {
            return Err(Error::config("gate.t_max", "chrono initialization needs t_max >= 2"));
        }
        if self.init_kind == InitKind::UniformInit {
            let n = if self.aux_kind == AuxKind::Master {
                self.master_size(hidden)
            } else {
                hidden
            };
            if n < 2 && self.eps.is_none() {
                return Err(Error::config(
                    "hidden",
                    "uniform initialization needs at least 2 units (interval [1/d, 1-1/d])",
                ));
            }
            let eps = self.eps_for(hidden);
            if !(eps > 0.0 && eps <= 0.5) {
                return Err(Error::config("gate.eps", format!("resolved eps {eps} outside (0, 0.5]")));
            }
        }
        Ok(())
    }
}

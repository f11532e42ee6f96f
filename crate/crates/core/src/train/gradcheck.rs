//! Central-difference check of the full BPTT gradient.

use serde::{Deserialize, Serialize};

use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::exec::{map_range, ExecPolicy};
use crate::gatelib::{GateConfig, Variant};
use crate::ndmath::{Matrix, Rng};
use crate::tasks::{Target, TaskBatch};

use super::model::Model;

/// Gradients smaller than this are compared in absolute terms. Central
/// differences of a summed loss near 10 at `delta = 1e-5` carry roundoff of
/// about `10 * 2^-52 / 1e-5 ~ 2e-10`, which dominates below this scale.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// Scales the analytic gradient of one group; a negative control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    pub group: String,
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradcheckConfig {
    pub cell: CellKind,
    pub variant: Variant,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default = "d_input")]
    pub input: usize,
    #[serde(default = "d_length")]
    pub length: usize,
    #[serde(default = "d_batch")]
    pub batch: usize,
    #[serde(default = "d_classes")]
    pub classes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_tolerance")]
    pub tolerance: f64,
    /// Master chunk size; must divide `hidden`.
    #[serde(default = "d_downsize")]
    pub downsize_c: usize,
    #[serde(default)]
    pub inject_fault: Option<FaultInjection>,
}

fn d_hidden() -> usize {
    8
}
fn d_input() -> usize {
    4
}
fn d_length() -> usize {
    5
}
fn d_batch() -> usize {
    2
}
fn d_classes() -> usize {
    3
}
fn d_delta() -> f64 {
    1e-5
}
fn d_tolerance() -> f64 {
    1e-4
}
fn d_downsize() -> usize {
    2
}

impl GradcheckConfig {
    /// Parses JSON, reporting the path of the offending field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path.is_empty() { "gradcheck".into() } else { path }, e.into_inner().to_string())
        })
    }

    pub fn new(cell: CellKind, variant: Variant, seed: u64) -> Self {
        GradcheckConfig {
            cell,
            variant,
            hidden: d_hidden(),
            input: d_input(),
            length: d_length(),
            batch: d_batch(),
            classes: d_classes(),
            seed,
            delta: d_delta(),
            tolerance: d_tolerance(),
            downsize_c: d_downsize(),
            inject_fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub count: usize,
    pub max_rel_err: f64,
    /// Analytic and numeric values at the worst coordinate.
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub cell: CellKind,
    pub variant: Variant,
    pub seed: u64,
    pub tolerance: f64,
    pub max_rel_err: f64,
    pub groups: Vec<GroupReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn failing_groups(&self) -> Vec<&str> {
        self.groups.iter().filter(|g| g.max_rel_err >= self.tolerance).map(|g| g.group.as_str()).collect()
    }
}

pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR)
}

/// Random inputs with a class label at every step.
fn random_batch(cfg: &GradcheckConfig, rng: &mut Rng) -> TaskBatch {
    let inputs = (0..cfg.length)
        .map(|_| {
            let data = (0..cfg.batch * cfg.input).map(|_| rng.normal()).collect();
            Matrix::from_vec(cfg.batch, cfg.input, data).expect("sized")
        })
        .collect();
    let labels = (0..cfg.length)
        .map(|_| (0..cfg.batch).map(|_| rng.below(cfg.classes as u64) as usize).collect())
        .collect();
    TaskBatch {
        inputs,
        target: Target::Classes { steps: (0..cfg.length).collect(), labels, classes: cfg.classes },
    }
}

/// `(group, tensor index, flat indices)` for every named parameter group.
fn groups(model: &Model<f64>) -> Vec<(String, usize, Vec<usize>)> {
    let cols = model.cell.w.cols();
    let rows = model.cell.w.rows();
    let mut out = Vec::new();
    for (name, start, width) in model.cell.column_blocks() {
        let w = (0..rows).flat_map(|r| (start..start + width).map(move |c| r * cols + c)).collect();
        out.push((format!("w.{name}"), 0, w));
        out.push((format!("b.{name}"), 1, (start..start + width).collect()));
    }
    let tensors = model.tensors();
    for (k, (name, _, _, data)) in tensors.iter().enumerate().skip(2) {
        out.push((name.clone(), k, (0..data.len()).collect()));
    }
    out
}

/// Compares the analytic gradient of a random model against central
/// differences of the summed loss, coordinate by coordinate.
pub fn gradcheck(cfg: &GradcheckConfig, policy: ExecPolicy) -> Result<GradcheckReport> {
    if cfg.hidden == 0 || cfg.input == 0 || cfg.length == 0 || cfg.batch == 0 || cfg.classes < 2 {
        return Err(Error::config("gradcheck", "sizes must be positive and classes >= 2"));
    }
    if !(cfg.delta > 0.0) {
        return Err(Error::config("gradcheck.delta", "must be positive"));
    }
    let mut gate = GateConfig::for_variant(cfg.variant);
    if gate.aux_kind == crate::gatelib::AuxKind::Master {
        gate.downsize_c = cfg.downsize_c;
    }
    gate.validate(cfg.hidden)?;
    let mut rng = Rng::new(cfg.seed, 0);
    let mut model = Model::<f64>::init(cfg.cell, &gate, cfg.input, cfg.hidden, cfg.classes, &mut rng)?;
    // Nonzero readout bias so its gradient is not trivially symmetric.
    for b in model.by.iter_mut() {
        *b = rng.uniform_in(-0.5, 0.5);
    }
    let batch = random_batch(cfg, &mut rng.fork(1));
    // Loss and gradient of the sum over steps and rows.
    let denom = (cfg.batch * cfg.length) as f64;
    let (_, grads) = model.loss_and_grad(&batch, ExecPolicy::Sequential, 1)?;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.3.iter().map(|g| g * denom).collect()).collect();

    let mut reports = Vec::new();
    for (group, k, idx) in groups(&model) {
        let numeric = map_range(policy, idx.len(), |j| -> Result<f64> {
            let mut m = model.clone();
            let i = idx[j];
            let x = m.tensors()[k].3[i];
            m.tensors_mut()[k][i] = x + cfg.delta;
            let up = m.loss(&batch, ExecPolicy::Sequential, 1)?;
            m.tensors_mut()[k][i] = x - cfg.delta;
            let down = m.loss(&batch, ExecPolicy::Sequential, 1)?;
            Ok((up - down) * denom / (2.0 * cfg.delta))
        });
        let scale = match &cfg.inject_fault {
            Some(f) if f.group == group => f.scale,
            _ => 1.0,
        };
        let mut rep = GroupReport { group, count: idx.len(), max_rel_err: 0.0, analytic: 0.0, numeric: 0.0 };
        for (j, n) in numeric.into_iter().enumerate() {
            let n = n?;
            let a = analytic[k][idx[j]] * scale;
            let e = relative_error(a, n);
            if e > rep.max_rel_err || e.is_nan() {
                rep.max_rel_err = if e.is_nan() { f64::INFINITY } else { e };
                rep.analytic = a;
                rep.numeric = n;
            }
        }
        reports.push(rep);
    }
    if let Some(f) = &cfg.inject_fault {
        if !reports.iter().any(|r| r.group == f.group) {
            let known: Vec<&str> = reports.iter().map(|r| r.group.as_str()).collect();
            return Err(Error::config("inject_fault.group", format!("unknown group; expected one of {known:?}")));
        }
    }
    let max_rel_err = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    Ok(GradcheckReport {
        cell: cfg.cell,
        variant: cfg.variant,
        seed: cfg.seed,
        tolerance: cfg.tolerance,
        max_rel_err,
        groups: reports,
    })
}

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_slice, ExecPolicy};
use crate::gatelib::Variant;
use crate::io::write_atomic;
use crate::train::MetricsRecord;

use super::run::{run_experiment, RunOutcome, RunStatus};
use super::{variant_slug, ExperimentConfig};

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: usize,
    pub variant: String,
    pub median: f64,
    pub q_lo: f64,
    pub q_hi: f64,
}

/// Per-variant eval-loss quantiles across runs at every recorded step.
///
/// A run that stopped early on its target keeps contributing its last eval
/// loss; a diverged run contributes only the steps it recorded.
pub fn aggregate(runs: &[(String, RunStatus, Vec<MetricsRecord>)], quantiles: (f64, f64)) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    for (v, _, _) in runs {
        if !order.contains(&v.as_str()) {
            order.push(v);
        }
    }
    let mut rows = Vec::new();
    for v in order {
        let group: Vec<_> = runs.iter().filter(|r| r.0 == v).collect();
        let steps: std::collections::BTreeSet<usize> =
            group.iter().flat_map(|r| r.2.iter().map(|m| m.step)).collect();
        for &step in &steps {
            let vals: Vec<f64> = group
                .iter()
                .filter_map(|(_, status, recs)| {
                    let last = recs.iter().take_while(|m| m.step <= step).last()?;
                    let done = recs.last().is_some_and(|m| m.step < step);
                    (last.step == step || (done && *status == RunStatus::Completed)).then_some(last.eval_loss)
                })
                .collect();
            if vals.is_empty() {
                continue;
            }
            rows.push(AggregateRow {
                step,
                variant: v.to_string(),
                median: quantile(&vals, 0.5),
                q_lo: quantile(&vals, quantiles.0),
                q_hi: quantile(&vals, quantiles.1),
            });
        }
    }
    rows
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub runs: Vec<RunOutcome>,
    pub aggregate: Vec<AggregateRow>,
}

impl SweepOutcome {
    /// Run outcomes of one variant, in seed order.
    pub fn variant_runs(&self, v: Variant) -> Vec<&RunOutcome> {
        self.runs.iter().filter(|r| r.variant == v.name()).collect()
    }
}

/// Whether `dir` holds a finished run of exactly `cfg`.
fn finished_with(dir: &Path, cfg: &ExperimentConfig) -> Result<bool> {
    if !dir.join("summary.json").exists() {
        return Ok(false);
    }
    let Ok(text) = std::fs::read_to_string(dir.join("config.json")) else {
        return Ok(false);
    };
    let mut want = cfg.clone();
    want.out = Some(dir.to_path_buf());
    Ok(ExperimentConfig::from_json(&text).is_ok_and(|have| have == want))
}

/// Reads a run's summary and metrics back from disk.
fn load_outcome(dir: &Path) -> Result<RunOutcome> {
    let text = std::fs::read(dir.join("summary.json")).map_err(|e| Error::io(dir, e))?;
    let mut o: RunOutcome = serde_json::from_slice(&text)?;
    let metrics = std::fs::read(dir.join("metrics.jsonl")).map_err(|e| Error::io(dir, e))?;
    o.records = String::from_utf8_lossy(&metrics)
        .lines()
        .map(serde_json::from_str)
        .collect::<std::result::Result<_, _>>()?;
    Ok(o)
}

/// Runs every (variant, seed) pair under `out/<variant>_s<seed>/` and
/// writes `aggregate.csv` and `sweep.json`. Divergent runs are recorded
/// and the sweep carries on; other errors abort it. With `resume`, runs
/// already finished under the same config are loaded instead of retrained.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path, policy: ExecPolicy) -> Result<SweepOutcome> {
    cfg.validate()?;
    let spec = cfg.sweep.as_ref().ok_or_else(|| Error::config("sweep", "missing sweep section"))?;
    let jobs: Vec<ExperimentConfig> = spec
        .variants
        .iter()
        .flat_map(|&v| {
            spec.init_seeds.iter().map(move |&s| {
                let mut c = cfg.with_variant(v);
                c.seeds.init = s;
                c
            })
        })
        .collect();
    // Runs fan out; each run trains sequentially inside.
    let inner = if policy.is_parallel() && jobs.len() > 1 { ExecPolicy::Sequential } else { policy };
    let results = map_slice(policy, &jobs, |c| {
        let dir = out.join(format!("{}_s{}", variant_slug(c.gate.variant()), c.seeds.init));
        if spec.resume && finished_with(&dir, c)? {
            return load_outcome(&dir);
        }
        match run_experiment(c, &dir, inner) {
            Err(Error::Diverged { .. }) => load_outcome(&dir),
            r => r,
        }
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let keyed: Vec<_> = runs.iter().map(|r| (r.variant.clone(), r.status, r.records.clone())).collect();
    let rows = aggregate(&keyed, spec.quantiles);

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| Error::io(out, std::io::Error::other(e)))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(out, e.into_error()))?;
    write_atomic(&out.join("aggregate.csv"), &bytes)?;
    let statuses: BTreeMap<String, &RunOutcome> =
        runs.iter().map(|r| (format!("{}_s{}", r.variant, r.seed), r)).collect();
    write_atomic(&out.join("sweep.json"), serde_json::to_string_pretty(&statuses)?.as_bytes())?;
    Ok(SweepOutcome { runs, aggregate: rows })
}

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{gate_histogram, write_histogram_csv};
use crate::cells::write_checkpoint;
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::io::write_atomic;
use crate::ndmath::{Precision, Scalar};
use crate::train::{build_model, train_loop, GateTap, MetricsRecord, Model, TaskSource, TrainSummary};

use super::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged,
}

/// Result of one run; also written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub variant: String,
    pub seed: u64,
    pub summary: Option<TrainSummary>,
    pub diverged_at: Option<usize>,
    pub wall_clock_secs: f64,
    /// Mean forget activation per unit at the first and last step, when
    /// snapshots are on: `[raw, effective]` each.
    pub unit_means_init: Option<[Vec<f64>; 2]>,
    pub unit_means_final: Option<[Vec<f64>; 2]>,
    #[serde(skip)]
    pub records: Vec<MetricsRecord>,
}

/// Metric lines, one JSON object per line.
pub fn metrics_jsonl(records: &[MetricsRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn metrics_csv(records: &[MetricsRecord]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn snapshot<T: Scalar>(
    model: &Model<T>,
    source: &TaskSource,
    cfg: &ExperimentConfig,
    out: &Path,
    tag: &str,
) -> Result<Option<[Vec<f64>; 2]>> {
    if cfg.gate_snapshot == 0 {
        return Ok(None);
    }
    // Fixed probe batch so snapshots of different runs are comparable.
    let batch = source.sample(cfg.gate_snapshot, &mut crate::ndmath::Rng::new(cfg.seeds.data, 4))?;
    let mut means = Vec::new();
    for (tap, name) in [(GateTap::Raw, "raw"), (GateTap::Effective, "effective")] {
        let h = gate_histogram(&model.record_gates(&batch, tap)?)?;
        write_histogram_csv(&out.join(format!("gates_{tag}_{name}.csv")), &h)?;
        means.push(h.unit_means);
    }
    let effective = means.pop().expect("two taps");
    let raw = means.pop().expect("two taps");
    Ok(Some([raw, effective]))
}

fn run_typed<T: Scalar>(cfg: &ExperimentConfig, out: &Path, policy: ExecPolicy) -> Result<RunOutcome> {
    let start = Instant::now();
    let source = TaskSource::new(&cfg.task, &mut cfg.seeds.dataset_rng())?;
    let mut model = build_model::<T>(cfg.cell, &cfg.gate, cfg.hidden, &source, &cfg.seeds)?;
    write_checkpoint(&out.join("init.ckpt"), &model.to_checkpoint())?;
    let unit_means_init = snapshot(&model, &source, cfg, out, "init")?;

    let mut train = cfg.train.clone();
    if !train.deterministic && policy.is_parallel() {
        train.shards = train.shards.max(crate::exec::threads());
    }
    let metrics_path = out.join("metrics.jsonl");
    let mut records = Vec::new();
    let result = train_loop(&mut model, &source, &train, &cfg.seeds, policy, |r| {
        records.push(r.clone());
        write_atomic(&metrics_path, &metrics_jsonl(&records)?)
    });
    write_atomic(&out.join("metrics.csv"), &metrics_csv(&records))?;
    let mut outcome = RunOutcome {
        status: RunStatus::Completed,
        variant: cfg.gate.variant().name().into(),
        seed: cfg.seeds.init,
        summary: None,
        diverged_at: None,
        wall_clock_secs: 0.0,
        unit_means_init,
        unit_means_final: None,
        records: Vec::new(),
    };
    let err = match result {
        Ok(s) => {
            outcome.summary = Some(s);
            write_checkpoint(&out.join("final.ckpt"), &model.to_checkpoint())?;
            outcome.unit_means_final = snapshot(&model, &source, cfg, out, "final")?;
            None
        }
        Err(Error::Diverged { step, loss }) => {
            outcome.status = RunStatus::Diverged;
            outcome.diverged_at = Some(step);
            Some(Error::Diverged { step, loss })
        }
        Err(e) => return Err(e),
    };
    outcome.wall_clock_secs = start.elapsed().as_secs_f64();
    outcome.records = records;
    write_atomic(&out.join("summary.json"), serde_json::to_string_pretty(&outcome)?.as_bytes())?;
    match err {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

/// Trains one configuration and writes its artifacts under `out`:
/// `config.json`, `metrics.jsonl` (rewritten atomically at every record),
/// `metrics.csv`, `init.ckpt`, `final.ckpt`, `summary.json` and, with
/// snapshots on, `gates_{init,final}_{raw,effective}.csv`.
///
/// Divergence still writes the metrics and summary, then returns
/// [`Error::Diverged`].
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, policy: ExecPolicy) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut resolved = cfg.clone();
    resolved.out = Some(out.to_path_buf());
    write_atomic(&out.join("config.json"), resolved.to_json()?.as_bytes())?;
    match cfg.train.precision {
        Precision::F64 => run_typed::<f64>(cfg, out, policy),
        Precision::F32 => run_typed::<f32>(cfg, out, policy),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::read_checkpoint;

    fn cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::from_json(super::super::tests::SAMPLE).unwrap();
        c.gate_snapshot = 4;
        c
    }

    #[test]
    fn writes_all_artifacts_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg();
        c.train.deterministic = true;
        let a = run_experiment(&c, &dir.path().join("a"), ExecPolicy::Parallel).unwrap();
        let b = run_experiment(&c, &dir.path().join("b"), ExecPolicy::Parallel).unwrap();
        let read = |d: &str, f: &str| std::fs::read(dir.path().join(d).join(f)).unwrap();
        assert_eq!(read("a", "metrics.jsonl"), read("b", "metrics.jsonl"));
        assert_eq!(a.records, b.records);
        for f in ["config.json", "metrics.csv", "init.ckpt", "final.ckpt", "summary.json", "gates_final_raw.csv"] {
            assert!(dir.path().join("a").join(f).exists(), "{f}");
        }
        let text = String::from_utf8(read("a", "metrics.jsonl")).unwrap();
        let line = text.lines().next().unwrap();
        let at: Vec<usize> = ["\"step\":0,", "\"loss\":", "\"eval_loss\":", "\"variant\":\"UR\"", "\"seed\":1}"]
            .iter()
            .map(|k| line.find(k).unwrap_or_else(|| panic!("{k} missing from {line}")))
            .collect();
        assert!(at.windows(2).all(|w| w[0] < w[1]) && at[0] == 1, "{line}");
        let first: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(first.as_object().unwrap().len(), 5);
        let ck = read_checkpoint(&dir.path().join("a/final.ckpt")).unwrap();
        assert_eq!(Model::<f64>::from_checkpoint(&ck).unwrap().to_checkpoint(), ck);
        assert_eq!(a.unit_means_init.as_ref().unwrap()[0].len(), 8);
    }

    #[test]
    fn divergence_writes_summary_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg();
        c.train.learning_rate = Some(f64::MAX);
        c.train.clip_norm = f64::MAX;
        c.train.steps = 50;
        let err = run_experiment(&c, dir.path(), ExecPolicy::Sequential).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
        let s: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(s["status"], "diverged");
    }

    #[test]
    fn f32_runs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg();
        c.train.precision = Precision::F32;
        let o = run_experiment(&c, dir.path(), ExecPolicy::Sequential).unwrap();
        assert!(o.summary.unwrap().final_eval_loss.is_finite());
        assert_eq!(read_checkpoint(&dir.path().join("final.ckpt")).unwrap().precision, Precision::F32);
    }
}

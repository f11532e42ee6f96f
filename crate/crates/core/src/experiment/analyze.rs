use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    g_contour, gate_histogram, GateHistogram, grad_norm_bounds, timescale_report, timescale_sampler, write_bounds_csv,
    write_contour_csv, write_histogram_csv, write_timescale_csv, TimescaleInit,
};
use crate::cells::read_checkpoint;
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::io::write_atomic;
use crate::ndmath::Rng;
use crate::train::{GateTap, Model, TaskSource};

use super::ExperimentConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalysisKind {
    /// Unit-mean forget activations of a checkpoint (`histogram.csv`).
    Histogram,
    /// Per-unit decay periods of a checkpoint (`timescale.csv`).
    Timescale,
    /// Refine gradient-norm bounds (`bounds.csv`).
    Bounds,
    /// Effective gate over an `(f, r)` grid (`contour.csv`).
    Contour,
    /// Decay-period survival curves of the initializers (`survival.csv`).
    Survival,
}

#[derive(Clone, Debug)]
pub struct AnalyzeRequest {
    pub kind: AnalysisKind,
    pub checkpoint: Option<PathBuf>,
    /// Supplies the task for checkpoint analyses.
    pub config: Option<ExperimentConfig>,
    /// Probe batch size for activation recordings.
    pub batch: usize,
    /// Grid resolution.
    pub points: usize,
    pub tap: GateTap,
    pub seed: u64,
}

impl AnalyzeRequest {
    pub fn new(kind: AnalysisKind) -> Self {
        AnalyzeRequest { kind, checkpoint: None, config: None, batch: 128, points: 101, tap: GateTap::Effective, seed: 0 }
    }
}

fn recorded_histogram(req: &AnalyzeRequest) -> Result<GateHistogram> {
    let path = req.checkpoint.as_ref().ok_or_else(|| Error::config("checkpoint", "required for this analysis"))?;
    let cfg = req.config.as_ref().ok_or_else(|| Error::config("config", "required for this analysis"))?;
    let model = Model::<f64>::from_checkpoint(&read_checkpoint(path)?)?;
    let source = TaskSource::new(&cfg.task, &mut cfg.seeds.dataset_rng())?;
    let batch = source.sample(req.batch, &mut Rng::new(cfg.seeds.data, 4))?;
    gate_histogram(&model.record_gates(&batch, req.tap)?)
}

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1).max(1) as f64).collect()
}

/// Runs one analysis and returns the path of the CSV it wrote.
pub fn analyze(req: &AnalyzeRequest, out: &Path, policy: ExecPolicy) -> Result<PathBuf> {
    if req.points < 2 || req.batch == 0 {
        return Err(Error::config("points", "need points >= 2 and batch >= 1"));
    }
    let path = out.join(match req.kind {
        AnalysisKind::Histogram => "histogram.csv",
        AnalysisKind::Timescale => "timescale.csv",
        AnalysisKind::Bounds => "bounds.csv",
        AnalysisKind::Contour => "contour.csv",
        AnalysisKind::Survival => "survival.csv",
    });
    match req.kind {
        AnalysisKind::Histogram => {
            write_histogram_csv(&path, &recorded_histogram(req)?)?;
        }
        AnalysisKind::Timescale => {
            // Saturated units are clamped just below 1 so the report stays finite.
            let means: Vec<f64> = recorded_histogram(req)?.unit_means.into_iter().map(|f| f.min(1.0 - 1e-12)).collect();
            write_timescale_csv(&path, &timescale_report(&means)?)?;
        }
        AnalysisKind::Bounds => {
            let g = grid(req.points + 2, 0.0, 1.0);
            write_bounds_csv(&path, &grad_norm_bounds(&g[1..g.len() - 1], policy)?)?;
        }
        AnalysisKind::Contour => {
            let f = grid(req.points, 0.0, 1.0);
            write_contour_csv(&path, &f, &f, &g_contour(&f, &f)?)?;
        }
        AnalysisKind::Survival => {
            let n = 100_000;
            let kinds = [
                ("constant", TimescaleInit::Constant { bias: 1.0 }),
                ("chrono", TimescaleInit::Chrono { t_max: 100 }),
                ("uniform", TimescaleInit::Uniform { eps: 0.0 }),
                ("cumax", TimescaleInit::Cumax { size: 1024 }),
            ];
            let xs = grid(req.points, 1.0, 100.0);
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Error::io(&path, std::io::Error::other(e));
            w.write_record(["init", "x", "survival", "pareto"]).map_err(csv_err)?;
            for (k, (label, init)) in kinds.into_iter().enumerate() {
                let d = timescale_sampler(init, n, &mut Rng::new(req.seed, k as u64))?;
                for &x in &xs {
                    let s = d.iter().filter(|&&v| v > x).count() as f64 / n as f64;
                    w.serialize((label, x, s, 1.0 / x)).map_err(csv_err)?;
                }
            }
            let bytes = w.into_inner().map_err(|e| Error::io(&path, e.into_error()))?;
            write_atomic(&path, &bytes)?;
        }
    }
    Ok(path)
}

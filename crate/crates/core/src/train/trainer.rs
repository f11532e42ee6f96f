use serde::{Deserialize, Serialize};

use crate::cells::CellKind;
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::gatelib::GateConfig;
use crate::ndmath::{clip_by_global_norm, Rng, Scalar};

use super::config::{TaskSource, TrainConfig};
use super::model::Model;
use super::Adam;

/// One line of the metrics stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub step: usize,
    /// Mean training loss over the updates since the previous record.
    pub loss: f64,
    pub eval_loss: f64,
    pub variant: String,
    pub seed: u64,
}

/// Seeds for parameter init and for data; the data seed is shared across
/// variants so they all see the same batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub init: u64,
    pub data: u64,
}

impl Seeds {
    pub fn init_rng(&self) -> Rng {
        Rng::new(self.init, 0)
    }

    pub fn train_rng(&self) -> Rng {
        Rng::new(self.data, 1)
    }

    pub fn eval_rng(&self) -> Rng {
        Rng::new(self.data, 2)
    }

    /// Used once to build synthetic datasets.
    pub fn dataset_rng(&self) -> Rng {
        Rng::new(self.data, 3)
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_loss: f64,
    pub final_eval_loss: f64,
    pub best_eval_loss: f64,
    /// First recorded step whose eval loss was below the target.
    pub reached_target: Option<usize>,
    pub max_grad_norm: f64,
}

/// Builds the initial model of a run, applying a forget-bias override.
pub fn build_model<T: Scalar>(
    kind: CellKind,
    gate: &GateConfig,
    hidden: usize,
    source: &TaskSource,
    seeds: &Seeds,
) -> Result<Model<T>> {
    let mut model = Model::init(kind, gate, source.input_size(), hidden, source.output_size(), &mut seeds.init_rng())?;
    if let Some(b) = source.spec().forget_bias_override() {
        model.cell.set_forget_bias(b);
    }
    Ok(model)
}

/// Runs the training loop, handing every record to `sink` as it is made.
///
/// Each update draws a fresh batch from the training stream, clips the
/// gradient to `clip_norm` and takes one Adam step. Records are emitted at
/// step 0, every `eval_interval` updates and at the last update; each
/// evaluation uses a fresh `eval_batch` from the eval stream. A non-finite
/// loss aborts with [`Error::Diverged`].
pub fn train_loop<T: Scalar>(
    model: &mut Model<T>,
    source: &TaskSource,
    cfg: &TrainConfig,
    seeds: &Seeds,
    policy: ExecPolicy,
    mut sink: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<TrainSummary> {
    cfg.validate()?;
    let adam_cfg = cfg.adam(source.spec());
    let variant = model.cell.gate().variant().name().to_string();
    let mut train_rng = seeds.train_rng();
    let mut eval_rng = seeds.eval_rng();
    let mut adam = Adam::<T>::new(model.tensors().iter().map(|t| t.3.len()));
    let clip = T::of(cfg.clip_norm);

    // Deterministic runs keep the configured split so the summation order
    // does not depend on the thread count.
    let eval_shards = if cfg.deterministic { cfg.shards } else { cfg.shards.max(eval_shards(policy)) };
    let eval = |model: &Model<T>, rng: &mut Rng| -> Result<f64> {
        let batch = source.sample(cfg.eval_batch, rng)?;
        model.loss(&batch, policy, eval_shards)
    };

    let mut summary = TrainSummary {
        steps: 0,
        final_loss: f64::NAN,
        final_eval_loss: f64::NAN,
        best_eval_loss: f64::INFINITY,
        reached_target: None,
        max_grad_norm: 0.0,
    };
    let mut emit = |step: usize, loss: f64, eval_loss: f64, summary: &mut TrainSummary| -> Result<bool> {
        if !eval_loss.is_finite() {
            return Err(Error::Diverged { step, loss: eval_loss });
        }
        summary.final_eval_loss = eval_loss;
        summary.best_eval_loss = summary.best_eval_loss.min(eval_loss);
        sink(&MetricsRecord { step, loss, eval_loss, variant: variant.clone(), seed: seeds.init })?;
        let hit = cfg.target_loss.is_some_and(|t| eval_loss < t);
        if hit && summary.reached_target.is_none() {
            summary.reached_target = Some(step);
        }
        Ok(hit)
    };

    let mut since = 0.0;
    let mut count = 0usize;
    for step in 1..=cfg.steps {
        let batch = source.sample(cfg.batch_size, &mut train_rng)?;
        let (loss, mut grads) = model.loss_and_grad(&batch, policy, cfg.shards)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        if step == 1 {
            let e = eval(model, &mut eval_rng)?;
            if emit(0, loss, e, &mut summary)? {
                summary.final_loss = loss;
                return Ok(summary);
            }
        }
        let norm = clip_by_global_norm(&mut grads.tensors_mut(), clip).as_f64();
        summary.max_grad_norm = summary.max_grad_norm.max(norm);
        {
            let g: Vec<&[T]> = grads.tensors().into_iter().map(|t| t.3).collect();
            adam.step(&adam_cfg, &mut model.tensors_mut(), &g);
        }
        since += loss;
        count += 1;
        summary.steps = step;
        if step % cfg.eval_interval == 0 || step == cfg.steps {
            let mean = since / count as f64;
            summary.final_loss = mean;
            let e = eval(model, &mut eval_rng)?;
            since = 0.0;
            count = 0;
            if emit(step, mean, e, &mut summary)? {
                break;
            }
        }
    }
    if cfg.steps == 0 {
        let batch = source.sample(cfg.batch_size, &mut train_rng)?;
        let loss = model.loss(&batch, policy, cfg.shards)?;
        let e = eval(model, &mut eval_rng)?;
        summary.final_loss = loss;
        emit(0, loss, e, &mut summary)?;
    }
    Ok(summary)
}

/// Shards used for forward-only evaluation batches.
fn eval_shards(policy: ExecPolicy) -> usize {
    if policy.is_parallel() {
        crate::exec::threads()
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gatelib::Variant;
    use crate::train::TaskSpec;

    fn setup(v: Variant, spec: TaskSpec) -> (Model<f64>, TaskSource, Seeds) {
        let seeds = Seeds { init: 3, data: 4 };
        let src = TaskSource::new(&spec, &mut seeds.dataset_rng()).unwrap();
        let m = build_model(CellKind::Lstm, &GateConfig::for_variant(v), 8, &src, &seeds).unwrap();
        (m, src, seeds)
    }

    fn small_cfg(steps: usize) -> TrainConfig {
        TrainConfig { steps, batch_size: 4, eval_batch: 8, eval_interval: 5, ..Default::default() }
    }

    #[test]
    fn records_schedule_and_determinism() {
        let run = || {
            let (mut m, src, seeds) = setup(Variant::UniformRefine, TaskSpec::Copy { n: 3 });
            let mut recs = Vec::new();
            train_loop(&mut m, &src, &small_cfg(12), &seeds, ExecPolicy::Parallel, |r| {
                recs.push(r.clone());
                Ok(())
            })
            .unwrap();
            (recs, m)
        };
        let (a, ma) = run();
        let (b, mb) = run();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        let steps: Vec<usize> = a.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 5, 10, 12]);
        assert!(a.iter().all(|r| r.variant == "UR" && r.seed == 3));
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (mut m, src, seeds) = setup(Variant::Standard, TaskSpec::Adding { n: 6 });
        let before = m.clone();
        let mut cfg = small_cfg(10);
        cfg.learning_rate = Some(0.0);
        let mut recs = Vec::new();
        train_loop(&mut m, &src, &cfg, &seeds, ExecPolicy::Sequential, |r| {
            recs.push(r.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(m, before);
        // Same model on the same eval stream as a direct evaluation.
        let mut rng = seeds.eval_rng();
        let first = src.sample(8, &mut rng).unwrap();
        assert_eq!(recs[0].eval_loss, m.loss(&first, ExecPolicy::Sequential, 1).unwrap());
    }

    #[test]
    fn forgetting_override_sets_forget_bias() {
        let (m, _, _) = setup(Variant::Refine, TaskSpec::Forgetting { n: 4, bias_offset: 6.0 });
        assert!(m.cell.b[..8].iter().all(|&b| b == 6.0));
    }

    #[test]
    fn divergence_is_reported() {
        let (mut m, src, seeds) = setup(Variant::Standard, TaskSpec::Adding { n: 4 });
        m.by[0] = f64::NAN;
        let err = train_loop(&mut m, &src, &small_cfg(3), &seeds, ExecPolicy::Sequential, |_| Ok(())).unwrap_err();
        assert!(matches!(err, Error::Diverged { step: 1, .. }), "{err}");
    }

    #[test]
    fn target_loss_stops_early() {
        let (mut m, src, seeds) = setup(Variant::Standard, TaskSpec::Adding { n: 4 });
        let mut cfg = small_cfg(50);
        cfg.target_loss = Some(1e9);
        let s = train_loop(&mut m, &src, &cfg, &seeds, ExecPolicy::Sequential, |_| Ok(())).unwrap();
        assert_eq!(s.reached_target, Some(0));
        assert_eq!(s.steps, 0);
    }
}

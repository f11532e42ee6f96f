//! `urgate`: train, sweep, analyze, gradient-check and generate data.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 divergence,
//! 3 gradient-check failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use urgate_core::cells::CellKind;
use urgate_core::experiment::{analyze, run_experiment, run_sweep, AnalysisKind, AnalyzeRequest, ExperimentConfig};
use urgate_core::gatelib::Variant;
use urgate_core::ndmath::Rng;
use urgate_core::tasks::{gen_adding, gen_copy, synthetic_digits, write_batch_cache, write_idx_images, write_idx_labels};
use urgate_core::train::{gradcheck, FaultInjection, GateTap, GradcheckConfig};
use urgate_core::{Error, ExecPolicy};

#[derive(Parser)]
#[command(name = "urgate", version, about = "Gated recurrent cell experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's "out".
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the init seed (and a sweep's seed list).
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed shard count and reduction order regardless of thread count.
    #[arg(long)]
    deterministic: bool,
    /// Sweep only: reuse finished runs with an identical config.
    #[arg(long)]
    resume: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Analysis {
    Histogram,
    Timescale,
    Bounds,
    Contour,
    Survival,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tap {
    Raw,
    Effective,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Copy,
    Adding,
    Pixel,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration.
    Train(RunArgs),
    /// Train every variant x seed of the config's sweep section.
    Sweep(RunArgs),
    /// Write an analysis CSV.
    Analyze {
        #[arg(value_enum)]
        kind: Analysis,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint for histogram and timescale analyses.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Experiment config supplying the probe task.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, value_enum, default_value = "effective")]
        tap: Tap,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare analytic and central-difference gradients.
    Gradcheck {
        /// Base settings (JSON); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        /// One cell; all three when omitted.
        #[arg(long)]
        cell: Option<CellKind>,
        /// One variant; all nine when omitted.
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of consecutive seeds to check.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        input: Option<usize>,
        #[arg(long)]
        length: Option<usize>,
        /// Scale one analytic gradient group, e.g. `w.forget:1.5`.
        #[arg(long, value_name = "GROUP:SCALE")]
        inject_fault: Option<String>,
        /// Also write the report here as gradcheck.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate task data files.
    GenData {
        #[arg(value_enum)]
        kind: DataKind,
        #[arg(long)]
        out: PathBuf,
        /// Sequence length parameter (copy, adding).
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Sequences (copy, adding) or images (pixel).
        #[arg(long, default_value_t = 1024)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Error(Error),
    Gradcheck(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn load_run_config(a: &RunArgs) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(out) = &a.out {
        cfg.out = Some(out.clone());
    }
    if let Some(s) = a.seed {
        cfg.seeds.init = s;
        if let Some(sw) = cfg.sweep.as_mut() {
            sw.init_seeds = vec![s];
        }
    }
    if a.deterministic {
        cfg.train.deterministic = true;
    }
    if a.resume {
        match cfg.sweep.as_mut() {
            Some(sw) => sw.resume = true,
            None => return Err(Error::config("--resume", "needs a sweep section")),
        }
    }
    let out = cfg.out_dir()?.to_path_buf();
    Ok((cfg, out))
}

fn parse_fault(s: &str) -> Result<FaultInjection, Error> {
    let bad = || Error::config("--inject-fault", format!("expected GROUP:SCALE, got {s:?}"));
    let (group, scale) = s.rsplit_once(':').ok_or_else(bad)?;
    Ok(FaultInjection { group: group.into(), scale: scale.parse().map_err(|_| bad())? })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    urgate_core::io::write_atomic(path, text.as_bytes())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let policy = ExecPolicy::default();
    match cli.cmd {
        Command::Train(a) => {
            let (cfg, out) = load_run_config(&a)?;
            let o = run_experiment(&cfg, &out, policy)?;
            let s = o.summary.expect("completed run has a summary");
            println!(
                "{} {} seed {}: {} steps, final eval loss {:.6}, best {:.6}",
                cfg.task.name(),
                o.variant,
                o.seed,
                s.steps,
                s.final_eval_loss,
                s.best_eval_loss
            );
        }
        Command::Sweep(a) => {
            let (cfg, out) = load_run_config(&a)?;
            let o = run_sweep(&cfg, &out, policy)?;
            for r in &o.runs {
                let end = r.summary.as_ref().map_or(f64::NAN, |s| s.final_eval_loss);
                println!("{} seed {}: {:?}, final eval loss {end:.6}", r.variant, r.seed, r.status);
            }
            println!("aggregate: {}", out.join("aggregate.csv").display());
        }
        Command::Analyze { kind, out, checkpoint, config, batch, points, tap, seed } => {
            let mut req = AnalyzeRequest::new(match kind {
                Analysis::Histogram => AnalysisKind::Histogram,
                Analysis::Timescale => AnalysisKind::Timescale,
                Analysis::Bounds => AnalysisKind::Bounds,
                Analysis::Contour => AnalysisKind::Contour,
                Analysis::Survival => AnalysisKind::Survival,
            });
            req.checkpoint = checkpoint;
            req.config = config.as_deref().map(ExperimentConfig::load).transpose()?;
            req.batch = batch;
            req.points = points;
            req.seed = seed;
            req.tap = match tap {
                Tap::Raw => GateTap::Raw,
                Tap::Effective => GateTap::Effective,
            };
            println!("{}", analyze(&req, &out, policy)?.display());
        }
        Command::Gradcheck { config, cell, variant, seed, seeds, hidden, input, length, inject_fault, out } => {
            let base: Option<GradcheckConfig> = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    Some(GradcheckConfig::from_json(&text)?)
                }
                None => None,
            };
            let cells = match (cell, &base) {
                (Some(c), _) => vec![c],
                (None, Some(b)) => vec![b.cell],
                (None, None) => CellKind::ALL.to_vec(),
            };
            let variants = match (variant, &base) {
                (Some(v), _) => vec![v],
                (None, Some(b)) => vec![b.variant],
                (None, None) => Variant::ALL.to_vec(),
            };
            let fault = inject_fault.as_deref().map(parse_fault).transpose()?;
            let first = seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0);
            let mut reports = Vec::new();
            let mut failing = Vec::new();
            for &c in &cells {
                for &v in &variants {
                    for s in first..first + seeds.max(1) {
                        let mut g = base.clone().unwrap_or_else(|| GradcheckConfig::new(c, v, s));
                        (g.cell, g.variant, g.seed) = (c, v, s);
                        g.hidden = hidden.unwrap_or(g.hidden);
                        g.input = input.unwrap_or(g.input);
                        g.length = length.unwrap_or(g.length);
                        if fault.is_some() {
                            g.inject_fault = fault.clone();
                        }
                        let r = gradcheck(&g, policy)?;
                        println!("{c} {} seed {s}: max relative error {:.3e}", v.name(), r.max_rel_err);
                        for grp in r.failing_groups() {
                            failing.push(format!("{c} {} seed {s}: {grp}", v.name()));
                        }
                        reports.push(r);
                    }
                }
            }
            if let Some(dir) = out {
                write_json(&dir.join("gradcheck.json"), &reports)?;
            }
            if !failing.is_empty() {
                return Err(Failure::Gradcheck(failing));
            }
        }
        Command::GenData { kind, out, n, count, seed } => {
            let mut rng = Rng::new(seed, 0);
            match kind {
                DataKind::Copy => {
                    let p = out.join("copy.bin");
                    write_batch_cache(&p, &gen_copy(n, count, &mut rng)?.to_task())?;
                    println!("{}", p.display());
                }
                DataKind::Adding => {
                    let p = out.join("adding.bin");
                    write_batch_cache(&p, &gen_adding(n, count, &mut rng)?.to_task())?;
                    println!("{}", p.display());
                }
                DataKind::Pixel => {
                    let (images, labels) = synthetic_digits(count, &mut rng);
                    write_idx_images(&out.join("images.idx"), &images)?;
                    write_idx_labels(&out.join("labels.idx"), &labels)?;
                    println!("{}", out.join("images.idx").display());
                    println!("{}", out.join("labels.idx").display());
                }
            }
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("URGATE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config("URGATE_THREADS", format!("{v:?} is not a positive integer")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::config("URGATE_THREADS", e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e @ Error::Diverged { .. })) => {
            eprintln!("diverged: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Gradcheck(groups)) => {
            eprintln!("gradcheck failed in {} group(s):", groups.len());
            for g in groups {
                eprintln!("  {g}");
            }
            ExitCode::from(3)
        }
    }
}

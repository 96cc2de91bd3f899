use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gblend::checkpoint::load_checkpoint;
use gblend::config::RunConfig;
use gblend::dataset::{preprocess, write_dataset};
use gblend::formats::load_stats;
use gblend::replay::{encode_replay, recorded_deviation, replay_both};
use gblend::report::{aggregate, aggregate_json, aggregate_text, metrics_table, RunMetrics, ScoresJson};
use gblend::run::{self, execute, load_data, split_for};
use gblend::runner::{run_jobs, worker_count};
use gblend::trace::load_trace;
use gblend_core::synth::generate_synthetic;
use gblend_core::train::{EvalHead, Mode};
use serde::Serialize;

const REPLAY_TOLERANCE: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "gblend", version, about = "Two-stream sleep staging with adaptive loss blending")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute time-frequency images and normalization statistics.
    Preprocess {
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the data directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one run, or one run per seed with --seeds.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Comma-separated seeds; each run goes to <out>/seed_<s>.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint.
    Eval {
        /// Run directory supplying the config, checkpoint and statistics.
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Subjects::Test)]
        subjects: Subjects,
        /// Write the scores as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both adaptive schedulers over an exported loss trace.
    ReplayWeights {
        trace: PathBuf,
        /// Defaults to the window recorded in the trace.
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Fail unless the recorded weights are reproduced within 1e-12.
        #[arg(long)]
        check: bool,
    },
    /// Aggregate the metrics of several run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Subjects {
    Train,
    Valid,
    Test,
    All,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    Mode::from_name(s).ok_or_else(|| {
        let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
        format!("unknown mode {s:?}, expected one of {}", names.join(", "))
    })
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(RunConfig::preset("asymmetric_overfit", 0).expect("built-in preset")),
    }
}

fn print_metrics(m: &RunMetrics, dir: &Path) {
    println!(
        "{}: {} seed {} final valid loss {:.4}, test accuracy {:.4}, kappa {:.4}",
        dir.display(),
        m.mode,
        m.seed,
        m.final_valid_loss,
        m.scores.accuracy,
        m.scores.kappa
    );
}

#[derive(Serialize)]
struct EvalJson {
    subjects: &'static str,
    epochs: u64,
    loss: f64,
    scores: ScoresJson,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData { config, seed, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            let subjects = generate_synthetic(&cfg.experiment.spec)?;
            write_dataset(&out, &subjects)?;
            fs::write(out.join(run::CONFIG_FILE), cfg.render()).with_context(|| format!("writing into {}", out.display()))?;
            println!("wrote {} subjects to {}", subjects.len(), out.display());
        }
        Command::Preprocess { data, out } => {
            let out = out.unwrap_or_else(|| data.clone());
            let n = preprocess(&data, &out)?;
            println!("wrote time-frequency images for {n} subjects to {}", out.display());
        }
        Command::Train { config, mode, seed, seeds, steps, data, out } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(m) = mode {
                cfg.experiment.train.mode = m;
            }
            if let Some(s) = steps {
                cfg.experiment.train.steps = s;
            }
            if let Some(d) = data {
                cfg.data_dir = Some(d);
            }
            if let Some(s) = seed {
                cfg.set_seed(s);
            }
            cfg.experiment.train.validate()?;
            match seeds {
                None => print_metrics(&execute(&cfg, &out)?, &out),
                Some(seeds) => {
                    let jobs: Vec<(RunConfig, PathBuf)> = seeds
                        .iter()
                        .map(|&s| {
                            let mut c = cfg.clone();
                            c.set_seed(s);
                            (c, out.join(format!("seed_{s}")))
                        })
                        .collect();
                    let results = run_jobs(jobs.len(), worker_count(), |i| execute(&jobs[i].0, &jobs[i].1));
                    for ((_, dir), r) in jobs.iter().zip(results) {
                        print_metrics(&r.with_context(|| format!("run {}", dir.display()))?, dir);
                    }
                }
            }
        }
        Command::Eval { run: run_dir, config, checkpoint, stats, data, subjects, out } => {
            let from_run = |name: &str, given: Option<PathBuf>| -> Result<PathBuf> {
                given
                    .or_else(|| run_dir.as_ref().map(|d| d.join(name)))
                    .ok_or_else(|| anyhow!("pass --run or --{}", name.split('.').next().unwrap_or(name)))
            };
            let cfg_path = from_run(run::CONFIG_FILE, config)?;
            let mut cfg = load_config(Some(&cfg_path))?;
            if let Some(d) = data {
                cfg.data_dir = Some(d);
            }
            let model = load_checkpoint(&from_run(run::CHECKPOINT_FILE, checkpoint)?)?;
            let stats = load_stats(&from_run(run::STATS_FILE, stats)?)?;
            let data = load_data(&cfg)?;
            let split = split_for(&cfg, data.len())?;
            let (name, ids): (&'static str, Vec<usize>) = match subjects {
                Subjects::Train => ("train", split.train),
                Subjects::Valid => ("valid", split.valid),
                Subjects::Test => ("test", split.test),
                Subjects::All => ("all", (0..data.len()).collect()),
            };
            let t = cfg.train();
            let head = EvalHead::for_mode(t.mode, t.self_ensemble);
            let ev = run::score(&model, &stats, &data, &ids, head, t.batch_size)?;
            let report = ev.report()?;
            println!("{name} subjects, {} epochs, loss {:.6}\n", ev.truth.len(), ev.head_loss);
            print!("{}", metrics_table(&report));
            if let Some(path) = out {
                let j = EvalJson { subjects: name, epochs: ev.truth.len() as u64, loss: ev.head_loss, scores: ScoresJson::from(&report) };
                fs::write(&path, serde_json::to_string_pretty(&j)? + "\n").with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::ReplayWeights { trace, window, out, check } => {
            let t = load_trace(&trace)?;
            let r = replay_both(&t, window.unwrap_or(t.window))?;
            let text = encode_replay(&t, &r);
            match &out {
                Some(p) => fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            match recorded_deviation(&t, &r) {
                Some(d) => {
                    eprintln!("recorded {} weights: max deviation {d:e}", t.scheduler);
                    if check && !(d <= REPLAY_TOLERANCE) {
                        bail!("replayed weights deviate from the recording by {d:e}");
                    }
                }
                None if check => bail!("trace scheduler {:?} is not adaptive, nothing to check", t.scheduler),
                None => {}
            }
        }
        Command::Report { runs, json } => {
            let metrics = runs
                .iter()
                .map(|d| {
                    let p = d.join(run::METRICS_JSON);
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str::<RunMetrics>(&text).with_context(|| format!("parsing {}", p.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            let a = aggregate(&metrics)?;
            print!("{}", aggregate_text(&a));
            if let Some(p) = json {
                fs::write(&p, aggregate_json(&a)? + "\n").with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

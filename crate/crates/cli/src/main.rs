//! `disparity`: discover admissible sets and decompose group disparities.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 identifiability
//! refusal.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use disparity_core::pipeline::{self, Report};
use disparity_core::rng::{substream, SIM};
use disparity_core::scm::{analytic_effects, monte_carlo_effects, true_admissible_sets, AdmissibleTruth, GroundTruth};
use disparity_core::{Dataset, Error, ScmSpec};

use config::{parse_block, FileConfig, RunConfig};

#[derive(Parser)]
#[command(name = "disparity", version, about = "Adjusted and unadjusted disparity decomposition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect mediators and their admissible sets.
    Discover(RunArgs),
    /// Discovery followed by effect estimates with bootstrap intervals.
    Decompose(RunArgs),
    /// Sample a structural model to CSV and write its ground truth.
    Simulate(SimArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    exposure: Option<String>,
    #[arg(long)]
    outcome: Option<String>,
    /// Context columns, comma separated. Defaults to the exposure.
    #[arg(long, value_delimiter = ',')]
    contexts: Option<Vec<String>>,
    #[arg(long)]
    alpha: Option<f64>,
    /// fisher_z, hsic_residual or oracle:<graph file>.
    #[arg(long)]
    ci_test: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; the plot CSV is written beside it. Stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// empirical or kde.
    #[arg(long)]
    mode: Option<String>,
    /// linear or knn.
    #[arg(long)]
    model: Option<String>,
    /// Neighbours of the knn model.
    #[arg(long)]
    k: Option<usize>,
    /// Bootstrap replicates.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Interval level.
    #[arg(long)]
    level: Option<f64>,
    /// Joint mediator block such as `m1+m2`; repeatable.
    #[arg(long)]
    joint: Vec<String>,
}

#[derive(Args)]
struct SimArgs {
    /// Structural model file.
    #[arg(long)]
    scm: PathBuf,
    /// Rows to sample.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth JSON. Defaults to `<out>.truth.json`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Joint mediator block such as `m1+m2`; repeatable.
    #[arg(long)]
    joint: Vec<String>,
    /// Monte Carlo draws for nonlinear models.
    #[arg(long, default_value_t = 1_000_000)]
    n_sim: usize,
}

impl RunArgs {
    fn into_config(self) -> anyhow::Result<RunConfig> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let flags = FileConfig {
            input: self.input,
            exposure: self.exposure,
            outcome: self.outcome,
            contexts: self.contexts,
            alpha: self.alpha,
            ci_test: self.ci_test,
            model: self.model,
            k: self.k,
            mode: self.mode,
            bootstrap: self.bootstrap,
            level: self.level,
            seed: self.seed,
            out: self.out,
            joint: (!self.joint.is_empty()).then_some(self.joint),
        };
        RunConfig::resolve(file.overridden_by(flags))
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write `{}`", path.display()))
}

fn emit(report: &Report, out: Option<&Path>, plot: bool) -> anyhow::Result<()> {
    let json = report.to_json()?;
    match out {
        Some(p) => {
            write(p, &json)?;
            if plot {
                write(&sibling(p, ".plot.csv"), &report.plot_csv()?)?;
            }
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn run_pipeline(args: RunArgs, decompose: bool) -> anyhow::Result<u8> {
    let cfg = args.into_config()?;
    let data = Dataset::from_csv_path(&cfg.input)?;
    let report = if decompose {
        pipeline::decompose(&data, &cfg.pipeline)?
    } else {
        pipeline::discover(&data, &cfg.pipeline)?
    };
    emit(&report, cfg.out.as_deref(), decompose)?;
    for r in &report.meta.refusals {
        eprintln!("refused: {}", r.message);
    }
    Ok(if report.is_refused() { 2 } else { 0 })
}

#[derive(Serialize)]
struct TruthReport {
    scm: String,
    n: usize,
    seed: u64,
    exposure: String,
    outcome: String,
    effects: Vec<GroundTruth>,
    admissible: Vec<AdmissibleTruth>,
}

fn simulate(args: SimArgs) -> anyhow::Result<u8> {
    let text = fs::read_to_string(&args.scm).with_context(|| format!("cannot read `{}`", args.scm.display()))?;
    let spec: ScmSpec = text.parse()?;
    let outcome = spec.outcome()?.to_string();
    let data = spec.sample(args.n, args.seed)?;
    let file = fs::File::create(&args.out).with_context(|| format!("cannot write `{}`", args.out.display()))?;
    data.write_csv(file)?;

    let mut blocks: Vec<Vec<String>> = spec
        .observed()
        .into_iter()
        .filter(|v| *v != spec.exposure && *v != outcome)
        .map(|v| vec![v.to_string()])
        .collect();
    for b in &args.joint {
        blocks.push(parse_block(b)?);
    }
    let truth_seed = substream(args.seed, SIM);
    let effects = blocks
        .iter()
        .map(|b| match analytic_effects(&spec, b) {
            Err(Error::Unsupported(_)) => monte_carlo_effects(&spec, b, args.n_sim, truth_seed),
            other => other,
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut admissible = Vec::new();
    for b in blocks.iter().filter(|b| b.len() == 1) {
        match true_admissible_sets(&spec, &b[0]) {
            Ok(t) => admissible.push(t),
            Err(Error::Unsupported(msg)) => eprintln!("skipped admissible truth for {}: {msg}", b[0]),
            Err(e) => return Err(e.into()),
        }
    }
    let truth = TruthReport {
        scm: args.scm.display().to_string(),
        n: args.n,
        seed: args.seed,
        exposure: spec.exposure.clone(),
        outcome,
        effects,
        admissible,
    };
    let path = args.truth.unwrap_or_else(|| sibling(&args.out, ".truth.json"));
    write(&path, &serde_json::to_string_pretty(&truth)?)?;
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Discover(a) => run_pipeline(a, false),
        Command::Decompose(a) => run_pipeline(a, true),
        Command::Simulate(a) => {
            if a.n_sim < 2 {
                bail!("--n-sim must be at least 2");
            }
            simulate(a)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

//! The `aqua` command-line pipeline.
//!
//! ```text
//! aqua distort --synthetic 200 --out run
//! aqua label --out run
//! aqua features --out run
//! aqua train --out run --learning-rate 1e-3
//! aqua eval --out run
//! ```
//!
//! Every subcommand reads its inputs from, and writes its outputs to, the
//! `--out` directory unless paths are given explicitly.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use commands::{bench, data, filter, model};
use config::{ConfigFile, GlobalParams};

#[derive(Debug, Parser)]
#[command(name = "aqua", version, about = "Analytical quality assessment for video-analytics frames")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct CommonArgs {
    /// TOML file with a [global] section and per-command sections.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Seed for every random stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for inputs and outputs.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "AQUA_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the distorted dataset and its manifest.
    Distort(data::DistortArgs),
    /// Compute opinion-score targets from classifier outputs.
    Label(data::LabelArgs),
    /// Extract feature vectors for every manifest entry.
    Features(data::FeaturesArgs),
    /// Train the quality regressor.
    Train(model::TrainArgs),
    /// Score feature vectors with a trained model.
    Score(model::ScoreArgs),
    /// Correlation, ROC and accuracy reports.
    Eval(model::EvalArgs),
    /// Run the frame filter over a stream.
    Filter(filter::FilterArgs),
    /// Run the filter over a grid of thresholds and strides.
    Sweep(filter::SweepArgs),
    /// Time feature extraction, inference and filtering.
    Bench(bench::BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Distort(_) => "distort",
            Command::Label(_) => "label",
            Command::Features(_) => "features",
            Command::Train(_) => "train",
            Command::Score(_) => "score",
            Command::Eval(_) => "eval",
            Command::Filter(_) => "filter",
            Command::Sweep(_) => "sweep",
            Command::Bench(_) => "bench",
        }
    }
}

/// Resolved configuration handed to each subcommand.
pub struct Context {
    pub file: ConfigFile,
    pub global: GlobalParams,
}

impl Context {
    pub fn out(&self, name: &str) -> PathBuf {
        self.global.out.join(name)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = ConfigFile::load(cli.common.config.as_deref())?;
    let global: GlobalParams = file.params("global", &["out"], &cli.common)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(global.threads).build()?;
    std::fs::create_dir_all(&global.out).map_err(|e| aqua::Error::Io { path: global.out.clone(), source: e })?;
    let ctx = Context { file, global };
    let name = cli.command.name();
    pool.install(|| match cli.command {
        Command::Distort(a) => data::distort(&ctx, a),
        Command::Label(a) => data::label(&ctx, a),
        Command::Features(a) => data::features(&ctx, a),
        Command::Train(a) => model::train(&ctx, a),
        Command::Score(a) => model::score(&ctx, a),
        Command::Eval(a) => model::eval(&ctx, a),
        Command::Filter(a) => filter::filter(&ctx, a),
        Command::Sweep(a) => filter::sweep(&ctx, a),
        Command::Bench(a) => bench::bench(&ctx, a),
    })
    .map_err(|e| e.context(name))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

/// Machine-readable category for an error chain.
pub fn error_category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<aqua::Error>() {
            return e.category();
        }
        if cause.is::<config::ConfigError>() || cause.is::<toml::de::Error>() || cause.is::<serde_json::Error>() || cause.is::<clap::Error>() {
            return "config";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

/// `error[<category>]: <context>: <cause>` on one line.
pub fn format_error(err: &anyhow::Error) -> String {
    let mut chain: Vec<String> = Vec::new();
    for cause in err.chain() {
        let msg = cause.to_string().replace('\n', " ");
        if !chain.last().is_some_and(|prev| prev.contains(&msg)) {
            chain.push(msg);
        }
    }
    format!("error[{}]: {}", error_category(err), chain.join(": "))
}

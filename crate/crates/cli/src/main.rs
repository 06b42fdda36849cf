//! `soundscape`: command-line front end for the impression-prediction pipeline.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "soundscape", version, about = "Predict soundscape impressions from sound and aerial imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
struct Common {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for extraction, tile fetching and matrix cells.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Continue from trial logs left by an interrupted run.
    #[arg(long, global = true)]
    resume: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set n_iter=20`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute 126-value acoustic features for every recording in a manifest.
    ExtractFeatures {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        audio_root: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        silence_floor: Option<f64>,
        /// `statistical` or `exceedance`.
        #[arg(long)]
        percentile: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Download and stitch the aerial window of every recording.
    FetchTiles {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// URL template with `{quadkey}`, `{x}`, `{y}` and `{z}` placeholders.
        #[arg(long)]
        tile_url: Option<String>,
        /// Serve tiles from `<dir>/<zoom>/<quadkey>.png` instead of HTTP.
        #[arg(long)]
        tile_dir: Option<PathBuf>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Reduce image embeddings to 128-value bottleneck features.
    Embed {
        /// JSON-lines file of 2048-value embeddings.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Directory of aerial PNGs, embedded with the built-in baseline.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Autoencoder file; loaded when it exists, written after training otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Train the sound-source predictor.
    TrainSs {
        #[command(flatten)]
        data: DataArgs,
        /// `ES`, `AP` or `ES+AP`.
        #[arg(long)]
        input: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one impression model.
    TrainImpression {
        #[command(flatten)]
        data: DataArgs,
        /// Feature combination, e.g. `ES+SS`.
        #[arg(long)]
        combo: Option<String>,
        /// `oracle` or `eSS[ES]`, `eSS[AP]`, `eSS[ES+AP]`.
        #[arg(long)]
        ss_source: Option<String>,
        /// Sound-source model written by `train-ss`.
        #[arg(long)]
        ss_model: Option<PathBuf>,
        /// Comma-separated; more than one trains a joint model.
        #[arg(long)]
        impressions: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full comparison matrix and write a report.
    Experiment {
        #[command(flatten)]
        data: DataArgs,
        /// Only the 12 cells that use listener sound-source ratings.
        #[arg(long)]
        oracle_only: bool,
        /// One two-output model per cell instead of one per impression.
        #[arg(long)]
        joint: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic dataset with known structure.
    Synth {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        attribute_noise: Option<f64>,
        #[arg(long)]
        embedding_noise: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Acoustic features from `extract-features`.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Bottleneck features from `embed`.
    #[arg(long)]
    bottlenecks: Option<PathBuf>,
}

impl DataArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("manifest", path(&self.manifest)),
            ("features", path(&self.features)),
            ("bottlenecks", path(&self.bottlenecks)),
        ]
    }
}

fn path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn text<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

/// Defaults, then the config file, then `--set`, then dedicated flags.
fn resolve(common: &Common, pairs: Vec<(&'static str, Option<String>)>) -> Result<RunConfig> {
    let mut cfg = RunConfig::defaults();
    if let Some(file) = &common.config {
        cfg.merge_file(file)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v)?;
    }
    let mut all = pairs;
    all.push(("seed", text(&common.seed)));
    all.push(("out", path(&common.out)));
    for (k, v) in all {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let (common, pairs, cmd): (&Common, Vec<(&'static str, Option<String>)>, commands::Cmd) = match &cli.command {
        Command::ExtractFeatures {
            manifest,
            audio_root,
            silence_floor,
            percentile,
            common,
        } => (
            common,
            vec![
                ("manifest", path(manifest)),
                ("audio_root", path(audio_root)),
                ("silence_floor", text(silence_floor)),
                ("percentile", percentile.clone()),
            ],
            commands::Cmd::ExtractFeatures,
        ),
        Command::FetchTiles {
            manifest,
            tile_url,
            tile_dir,
            cache_dir,
            common,
        } => (
            common,
            vec![
                ("manifest", path(manifest)),
                ("tile_url", tile_url.clone()),
                ("tile_dir", path(tile_dir)),
                ("cache_dir", path(cache_dir)),
            ],
            commands::Cmd::FetchTiles,
        ),
        Command::Embed {
            embeddings,
            images,
            model,
            epochs,
            common,
        } => (
            common,
            vec![
                ("embeddings", path(embeddings)),
                ("images", path(images)),
                ("model", path(model)),
                ("ae_epochs", text(epochs)),
            ],
            commands::Cmd::Embed,
        ),
        Command::TrainSs { data, input, common } => {
            let mut p = data.pairs();
            p.push(("ss_input", input.clone()));
            (common, p, commands::Cmd::TrainSs)
        }
        Command::TrainImpression {
            data,
            combo,
            ss_source,
            ss_model,
            impressions,
            common,
        } => {
            let mut p = data.pairs();
            p.extend([
                ("combo", combo.clone()),
                ("ss_source", ss_source.clone()),
                ("ss_model", path(ss_model)),
                ("impressions", impressions.clone()),
            ]);
            (common, p, commands::Cmd::TrainImpression)
        }
        Command::Experiment {
            data,
            oracle_only,
            joint,
            common,
        } => {
            let mut p = data.pairs();
            p.extend([
                ("oracle_only", oracle_only.then(|| "true".to_string())),
                ("joint", joint.then(|| "true".to_string())),
            ]);
            (common, p, commands::Cmd::Experiment)
        }
        Command::Synth {
            count,
            attribute_noise,
            embedding_noise,
            common,
        } => (
            common,
            vec![
                ("synth_count", text(count)),
                ("synth_attribute_noise", text(attribute_noise)),
                ("synth_embedding_noise", text(embedding_noise)),
            ],
            commands::Cmd::Synth,
        ),
    };
    let cfg = resolve(common, pairs)?;
    if let Some(n) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    commands::execute(cmd, &cfg, common.resume)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

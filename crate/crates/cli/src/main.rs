use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use virality::config::RunConfig;
use virality::pipeline::{self, ComplianceOutput, RowSelection};
use virality::provenance::Provenance;
use virality::synth::SynthSpec;

#[derive(Parser)]
#[command(name = "virality", version, about = "Virality ranking toolkit")]
struct Cli {
    /// Seed applied to training, splitting and generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Only log errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic tweet corpus as JSONL.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        rows: usize,
        /// Also write deletion requests for a sample of the corpus.
        #[arg(long)]
        deletions_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.02)]
        delete_status_rate: f64,
        #[arg(long, default_value_t = 0.005)]
        delete_user_rate: f64,
    },
    /// Append JSONL tweet records to a store.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Apply JSONL deletion requests to a store and compact it.
    Comply {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Extract the feature matrix from a store snapshot.
    Featurize {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a model on the training split of a feature file.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Score a feature file with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        rows: RowSelection,
    },
    /// Write a metrics report for a saved model.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        rows: RowSelection,
    },
    /// Train and evaluate every modality subset plus the follower baseline.
    Ablate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run every stage named by a config file.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn emit<T: Serialize>(summary: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(summary)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Generate {
            out,
            rows,
            deletions_out,
            delete_status_rate,
            delete_user_rate,
        } => {
            let spec = SynthSpec {
                n_rows: rows,
                seed: seed.unwrap_or(0),
                ..SynthSpec::default()
            };
            let compliance = deletions_out.map(|path| ComplianceOutput {
                path,
                status_rate: delete_status_rate,
                user_rate: delete_user_rate,
            });
            emit(&pipeline::generate(&spec, &out, compliance.as_ref())?)
        }
        Command::Ingest { input, store } => emit(&pipeline::ingest(&input, &store)?),
        Command::Comply { input, store } => emit(&pipeline::comply(&input, &store)?),
        Command::Featurize { store, out } => {
            emit(&pipeline::featurize(&store, &out, Provenance::command("featurize"))?)
        }
        Command::Train {
            features,
            config,
            model_out,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            emit(&pipeline::train(&features, &cfg, &model_out)?)
        }
        Command::Predict {
            model,
            features,
            out,
            config,
            rows,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            emit(&pipeline::predict(&model, &features, &out, rows, &cfg.split)?)
        }
        Command::Evaluate {
            model,
            features,
            report,
            config,
            rows,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            emit(&pipeline::evaluate(&model, &features, &report, rows, &cfg.split)?)
        }
        Command::Ablate {
            features,
            config,
            report,
        } => {
            let cfg = load_config(config.as_deref(), seed)?;
            let report = pipeline::ablate(&features, &cfg, &report)?;
            emit(&report)?;
            if report.is_partial() {
                bail!("ablation rows failed: {}", report.failed.join(", "));
            }
            Ok(())
        }
        Command::Pipeline { config } => {
            let cfg = load_config(Some(&config), seed)?;
            let manifest = pipeline::run_pipeline(&cfg)?;
            emit(&manifest)?;
            if let Some(stage) = manifest.failed_stage() {
                bail!(
                    "stage {} failed: {}",
                    stage.stage,
                    stage.error.as_deref().unwrap_or("unknown error")
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::warn!("thread pool: {e}");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

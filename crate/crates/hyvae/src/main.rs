use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hyvae::pipeline::{self, Layout, ModelChoice, Outcome, VizSource};
use hyvae::{CliError, Result, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hyvae", version, about = "Hybrid variational autoencoders for implicit-feedback recommendation")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fixed reduction order. Every computation here is single-threaded, so
    /// this is always the case; the flag is accepted for scripts.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Svae,
    Hvae,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Source {
    UserLatent,
    MovieEmbedding,
    EmbeddingDrift,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Binarize ratings and write the click matrix, folds and holdouts.
    Prepare,
    /// Extract the configured movie feature set.
    Features,
    /// Train the Movie-VAE and export embeddings.
    TrainMvae,
    /// Train one Standard-VAE per fold.
    TrainSvae,
    /// Train one Hybrid-VAE per fold.
    TrainHvae,
    /// Score test users under the configured schemes.
    Eval {
        #[arg(long, value_enum, default_value = "svae")]
        model: Model,
        /// Evaluate this checkpoint on every fold instead.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Cluster and project latents or embeddings to SVG and CSV.
    Viz {
        #[arg(long, value_enum)]
        source: Source,
        /// Cluster count; defaults to the config's user or movie value.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value = "svae")]
        model: Model,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn choice(model: Model, checkpoint: Option<PathBuf>) -> ModelChoice {
    match (checkpoint, model) {
        (Some(p), _) => ModelChoice::Checkpoint(p),
        (None, Model::Svae) => ModelChoice::Svae,
        (None, Model::Hvae) => ModelChoice::Hvae,
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::from_toml("")?,
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(out) = cli.out {
        cfg.paths.out = out;
    }
    cfg.validate()?;
    let layout = Layout::new(cfg.paths.out.clone());
    match cli.command {
        Command::Prepare => pipeline::cmd_prepare(&cfg, &layout),
        Command::Features => pipeline::cmd_features(&cfg, &layout),
        Command::TrainMvae => pipeline::cmd_train_mvae(&cfg, &layout),
        Command::TrainSvae => pipeline::cmd_train_svae(&cfg, &layout),
        Command::TrainHvae => pipeline::cmd_train_hvae(&cfg, &layout),
        Command::Eval { model, checkpoint } => pipeline::cmd_eval(&cfg, &layout, &choice(model, checkpoint)),
        Command::Viz {
            source,
            k,
            model,
            checkpoint,
        } => {
            let source = match source {
                Source::UserLatent => VizSource::UserLatent,
                Source::MovieEmbedding => VizSource::MovieEmbedding,
                Source::EmbeddingDrift => VizSource::EmbeddingDrift,
            };
            pipeline::cmd_viz(&cfg, &layout, source, k, &choice(model, checkpoint))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(outcome) => {
            print!("{outcome}");
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            let code: i32 = CliError::exit_code(&err);
            ExitCode::from(code as u8)
        }
    }
}

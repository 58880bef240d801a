//! CLI driver for the lesion/encoding experiment pipeline.
//!
//! Each subcommand runs one stage against the output directory; `pipeline`
//! runs them all (or the subset given with `--stages`). Exit codes: 0 on
//! success, 2 for config errors, 3 for missing dependency artifacts, 4 for
//! numeric failures.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use lesionenc::pipeline::{run_pipeline, ExperimentConfig, Stage};
use lesionenc::Error;

#[derive(Parser)]
#[command(name = "lesionenc", version, about = "Lesion a micro language model and measure the encoding consequences")]
struct Cli {
    /// Experiment config JSON; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,

    /// Master seed; rederives every internal seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (0 = all cores). Outputs do not depend on this.
    #[arg(long, default_value_t = 0, global = true)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic corpora, subject specs and ROIs.
    Synth,
    /// Train the base model on the mixed corpus.
    Pretrain,
    /// Fine-tune per language, accumulating gradient magnitudes.
    Finetune,
    /// Compute per-language, core and specificity importance maps.
    Importance,
    /// Select core/specific/random lesion masks.
    Masks,
    /// Apply masks, producing the lesioned model variants.
    Ablate,
    /// Extract final-layer embeddings and evaluate perplexity per variant.
    Embed,
    /// Generate synthetic BOLD and fit cross-validated encoding models.
    Encode,
    /// Group-level statistics: t-tests, FDR, conjunction, ROI summary.
    Stats,
    /// Language processing index maps.
    Lpi,
    /// Silhouette and PCA projections of embedding samples.
    Geometry,
    /// Sentence-length probing on frozen embeddings.
    Probe,
    /// Run all stages (or the subset given with --stages).
    Pipeline {
        /// Comma-separated stage subset, e.g. "synth,pretrain".
        #[arg(long, value_delimiter = ',')]
        stages: Option<Vec<String>>,
    },
    /// Emit the report tables and Markdown summary.
    Report,
}

fn stages_for(command: &Command) -> Result<Vec<Stage>, Error> {
    Ok(match command {
        Command::Synth => vec![Stage::Synth],
        Command::Pretrain => vec![Stage::Pretrain],
        Command::Finetune => vec![Stage::Finetune],
        Command::Importance => vec![Stage::Importance],
        Command::Masks => vec![Stage::Masks],
        Command::Ablate => vec![Stage::Ablate],
        Command::Embed => vec![Stage::Embed],
        Command::Encode => vec![Stage::Encode],
        Command::Stats => vec![Stage::Stats],
        Command::Lpi => vec![Stage::Lpi],
        Command::Geometry => vec![Stage::Geometry],
        Command::Probe => vec![Stage::Probe],
        Command::Report => vec![Stage::Report],
        Command::Pipeline { stages } => match stages {
            None => Stage::ALL.to_vec(),
            Some(names) => names
                .iter()
                .map(|n| Stage::from_str(n.trim()))
                .collect::<Result<Vec<_>, _>>()?,
        },
    })
}

fn run(cli: &Cli) -> Result<(), Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    let stages = stages_for(&cli.command)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let manifest = pool.install(|| run_pipeline(&cfg, &stages, &cli.out))?;

    for stage in &stages {
        if let Some(record) = manifest.stages.get(stage.name()) {
            eprintln!("{}: done ({} artifacts)", stage.name(), record.artifacts.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! `dsth` — learn binary codes from paired visual/text features, index them,
//! and evaluate retrieval quality.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use dsth::Error;

#[derive(Parser)]
#[command(
    name = "dsth",
    version,
    about = "Discrete semantic transfer hashing pipeline"
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides paths.out_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Top-level seed (overrides the configured seed).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Optimizer variant: full, dsth-i, dsth-ii, dsth-iii, dsth-iv.
    #[arg(long, global = true)]
    variant: Option<String>,

    /// Code length in bits (overrides code_length).
    #[arg(long, global = true)]
    bits: Option<usize>,

    #[arg(long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic multimodal dataset files.
    Synth,
    /// Build and persist the anchor model over the training split.
    Anchors,
    /// Train codes, hash functions, and all model artifacts.
    Train,
    /// Encode a feature matrix (DMAT) into packed codes (DIDX).
    Encode {
        /// Feature matrix to encode.
        matrix: PathBuf,
        /// Output DIDX path (defaults to the matrix path with .didx).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Encode the database split into the searchable index.
    Index,
    /// Rank an external query matrix against a saved index.
    Search {
        /// Query feature matrix (DMAT).
        queries: PathBuf,
        /// Number of neighbors per query.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Index file (defaults to <out_dir>/database.didx).
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Score mAP@R and the precision-scope curve for the query split.
    Eval {
        /// Index file (defaults to <out_dir>/database.didx).
        #[arg(long)]
        index: Option<PathBuf>,
    },
}

fn effective_config(cli: &Cli) -> dsth::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.paths.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(variant) = &cli.variant {
        cfg.variant = variant.clone();
    }
    if let Some(bits) = cli.bits {
        cfg.code_length = bits;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> dsth::Result<()> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Synth => commands::cmd_synth(&cfg, cli.verbose),
        Command::Anchors => commands::cmd_anchors(&cfg, cli.verbose).map(|_| ()),
        Command::Train => commands::cmd_train(&cfg, cli.verbose),
        Command::Encode { matrix, output } => {
            commands::cmd_encode(&cfg, matrix, output.as_deref(), cli.verbose)
        }
        Command::Index => commands::cmd_index(&cfg, cli.verbose),
        Command::Search { queries, k, index } => {
            commands::cmd_search(&cfg, queries, index.as_deref(), *k, cli.verbose)
        }
        Command::Eval { index } => commands::cmd_eval(&cfg, index.as_deref(), cli.verbose),
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Io(_) | Error::Format { .. } | Error::Dimension(_) => 3,
        Error::Numerical(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

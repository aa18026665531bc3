//! Thin command-line front end over the `corank` library. All behavior
//! lives in `corank::cli`; this binary only parses arguments and maps
//! errors to exit codes (0 success, 1 usage, 2 data error, 3 check
//! failure).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corank::cli::{
    cmd_build_vocab, cmd_eval, cmd_gradcheck, cmd_rank, cmd_synth, cmd_train, CliError, RankArgs,
};
use corank::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "corank",
    about = "Pairwise passage ranking: train, rank, and evaluate",
    version
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Key=value config file; flags and --set override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set hidden=32 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Seed shortcut, equivalent to --set seed=N.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for ranking; equivalent to --set threads=N.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the frequency-thresholded vocabulary from a dataset TSV.
    BuildVocab {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset and matching embedding banks.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        queries: usize,
    },
    /// Train a model; writes checkpoints, corpus stats, and a train log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        /// Directory holding w2v.vec, glove.vec, fasttext.vec.
        #[arg(long)]
        banks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank passages per query; writes query_id<TAB>rank list rows.
    Rank {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        banks: Option<PathBuf>,
        /// Frozen corpus statistics from training.
        #[arg(long)]
        stats: PathBuf,
        /// Use the exact maximum-path-sum oracle instead of greedy.
        #[arg(long)]
        exact: bool,
        /// Cross-check matrix entries against direct pair evaluation.
        #[arg(long)]
        paranoid: bool,
        /// Rank by raw BM25 instead of the model.
        #[arg(long)]
        baseline_bm25: bool,
    },
    /// Compute MRR of a rankings file against labeled data.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        rankings: PathBuf,
    },
    /// Finite-difference verification of every parameter gradient.
    Gradcheck {
        #[arg(long, default_value_t = 17)]
        check_seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn effective_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for pair in &common.sets {
        let (key, value) = pair.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--set expects KEY=VALUE, got {pair:?}"))
        })?;
        cfg.set(key, value)?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = effective_config(&cli.common)?;
    match &cli.command {
        Command::BuildVocab { data, out } => cmd_build_vocab(data, out, &cfg),
        Command::Synth { out, queries } => cmd_synth(out, *queries, &cfg),
        Command::Train {
            data,
            vocab,
            banks,
            out,
        } => cmd_train(data, vocab, banks, out, &cfg),
        Command::Rank {
            data,
            out,
            checkpoint,
            vocab,
            banks,
            stats,
            exact,
            paranoid,
            baseline_bm25,
        } => cmd_rank(
            &RankArgs {
                data,
                out,
                checkpoint: checkpoint.as_deref(),
                vocab: vocab.as_deref(),
                banks: banks.as_deref(),
                stats,
                exact: *exact,
                paranoid: *paranoid,
                baseline_bm25: *baseline_bm25,
            },
            &cfg,
        ),
        Command::Eval { data, rankings } => cmd_eval(data, rankings, &cfg).map(|_| ()),
        Command::Gradcheck {
            check_seed,
            tolerance,
        } => cmd_gradcheck(*check_seed, *tolerance),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path with code 0.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

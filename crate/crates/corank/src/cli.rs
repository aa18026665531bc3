//! Command implementations behind the thin `corank` binary. Each command
//! is an ordinary function over paths and a [`RunConfig`], so tests and
//! examples can drive the same code the binary does.
//!
//! Exit code mapping: 0 success, 1 usage, 2 data error, 3 check failure.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{
    load_dataset, read_all, CorpusError, QuerySample, Tokenizer, Vocabulary, VocabularyBuilder,
};
use crate::embeddings::{BankRole, EmbeddingBank, EmbeddingError, TripleBank};
use crate::features::{bm25, CorpusStats, NormStats, StatsError};
use crate::model::{grad_check, GradCheckConfig, ModelError};
use crate::ranking::{
    exact_rank, greedy_rank, mrr, Pdm, RankError, RankingResult, Scorer,
};
use crate::synth::{generate, SynthConfig};
use crate::training::{train, TrainError};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Check(m) => m,
        }
    }
}

macro_rules! data_error_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error_from!(
    CorpusError,
    EmbeddingError,
    StatsError,
    CheckpointError,
    TrainError,
    ModelError,
    std::io::Error
);

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<RankError> for CliError {
    fn from(e: RankError) -> Self {
        match e {
            RankError::ParanoidMismatch { .. } => CliError::Check(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn tokenizer_for(cfg: &RunConfig) -> Result<Tokenizer, CliError> {
    match &cfg.stopwords {
        Some(path) => Ok(Tokenizer::with_stopwords_file(path)?),
        None => Ok(Tokenizer::new()),
    }
}

fn echo_config(dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("effective_config.txt"), cfg.to_text())?;
    Ok(())
}

fn load_banks(dir: &Path) -> Result<TripleBank, CliError> {
    let w2v = EmbeddingBank::load(&dir.join("w2v.vec"), BankRole::Word2Vec)?;
    let glove = EmbeddingBank::load(&dir.join("glove.vec"), BankRole::Glove)?;
    let mut fasttext = EmbeddingBank::load(&dir.join("fasttext.vec"), BankRole::FastText)?;
    let subwords = dir.join("fasttext.subwords");
    if subwords.exists() {
        fasttext.load_subwords(&subwords)?;
    }
    Ok(TripleBank::new(w2v, glove, fasttext)?)
}

/// Build the frequency-thresholded vocabulary from a dataset file and
/// write it as `token<TAB>id<TAB>frequency` rows.
pub fn cmd_build_vocab(data: &Path, out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    let tokenizer = tokenizer_for(cfg)?;
    let reader = load_dataset(data, false, &tokenizer, cfg.n_passages)?;
    let mut builder = VocabularyBuilder::new();
    for sample in reader {
        let sample = sample?;
        builder.add(&sample.query_tokens);
        for passage in &sample.passages {
            builder.add(passage);
        }
    }
    let vocab = builder.finish(cfg.min_frequency);
    vocab.save(out)?;
    eprintln!("vocabulary: {} tokens -> {}", vocab.size(), out.display());
    Ok(())
}

/// Generate a synthetic dataset plus matching random embedding banks.
pub fn cmd_synth(out_dir: &Path, n_queries: usize, cfg: &RunConfig) -> Result<(), CliError> {
    echo_config(out_dir, cfg)?;
    let synth = SynthConfig {
        n_queries,
        n_passages: cfg.n_passages,
        embed_dim: cfg.model.embed_dim,
        seed: cfg.train.seed,
        ..SynthConfig::default()
    };
    let ds = generate(&synth);
    ds.write_tsv(&out_dir.join("data.tsv"))?;
    ds.write_banks(out_dir, synth.embed_dim, synth.seed)?;
    eprintln!(
        "synthetic dataset: {} queries x {} passages -> {}",
        n_queries,
        synth.n_passages,
        out_dir.display()
    );
    Ok(())
}

/// Train on a labeled dataset: splits off the dev set, fits corpus
/// statistics on the training passages, and writes per-epoch checkpoints
/// plus a `train.log` with `epoch<TAB>mean_loss<TAB>dev_mrr` lines.
pub fn cmd_train(
    data: &Path,
    vocab_path: &Path,
    banks_dir: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
) -> Result<(), CliError> {
    echo_config(out_dir, cfg)?;
    let tokenizer = tokenizer_for(cfg)?;
    let samples = read_all(data, true, &tokenizer, cfg.n_passages)?;
    let (train_set, dev_set) =
        crate::corpus::split_train_dev(samples, cfg.dev_count, cfg.train.seed)?;
    let vocab = Vocabulary::load(vocab_path, cfg.min_frequency)?;
    let banks = load_banks(banks_dir)?;
    let stats = CorpusStats::from_documents(train_set.iter().flat_map(|s| s.passages.clone()));
    stats.save(&out_dir.join("corpus_stats.txt"))?;

    let mut log = std::fs::File::create(out_dir.join("train.log"))?;
    let outcome = train(
        &train_set,
        &dev_set,
        &cfg.model,
        &cfg.train,
        &vocab,
        &banks,
        &stats,
        cfg.bm25,
        |stats_e, ckpt| {
            let mrr_text = stats_e
                .dev_mrr
                .map(|m| format!("{m:.6}"))
                .unwrap_or_else(|| "-".to_owned());
            let line = format!("{}\t{:.6}\t{}", stats_e.epoch, stats_e.mean_loss, mrr_text);
            let _ = writeln!(log, "{line}");
            eprintln!("{line}");
            let _ = ckpt.save(&out_dir.join(format!("checkpoint_epoch{:03}.ckpt", stats_e.epoch)));
        },
    )?;
    outcome.checkpoint.save(&out_dir.join("checkpoint.ckpt"))?;
    eprintln!("final checkpoint -> {}", out_dir.join("checkpoint.ckpt").display());
    Ok(())
}

fn write_rankings(
    out: &Path,
    rows: &[(String, RankingResult)],
) -> Result<(), CliError> {
    let mut text = String::new();
    for (qid, result) in rows {
        let ranks: Vec<String> = result.rank.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(text, "{qid}\t{}", ranks.join(","));
    }
    std::fs::write(out, text)?;
    Ok(())
}

/// Arguments for [`cmd_rank`] beyond the common config.
pub struct RankArgs<'a> {
    pub data: &'a Path,
    pub out: &'a Path,
    pub checkpoint: Option<&'a Path>,
    pub vocab: Option<&'a Path>,
    pub banks: Option<&'a Path>,
    pub stats: &'a Path,
    pub exact: bool,
    pub paranoid: bool,
    pub baseline_bm25: bool,
}

/// Rank every query in a dataset file and write
/// `query_id<TAB>rank_1,...,rank_N` rows (ranks in passage file order).
pub fn cmd_rank(args: &RankArgs, cfg: &RunConfig) -> Result<(), CliError> {
    if !args.baseline_bm25 {
        for (flag, value) in [
            ("--checkpoint", args.checkpoint.is_some()),
            ("--vocab", args.vocab.is_some()),
            ("--banks", args.banks.is_some()),
        ] {
            if !value {
                return Err(CliError::Usage(format!(
                    "{flag} is required unless --baseline-bm25 is set"
                )));
            }
        }
    }
    let tokenizer = tokenizer_for(cfg)?;
    let samples = read_all(args.data, false, &tokenizer, cfg.n_passages)?;
    let stats = CorpusStats::load(args.stats)?;

    if args.baseline_bm25 {
        // Lexical baseline: rank by raw BM25 against the frozen stats.
        let rows: Vec<(String, RankingResult)> = samples
            .iter()
            .map(|sample| {
                let scores: Vec<f64> = sample
                    .passages
                    .iter()
                    .map(|p| bm25(&sample.query_tokens, p, &stats, cfg.bm25.k1, cfg.bm25.b))
                    .collect();
                let pdm = Pdm::from_scores(&scores)?;
                Ok((sample.query_id.clone(), greedy_rank(&pdm)))
            })
            .collect::<Result<_, RankError>>()?;
        write_rankings(args.out, &rows)?;
        eprintln!("bm25 baseline rankings -> {}", args.out.display());
        return Ok(());
    }

    let ckpt_path = args.checkpoint.expect("validated above");
    let vocab_path = args.vocab.expect("validated above");
    let banks_dir = args.banks.expect("validated above");
    let ckpt = Checkpoint::load(ckpt_path)?;
    let vocab = Vocabulary::load(vocab_path, cfg.min_frequency)?;
    if vocab.content_hash() != ckpt.vocab_hash {
        return Err(CliError::Data(format!(
            "vocabulary {} does not match the one the checkpoint was trained with",
            vocab_path.display()
        )));
    }
    let banks = load_banks(banks_dir)?;
    let norm = ckpt.norm.unwrap_or_else(NormStats::identity);
    let scorer = Scorer {
        params: &ckpt.params,
        config: &ckpt.config,
        vocab: &vocab,
        banks: &banks,
        stats: &stats,
        norm,
        bm25: cfg.bm25,
    };

    let rank_one = |sample: &QuerySample| -> Result<(String, RankingResult), RankError> {
        let pdm = scorer.build_pdm(sample)?;
        if args.paranoid {
            // Deterministic per-query probe of the score-reuse shortcut.
            let mut rng = ChaCha8Rng::seed_from_u64(
                cfg.train.seed ^ sample.query_id.len() as u64 ^ 0x70ab,
            );
            scorer.paranoid_check(sample, &pdm, 10, 1e-12, &mut rng)?;
        }
        let result = if args.exact {
            exact_rank(&pdm)?
        } else {
            greedy_rank(&pdm)
        };
        Ok((sample.query_id.clone(), result))
    };

    let rows: Vec<(String, RankingResult)> = if cfg.threads > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| CliError::Data(e.to_string()))?;
        pool.install(|| {
            samples
                .par_iter()
                .map(rank_one)
                .collect::<Result<Vec<_>, _>>()
        })?
    } else {
        samples
            .iter()
            .map(rank_one)
            .collect::<Result<Vec<_>, _>>()?
    };
    write_rankings(args.out, &rows)?;
    eprintln!("rankings -> {}", args.out.display());
    Ok(())
}

/// Score a rankings file against a labeled dataset; prints MRR to stdout.
pub fn cmd_eval(data: &Path, rankings: &Path, cfg: &RunConfig) -> Result<f64, CliError> {
    let tokenizer = tokenizer_for(cfg)?;
    let samples = read_all(data, true, &tokenizer, cfg.n_passages)?;
    let text = std::fs::read_to_string(rankings)?;
    let mut by_query: HashMap<&str, RankingResult> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (qid, ranks_text) = line.split_once('\t').ok_or_else(|| {
            CliError::Data(format!("rankings line {}: expected query_id<TAB>ranks", i + 1))
        })?;
        let rank: Vec<usize> = ranks_text
            .split(',')
            .map(|r| {
                r.parse::<usize>().map_err(|e| {
                    CliError::Data(format!("rankings line {}: bad rank {r:?}: {e}", i + 1))
                })
            })
            .collect::<Result<_, _>>()?;
        let n = rank.len();
        let mut seen = vec![false; n + 1];
        for &r in &rank {
            if r == 0 || r > n || seen[r] {
                return Err(CliError::Data(format!(
                    "rankings line {}: ranks are not a permutation of 1..={n}",
                    i + 1
                )));
            }
            seen[r] = true;
        }
        let mut order = vec![0usize; n];
        for (doc, &r) in rank.iter().enumerate() {
            order[r - 1] = doc;
        }
        by_query.insert(qid, RankingResult { rank, order });
    }
    let mut results = Vec::with_capacity(samples.len());
    for sample in &samples {
        let gold = sample.gold_index.ok_or_else(|| {
            CliError::Data(format!("query {} has no gold label", sample.query_id))
        })?;
        let result = by_query.get(sample.query_id.as_str()).ok_or_else(|| {
            CliError::Data(format!("no ranking for query {}", sample.query_id))
        })?;
        results.push((result.clone(), gold));
    }
    let score = mrr(results)?;
    println!("{score:.6}");
    Ok(score)
}

/// Verify every parameter's analytic gradient against central finite
/// differences; prints one row per parameter and fails (exit 3) when the
/// worst relative error crosses the tolerance.
pub fn cmd_gradcheck(seed: u64, tolerance: f64) -> Result<(), CliError> {
    let check = GradCheckConfig {
        seed,
        tolerance,
        ..GradCheckConfig::default()
    };
    let report = grad_check(&check)?;
    println!("{:<24} {:>14} {:>14}", "parameter", "max_rel_err", "grad_norm");
    for row in &report.rows {
        println!(
            "{:<24} {:>14.3e} {:>14.6e}",
            row.name, row.max_rel_err, row.grad_norm
        );
    }
    println!(
        "max relative error {:.3e} (tolerance {:.1e})",
        report.max_rel_err, report.tolerance
    );
    if !report.passed {
        return Err(CliError::Check(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e}",
            report.max_rel_err, report.tolerance
        )));
    }
    Ok(())
}

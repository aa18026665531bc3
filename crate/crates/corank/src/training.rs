//! Training: per-epoch triple resampling with negative selection and
//! order shuffling, summed pairwise cross-entropy per batch, global-norm
//! clipping, Adam, and per-epoch checkpoints with dev MRR.
//!
//! Everything downstream of the seed is deterministic: two runs with
//! identical inputs and seeds produce bit-identical checkpoints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::corpus::{encode, QuerySample, Vocabulary};
use crate::embeddings::TripleBank;
use crate::features::{feature_vector, Bm25Params, CorpusStats, FeatureVector, NormStats};
use crate::model::{
    forward_pair, pair_loss, BoundParams, EmbeddedSeq, Mode, ModelConfig, ModelError,
    ModelParams, PROB_FLOOR,
};
use crate::ranking::{RankError, Scorer};
use crate::tensor::{clip_global_norm, AdamState, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("cannot sample a training triple from unlabeled query {query_id}")]
    UnlabeledSample { query_id: String },
    #[error("query {query_id} has no negative passages to sample")]
    NoNegatives { query_id: String },
    #[error("non-finite loss at epoch {epoch} on query {query_id}")]
    NonFiniteLoss { query_id: String, epoch: usize },
    #[error("training set is empty")]
    EmptyTrainSet,
}

/// Optimization schedule. Defaults are the full-scale regimen: 100
/// epochs, batches of 256, Adam at 1e-3, gradient norms clipped at 5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 256,
            lr: 0.001,
            clip_norm: 5.0,
            seed: 42,
        }
    }
}

/// One sampled (query, gold, negative) pair with a shuffled slot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingTriple {
    pub query_index: usize,
    pub d1: usize,
    pub d2: usize,
    pub gold_is_first: bool,
}

/// Draw the negative uniformly from the non-gold passages and flip a coin
/// for which slot holds the gold document.
pub fn sample_triple(
    sample: &QuerySample,
    query_index: usize,
    rng: &mut impl Rng,
) -> Result<TrainingTriple, TrainError> {
    let gold = sample.gold_index.ok_or_else(|| TrainError::UnlabeledSample {
        query_id: sample.query_id.clone(),
    })?;
    let n = sample.passages.len();
    if n < 2 {
        return Err(TrainError::NoNegatives {
            query_id: sample.query_id.clone(),
        });
    }
    let mut neg = rng.random_range(0..n - 1);
    if neg >= gold {
        neg += 1;
    }
    let gold_is_first = rng.random::<bool>();
    let (d1, d2) = if gold_is_first { (gold, neg) } else { (neg, gold) };
    Ok(TrainingTriple {
        query_index,
        d1,
        d2,
        gold_is_first,
    })
}

/// Pairwise cross-entropy of the gold document: `-ln(max(p, 1e-12))`.
pub fn loss(p_gold: f64) -> f64 {
    -(p_gold.max(PROB_FLOOR)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 0 is the pre-training measurement; updates start at epoch 1.
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_mrr: Option<f64>,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// Per-sample tensors prepared once: the embedded query and each
/// passage's embedding plus normalized features.
struct Prepared {
    query: EmbeddedSeq,
    passages: Vec<(EmbeddedSeq, FeatureVector)>,
}

fn prepare(
    samples: &[QuerySample],
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    banks: &TripleBank,
    stats: &CorpusStats,
    bm25: Bm25Params,
    norm: &NormStats,
) -> Vec<Prepared> {
    samples
        .iter()
        .map(|sample| {
            let q_enc = encode(&sample.query_tokens, vocab, cfg.max_query_len);
            let query = EmbeddedSeq::from_encoded(&q_enc, banks);
            let passages = sample
                .passages
                .iter()
                .map(|p| {
                    let d_enc = encode(p, vocab, cfg.max_doc_len);
                    let emb = EmbeddedSeq::from_encoded(&d_enc, banks);
                    let feats = feature_vector(
                        &sample.query_tokens,
                        p,
                        stats,
                        bm25.k1,
                        bm25.b,
                        Some(norm),
                    );
                    (emb, feats)
                })
                .collect();
            Prepared { query, passages }
        })
        .collect()
}

/// Fit feature normalization over every (query, passage) pair of the
/// training set.
pub fn fit_norm_stats(
    samples: &[QuerySample],
    stats: &CorpusStats,
    bm25: Bm25Params,
) -> NormStats {
    let mut raw = Vec::new();
    for sample in samples {
        for passage in &sample.passages {
            raw.push(feature_vector(
                &sample.query_tokens,
                passage,
                stats,
                bm25.k1,
                bm25.b,
                None,
            ));
        }
    }
    NormStats::fit(&raw)
}

struct TripleLoss {
    value: f64,
    grads: Vec<Tensor>,
}

fn triple_forward(
    params: &ModelParams,
    prep: &Prepared,
    triple: &TrainingTriple,
    mode_dropout: f64,
    rng: &mut ChaCha8Rng,
    with_grads: bool,
) -> Result<TripleLoss, TrainError> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, with_grads);
    let (d1, f1) = &prep.passages[triple.d1];
    let (d2, f2) = &prep.passages[triple.d2];
    let mode = if with_grads {
        Mode::Train {
            dropout: mode_dropout,
            rng,
        }
    } else {
        Mode::Eval
    };
    let pf = forward_pair(&mut tape, &bound, &prep.query, d1, d2, f1, f2, mode)?;
    let (s_gold, s_other) = if triple.gold_is_first {
        (pf.s1, pf.s2)
    } else {
        (pf.s2, pf.s1)
    };
    let loss_node = pair_loss(&mut tape, s_gold, s_other)?;
    let value = tape.value(loss_node).scalar_value();
    let grads = if with_grads {
        let mut g = tape.backward(loss_node)?;
        bound.gradients(&mut g)
    } else {
        Vec::new()
    };
    Ok(TripleLoss { value, grads })
}

/// The epoch loop. `on_epoch` fires once with the initialization stats
/// (epoch 0) and once per training epoch, each time with a checkpoint
/// snapshot.
#[allow(clippy::too_many_arguments)]
pub fn train(
    train_set: &[QuerySample],
    dev_set: &[QuerySample],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    vocab: &Vocabulary,
    banks: &TripleBank,
    stats: &CorpusStats,
    bm25: Bm25Params,
    mut on_epoch: impl FnMut(&EpochStats, &Checkpoint),
) -> Result<TrainOutcome, TrainError> {
    model_cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    if banks.dim() != model_cfg.embed_dim {
        return Err(ModelError::EmbedDim {
            banks: banks.dim(),
            config: model_cfg.embed_dim,
        }
        .into());
    }

    let mut master = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut init_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut sampling_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(master.random());
    let mut probe_rng = ChaCha8Rng::seed_from_u64(master.random());

    let norm = fit_norm_stats(train_set, stats, bm25);
    let prepared = prepare(train_set, model_cfg, vocab, banks, stats, bm25, &norm);
    let vocab_hash = vocab.content_hash();

    let mut params = ModelParams::init(model_cfg, &mut init_rng)?;
    let mut adam = AdamState::new(&params.tensors(), train_cfg.lr);
    let mut history = Vec::with_capacity(train_cfg.epochs + 1);

    let dev_mrr = |params: &ModelParams| -> Result<Option<f64>, TrainError> {
        if dev_set.is_empty() {
            return Ok(None);
        }
        let scorer = Scorer {
            params,
            config: model_cfg,
            vocab,
            banks,
            stats,
            norm,
            bm25,
        };
        Ok(Some(scorer.mrr(dev_set)?))
    };

    // Pre-training measurement: mean loss over sampled triples should sit
    // near ln 2 because scores start near zero.
    {
        let probes = train_set.len().clamp(1, 256).max(100.min(train_set.len()));
        let mut total = 0.0;
        for i in 0..probes {
            let idx = i % train_set.len();
            let triple = sample_triple(&train_set[idx], idx, &mut probe_rng)?;
            let tl = triple_forward(&params, &prepared[idx], &triple, 0.0, &mut dropout_rng, false)?;
            total += tl.value;
        }
        let stats0 = EpochStats {
            epoch: 0,
            mean_loss: total / probes as f64,
            dev_mrr: dev_mrr(&params)?,
        };
        let ckpt = Checkpoint {
            config: *model_cfg,
            params: params.clone(),
            norm: Some(norm),
            vocab_hash,
        };
        on_epoch(&stats0, &ckpt);
        history.push(stats0);
    }

    for epoch in 1..=train_cfg.epochs {
        // Resample triples and visit queries in a fresh order.
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, sampling_rng.random_range(0..=i));
        }
        let triples: Vec<TrainingTriple> = order
            .iter()
            .map(|&idx| sample_triple(&train_set[idx], idx, &mut sampling_rng))
            .collect::<Result<_, _>>()?;

        let mut epoch_loss = 0.0;
        for batch in triples.chunks(train_cfg.batch_size) {
            let mut accum: Vec<Tensor> = params
                .tensors()
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect();
            for triple in batch {
                let tl = triple_forward(
                    &params,
                    &prepared[triple.query_index],
                    triple,
                    model_cfg.dropout,
                    &mut dropout_rng,
                    true,
                )?;
                if !tl.value.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        query_id: train_set[triple.query_index].query_id.clone(),
                        epoch,
                    });
                }
                epoch_loss += tl.value;
                for (acc, g) in accum.iter_mut().zip(&tl.grads) {
                    acc.add_assign(g);
                }
            }
            clip_global_norm(&mut accum, train_cfg.clip_norm);
            adam.apply(&mut params.tensors_mut(), &accum)?;
        }

        let stats_e = EpochStats {
            epoch,
            mean_loss: epoch_loss / triples.len() as f64,
            dev_mrr: dev_mrr(&params)?,
        };
        let ckpt = Checkpoint {
            config: *model_cfg,
            params: params.clone(),
            norm: Some(norm),
            vocab_hash,
        };
        on_epoch(&stats_e, &ckpt);
        history.push(stats_e);
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            config: *model_cfg,
            params,
            norm: Some(norm),
            vocab_hash,
        },
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{BankRole, EmbeddingBank};
    use approx::assert_relative_eq;
    use std::collections::HashMap;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    fn sample_with_gold(gold: usize, n: usize) -> QuerySample {
        QuerySample {
            query_id: "q0".into(),
            query_tokens: toks(&["alpha", "beta"]),
            passages: (0..n)
                .map(|i| {
                    if i == gold {
                        toks(&["alpha", "beta", "gamma"])
                    } else {
                        toks(&[&format!("filler{i}"), "delta"])
                    }
                })
                .collect(),
            gold_index: Some(gold),
        }
    }

    #[test]
    fn default_schedule_matches_full_regimen() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.epochs, 100);
        assert_eq!(cfg.batch_size, 256);
        assert_eq!(cfg.lr, 0.001);
        assert_eq!(cfg.clip_norm, 5.0);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(loss(1.0), 0.0);
        assert_relative_eq!(loss(0.5), 2.0f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(loss((-1.0f64).exp()), 1.0, max_relative = 1e-12);
        // The floor keeps p = 0 finite.
        assert_relative_eq!(loss(0.0), -(1e-12f64).ln(), max_relative = 1e-12);
    }

    #[test]
    fn sample_triple_rejects_unlabeled() {
        let mut s = sample_with_gold(0, 10);
        s.gold_index = None;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            sample_triple(&s, 0, &mut rng),
            Err(TrainError::UnlabeledSample { .. })
        ));
    }

    #[test]
    fn sample_triple_is_deterministic() {
        let s = sample_with_gold(3, 10);
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sample_triple(&s, 0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn sample_triple_negative_frequencies_are_uniform() {
        let s = sample_with_gold(4, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let draws = 10_000;
        let mut counts = [0usize; 10];
        let mut gold_first = 0usize;
        for _ in 0..draws {
            let t = sample_triple(&s, 0, &mut rng).unwrap();
            let neg = if t.gold_is_first { t.d2 } else { t.d1 };
            assert_ne!(neg, 4);
            counts[neg] += 1;
            gold_first += usize::from(t.gold_is_first);
        }
        for (i, &c) in counts.iter().enumerate() {
            if i == 4 {
                assert_eq!(c, 0);
            } else {
                let freq = c as f64 / draws as f64;
                assert!(
                    (freq - 1.0 / 9.0).abs() < 0.02,
                    "negative {i} frequency {freq}"
                );
            }
        }
        let first_rate = gold_first as f64 / draws as f64;
        assert!((first_rate - 0.5).abs() < 0.02, "gold first rate {first_rate}");
    }

    #[test]
    fn sample_triple_slots_hold_exactly_one_gold() {
        let s = sample_with_gold(2, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let t = sample_triple(&s, 0, &mut rng).unwrap();
            let gold_in_first = t.d1 == 2;
            let gold_in_second = t.d2 == 2;
            assert!(gold_in_first ^ gold_in_second);
            assert_eq!(gold_in_first, t.gold_is_first);
        }
    }

    // ── end-to-end training fixtures ─────────────────────────────────

    struct Fixture {
        samples: Vec<QuerySample>,
        vocab: Vocabulary,
        banks: TripleBank,
        stats: CorpusStats,
    }

    fn fixture(n_queries: usize, n_passages: usize, dim: usize) -> Fixture {
        let mut samples = Vec::new();
        let words: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
        for q in 0..n_queries {
            let qa = words[(3 * q) % 40].clone();
            let qb = words[(3 * q + 1) % 40].clone();
            let gold = q % n_passages;
            let passages: Vec<Vec<String>> = (0..n_passages)
                .map(|i| {
                    if i == gold {
                        vec![qa.clone(), qb.clone(), words[(3 * q + 2) % 40].clone()]
                    } else {
                        vec![
                            words[(7 * i + 11 + q) % 40].clone(),
                            words[(5 * i + 23 + q) % 40].clone(),
                        ]
                    }
                })
                .collect();
            samples.push(QuerySample {
                query_id: format!("q{q}"),
                query_tokens: vec![qa, qb],
                passages,
                gold_index: Some(gold),
            });
        }
        let vocab = Vocabulary::build(
            samples
                .iter()
                .flat_map(|s| s.passages.iter().chain(std::iter::once(&s.query_tokens))),
            1,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        let table = |rng: &mut ChaCha8Rng| {
            let mut m = HashMap::new();
            for w in &words {
                m.insert(
                    w.clone(),
                    (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
                );
            }
            m
        };
        let banks = TripleBank::new(
            EmbeddingBank::from_vectors(BankRole::Word2Vec, table(&mut rng)).unwrap(),
            EmbeddingBank::from_vectors(BankRole::Glove, table(&mut rng)).unwrap(),
            EmbeddingBank::from_vectors(BankRole::FastText, table(&mut rng)).unwrap(),
        )
        .unwrap();
        let stats =
            CorpusStats::from_documents(samples.iter().flat_map(|s| s.passages.clone()));
        Fixture {
            samples,
            vocab,
            banks,
            stats,
        }
    }

    fn tiny_model(dim: usize) -> ModelConfig {
        ModelConfig {
            embed_dim: dim,
            hidden: 6,
            lstm_layers: 1,
            dropout: 0.0,
            max_query_len: 8,
            max_doc_len: 12,
            feature_count: 3,
            init_range: 0.01,
        }
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_untouched() {
        let fx = fixture(6, 4, 5);
        let mcfg = tiny_model(5);
        let tcfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            lr: 0.0,
            clip_norm: 5.0,
            seed: 11,
        };
        let mut first_ckpt: Option<Checkpoint> = None;
        let outcome = train(
            &fx.samples,
            &[],
            &mcfg,
            &tcfg,
            &fx.vocab,
            &fx.banks,
            &fx.stats,
            Bm25Params::default(),
            |stats, ckpt| {
                if stats.epoch == 0 {
                    first_ckpt = Some(ckpt.clone());
                }
            },
        )
        .unwrap();
        let init = first_ckpt.unwrap();
        assert_eq!(outcome.checkpoint.params, init.params);
    }

    #[test]
    fn initial_loss_is_near_ln2() {
        let fx = fixture(30, 4, 5);
        let mcfg = tiny_model(5);
        let tcfg = TrainConfig {
            epochs: 0,
            batch_size: 4,
            lr: 0.001,
            clip_norm: 5.0,
            seed: 3,
        };
        let outcome = train(
            &fx.samples,
            &[],
            &mcfg,
            &tcfg,
            &fx.vocab,
            &fx.banks,
            &fx.stats,
            Bm25Params::default(),
            |_, _| {},
        )
        .unwrap();
        let init = outcome.history[0].mean_loss;
        assert!(
            (init - 2.0f64.ln()).abs() < 0.1,
            "initial loss {init} too far from ln 2"
        );
    }

    #[test]
    fn single_triple_memorization_converges() {
        // One query with one negative, trained repeatedly: loss must
        // decrease monotonically after warmup and fall below 0.01.
        let fx = fixture(1, 2, 5);
        let mcfg = tiny_model(5);
        let tcfg = TrainConfig {
            epochs: 200,
            batch_size: 1,
            lr: 0.01,
            clip_norm: 5.0,
            seed: 1,
        };
        let outcome = train(
            &fx.samples,
            &[],
            &mcfg,
            &tcfg,
            &fx.vocab,
            &fx.banks,
            &fx.stats,
            Bm25Params::default(),
            |_, _| {},
        )
        .unwrap();
        let losses: Vec<f64> = outcome.history[1..].iter().map(|h| h.mean_loss).collect();
        assert!(
            losses.last().unwrap() < &0.01,
            "final loss {}",
            losses.last().unwrap()
        );
        for w in losses[20..].windows(2) {
            assert!(
                w[1] <= w[0] + 1e-6,
                "loss increased after warmup: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn identical_seeds_give_bit_identical_checkpoints() {
        let fx = fixture(8, 4, 5);
        let mcfg = ModelConfig {
            lstm_layers: 2,
            dropout: 0.2,
            ..tiny_model(5)
        };
        let tcfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            lr: 0.001,
            clip_norm: 5.0,
            seed: 77,
        };
        let run = || {
            train(
                &fx.samples,
                &fx.samples[..2],
                &mcfg,
                &tcfg,
                &fx.vocab,
                &fx.banks,
                &fx.stats,
                Bm25Params::default(),
                |_, _| {},
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn dev_mrr_improves_on_learnable_data() {
        let fx = fixture(24, 4, 5);
        let mcfg = tiny_model(5);
        let tcfg = TrainConfig {
            epochs: 12,
            batch_size: 6,
            lr: 0.005,
            clip_norm: 5.0,
            seed: 5,
        };
        let (dev, train_set) = fx.samples.split_at(6);
        let outcome = train(
            train_set,
            dev,
            &mcfg,
            &tcfg,
            &fx.vocab,
            &fx.banks,
            &fx.stats,
            Bm25Params::default(),
            |_, _| {},
        )
        .unwrap();
        let first = outcome.history[0].dev_mrr.unwrap();
        let last = outcome.history.last().unwrap().dev_mrr.unwrap();
        assert!(
            last >= first,
            "dev MRR regressed from {first} to {last}"
        );
    }

    #[test]
    fn empty_train_set_is_an_error() {
        let fx = fixture(2, 4, 5);
        let mcfg = tiny_model(5);
        let tcfg = TrainConfig::default();
        assert!(matches!(
            train(
                &[],
                &[],
                &mcfg,
                &tcfg,
                &fx.vocab,
                &fx.banks,
                &fx.stats,
                Bm25Params::default(),
                |_, _| {},
            ),
            Err(TrainError::EmptyTrainSet)
        ));
    }
}

//! Library-level end-to-end: synthetic data through vocabulary, corpus
//! statistics, training, checkpointing, ranking and evaluation.

use corank::checkpoint::Checkpoint;
use corank::corpus::{read_all, split_train_dev, Tokenizer, Vocabulary};
use corank::embeddings::{BankRole, EmbeddingBank, TripleBank};
use corank::features::{Bm25Params, CorpusStats};
use corank::model::ModelConfig;
use corank::ranking::{greedy_rank, RankError, Scorer};
use corank::synth::{generate, SynthConfig};
use corank::training::{train, TrainConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Pipeline {
    train_set: Vec<corank::corpus::QuerySample>,
    dev_set: Vec<corank::corpus::QuerySample>,
    vocab: Vocabulary,
    banks: TripleBank,
    stats: CorpusStats,
}

fn build_pipeline(n_queries: usize, dev: usize, dim: usize, seed: u64) -> Pipeline {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        n_queries,
        embed_dim: dim,
        seed,
        ..SynthConfig::default()
    };
    let ds = generate(&synth);
    let data_path = dir.path().join("data.tsv");
    ds.write_tsv(&data_path).unwrap();
    ds.write_banks(dir.path(), dim, seed).unwrap();

    let tokenizer = Tokenizer::new();
    let samples = read_all(&data_path, true, &tokenizer, 10).unwrap();
    let (train_set, dev_set) = split_train_dev(samples, dev, seed).unwrap();
    let vocab = Vocabulary::build(
        train_set
            .iter()
            .flat_map(|s| s.passages.iter().chain(std::iter::once(&s.query_tokens))),
        1,
    );
    let banks = TripleBank::new(
        EmbeddingBank::load(&dir.path().join("w2v.vec"), BankRole::Word2Vec).unwrap(),
        EmbeddingBank::load(&dir.path().join("glove.vec"), BankRole::Glove).unwrap(),
        EmbeddingBank::load(&dir.path().join("fasttext.vec"), BankRole::FastText).unwrap(),
    )
    .unwrap();
    let stats = CorpusStats::from_documents(train_set.iter().flat_map(|s| s.passages.clone()));
    Pipeline {
        train_set,
        dev_set,
        vocab,
        banks,
        stats,
    }
}

fn small_model(dim: usize) -> ModelConfig {
    ModelConfig {
        embed_dim: dim,
        hidden: 6,
        lstm_layers: 1,
        dropout: 0.0,
        max_query_len: 15,
        max_doc_len: 70,
        feature_count: 3,
        init_range: 0.01,
    }
}

#[test]
fn synth_train_checkpoint_rank_eval_roundtrip() {
    let p = build_pipeline(40, 8, 8, 2025);
    let mcfg = small_model(8);
    let tcfg = TrainConfig {
        epochs: 4,
        batch_size: 8,
        lr: 0.005,
        clip_norm: 5.0,
        seed: 91,
    };
    let outcome = train(
        &p.train_set,
        &p.dev_set,
        &mcfg,
        &tcfg,
        &p.vocab,
        &p.banks,
        &p.stats,
        Bm25Params::default(),
        |_, _| {},
    )
    .unwrap();

    // Initial loss sits near ln 2; the final epoch should not be worse
    // than the start on this separable data.
    let h = &outcome.history;
    assert!((h[0].mean_loss - 2.0f64.ln()).abs() < 0.1);
    assert!(h.last().unwrap().mean_loss < h[0].mean_loss);

    // Checkpoint survives disk and ranks identically to the in-memory
    // parameters.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("final.ckpt");
    outcome.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.params, outcome.checkpoint.params);
    assert_eq!(loaded.vocab_hash, p.vocab.content_hash());

    let norm = loaded.norm.unwrap();
    let scorer = Scorer {
        params: &loaded.params,
        config: &loaded.config,
        vocab: &p.vocab,
        banks: &p.banks,
        stats: &p.stats,
        norm,
        bm25: Bm25Params::default(),
    };
    let mrr = scorer.mrr(&p.dev_set).unwrap();
    assert!(mrr > 0.5, "dev MRR {mrr} unexpectedly low");

    // Greedy and exact agree on model-derived matrices, and the
    // paranoid pair probe confirms the score-reuse shortcut.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for sample in &p.dev_set {
        let pdm = scorer.build_pdm(sample).unwrap();
        let greedy = greedy_rank(&pdm);
        let exact = corank::ranking::exact_rank(&pdm).unwrap();
        assert_eq!(greedy, exact);
        scorer.paranoid_check(sample, &pdm, 10, 1e-12, &mut rng).unwrap();
    }
}

#[test]
fn ranking_rejects_unlabeled_samples_for_mrr() {
    let p = build_pipeline(6, 2, 8, 77);
    let mcfg = small_model(8);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = corank::model::ModelParams::init(&mcfg, &mut rng).unwrap();
    let scorer = Scorer {
        params: &params,
        config: &mcfg,
        vocab: &p.vocab,
        banks: &p.banks,
        stats: &p.stats,
        norm: corank::features::NormStats::identity(),
        bm25: Bm25Params::default(),
    };
    let mut unlabeled = p.dev_set.clone();
    for s in &mut unlabeled {
        s.gold_index = None;
    }
    assert!(matches!(
        scorer.mrr(&unlabeled),
        Err(RankError::BadGoldIndex { .. })
    ));
}

//! End-to-end training on generated data: synthesize a dataset and
//! embedding banks, build the vocabulary and corpus statistics, train for
//! a few epochs and watch the dev MRR.
//!
//! Run: `cargo run -p corank --example train_synthetic`

use corank::corpus::{read_all, split_train_dev, Tokenizer, Vocabulary};
use corank::embeddings::{BankRole, EmbeddingBank, TripleBank};
use corank::features::{Bm25Params, CorpusStats};
use corank::model::ModelConfig;
use corank::synth::{generate, SynthConfig};
use corank::training::{train, TrainConfig};

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let synth = SynthConfig {
        n_queries: 60,
        embed_dim: 16,
        seed: 31,
        ..SynthConfig::default()
    };
    let ds = generate(&synth);
    let data = dir.path().join("data.tsv");
    ds.write_tsv(&data).unwrap();
    ds.write_banks(dir.path(), synth.embed_dim, synth.seed).unwrap();
    println!(
        "generated {} queries over a {}-token inventory",
        synth.n_queries,
        ds.inventory.len()
    );

    let samples = read_all(&data, true, &Tokenizer::new(), 10).unwrap();
    let (train_set, dev_set) = split_train_dev(samples, 12, synth.seed).unwrap();
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
    // BM25/TF-IDF statistics come from training passages only.
    let stats = CorpusStats::from_documents(train_set.iter().flat_map(|s| s.passages.clone()));
    println!(
        "split {} train / {} dev, vocabulary {} tokens\n",
        train_set.len(),
        dev_set.len(),
        vocab.size()
    );

    let model_cfg = ModelConfig {
        embed_dim: synth.embed_dim,
        hidden: 12,
        lstm_layers: 1,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let train_cfg = TrainConfig {
        epochs: 8,
        batch_size: 8,
        lr: 0.003,
        clip_norm: 5.0,
        seed: 17,
    };
    let outcome = train(
        &train_set,
        &dev_set,
        &model_cfg,
        &train_cfg,
        &vocab,
        &banks,
        &stats,
        Bm25Params::default(),
        |stats_e, _ckpt| {
            println!(
                "epoch {:>2}  mean loss {:.4}  dev MRR {:.4}",
                stats_e.epoch,
                stats_e.mean_loss,
                stats_e.dev_mrr.unwrap()
            );
        },
    )
    .unwrap();

    let path = dir.path().join("model.ckpt");
    outcome.checkpoint.save(&path).unwrap();
    println!(
        "\nsaved checkpoint ({} bytes) with {} trainable scalars",
        std::fs::metadata(&path).unwrap().len(),
        outcome.checkpoint.params.param_count()
    );
}

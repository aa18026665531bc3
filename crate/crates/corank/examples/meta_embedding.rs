//! Meta-embeddings: three fixed banks combined per token by a learned
//! self-attention scorer, with per-role out-of-vocabulary fallbacks.
//!
//! Run: `cargo run -p corank --example meta_embedding`

use std::collections::HashMap;

use corank::embeddings::{char_ngrams, BankRole, EmbeddingBank, TripleBank};
use corank::model::{meta_embed, BoundParams, EmbeddedSeq, ModelConfig, ModelParams};
use corank::tensor::{Tape, Tensor};

fn bank(role: BankRole, entries: &[(&str, [f64; 4])]) -> EmbeddingBank {
    let map: HashMap<String, Vec<f64>> = entries
        .iter()
        .map(|(t, v)| (t.to_string(), v.to_vec()))
        .collect();
    EmbeddingBank::from_vectors(role, map).unwrap()
}

fn main() {
    let w2v = bank(BankRole::Word2Vec, &[("ranking", [1.0, 0.0, 0.0, 0.0])]);
    let glove = bank(BankRole::Glove, &[("ranking", [0.0, 1.0, 0.0, 0.0])]);
    let mut fasttext = bank(BankRole::FastText, &[("ranking", [0.0, 0.0, 1.0, 0.0])]);
    // Subword table lets the fasttext role embed unseen words.
    fasttext
        .set_subwords(
            [("<ra".to_string(), vec![0.2, 0.2, 0.2, 0.2])]
                .into_iter()
                .collect(),
        )
        .unwrap();
    let banks = TripleBank::new(w2v, glove, fasttext).unwrap();

    println!("character 3-6 grams of \"rank\": {:?}", char_ngrams("rank", 3, 6));
    println!("oov \"rank\" under each role (w2v, glove, fasttext):");
    for v in banks.oov_lookup("rank") {
        println!("  {v:?}");
    }

    // The attention scorer mixes the three bank vectors per token. With
    // zero scorer weights every bank gets weight 1/3.
    let config = ModelConfig {
        embed_dim: 4,
        hidden: 2,
        lstm_layers: 1,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut params = ModelParams::zeros(&config).unwrap();
    let seq = EmbeddedSeq::from_encoded(
        &corank::corpus::encode(
            &["ranking".to_string()],
            &corank::corpus::Vocabulary::build(vec![vec!["ranking".to_string()]], 1),
            4,
        ),
        &banks,
    );
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, &params, false);
    let me = meta_embed(&mut tape, bound.attn_w, bound.attn_b, &seq).unwrap();
    println!("\nzero scorer: weights per bank = {:?}", tape.value(me.weights).data());
    println!("combined vector = {:?}", tape.value(me.output).data());

    // A scorer that prefers the first embedding dimension tilts the mix
    // toward the w2v vector.
    params.attn_w = Tensor::row(vec![3.0, 0.0, 0.0, 0.0]);
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, &params, false);
    let me = meta_embed(&mut tape, bound.attn_w, bound.attn_b, &seq).unwrap();
    println!("\nbiased scorer: weights per bank = {:?}", tape.value(me.weights).data());
    println!("combined vector = {:?}", tape.value(me.output).data());
}

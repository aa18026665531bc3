//! Anatomy of one scoring pass: meta-embed, encode with sentinels,
//! co-attend, fuse, max-pool and score; prints every intermediate shape
//! and one attention distribution.
//!
//! Run: `cargo run -p corank --example coattention_forward`

use corank::features::FeatureVector;
use corank::model::{
    coattend, encode, meta_embed, score_document, BoundParams, EmbeddedSeq, Mode, ModelConfig,
    ModelParams, Side,
};
use corank::tensor::{Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_seq(dim: usize, len: usize, rng: &mut ChaCha8Rng) -> EmbeddedSeq {
    let t = |rng: &mut ChaCha8Rng| Tensor::uniform(dim, len, -1.0, 1.0, rng);
    EmbeddedSeq::from_tensors([t(rng), t(rng), t(rng)]).unwrap()
}

fn main() {
    let config = ModelConfig {
        embed_dim: 6,
        hidden: 4,
        lstm_layers: 2,
        dropout: 0.2, // inert here: evaluation mode
        ..ModelConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let params = ModelParams::init(
        &ModelConfig {
            init_range: 0.3,
            ..config
        },
        &mut rng,
    )
    .unwrap();
    println!("model with {} trainable scalars", params.param_count());

    let query = random_seq(config.embed_dim, 3, &mut rng); // n = 3
    let doc = random_seq(config.embed_dim, 5, &mut rng); // m = 5

    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, &params, false);
    let shape = |tape: &Tape, v: Var| format!("{}", tape.value(v).shape());

    let qm = meta_embed(&mut tape, bound.attn_w, bound.attn_b, &query).unwrap();
    let q_enc = encode(&mut tape, &bound, qm.output, Side::Query, Mode::Eval).unwrap();
    let dm = meta_embed(&mut tape, bound.attn_w, bound.attn_b, &doc).unwrap();
    let d_enc = encode(&mut tape, &bound, dm.output, Side::Document, Mode::Eval).unwrap();
    println!("query meta-embedding  {}", shape(&tape, qm.output));
    println!("encoded query Q       {} (sentinel appended)", shape(&tape, q_enc));
    println!("encoded document D    {}", shape(&tape, d_enc));

    let co = coattend(&mut tape, &bound, q_enc, d_enc, Mode::Eval).unwrap();
    println!("affinity L = D^T Q    {}", shape(&tape, co.affinity));
    println!("A^Q (doc per query)   {}", shape(&tape, co.a_q));
    println!("A^D (query per doc)   {}", shape(&tape, co.a_d));
    println!("C^Q = D A^Q           {}", shape(&tape, co.c_q));
    println!("C^D = [Q; C^Q] A^D    {}", shape(&tape, co.c_d));
    println!("fusion output U       {} (sentinel dropped)", shape(&tape, co.u));

    // Each query position's attention over document positions sums to 1;
    // the last row is the document sentinel receiving "attend to
    // nothing" mass.
    let a_q = tape.value(co.a_q);
    println!("\nA^Q column for query position 0:");
    for r in 0..a_q.rows() {
        let tag = if r + 1 == a_q.rows() { " (sentinel)" } else { "" };
        println!("  doc position {r}: {:.4}{tag}", a_q.get(r, 0));
    }

    let feats = FeatureVector {
        length: 0.3,
        bm25: 1.2,
        tf_idf: 0.8,
    };
    let score = score_document(&mut tape, &bound, &co, &feats).unwrap();
    println!("\nscore = {:+.6}", tape.value(score).scalar_value());
    println!("tape recorded {} nodes", tape.len());
}

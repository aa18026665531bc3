//! Tokenization and vocabulary construction.
//!
//! Run: `cargo run -p corank --example tokenize_and_vocab`

use corank::corpus::{encode, Tokenizer, Vocabulary};

fn main() {
    let tokenizer = Tokenizer::new();

    // Lowercasing, punctuation trimming and stopword removal.
    for text in [
        "What is BM25?",
        "The quick brown fox jumps over the lazy dog!",
        "Passage ranking, re-ranking & answer selection.",
    ] {
        println!("{text:?} -> {:?}", tokenizer.tokenize(text));
    }

    // Vocabulary keeps tokens seen at least `min_frequency` times, ids in
    // descending frequency order (ties lexicographic), id 0 reserved for
    // out-of-vocabulary and padding.
    let corpus: Vec<Vec<String>> = [
        "the neural ranker scores passages",
        "the ranker compares passages pairwise",
        "a neural network ranks the passages",
    ]
    .iter()
    .map(|t| tokenizer.tokenize(t))
    .collect();
    let vocab = Vocabulary::build(&corpus, 2);
    println!("\nvocabulary over 3 documents, min_frequency = 2:");
    for token in ["passages", "ranker", "neural", "network"] {
        println!("  id({token}) = {}", vocab.id_of(token));
    }

    // Encoding pads with zeros to a fixed capacity and keeps the raw
    // tokens of the window for embedding lookup.
    let query = tokenizer.tokenize("how does the neural ranker work");
    let encoded = encode(&query, &vocab, 8);
    println!("\nencoded query {query:?}:");
    println!("  ids     = {:?}", encoded.ids);
    println!("  length  = {}", encoded.length);
    println!("  tokens  = {:?}", encoded.raw_tokens);
}

//! corank — pairwise passage ranking for question answering.
//!
//! A query and ten candidate passages go in; a ranking comes out. The
//! scoring network combines three fixed word-embedding banks through a
//! learned self-attention mixer, encodes query and passage with a shared
//! bidirectional LSTM, fuses them with co-attention, and scores each
//! passage from the pooled representation plus three hand-crafted IR
//! features (length, BM25, TF-IDF). Pairwise win probabilities fill a
//! probability distribution matrix that is turned into a ranking either
//! greedily (row sums, O(N²)) or exactly (maximum-path-sum Hamiltonian
//! path, O(N²·2^N)).
//!
//! Everything runs on a small built-in autodiff engine ([`tensor`]), is
//! seed-deterministic end to end, and is exercised by runnable programs
//! under `examples/`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod features;
pub mod model;
pub mod ranking;
pub mod synth;
pub mod tensor;
pub mod training;

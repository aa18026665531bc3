//! Seed-deterministic synthetic datasets over a closed token inventory,
//! plus matching random embedding banks. The gold passage shares at
//! least three tokens with its query while every distractor shares at
//! most one, so both lexical scorers and the trained model have signal
//! to find.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{write_tsv, CorpusError, STOPWORDS_EN};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_queries: usize,
    pub n_passages: usize,
    pub inventory_size: usize,
    pub embed_dim: usize,
    pub seed: u64,
    pub query_len: (usize, usize),
    /// Minimum query tokens shared by the gold passage.
    pub gold_overlap_min: usize,
    /// Maximum query tokens shared by any distractor.
    pub distractor_overlap_max: usize,
    pub passage_len: (usize, usize),
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_queries: 200,
            n_passages: 10,
            inventory_size: 400,
            embed_dim: 32,
            seed: 42,
            query_len: (4, 6),
            gold_overlap_min: 3,
            distractor_overlap_max: 1,
            passage_len: (8, 14),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthRow {
    pub query_id: String,
    pub query: String,
    pub passage: String,
    pub label: u8,
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub rows: Vec<SynthRow>,
    pub inventory: Vec<String>,
}

/// Pronounceable pseudo-words from consonant-vowel syllables, skipping
/// anything that collides with the stopword list. Enumeration order is
/// fixed, so the inventory depends only on its size.
pub fn token_inventory(size: usize) -> Vec<String> {
    const CONSONANTS: [&str; 14] = [
        "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
    ];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    let stopwords: HashSet<&str> = STOPWORDS_EN.lines().collect();
    let syllable = |i: usize| format!("{}{}", CONSONANTS[i / 5], VOWELS[i % 5]);
    let mut out = Vec::with_capacity(size);
    let mut i = 0usize;
    while out.len() < size {
        let word = format!(
            "{}{}{}",
            syllable(i % 70),
            syllable((i / 70) % 70),
            syllable((i / 4900) % 70)
        );
        i += 1;
        if stopwords.contains(word.as_str()) {
            continue;
        }
        out.push(word);
    }
    out
}

/// `k` distinct indices from `0..n`, drawn without replacement.
fn sample_distinct(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

fn sample_from(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let picks = sample_distinct(pool.len(), k, rng);
    picks.into_iter().map(|i| pool[i]).collect()
}

pub fn generate(cfg: &SynthConfig) -> SynthDataset {
    assert!(cfg.n_passages >= 2, "need at least two passages per query");
    let inventory = token_inventory(cfg.inventory_size);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.n_queries * cfg.n_passages);
    for q in 0..cfg.n_queries {
        let query_len = rng.random_range(cfg.query_len.0..=cfg.query_len.1);
        let query_idx = sample_distinct(inventory.len(), query_len, &mut rng);
        let query_set: HashSet<usize> = query_idx.iter().copied().collect();
        let filler_pool: Vec<usize> = (0..inventory.len())
            .filter(|i| !query_set.contains(i))
            .collect();
        let query_text = query_idx
            .iter()
            .map(|&i| inventory[i].clone())
            .collect::<Vec<_>>()
            .join(" ");

        let gold_pos = rng.random_range(0..cfg.n_passages);
        let mut passages = Vec::with_capacity(cfg.n_passages);
        for p in 0..cfg.n_passages {
            let length = rng.random_range(cfg.passage_len.0..=cfg.passage_len.1);
            let shared = if p == gold_pos {
                let hi = query_len.min(cfg.gold_overlap_min + 1);
                rng.random_range(cfg.gold_overlap_min.min(query_len)..=hi)
            } else {
                rng.random_range(0..=cfg.distractor_overlap_max)
            };
            let mut words = sample_from(&query_idx, shared.min(query_len), &mut rng);
            let filler = length.saturating_sub(words.len());
            words.extend(sample_from(&filler_pool, filler.min(filler_pool.len()), &mut rng));
            // Shuffle so shared tokens sit at arbitrary positions.
            for i in (1..words.len()).rev() {
                words.swap(i, rng.random_range(0..=i));
            }
            passages.push(
                words
                    .iter()
                    .map(|&i| inventory[i].clone())
                    .collect::<Vec<_>>()
                    .join(" "),
            );
        }
        for (p, passage) in passages.into_iter().enumerate() {
            rows.push(SynthRow {
                query_id: format!("synth-{q:05}"),
                query: query_text.clone(),
                passage,
                label: u8::from(p == gold_pos),
            });
        }
    }
    SynthDataset { rows, inventory }
}

impl SynthDataset {
    pub fn write_tsv(&self, path: &Path) -> Result<(), CorpusError> {
        let rows: Vec<(String, String, String, u8)> = self
            .rows
            .iter()
            .map(|r| (r.query_id.clone(), r.query.clone(), r.passage.clone(), r.label))
            .collect();
        write_tsv(path, &rows)
    }

    /// Write the three bank files (`w2v.vec`, `glove.vec`,
    /// `fasttext.vec`) with per-bank seeded uniform vectors covering the
    /// whole inventory.
    pub fn write_banks(&self, dir: &Path, dim: usize, seed: u64) -> std::io::Result<()> {
        for (k, name) in ["w2v.vec", "glove.vec", "fasttext.vec"].iter().enumerate() {
            let stream = 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64 + 1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream);
            let mut file = std::fs::File::create(dir.join(name))?;
            for token in &self.inventory {
                let comps: Vec<String> = (0..dim)
                    .map(|_| format!("{}", rng.random_range(-0.5..0.5)))
                    .collect();
                writeln!(file, "{} {}", token, comps.join(" "))?;
            }
        }
        Ok(())
    }
}

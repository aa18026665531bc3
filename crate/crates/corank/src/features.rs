//! Hand-crafted relevance features: document length, Okapi BM25 and
//! TF-IDF, plus corpus statistics and z-score normalization.
//!
//! Statistics are computed over training passages only and frozen for
//! evaluation; [`CorpusStats`] round-trips through a versioned text file
//! so reruns score bit-identically.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

/// Okapi defaults.
pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// BM25 shape parameters: `k1` saturates term frequency, `b` controls
/// length normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

/// Components of the feature vector, in concatenation order.
pub const FEATURE_COUNT: usize = 3;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("stats file {path} line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
}

/// Corpus-level statistics backing BM25/TF-IDF: document count, document
/// frequency per token, and mean document length in tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    doc_count: usize,
    doc_freq: HashMap<String, usize>,
    avg_doc_len: f64,
}

impl CorpusStats {
    /// Accumulate over a stream of token sequences. Document frequency
    /// counts each document at most once per token.
    pub fn from_documents<I, S>(documents: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        let mut doc_freq: HashMap<String, usize> = HashMap::new();
        let mut doc_count = 0usize;
        let mut total_len = 0usize;
        for doc in documents {
            let doc = doc.as_ref();
            doc_count += 1;
            total_len += doc.len();
            let mut unique: std::collections::HashSet<&str> =
                std::collections::HashSet::with_capacity(doc.len());
            for token in doc {
                unique.insert(token.as_str());
            }
            for token in unique {
                *doc_freq.entry(token.to_owned()).or_insert(0) += 1;
            }
        }
        let avg_doc_len = if doc_count == 0 {
            0.0
        } else {
            total_len as f64 / doc_count as f64
        };
        CorpusStats {
            doc_count,
            doc_freq,
            avg_doc_len,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn doc_freq(&self, token: &str) -> usize {
        self.doc_freq.get(token).copied().unwrap_or(0)
    }

    /// Versioned key-value serialization; df rows are sorted by token so
    /// the file is byte-stable.
    pub fn save(&self, path: &Path) -> Result<(), StatsError> {
        let mut out = String::from("corank-stats v1\n");
        out.push_str(&format!("doc_count={}\n", self.doc_count));
        out.push_str(&format!("avg_doc_len={}\n", self.avg_doc_len));
        out.push_str(&format!("df_entries={}\n", self.doc_freq.len()));
        let mut entries: Vec<(&String, &usize)> = self.doc_freq.iter().collect();
        entries.sort();
        for (token, df) in entries {
            out.push_str(&format!("{token}\t{df}\n"));
        }
        std::fs::write(path, out).map_err(|source| StatsError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, StatsError> {
        let text = std::fs::read_to_string(path).map_err(|source| StatsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let perr = |line: usize, reason: String| StatsError::Parse {
            path: path.display().to_string(),
            line,
            reason,
        };
        let mut lines = text.lines().enumerate();
        let header = lines.next().ok_or_else(|| perr(1, "empty file".into()))?;
        if header.1 != "corank-stats v1" {
            return Err(perr(1, format!("unsupported header {:?}", header.1)));
        }
        let mut doc_count = None;
        let mut avg_doc_len = None;
        let mut df_entries = None;
        for _ in 0..3 {
            let (i, line) = lines
                .next()
                .ok_or_else(|| perr(0, "truncated header".into()))?;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| perr(i + 1, format!("expected key=value, got {line:?}")))?;
            match key {
                "doc_count" => {
                    doc_count = Some(value.parse::<usize>().map_err(|e| {
                        perr(i + 1, format!("bad doc_count: {e}"))
                    })?)
                }
                "avg_doc_len" => {
                    avg_doc_len = Some(value.parse::<f64>().map_err(|e| {
                        perr(i + 1, format!("bad avg_doc_len: {e}"))
                    })?)
                }
                "df_entries" => {
                    df_entries = Some(value.parse::<usize>().map_err(|e| {
                        perr(i + 1, format!("bad df_entries: {e}"))
                    })?)
                }
                other => return Err(perr(i + 1, format!("unknown key {other:?}"))),
            }
        }
        let expected = df_entries.ok_or_else(|| perr(0, "missing df_entries".into()))?;
        let mut doc_freq = HashMap::with_capacity(expected);
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (token, df) = line
                .split_once('\t')
                .ok_or_else(|| perr(i + 1, format!("expected token<TAB>df, got {line:?}")))?;
            let df: usize = df
                .parse()
                .map_err(|e| perr(i + 1, format!("bad df: {e}")))?;
            if doc_freq.insert(token.to_owned(), df).is_some() {
                return Err(perr(i + 1, format!("duplicate token {token:?}")));
            }
        }
        if doc_freq.len() != expected {
            return Err(perr(
                0,
                format!("expected {expected} df rows, found {}", doc_freq.len()),
            ));
        }
        Ok(CorpusStats {
            doc_count: doc_count.ok_or_else(|| perr(0, "missing doc_count".into()))?,
            doc_freq,
            avg_doc_len: avg_doc_len.ok_or_else(|| perr(0, "missing avg_doc_len".into()))?,
        })
    }
}

/// Unique query tokens in first-occurrence order, so float summation
/// order is reproducible.
fn unique_in_order(tokens: &[String]) -> Vec<&str> {
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(tokens.len());
    let mut out = Vec::new();
    for t in tokens {
        if seen.insert(t.as_str(), ()).is_none() {
            out.push(t.as_str());
        }
    }
    out
}

fn term_frequency(doc: &[String]) -> HashMap<&str, usize> {
    let mut tf = HashMap::with_capacity(doc.len());
    for t in doc {
        *tf.entry(t.as_str()).or_insert(0) += 1;
    }
    tf
}

/// Okapi BM25 with smoothed non-negative idf:
/// `idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))`. Query terms unseen in
/// the statistics corpus contribute 0.
pub fn bm25(query: &[String], doc: &[String], stats: &CorpusStats, k1: f64, b: f64) -> f64 {
    debug_assert!(k1 >= 0.0 && (0.0..=1.0).contains(&b));
    if stats.doc_count() == 0 {
        return 0.0;
    }
    let n = stats.doc_count() as f64;
    let tf = term_frequency(doc);
    let len_ratio = if stats.avg_doc_len() > 0.0 {
        doc.len() as f64 / stats.avg_doc_len()
    } else {
        0.0
    };
    let mut score = 0.0;
    for term in unique_in_order(query) {
        let df = stats.doc_freq(term);
        if df == 0 {
            continue;
        }
        let f = *tf.get(term).unwrap_or(&0) as f64;
        if f == 0.0 {
            continue;
        }
        let idf = (1.0 + (n - df as f64 + 0.5) / (df as f64 + 0.5)).ln();
        score += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * len_ratio));
    }
    score
}

/// Raw-tf TF-IDF: `sum over unique query terms of tf(t, doc) * ln(N / df(t))`,
/// with df = 0 terms contributing 0.
pub fn tf_idf(query: &[String], doc: &[String], stats: &CorpusStats) -> f64 {
    if stats.doc_count() == 0 {
        return 0.0;
    }
    let n = stats.doc_count() as f64;
    let tf = term_frequency(doc);
    let mut score = 0.0;
    for term in unique_in_order(query) {
        let df = stats.doc_freq(term);
        if df == 0 {
            continue;
        }
        let f = *tf.get(term).unwrap_or(&0) as f64;
        score += f * (n / df as f64).ln();
    }
    score
}

/// The three manual features concatenated into the scorer input, in
/// order: document length, BM25, TF-IDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub length: f64,
    pub bm25: f64,
    pub tf_idf: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; FEATURE_COUNT] {
        [self.length, self.bm25, self.tf_idf]
    }

    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        FeatureVector {
            length: a[0],
            bm25: a[1],
            tf_idf: a[2],
        }
    }
}

/// Per-component mean/stddev fitted on the training set, stored in the
/// checkpoint so evaluation normalizes identically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
}

impl NormStats {
    /// Population mean and standard deviation over the given vectors.
    pub fn fit(vectors: &[FeatureVector]) -> Self {
        let n = vectors.len().max(1) as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        for v in vectors {
            for (m, x) in mean.iter_mut().zip(v.to_array()) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = [0.0; FEATURE_COUNT];
        for v in vectors {
            for ((s, x), m) in var.iter_mut().zip(v.to_array()).zip(mean) {
                *s += (x - m) * (x - m);
            }
        }
        let mut std = [0.0; FEATURE_COUNT];
        for (s, v) in std.iter_mut().zip(var) {
            *s = (v / n).sqrt();
        }
        NormStats { mean, std }
    }

    /// Identity normalization (zero mean, unit scale).
    pub fn identity() -> Self {
        NormStats {
            mean: [0.0; FEATURE_COUNT],
            std: [1.0; FEATURE_COUNT],
        }
    }

    /// Z-score each component; a zero stddev maps the component to 0.
    pub fn apply(&self, v: FeatureVector) -> FeatureVector {
        let raw = v.to_array();
        let mut out = [0.0; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            out[i] = if self.std[i] > 0.0 {
                (raw[i] - self.mean[i]) / self.std[i]
            } else {
                0.0
            };
        }
        FeatureVector::from_array(out)
    }
}

/// Assemble the raw feature vector, z-scoring when `norm` is given.
pub fn feature_vector(
    query: &[String],
    doc: &[String],
    stats: &CorpusStats,
    k1: f64,
    b: f64,
    norm: Option<&NormStats>,
) -> FeatureVector {
    let raw = FeatureVector {
        length: doc.len() as f64,
        bm25: bm25(query, doc, stats, k1, b),
        tf_idf: tf_idf(query, doc, stats),
    };
    match norm {
        Some(n) => n.apply(raw),
        None => raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn corpus_stats_counts_documents_not_terms() {
        let stats = CorpusStats::from_documents(vec![toks(&["a", "b"]), toks(&["a"])]);
        assert_eq!(stats.doc_count(), 2);
        assert_eq!(stats.doc_freq("a"), 2);
        assert_eq!(stats.doc_freq("b"), 1);
        assert_relative_eq!(stats.avg_doc_len(), 1.5);

        let repeated = CorpusStats::from_documents(vec![toks(&["a", "a", "a"])]);
        assert_eq!(repeated.doc_freq("a"), 1);
    }

    #[test]
    fn corpus_stats_duplicate_documents() {
        let stats =
            CorpusStats::from_documents(vec![toks(&["a", "b"]), toks(&["a", "b"])]);
        assert_eq!(stats.doc_freq("a"), 2);
        assert_relative_eq!(stats.avg_doc_len(), 2.0);
    }

    #[test]
    fn corpus_stats_empty_stream() {
        let stats = CorpusStats::from_documents(Vec::<Vec<String>>::new());
        assert_eq!(stats.doc_count(), 0);
        assert_eq!(stats.avg_doc_len(), 0.0);
    }

    #[test]
    fn bm25_hand_evaluated_case() {
        // corpus {d1=[x,y], d2=[y]}, query [x], doc d1, k1=1.2, b=0.75:
        // tf=1, df(x)=1, idf=ln(1 + 1.5/1.5)=ln 2, |d1|=2, avg=1.5
        // score = ln2 * (1*2.2) / (1 + 1.2*(0.25 + 0.75*(2/1.5)))
        let stats = CorpusStats::from_documents(vec![toks(&["x", "y"]), toks(&["y"])]);
        let expected = 2.0_f64.ln() * (1.0 * 2.2) / (1.0 + 1.2 * (0.25 + 0.75 * (2.0 / 1.5)));
        let got = bm25(&toks(&["x"]), &toks(&["x", "y"]), &stats, 1.2, 0.75);
        assert_relative_eq!(got, expected, max_relative = 1e-12);
    }

    #[test]
    fn bm25_absent_term_scores_zero() {
        let stats = CorpusStats::from_documents(vec![toks(&["x"]), toks(&["y"])]);
        assert_eq!(
            bm25(&toks(&["zzz"]), &toks(&["x"]), &stats, 1.2, 0.75),
            0.0
        );
    }

    #[test]
    fn bm25_identical_docs_score_identically() {
        let stats = CorpusStats::from_documents(vec![toks(&["x", "y"]), toks(&["x"])]);
        let d = toks(&["x", "y", "x"]);
        let q = toks(&["x", "y"]);
        assert_eq!(
            bm25(&q, &d, &stats, 1.2, 0.75),
            bm25(&q, &d.clone(), &stats, 1.2, 0.75)
        );
    }

    #[test]
    fn tf_idf_hand_evaluated_case() {
        // corpus {d1=[x], d2=[y]}, query [x,x] dedups to {x}, doc [x,x,x]:
        // score = 3 * ln 2
        let stats = CorpusStats::from_documents(vec![toks(&["x"]), toks(&["y"])]);
        let got = tf_idf(&toks(&["x", "x"]), &toks(&["x", "x", "x"]), &stats);
        assert_relative_eq!(got, 3.0 * 2.0_f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn tf_idf_no_overlap_is_zero() {
        let stats = CorpusStats::from_documents(vec![toks(&["x"]), toks(&["y"])]);
        assert_eq!(tf_idf(&toks(&["x"]), &toks(&["y"]), &stats), 0.0);
    }

    #[test]
    fn tf_idf_single_doc_corpus_degenerates_to_zero() {
        let stats = CorpusStats::from_documents(vec![toks(&["x", "y"])]);
        assert_eq!(tf_idf(&toks(&["x"]), &toks(&["x", "x"]), &stats), 0.0);
    }

    #[test]
    fn feature_vector_empty_doc() {
        let stats = CorpusStats::from_documents(vec![toks(&["x"])]);
        let v = feature_vector(&toks(&["x"]), &[], &stats, 1.2, 0.75, None);
        assert_eq!(v.to_array(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn feature_vector_zscore_identity_at_mean() {
        let stats = CorpusStats::from_documents(vec![toks(&["x", "y"]), toks(&["y"])]);
        let raw = feature_vector(&toks(&["x"]), &toks(&["x", "y"]), &stats, 1.2, 0.75, None);
        let norm = NormStats {
            mean: raw.to_array(),
            std: [1.0, 1.0, 1.0],
        };
        let z = norm.apply(raw);
        assert_eq!(z.to_array(), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_std_component_maps_to_zero() {
        let norm = NormStats {
            mean: [1.0, 0.0, 0.0],
            std: [0.0, 1.0, 1.0],
        };
        let z = norm.apply(FeatureVector {
            length: 7.0,
            bm25: 2.0,
            tf_idf: -2.0,
        });
        assert_eq!(z.to_array(), [0.0, 2.0, -2.0]);
    }

    #[test]
    fn unnormalized_components_equal_raw_ops() {
        let stats = CorpusStats::from_documents(vec![toks(&["x", "y"]), toks(&["y"])]);
        let q = toks(&["x", "y"]);
        let d = toks(&["x", "y", "y"]);
        let v = feature_vector(&q, &d, &stats, 1.2, 0.75, None);
        assert_eq!(v.length, 3.0);
        assert_eq!(v.bm25, bm25(&q, &d, &stats, 1.2, 0.75));
        assert_eq!(v.tf_idf, tf_idf(&q, &d, &stats));
    }

    #[test]
    fn stats_save_load_bit_exact() {
        let stats = CorpusStats::from_documents(vec![
            toks(&["alpha", "beta", "alpha"]),
            toks(&["gamma"]),
            toks(&["beta", "gamma", "delta", "beta"]),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.txt");
        stats.save(&path).unwrap();
        let loaded = CorpusStats::load(&path).unwrap();
        assert_eq!(loaded, stats);
        assert_eq!(loaded.avg_doc_len().to_bits(), stats.avg_doc_len().to_bits());
    }

    #[test]
    fn stats_load_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stats.txt");
        std::fs::write(&path, "not-a-stats-file\n").unwrap();
        assert!(CorpusStats::load(&path).is_err());
    }

    proptest! {
        /// BM25 and TF-IDF are monotonically non-decreasing in the term
        /// frequency of a matched term, all else fixed.
        #[test]
        fn scores_monotone_in_tf(
            extra in 1usize..6,
            base in 1usize..4,
            corpus_docs in proptest::collection::vec(
                proptest::collection::vec("[a-c]", 1..6), 2..6),
        ) {
            let corpus: Vec<Vec<String>> = corpus_docs
                .iter()
                .map(|d| d.iter().map(|s| s.to_string()).collect())
                .collect();
            let mut with_term = corpus.clone();
            with_term.push(toks(&["q"]));
            let stats = CorpusStats::from_documents(&with_term);
            let query = toks(&["q"]);
            let mut doc: Vec<String> = vec!["q".to_owned(); base];
            doc.extend(std::iter::repeat_n("a".to_owned(), 2));
            let lo_bm25 = bm25(&query, &doc, &stats, 1.2, 0.75);
            let lo_tfidf = tf_idf(&query, &doc, &stats);
            // Replace filler with more of the query term: same length,
            // higher tf.
            let mut more = doc.clone();
            for slot in more.iter_mut().rev().take(extra.min(2)) {
                *slot = "q".to_owned();
            }
            let hi_bm25 = bm25(&query, &more, &stats, 1.2, 0.75);
            let hi_tfidf = tf_idf(&query, &more, &stats);
            prop_assert!(hi_bm25 >= lo_bm25 - 1e-12);
            prop_assert!(hi_tfidf >= lo_tfidf - 1e-12);
        }

        /// With b = 0 BM25 ignores document length entirely.
        #[test]
        fn bm25_b_zero_is_length_independent(pad in 0usize..10) {
            let stats = CorpusStats::from_documents(vec![
                toks(&["q", "x"]),
                toks(&["x", "y"]),
            ]);
            let query = toks(&["q"]);
            let mut doc = toks(&["q"]);
            doc.extend(std::iter::repeat_n("z".to_owned(), pad));
            let short = bm25(&query, &toks(&["q"]), &stats, 1.2, 0.0);
            let long = bm25(&query, &doc, &stats, 1.2, 0.0);
            prop_assert_eq!(short, long);
        }

        /// Both scores are invariant to document token order.
        #[test]
        fn scores_permutation_invariant(
            doc in proptest::collection::vec("[a-d]", 1..12),
            rotate in 0usize..12,
        ) {
            let stats = CorpusStats::from_documents(vec![
                toks(&["a", "b"]),
                toks(&["c", "d", "a"]),
            ]);
            let query = toks(&["a", "c"]);
            let doc: Vec<String> = doc.iter().map(|s| s.to_string()).collect();
            let mut shuffled = doc.clone();
            shuffled.rotate_left(rotate % doc.len().max(1));
            prop_assert_eq!(
                bm25(&query, &doc, &stats, 1.2, 0.75),
                bm25(&query, &shuffled, &stats, 1.2, 0.75)
            );
            prop_assert_eq!(
                tf_idf(&query, &doc, &stats),
                tf_idf(&query, &shuffled, &stats)
            );
        }
    }
}

//! Dataset ingestion: tokenization, vocabulary construction, sequence
//! encoding, TSV loading and the train/dev split.
//!
//! The dataset file is UTF-8 TSV with one passage per row:
//! `query_id<TAB>query_text<TAB>passage_text<TAB>label(0|1)<TAB>passage_index`,
//! rows for one query contiguous and exactly `n_passages` per query.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Lines, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// The shipped English stopword list, one token per line.
pub const STOPWORDS_EN: &str = include_str!("stopwords_en.txt");

/// Passages per query in the pairwise-ranking datasets.
pub const DEFAULT_PASSAGES_PER_QUERY: usize = 10;

/// Vocabulary keeps tokens whose corpus frequency reaches this count.
pub const DEFAULT_MIN_FREQUENCY: u32 = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected 5 tab-separated fields, got {got}")]
    BadRow { line: usize, got: usize },
    #[error("line {line}: label must be 0 or 1, got {got:?}")]
    BadLabel { line: usize, got: String },
    #[error("line {line}: passage_index {got} does not match position {expected}")]
    BadPassageIndex {
        line: usize,
        got: String,
        expected: usize,
    },
    #[error("line {line}: expected {expected} passages for query {query_id}, got {got}")]
    WrongPassageCount {
        line: usize,
        query_id: String,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: query {query_id} has multiple gold labels")]
    MultipleGold { line: usize, query_id: String },
    #[error("line {line}: query {query_id} has no gold label")]
    MissingGold { line: usize, query_id: String },
    #[error("line {line}: query {query_id} appears in a non-contiguous block")]
    NonContiguousQuery { line: usize, query_id: String },
    #[error("dev_count {dev_count} must be smaller than dataset size {size}")]
    DevCountTooLarge { dev_count: usize, size: usize },
    #[error("line {line}: bad vocabulary row: {reason}")]
    BadVocabRow { line: usize, reason: String },
}

/// Rule tokenizer: Unicode lowercasing, whitespace split, non-alphanumeric
/// characters trimmed from both ends, empty and stopword tokens dropped.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::new()
    }
}

impl Tokenizer {
    /// Tokenizer with the embedded 179-word English stopword list.
    pub fn new() -> Self {
        Tokenizer {
            stopwords: STOPWORDS_EN.lines().map(str::to_owned).collect(),
        }
    }

    /// Tokenizer with a custom stopword file (one token per line).
    pub fn with_stopwords_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Tokenizer {
            stopwords: text.lines().map(str::to_owned).collect(),
        })
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split_whitespace()
            .filter_map(|raw| {
                let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
                if trimmed.is_empty() || self.stopwords.contains(trimmed) {
                    None
                } else {
                    Some(trimmed.to_owned())
                }
            })
            .collect()
    }
}

/// Token table with dense ids `1..=size`; id 0 is reserved for OOV/padding.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    /// Entry `id - 1` is the (token, corpus frequency) pair for `id`.
    entries: Vec<(String, u32)>,
    min_frequency: u32,
}

/// Incremental frequency counter, so vocabularies can be built from a
/// stream without materializing the corpus.
#[derive(Debug, Default)]
pub struct VocabularyBuilder {
    counts: HashMap<String, u32>,
}

impl VocabularyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, tokens: &[String]) {
        for token in tokens {
            *self.counts.entry(token.clone()).or_insert(0) += 1;
        }
    }

    /// Drop tokens under `min_frequency` and assign dense ids in
    /// descending frequency order, ties broken lexicographically.
    pub fn finish(self, min_frequency: u32) -> Vocabulary {
        assert!(min_frequency >= 1, "min_frequency must be at least 1");
        let mut entries: Vec<(String, u32)> = self
            .counts
            .into_iter()
            .filter(|(_, c)| *c >= min_frequency)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let token_to_id = entries
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), (i + 1) as u32))
            .collect();
        Vocabulary {
            token_to_id,
            entries,
            min_frequency,
        }
    }
}

impl Vocabulary {
    /// Build from a stream of token sequences; two builds over the same
    /// stream are identical.
    pub fn build<I, S>(corpus: I, min_frequency: u32) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[String]>,
    {
        let mut builder = VocabularyBuilder::new();
        for seq in corpus {
            builder.add(seq.as_ref());
        }
        builder.finish(min_frequency)
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn min_frequency(&self) -> u32 {
        self.min_frequency
    }

    /// Token id, or 0 when out of vocabulary.
    pub fn id_of(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(0)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// FNV-1a over (id, token, frequency) in id order; stored in
    /// checkpoints so evaluation can detect a mismatched vocabulary.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x1000_0000_01b3);
            }
        };
        eat(&(self.entries.len() as u64).to_le_bytes());
        eat(&self.min_frequency.to_le_bytes());
        for (i, (token, freq)) in self.entries.iter().enumerate() {
            eat(&((i + 1) as u32).to_le_bytes());
            eat(token.as_bytes());
            eat(&[0]);
            eat(&freq.to_le_bytes());
        }
        h
    }

    /// Write as TSV `token<TAB>id<TAB>frequency`, one row per id.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut out = String::new();
        for (i, (token, freq)) in self.entries.iter().enumerate() {
            out.push_str(&format!("{}\t{}\t{}\n", token, i + 1, freq));
        }
        std::fs::write(path, out).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path, min_frequency: u32) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut entries = Vec::new();
        let mut token_to_id = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(CorpusError::BadVocabRow {
                    line: i + 1,
                    reason: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let id: u32 = fields[1].parse().map_err(|_| CorpusError::BadVocabRow {
                line: i + 1,
                reason: format!("bad id {:?}", fields[1]),
            })?;
            if id as usize != entries.len() + 1 {
                return Err(CorpusError::BadVocabRow {
                    line: i + 1,
                    reason: format!("ids must be dense from 1, got {id}"),
                });
            }
            let freq: u32 = fields[2].parse().map_err(|_| CorpusError::BadVocabRow {
                line: i + 1,
                reason: format!("bad frequency {:?}", fields[2]),
            })?;
            if token_to_id.insert(fields[0].to_owned(), id).is_some() {
                return Err(CorpusError::BadVocabRow {
                    line: i + 1,
                    reason: format!("duplicate token {:?}", fields[0]),
                });
            }
            entries.push((fields[0].to_owned(), freq));
        }
        Ok(Vocabulary {
            token_to_id,
            entries,
            min_frequency,
        })
    }
}

/// One query with its candidate passages, already tokenized.
#[derive(Debug, Clone)]
pub struct QuerySample {
    pub query_id: String,
    pub query_tokens: Vec<String>,
    pub passages: Vec<Vec<String>>,
    /// Index of the gold passage, absent for unlabeled evaluation data.
    pub gold_index: Option<usize>,
}

/// Token ids padded to a fixed capacity, plus the raw tokens of the kept
/// window (needed for embedding lookup, including subword fallback for
/// tokens that encoded to id 0).
#[derive(Debug, Clone)]
pub struct EncodedSequence {
    pub ids: Vec<u32>,
    pub length: usize,
    pub raw_tokens: Vec<String>,
}

/// Encode a token sequence against a vocabulary: the first
/// `min(len, capacity)` tokens are kept (head truncation), in-vocabulary
/// tokens map to their id and everything else to 0, and ids are padded
/// with 0 up to `capacity`.
pub fn encode(tokens: &[String], vocab: &Vocabulary, capacity: usize) -> EncodedSequence {
    assert!(capacity >= 1, "capacity must be at least 1");
    let length = tokens.len().min(capacity);
    let mut ids: Vec<u32> = tokens[..length].iter().map(|t| vocab.id_of(t)).collect();
    ids.resize(capacity, 0);
    EncodedSequence {
        ids,
        length,
        raw_tokens: tokens[..length].to_vec(),
    }
}

/// Streaming reader over the TSV dataset; yields one [`QuerySample`] per
/// contiguous `query_id` block without materializing the whole file.
pub struct DatasetReader {
    lines: Lines<BufReader<File>>,
    tokenizer: Tokenizer,
    labeled: bool,
    n_passages: usize,
    line_no: usize,
    pending: Option<(String, ParsedRow)>,
    seen_queries: HashSet<String>,
    path: String,
    done: bool,
}

struct ParsedRow {
    query_text: String,
    passage_text: String,
    label: bool,
    line_no: usize,
}

/// Open a dataset file for streaming. When `labeled` is set, every query
/// block must carry exactly one row with label 1.
pub fn load_dataset(
    path: &Path,
    labeled: bool,
    tokenizer: &Tokenizer,
    n_passages: usize,
) -> Result<DatasetReader, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(DatasetReader {
        lines: BufReader::new(file).lines(),
        tokenizer: tokenizer.clone(),
        labeled,
        n_passages,
        line_no: 0,
        pending: None,
        seen_queries: HashSet::new(),
        path: path.display().to_string(),
        done: false,
    })
}

impl DatasetReader {
    fn next_row(&mut self) -> Result<Option<(String, ParsedRow)>, CorpusError> {
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            self.line_no += 1;
            let line = line.map_err(|source| CorpusError::Io {
                path: self.path.clone(),
                source,
            })?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(CorpusError::BadRow {
                    line: self.line_no,
                    got: fields.len(),
                });
            }
            let label = match fields[3] {
                "0" => false,
                "1" => true,
                other => {
                    if self.labeled {
                        return Err(CorpusError::BadLabel {
                            line: self.line_no,
                            got: other.to_owned(),
                        });
                    }
                    false
                }
            };
            return Ok(Some((
                fields[0].to_owned(),
                ParsedRow {
                    query_text: fields[1].to_owned(),
                    passage_text: fields[2].to_owned(),
                    label,
                    line_no: self.line_no,
                },
            )));
        }
    }

    fn read_sample(&mut self) -> Result<Option<QuerySample>, CorpusError> {
        let (query_id, first) = match self.pending.take() {
            Some(p) => p,
            None => match self.next_row()? {
                Some(p) => p,
                None => return Ok(None),
            },
        };
        if !self.seen_queries.insert(query_id.clone()) {
            return Err(CorpusError::NonContiguousQuery {
                line: first.line_no,
                query_id,
            });
        }

        let query_tokens = self.tokenizer.tokenize(&first.query_text);
        let mut passages = Vec::with_capacity(self.n_passages);
        let mut gold_index = None;
        let mut last_line = first.line_no;
        let mut rows = vec![first];
        while rows.len() < self.n_passages {
            match self.next_row()? {
                Some((qid, row)) if qid == query_id => {
                    last_line = row.line_no;
                    rows.push(row);
                }
                Some(other) => {
                    let got = rows.len();
                    self.pending = Some(other);
                    return Err(CorpusError::WrongPassageCount {
                        line: last_line,
                        query_id,
                        expected: self.n_passages,
                        got,
                    });
                }
                None => {
                    return Err(CorpusError::WrongPassageCount {
                        line: last_line,
                        query_id,
                        expected: self.n_passages,
                        got: rows.len(),
                    });
                }
            }
        }
        // The block must end here; a further row with the same id means the
        // file disagrees with the configured passage count.
        match self.next_row()? {
            Some((qid, row)) if qid == query_id => {
                return Err(CorpusError::WrongPassageCount {
                    line: row.line_no,
                    query_id,
                    expected: self.n_passages,
                    got: self.n_passages + 1,
                });
            }
            Some(other) => self.pending = Some(other),
            None => self.done = true,
        }

        for (i, row) in rows.iter().enumerate() {
            if row.label {
                if self.labeled {
                    if gold_index.is_some() {
                        return Err(CorpusError::MultipleGold {
                            line: row.line_no,
                            query_id,
                        });
                    }
                    gold_index = Some(i);
                } else {
                    gold_index = None;
                }
            }
            passages.push(self.tokenizer.tokenize(&row.passage_text));
        }
        if self.labeled && gold_index.is_none() {
            return Err(CorpusError::MissingGold {
                line: last_line,
                query_id,
            });
        }
        Ok(Some(QuerySample {
            query_id,
            query_tokens,
            passages,
            gold_index: if self.labeled { gold_index } else { None },
        }))
    }
}

impl Iterator for DatasetReader {
    type Item = Result<QuerySample, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_sample() {
            Ok(Some(sample)) => Some(Ok(sample)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Convenience: read and materialize a whole dataset.
pub fn read_all(
    path: &Path,
    labeled: bool,
    tokenizer: &Tokenizer,
    n_passages: usize,
) -> Result<Vec<QuerySample>, CorpusError> {
    load_dataset(path, labeled, tokenizer, n_passages)?.collect()
}

/// Seed-deterministic disjoint split; `dev_count` samples go to the dev
/// set, the rest stay in train, both preserving input order.
pub fn split_train_dev(
    samples: Vec<QuerySample>,
    dev_count: usize,
    seed: u64,
) -> Result<(Vec<QuerySample>, Vec<QuerySample>), CorpusError> {
    if dev_count >= samples.len() {
        return Err(CorpusError::DevCountTooLarge {
            dev_count,
            size: samples.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    indices.shuffle(&mut rng);
    let dev_set: HashSet<usize> = indices[..dev_count].iter().copied().collect();
    let mut train = Vec::with_capacity(samples.len() - dev_count);
    let mut dev = Vec::with_capacity(dev_count);
    for (i, sample) in samples.into_iter().enumerate() {
        if dev_set.contains(&i) {
            dev.push(sample);
        } else {
            train.push(sample);
        }
    }
    Ok((train, dev))
}

/// Write samples back out in the dataset TSV format (used by the synthetic
/// data generator and tests). Token sequences are joined with spaces.
pub fn write_tsv(
    path: &Path,
    rows: &[(String, String, String, u8)],
) -> Result<(), CorpusError> {
    let mut file = File::create(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut index_in_query = 0usize;
    let mut prev_qid: Option<&str> = None;
    for (qid, query, passage, label) in rows {
        if prev_qid != Some(qid.as_str()) {
            index_in_query = 0;
            prev_qid = Some(qid.as_str());
        }
        writeln!(file, "{qid}\t{query}\t{passage}\t{label}\t{index_in_query}").map_err(
            |source| CorpusError::Io {
                path: path.display().to_string(),
                source,
            },
        )?;
        index_in_query += 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_strips_stopwords_and_punctuation() {
        let t = Tokenizer::new();
        assert_eq!(t.tokenize("What is BM25?"), vec!["bm25"]);
    }

    #[test]
    fn tokenize_empty_input() {
        let t = Tokenizer::new();
        assert!(t.tokenize("").is_empty());
    }

    #[test]
    fn tokenize_stopword_only_input() {
        let t = Tokenizer::new();
        assert!(t.tokenize("The THE the").is_empty());
    }

    #[test]
    fn tokenize_keeps_interior_punctuation() {
        let t = Tokenizer::new();
        assert_eq!(
            t.tokenize("state-of-the-art, really!"),
            vec!["state-of-the-art", "really"]
        );
    }

    #[test]
    fn stopword_list_has_179_entries() {
        assert_eq!(STOPWORDS_EN.lines().count(), 179);
    }

    #[test]
    fn vocabulary_threshold_filter() {
        // counts {a:5, b:2, c:3} with min_frequency 3 keeps {a, c}
        let corpus = vec![
            toks(&["a", "a", "a", "a", "a"]),
            toks(&["b", "b"]),
            toks(&["c", "c", "c"]),
        ];
        let v = Vocabulary::build(&corpus, 3);
        assert_eq!(v.size(), 2);
        assert_eq!(v.id_of("a"), 1);
        assert_eq!(v.id_of("c"), 2);
        assert_eq!(v.id_of("b"), 0);
    }

    #[test]
    fn vocabulary_min_frequency_one_keeps_everything() {
        let corpus = vec![toks(&["x", "y"]), toks(&["z"])];
        let v = Vocabulary::build(&corpus, 1);
        assert_eq!(v.size(), 3);
    }

    #[test]
    fn vocabulary_ties_break_lexicographically() {
        let corpus = vec![toks(&["beta", "alpha", "beta", "alpha"])];
        let v = Vocabulary::build(&corpus, 1);
        assert_eq!(v.id_of("alpha"), 1);
        assert_eq!(v.id_of("beta"), 2);
    }

    #[test]
    fn vocabulary_empty_corpus() {
        let corpus: Vec<Vec<String>> = vec![];
        let v = Vocabulary::build(&corpus, 3);
        assert_eq!(v.size(), 0);
    }

    #[test]
    fn vocabulary_save_load_roundtrip() {
        let corpus = vec![toks(&["a", "a", "b"])];
        let v = Vocabulary::build(&corpus, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path, 1).unwrap();
        assert_eq!(loaded.size(), v.size());
        assert_eq!(loaded.id_of("a"), v.id_of("a"));
        assert_eq!(loaded.content_hash(), v.content_hash());
    }

    #[test]
    fn encode_truncates_head() {
        let corpus = vec![toks(&["w"])];
        let v = Vocabulary::build(&corpus, 1);
        let doc: Vec<String> = (0..80).map(|i| format!("t{i}")).collect();
        let enc = encode(&doc, &v, 70);
        assert_eq!(enc.length, 70);
        assert_eq!(enc.ids.len(), 70);
        assert_eq!(enc.raw_tokens[0], "t0");
        assert_eq!(enc.raw_tokens[69], "t69");
    }

    #[test]
    fn encode_all_oov() {
        let corpus = vec![toks(&["w"])];
        let v = Vocabulary::build(&corpus, 1);
        let enc = encode(&toks(&["x", "y", "z"]), &v, 5);
        assert_eq!(enc.length, 3);
        assert_eq!(enc.ids, vec![0, 0, 0, 0, 0]);
    }

    #[test]
    fn encode_pads_to_capacity() {
        let corpus = vec![toks(&["a", "b", "c"])];
        let v = Vocabulary::build(&corpus, 1);
        let enc = encode(&toks(&["a", "b", "c"]), &v, 15);
        assert_eq!(enc.length, 3);
        assert_eq!(enc.ids.len(), 15);
        assert!(enc.ids[3..].iter().all(|&id| id == 0));
    }

    fn write_dataset(rows: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for row in rows {
            writeln!(f, "{row}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    fn make_rows(qid: &str, n: usize, gold: usize) -> Vec<String> {
        (0..n)
            .map(|i| {
                format!(
                    "{qid}\tsome query text\tpassage number {i} body\t{}\t{i}",
                    usize::from(i == gold)
                )
            })
            .collect()
    }

    #[test]
    fn load_dataset_reads_gold_index() {
        let rows = make_rows("q1", 10, 3);
        let f = write_dataset(&rows);
        let t = Tokenizer::new();
        let samples = read_all(f.path(), true, &t, 10).unwrap();
        assert_eq!(samples.len(), 1);
        assert_eq!(samples[0].gold_index, Some(3));
        assert_eq!(samples[0].passages.len(), 10);
    }

    #[test]
    fn load_dataset_rejects_short_group() {
        let rows = make_rows("q1", 9, 0);
        let f = write_dataset(&rows);
        let t = Tokenizer::new();
        let err = read_all(f.path(), true, &t, 10).unwrap_err();
        match err {
            CorpusError::WrongPassageCount { expected, got, .. } => {
                assert_eq!(expected, 10);
                assert_eq!(got, 9);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_dataset_rejects_multiple_gold() {
        let mut rows = make_rows("q1", 10, 0);
        rows[4] = "q1\tsome query text\tpassage number 4 body\t1\t4".to_owned();
        let f = write_dataset(&rows);
        let t = Tokenizer::new();
        let err = read_all(f.path(), true, &t, 10).unwrap_err();
        assert!(matches!(err, CorpusError::MultipleGold { line: 5, .. }));
    }

    #[test]
    fn load_dataset_rejects_missing_gold_when_labeled() {
        let rows: Vec<String> = (0..10)
            .map(|i| format!("q1\tquery\tpassage {i}\t0\t{i}"))
            .collect();
        let f = write_dataset(&rows);
        let t = Tokenizer::new();
        let err = read_all(f.path(), true, &t, 10).unwrap_err();
        assert!(matches!(err, CorpusError::MissingGold { .. }));
    }

    #[test]
    fn load_dataset_unlabeled_ignores_labels() {
        let rows: Vec<String> = (0..10)
            .map(|i| format!("q1\tquery\tpassage {i}\t0\t{i}"))
            .collect();
        let f = write_dataset(&rows);
        let t = Tokenizer::new();
        let samples = read_all(f.path(), false, &t, 10).unwrap();
        assert_eq!(samples[0].gold_index, None);
    }

    #[test]
    fn load_dataset_rejects_malformed_row() {
        let rows = vec!["q1\tonly three\tfields".to_owned()];
        let f = write_dataset(&rows);
        let t = Tokenizer::new();
        let err = read_all(f.path(), true, &t, 10).unwrap_err();
        assert!(matches!(err, CorpusError::BadRow { line: 1, got: 3 }));
    }

    #[test]
    fn split_is_deterministic_disjoint_and_covering() {
        let samples: Vec<QuerySample> = (0..100)
            .map(|i| QuerySample {
                query_id: format!("q{i}"),
                query_tokens: vec![],
                passages: vec![],
                gold_index: None,
            })
            .collect();
        let (train_a, dev_a) = split_train_dev(samples.clone(), 5, 42).unwrap();
        let (train_b, dev_b) = split_train_dev(samples.clone(), 5, 42).unwrap();
        assert_eq!(train_a.len(), 95);
        assert_eq!(dev_a.len(), 5);
        let ids = |v: &[QuerySample]| -> Vec<String> {
            v.iter().map(|s| s.query_id.clone()).collect()
        };
        assert_eq!(ids(&train_a), ids(&train_b));
        assert_eq!(ids(&dev_a), ids(&dev_b));
        let mut all: Vec<String> = ids(&train_a).into_iter().chain(ids(&dev_a)).collect();
        all.sort();
        let mut expect: Vec<String> = (0..100).map(|i| format!("q{i}")).collect();
        expect.sort();
        assert_eq!(all, expect);
    }

    #[test]
    fn split_rejects_oversized_dev() {
        let samples: Vec<QuerySample> = (0..5)
            .map(|i| QuerySample {
                query_id: format!("q{i}"),
                query_tokens: vec![],
                passages: vec![],
                gold_index: None,
            })
            .collect();
        assert!(split_train_dev(samples, 5, 0).is_err());
    }

    proptest! {
        #[test]
        fn tokenize_idempotent_on_joined_output(text in ".{0,200}") {
            let t = Tokenizer::new();
            let once = t.tokenize(&text);
            let again = t.tokenize(&once.join(" "));
            prop_assert_eq!(once, again);
        }

        #[test]
        fn vocabulary_build_is_deterministic(
            words in proptest::collection::vec("[a-e]{1,2}", 0..60),
            min_freq in 1u32..4,
        ) {
            let corpus: Vec<Vec<String>> = words.chunks(5).map(|c| c.to_vec()).collect();
            let a = Vocabulary::build(&corpus, min_freq);
            let b = Vocabulary::build(&corpus, min_freq);
            prop_assert_eq!(a.content_hash(), b.content_hash());
        }

        #[test]
        fn encode_ids_stay_in_range(
            words in proptest::collection::vec("[a-d]{1,2}", 1..40),
            capacity in 1usize..20,
        ) {
            let corpus: Vec<Vec<String>> = vec![words.clone()];
            let v = Vocabulary::build(&corpus, 2);
            let enc = encode(&words, &v, capacity);
            prop_assert!(enc.ids.iter().all(|&id| (id as usize) <= v.size()));
            prop_assert_eq!(
                enc.ids.iter().take(enc.length).count(),
                enc.length
            );
            prop_assert!(enc.ids[enc.length..].iter().all(|&id| id == 0));
        }
    }
}

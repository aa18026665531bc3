//! Fixed pre-trained word-vector banks in three roles, with the
//! out-of-vocabulary policy per role: word2vec and glove fall back to the
//! zero vector, fasttext averages the vectors of the token's character
//! 3–6-grams when a subword table is present.
//!
//! Vector file format: UTF-8 text, one `token v1 v2 ... v_dim` per line,
//! space-separated. The subword file uses the same format keyed by n-gram.
//! Banks are immutable after load and never participate in training.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: expected {expected} components, got {got}")]
    DimMismatch {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path} line {line}: non-numeric component {value:?}")]
    BadNumber {
        path: String,
        line: usize,
        value: String,
    },
    #[error("{path} line {line}: duplicate token {token:?}")]
    DuplicateToken {
        path: String,
        line: usize,
        token: String,
    },
    #[error("{path} line {line}: missing vector components")]
    EmptyVector { path: String, line: usize },
    #[error("subword table only applies to the fasttext role, bank role is {role:?}")]
    SubwordsWrongRole { role: BankRole },
    #[error("banks disagree on dimension: w2v {w2v:?}, glove {glove:?}, fasttext {fasttext:?}")]
    BankDimMismatch {
        w2v: Option<usize>,
        glove: Option<usize>,
        fasttext: Option<usize>,
    },
    #[error("all banks are empty; cannot infer an embedding dimension")]
    NoDimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankRole {
    Word2Vec,
    Glove,
    FastText,
}

/// One fixed embedding table. `dim` stays unset for an empty bank, in
/// which case lookups return an empty vector.
#[derive(Debug, Clone)]
pub struct EmbeddingBank {
    role: BankRole,
    dim: Option<usize>,
    vectors: HashMap<String, Vec<f64>>,
    subwords: HashMap<String, Vec<f64>>,
}

type ParsedVectors = (HashMap<String, Vec<f64>>, Option<usize>);

fn parse_vector_file(
    path: &Path,
    mut dim: Option<usize>,
) -> Result<ParsedVectors, EmbeddingError> {
    let text = std::fs::read_to_string(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let p = path.display().to_string();
    let mut vectors = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or("");
        let mut vector = Vec::new();
        for field in fields {
            if field.is_empty() {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| EmbeddingError::BadNumber {
                path: p.clone(),
                line: i + 1,
                value: field.to_owned(),
            })?;
            vector.push(v);
        }
        if vector.is_empty() {
            return Err(EmbeddingError::EmptyVector {
                path: p.clone(),
                line: i + 1,
            });
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(EmbeddingError::DimMismatch {
                    path: p.clone(),
                    line: i + 1,
                    expected: d,
                    got: vector.len(),
                });
            }
            _ => {}
        }
        if vectors.insert(token.to_owned(), vector).is_some() {
            return Err(EmbeddingError::DuplicateToken {
                path: p,
                line: i + 1,
                token: token.to_owned(),
            });
        }
    }
    Ok((vectors, dim))
}

impl EmbeddingBank {
    /// Load a bank from a text vector file. The dimension is inferred
    /// from the first line and enforced on every following line.
    pub fn load(path: &Path, role: BankRole) -> Result<Self, EmbeddingError> {
        let (vectors, dim) = parse_vector_file(path, None)?;
        Ok(EmbeddingBank {
            role,
            dim,
            vectors,
            subwords: HashMap::new(),
        })
    }

    /// Empty bank with no dimension yet (lookups return empty vectors).
    pub fn empty(role: BankRole) -> Self {
        EmbeddingBank {
            role,
            dim: None,
            vectors: HashMap::new(),
            subwords: HashMap::new(),
        }
    }

    /// Bank from an in-memory table; used by tests and the synthetic
    /// data generator.
    pub fn from_vectors(
        role: BankRole,
        vectors: HashMap<String, Vec<f64>>,
    ) -> Result<Self, EmbeddingError> {
        let mut dim = None;
        for v in vectors.values() {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(EmbeddingError::DimMismatch {
                        path: "<memory>".into(),
                        line: 0,
                        expected: d,
                        got: v.len(),
                    });
                }
                _ => {}
            }
        }
        Ok(EmbeddingBank {
            role,
            dim,
            vectors,
            subwords: HashMap::new(),
        })
    }

    /// Attach a character n-gram table (fasttext role only).
    pub fn load_subwords(&mut self, path: &Path) -> Result<(), EmbeddingError> {
        if self.role != BankRole::FastText {
            return Err(EmbeddingError::SubwordsWrongRole { role: self.role });
        }
        let (subwords, dim) = parse_vector_file(path, self.dim)?;
        self.dim = dim;
        self.subwords = subwords;
        Ok(())
    }

    pub fn set_subwords(
        &mut self,
        subwords: HashMap<String, Vec<f64>>,
    ) -> Result<(), EmbeddingError> {
        if self.role != BankRole::FastText {
            return Err(EmbeddingError::SubwordsWrongRole { role: self.role });
        }
        for v in subwords.values() {
            match self.dim {
                None => self.dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(EmbeddingError::DimMismatch {
                        path: "<memory>".into(),
                        line: 0,
                        expected: d,
                        got: v.len(),
                    });
                }
                _ => {}
            }
        }
        self.subwords = subwords;
        Ok(())
    }

    pub fn role(&self) -> BankRole {
        self.role
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.vectors.contains_key(token)
    }

    /// Stored vector for an in-bank token, OOV policy otherwise.
    pub fn lookup(&self, token: &str) -> Vec<f64> {
        match self.vectors.get(token) {
            Some(v) => v.clone(),
            None => self.oov_vector(token),
        }
    }

    /// Vector for a token treated as out-of-vocabulary: zeros for the
    /// word2vec/glove roles; for fasttext, the mean of the subword vectors
    /// of the token's character 3–6-grams that exist in the table, else
    /// zeros.
    pub fn oov_vector(&self, token: &str) -> Vec<f64> {
        let dim = match self.dim {
            Some(d) => d,
            None => return Vec::new(),
        };
        if self.role == BankRole::FastText && !self.subwords.is_empty() {
            let mut acc = vec![0.0; dim];
            let mut hits = 0usize;
            for gram in char_ngrams(token, 3, 6) {
                if let Some(v) = self.subwords.get(&gram) {
                    for (a, x) in acc.iter_mut().zip(v) {
                        *a += x;
                    }
                    hits += 1;
                }
            }
            if hits > 0 {
                for a in &mut acc {
                    *a /= hits as f64;
                }
                return acc;
            }
        }
        vec![0.0; dim]
    }
}

/// Character n-grams of the token wrapped in `<` `>` boundary markers,
/// lengths `min..=max`, in reading order.
pub fn char_ngrams(token: &str, min: usize, max: usize) -> Vec<String> {
    let wrapped: Vec<char> = std::iter::once('<')
        .chain(token.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut grams = Vec::new();
    for n in min..=max {
        if wrapped.len() < n {
            break;
        }
        for start in 0..=wrapped.len() - n {
            grams.push(wrapped[start..start + n].iter().collect());
        }
    }
    grams
}

/// The three banks in role order (w2v, glove, fasttext) with a shared
/// dimension, validated at construction.
#[derive(Debug)]
pub struct TripleBank {
    pub w2v: EmbeddingBank,
    pub glove: EmbeddingBank,
    pub fasttext: EmbeddingBank,
    dim: usize,
}

impl TripleBank {
    pub fn new(
        w2v: EmbeddingBank,
        glove: EmbeddingBank,
        fasttext: EmbeddingBank,
    ) -> Result<Self, EmbeddingError> {
        let dims = [w2v.dim(), glove.dim(), fasttext.dim()];
        let mut shared = None;
        for d in dims.into_iter().flatten() {
            match shared {
                None => shared = Some(d),
                Some(s) if s != d => {
                    return Err(EmbeddingError::BankDimMismatch {
                        w2v: dims[0],
                        glove: dims[1],
                        fasttext: dims[2],
                    });
                }
                _ => {}
            }
        }
        let dim = shared.ok_or(EmbeddingError::NoDimension)?;
        Ok(TripleBank {
            w2v,
            glove,
            fasttext,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn fit(&self, v: Vec<f64>) -> Vec<f64> {
        if v.len() == self.dim {
            v
        } else {
            vec![0.0; self.dim]
        }
    }

    /// Ordered (w2v, glove, fasttext) lookups for an in-vocabulary token.
    pub fn triple_lookup(&self, token: &str) -> [Vec<f64>; 3] {
        [
            self.fit(self.w2v.lookup(token)),
            self.fit(self.glove.lookup(token)),
            self.fit(self.fasttext.lookup(token)),
        ]
    }

    /// Lookups for a token the vocabulary rejected: zero vectors for
    /// w2v/glove, subword fallback for fasttext.
    pub fn oov_lookup(&self, token: &str) -> [Vec<f64>; 3] {
        [
            vec![0.0; self.dim],
            vec![0.0; self.dim],
            self.fit(self.fasttext.oov_vector(token)),
        ]
    }
}

//! Run configuration: a flat key=value file merged with command-line
//! overrides. Every key has a documented default; unknown keys are
//! rejected. The effective configuration is echoed into output
//! directories for provenance.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{DEFAULT_MIN_FREQUENCY, DEFAULT_PASSAGES_PER_QUERY};
use crate::features::Bm25Params;
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown config key {key:?}")]
    UnknownKey { key: String },
    #[error("bad value for {key}: {value:?} ({reason})")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("config line {line}: expected key=value, got {text:?}")]
    BadLine { line: usize, text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub min_frequency: u32,
    pub bm25: Bm25Params,
    pub n_passages: usize,
    /// Queries held out of training for the dev split.
    pub dev_count: usize,
    pub threads: usize,
    /// Override for the embedded stopword list.
    pub stopwords: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            min_frequency: DEFAULT_MIN_FREQUENCY,
            bm25: Bm25Params::default(),
            n_passages: DEFAULT_PASSAGES_PER_QUERY,
            dev_count: 5000,
            threads: 1,
            stopwords: None,
        }
    }
}

impl RunConfig {
    /// Parse a key=value file; `#` starts a comment line.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::BadLine {
                line: i + 1,
                text: line.to_owned(),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Apply one override; used for both file entries and `--set` flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::BadValue {
                key: key.to_owned(),
                value: value.to_owned(),
                reason: e.to_string(),
            })
        }
        match key {
            "embed_dim" => self.model.embed_dim = parse(key, value)?,
            "hidden" => self.model.hidden = parse(key, value)?,
            "lstm_layers" => self.model.lstm_layers = parse(key, value)?,
            "dropout" => self.model.dropout = parse(key, value)?,
            "max_query_len" => self.model.max_query_len = parse(key, value)?,
            "max_doc_len" => self.model.max_doc_len = parse(key, value)?,
            "feature_count" => self.model.feature_count = parse(key, value)?,
            "init_range" => self.model.init_range = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "clip_norm" => self.train.clip_norm = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "min_frequency" => self.min_frequency = parse(key, value)?,
            "bm25_k1" => self.bm25.k1 = parse(key, value)?,
            "bm25_b" => self.bm25.b = parse(key, value)?,
            "n_passages" => self.n_passages = parse(key, value)?,
            "dev_count" => self.dev_count = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "stopwords" => self.stopwords = Some(PathBuf::from(value)),
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_owned(),
                })
            }
        }
        Ok(())
    }

    /// Full effective configuration as key=value text.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        kv("embed_dim", self.model.embed_dim.to_string());
        kv("hidden", self.model.hidden.to_string());
        kv("lstm_layers", self.model.lstm_layers.to_string());
        kv("dropout", self.model.dropout.to_string());
        kv("max_query_len", self.model.max_query_len.to_string());
        kv("max_doc_len", self.model.max_doc_len.to_string());
        kv("feature_count", self.model.feature_count.to_string());
        kv("init_range", self.model.init_range.to_string());
        kv("epochs", self.train.epochs.to_string());
        kv("batch_size", self.train.batch_size.to_string());
        kv("lr", self.train.lr.to_string());
        kv("clip_norm", self.train.clip_norm.to_string());
        kv("seed", self.train.seed.to_string());
        kv("min_frequency", self.min_frequency.to_string());
        kv("bm25_k1", self.bm25.k1.to_string());
        kv("bm25_b", self.bm25.b.to_string());
        kv("n_passages", self.n_passages.to_string());
        kv("dev_count", self.dev_count.to_string());
        kv("threads", self.threads.to_string());
        if let Some(p) = &self.stopwords {
            kv("stopwords", p.display().to_string());
        }
        out
    }
}

//! Versioned binary checkpoints: model config as key-value text, feature
//! normalization stats, a vocabulary content hash, and every parameter
//! tensor as little-endian f64 records. Round-trips are bit-exact.
//!
//! Layout:
//!   magic "CORANK01" | u32 version | u32 config_len | config text
//!   | u64 vocab_hash | u8 has_norm | [6 x f64 norm] | u32 n_params
//!   | records: u16 name_len, name, u8 rank, u32 rows, u32 cols, values

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::features::NormStats;
use crate::model::{param_layout, ModelConfig, ModelError, ModelParams};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"CORANK01";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {got}, expected {VERSION}")]
    BadVersion { got: u32 },
    #[error("bad config block: {0}")]
    BadConfig(String),
    #[error("checkpoint truncated while reading {context}")]
    Truncated { context: &'static str },
    #[error("{extra} trailing bytes after the last parameter record")]
    TrailingBytes { extra: usize },
    #[error("parameter {index} is named {got:?}, expected {expected:?}")]
    NameMismatch {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("parameter {name} has shape {got_rows}x{got_cols}, config expects {want_rows}x{want_cols}")]
    ShapeMismatch {
        name: String,
        want_rows: usize,
        want_cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("parameter count {got} does not match layout {expected}")]
    CountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub norm: Option<NormStats>,
    /// Content hash of the vocabulary the model was trained with.
    pub vocab_hash: u64,
}

fn config_to_text(cfg: &ModelConfig) -> String {
    format!(
        "embed_dim={}\nhidden={}\nlstm_layers={}\ndropout={}\nmax_query_len={}\nmax_doc_len={}\nfeature_count={}\ninit_range={}\n",
        cfg.embed_dim,
        cfg.hidden,
        cfg.lstm_layers,
        cfg.dropout,
        cfg.max_query_len,
        cfg.max_doc_len,
        cfg.feature_count,
        cfg.init_range,
    )
}

fn config_from_text(text: &str) -> Result<ModelConfig, CheckpointError> {
    let mut cfg = ModelConfig::default();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CheckpointError::BadConfig(format!("expected key=value: {line:?}")))?;
        let bad = |e: String| CheckpointError::BadConfig(format!("{key}: {e}"));
        match key {
            "embed_dim" => cfg.embed_dim = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "hidden" => cfg.hidden = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "lstm_layers" => cfg.lstm_layers = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "dropout" => cfg.dropout = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            "max_query_len" => cfg.max_query_len = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "max_doc_len" => cfg.max_doc_len = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "feature_count" => cfg.feature_count = value.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
            "init_range" => cfg.init_range = value.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
            other => {
                return Err(CheckpointError::BadConfig(format!("unknown key {other:?}")))
            }
        }
    }
    Ok(cfg)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated { context });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self, context: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, context)?[0])
    }
    fn u16(&mut self, context: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, context)?.try_into().unwrap()))
    }
    fn u32(&mut self, context: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }
    fn u64(&mut self, context: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, context)?.try_into().unwrap()))
    }
    fn f64(&mut self, context: &'static str) -> Result<f64, CheckpointError> {
        Ok(f64::from_bits(self.u64(context)?))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let cfg_text = config_to_text(&self.config);
        out.extend_from_slice(&(cfg_text.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg_text.as_bytes());
        out.extend_from_slice(&self.vocab_hash.to_le_bytes());
        match &self.norm {
            Some(n) => {
                out.push(1);
                for v in n.mean.iter().chain(n.std.iter()) {
                    out.extend_from_slice(&v.to_bits().to_le_bytes());
                }
            }
            None => out.push(0),
        }
        let layout = param_layout(&self.config);
        let tensors = self.params.tensors();
        out.extend_from_slice(&(layout.len() as u32).to_le_bytes());
        for ((name, _, _), tensor) in layout.iter().zip(tensors) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(2); // rank
            out.extend_from_slice(&(tensor.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(tensor.cols() as u32).to_le_bytes());
            for v in tensor.data() {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::BadVersion { got: version });
        }
        let cfg_len = r.u32("config length")? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len, "config text")?)
            .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
        let config = config_from_text(cfg_text)?;
        let vocab_hash = r.u64("vocab hash")?;
        let norm = match r.u8("norm flag")? {
            0 => None,
            _ => {
                let mut vals = [0.0; 6];
                for v in &mut vals {
                    *v = r.f64("norm stats")?;
                }
                Some(NormStats {
                    mean: [vals[0], vals[1], vals[2]],
                    std: [vals[3], vals[4], vals[5]],
                })
            }
        };
        let layout = param_layout(&config);
        let n_params = r.u32("parameter count")? as usize;
        if n_params != layout.len() {
            return Err(CheckpointError::CountMismatch {
                expected: layout.len(),
                got: n_params,
            });
        }
        let mut tensors = Vec::with_capacity(n_params);
        for (index, (name, want_rows, want_cols)) in layout.iter().enumerate() {
            let name_len = r.u16("name length")? as usize;
            let got_name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
            if got_name != name {
                return Err(CheckpointError::NameMismatch {
                    index,
                    expected: name.clone(),
                    got: got_name.to_owned(),
                });
            }
            let rank = r.u8("rank")?;
            if rank != 2 {
                return Err(CheckpointError::BadConfig(format!(
                    "parameter {name} has rank {rank}, expected 2"
                )));
            }
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            if rows != *want_rows || cols != *want_cols {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    want_rows: *want_rows,
                    want_cols: *want_cols,
                    got_rows: rows,
                    got_cols: cols,
                });
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows * cols {
                data.push(r.f64("parameter values")?);
            }
            tensors.push(Tensor::from_vec(rows, cols, data));
        }
        if r.pos != buf.len() {
            return Err(CheckpointError::TrailingBytes {
                extra: buf.len() - r.pos,
            });
        }
        let params = ModelParams::from_flat(&config, tensors)?;
        Ok(Checkpoint {
            config,
            params,
            norm,
            vocab_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.to_bytes();
        let mut file = std::fs::File::create(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        file.write_all(&bytes).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|source| CheckpointError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Self::from_bytes(&buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_checkpoint() -> Checkpoint {
        let config = ModelConfig {
            embed_dim: 4,
            hidden: 3,
            lstm_layers: 2,
            dropout: 0.2,
            max_query_len: 5,
            max_doc_len: 7,
            feature_count: 3,
            init_range: 0.01,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let params = ModelParams::init(&config, &mut rng).unwrap();
        Checkpoint {
            config,
            params,
            norm: Some(NormStats {
                mean: [1.0, 2.5, -0.125],
                std: [0.5, 0.0, 3.75],
            }),
            vocab_hash: 0xdead_beef_cafe_f00d,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let ckpt = small_checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.config, ckpt.config);
        assert_eq!(loaded.vocab_hash, ckpt.vocab_hash);
        assert_eq!(loaded.norm, ckpt.norm);
        for (a, b) in loaded.params.tensors().iter().zip(ckpt.params.tensors()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Saving again produces identical bytes.
        assert_eq!(loaded.to_bytes(), ckpt.to_bytes());
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let ckpt = small_checkpoint();
        let mut bytes = ckpt.to_bytes();
        bytes.extend_from_slice(b"junk");
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::TrailingBytes { extra: 4 })
        ));
    }

    #[test]
    fn truncation_is_rejected() {
        let ckpt = small_checkpoint();
        let bytes = ckpt.to_bytes();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            Checkpoint::from_bytes(cut),
            Err(CheckpointError::Truncated { .. })
        ));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let ckpt = small_checkpoint();
        let mut bytes = ckpt.to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn config_param_shape_mismatch_names_parameter() {
        let ckpt = small_checkpoint();
        let mut bytes = ckpt.to_bytes();
        // The config block stores hidden=3; patch it to hidden=4 so the
        // stored parameter shapes no longer match the expected layout.
        let needle = b"hidden=3";
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .unwrap();
        bytes[at + 7] = b'4';
        match Checkpoint::from_bytes(&bytes) {
            Err(CheckpointError::ShapeMismatch { name, .. }) => {
                assert!(name.contains("enc.l0"), "unexpected parameter {name}");
            }
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        assert!(matches!(
            config_from_text("embed_dim=4\nwat=1\n"),
            Err(CheckpointError::BadConfig(_))
        ));
    }

    #[test]
    fn float_config_fields_roundtrip_exactly() {
        let cfg = ModelConfig {
            dropout: 0.2,
            init_range: 0.017345238759234875,
            ..ModelConfig::default()
        };
        let parsed = config_from_text(&config_to_text(&cfg)).unwrap();
        assert_eq!(parsed.dropout.to_bits(), cfg.dropout.to_bits());
        assert_eq!(parsed.init_range.to_bits(), cfg.init_range.to_bits());
    }
}

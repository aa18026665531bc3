//! The scoring network: meta-embedding self-attention over three banks,
//! a shared 2-layer bidirectional LSTM encoder with per-side sentinel
//! vectors, query–document co-attention with a fusion bi-LSTM, and a
//! linear scorer over the max-pooled representation extended with the
//! hand-crafted features.

mod coattend;
mod gradcheck;
mod lstm;
mod meta_embed;
mod score;


pub use coattend::{coattend, CoattentionOutput};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport, GradCheckRow};
pub use meta_embed::{meta_embed, MetaEmbed};
pub use score::{
    forward_pair, pair_loss, pair_probability, score_document, score_passages,
    score_passages_with_attention, DocScore, PairForward, PROB_FLOOR,
};

use rand::RngCore;
use thiserror::Error;

use crate::corpus::EncodedSequence;
use crate::embeddings::TripleBank;
use crate::features;
use crate::tensor::{Gradients, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("sequence has no real tokens to encode")]
    EmptySequence,
    #[error("encoder outputs disagree: query {q_rows} rows vs document {d_rows} rows")]
    HeightMismatch { q_rows: usize, d_rows: usize },
    #[error("config expects feature_count {expected}, features module provides {got}")]
    FeatureCount { expected: usize, got: usize },
    #[error("embedding banks have dim {banks}, config expects {config}")]
    EmbedDim { banks: usize, config: usize },
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

/// Hyperparameters of the scoring network. The defaults are the
/// full-scale training configuration; tests override them with tiny
/// values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Per-direction LSTM hidden size; encoder outputs are `2 * hidden`.
    pub hidden: usize,
    pub lstm_layers: usize,
    /// Dropout between LSTM layers (train mode only).
    pub dropout: f64,
    pub max_query_len: usize,
    pub max_doc_len: usize,
    pub feature_count: usize,
    /// All trainable parameters initialize uniformly in `[-r, r]`.
    pub init_range: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 300,
            hidden: 500,
            lstm_layers: 2,
            dropout: 0.2,
            max_query_len: 15,
            max_doc_len: 70,
            feature_count: 3,
            init_range: 0.01,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == 0 || self.embed_dim == 0 || self.lstm_layers == 0 {
            return Err(ModelError::BadConfig(
                "hidden, embed_dim and lstm_layers must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::BadConfig(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.max_query_len == 0 || self.max_doc_len == 0 {
            return Err(ModelError::BadConfig(
                "sequence capacities must be positive".into(),
            ));
        }
        if self.feature_count != features::FEATURE_COUNT {
            return Err(ModelError::FeatureCount {
                expected: self.feature_count,
                got: features::FEATURE_COUNT,
            });
        }
        Ok(())
    }
}

/// Which sentinel to append after encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Query,
    Document,
}

/// Forward-pass mode. Dropout only fires in train mode; eval mode is
/// deterministic and never touches an RNG.
pub enum Mode<'r> {
    Eval,
    Train { dropout: f64, rng: &'r mut dyn RngCore },
}

impl Mode<'_> {
    /// Reborrow so a mode can be threaded through several sub-calls.
    pub fn reborrow(&mut self) -> Mode<'_> {
        match self {
            Mode::Eval => Mode::Eval,
            Mode::Train { dropout, rng } => Mode::Train {
                dropout: *dropout,
                rng: &mut **rng,
            },
        }
    }
}

/// Gate weights for one LSTM direction; gate order is (input, forget,
/// cell, output) stacked along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub layers: Vec<LstmLayer>,
}

/// Every trainable symbol of the network, exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Self-attention scorer shared across queries and documents.
    pub attn_w: Tensor,
    pub attn_b: Tensor,
    /// Encoder shared by query and both documents.
    pub enc: BiLstmParams,
    /// Fusion LSTM over the co-attention context.
    pub fusion: BiLstmParams,
    pub q_sentinel: Tensor,
    pub d_sentinel: Tensor,
    pub out_w: Tensor,
    pub out_b: Tensor,
}

/// Canonical parameter order: (name, rows, cols) for every trainable
/// tensor. Initialization, optimizer state, checkpoints and gradient
/// reports all follow this order.
pub fn param_layout(cfg: &ModelConfig) -> Vec<(String, usize, usize)> {
    let h = cfg.hidden;
    let mut layout = vec![
        ("attn.w".to_owned(), 1, cfg.embed_dim),
        ("attn.b".to_owned(), 1, 1),
    ];
    let lstm = |prefix: &str, first_input: usize, layout: &mut Vec<(String, usize, usize)>| {
        for l in 0..cfg.lstm_layers {
            let input = if l == 0 { first_input } else { 2 * h };
            for dir in ["fwd", "bwd"] {
                layout.push((format!("{prefix}.l{l}.{dir}.w_ih"), 4 * h, input));
                layout.push((format!("{prefix}.l{l}.{dir}.w_hh"), 4 * h, h));
                layout.push((format!("{prefix}.l{l}.{dir}.b_ih"), 4 * h, 1));
                layout.push((format!("{prefix}.l{l}.{dir}.b_hh"), 4 * h, 1));
            }
        }
    };
    lstm("enc", cfg.embed_dim, &mut layout);
    lstm("fusion", 6 * h, &mut layout);
    layout.push(("sentinel.q".to_owned(), 2 * h, 1));
    layout.push(("sentinel.d".to_owned(), 2 * h, 1));
    layout.push(("out.w".to_owned(), 1, 2 * h + cfg.feature_count));
    layout.push(("out.b".to_owned(), 1, 1));
    layout
}

impl ModelParams {
    /// Uniform initialization of every parameter in
    /// `[-init_range, init_range]`, drawing in canonical layout order so
    /// a fixed seed yields bit-identical parameters.
    pub fn init(cfg: &ModelConfig, rng: &mut impl rand::Rng) -> Result<Self, ModelError> {
        cfg.validate()?;
        if cfg.init_range == 0.0 {
            return Self::zeros(cfg);
        }
        let tensors = param_layout(cfg)
            .into_iter()
            .map(|(_, r, c)| Tensor::uniform(r, c, -cfg.init_range, cfg.init_range, rng))
            .collect();
        Self::from_flat(cfg, tensors)
    }

    /// All-zero parameters (tests and hand-constructed cases).
    pub fn zeros(cfg: &ModelConfig) -> Result<Self, ModelError> {
        let tensors = param_layout(cfg)
            .into_iter()
            .map(|(_, r, c)| Tensor::zeros(r, c))
            .collect();
        Self::from_flat(cfg, tensors)
    }

    /// Rebuild from tensors in canonical layout order (shapes must match
    /// the layout; callers validate against [`param_layout`] first).
    pub fn from_flat(cfg: &ModelConfig, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        cfg.validate()?;
        let layout = param_layout(cfg);
        if tensors.len() != layout.len() {
            return Err(ModelError::BadConfig(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for ((name, r, c), t) in layout.iter().zip(&tensors) {
            if t.rows() != *r || t.cols() != *c {
                return Err(ModelError::BadConfig(format!(
                    "parameter {name} has shape {} but layout expects {r}x{c}",
                    t.shape()
                )));
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("length checked above");
        let attn_w = next();
        let attn_b = next();
        let lstm = |next: &mut dyn FnMut() -> Tensor| BiLstmParams {
            layers: (0..cfg.lstm_layers)
                .map(|_| LstmLayer {
                    fwd: LstmCell {
                        w_ih: next(),
                        w_hh: next(),
                        b_ih: next(),
                        b_hh: next(),
                    },
                    bwd: LstmCell {
                        w_ih: next(),
                        w_hh: next(),
                        b_ih: next(),
                        b_hh: next(),
                    },
                })
                .collect(),
        };
        let enc = lstm(&mut next);
        let fusion = lstm(&mut next);
        Ok(ModelParams {
            attn_w,
            attn_b,
            enc,
            fusion,
            q_sentinel: next(),
            d_sentinel: next(),
            out_w: next(),
            out_b: next(),
        })
    }

    /// Parameter tensors in canonical layout order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.attn_w, &self.attn_b];
        for lstm in [&self.enc, &self.fusion] {
            for layer in &lstm.layers {
                for cell in [&layer.fwd, &layer.bwd] {
                    out.extend([&cell.w_ih, &cell.w_hh, &cell.b_ih, &cell.b_hh]);
                }
            }
        }
        out.extend([&self.q_sentinel, &self.d_sentinel, &self.out_w, &self.out_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.attn_w, &mut self.attn_b];
        for lstm in [&mut self.enc, &mut self.fusion] {
            for layer in &mut lstm.layers {
                for cell in [&mut layer.fwd, &mut layer.bwd] {
                    out.extend([
                        &mut cell.w_ih,
                        &mut cell.w_hh,
                        &mut cell.b_ih,
                        &mut cell.b_hh,
                    ]);
                }
            }
        }
        out.extend([
            &mut self.q_sentinel,
            &mut self.d_sentinel,
            &mut self.out_w,
            &mut self.out_b,
        ]);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

pub(crate) struct BoundCell {
    pub w_ih: Var,
    pub w_hh: Var,
    pub b_ih: Var,
    pub b_hh: Var,
}

pub(crate) struct BoundLayer {
    pub fwd: BoundCell,
    pub bwd: BoundCell,
}

pub(crate) struct BoundBiLstm {
    pub layers: Vec<BoundLayer>,
}

/// Model parameters placed on a tape, plus the flat var list in canonical
/// layout order for gradient extraction.
pub struct BoundParams {
    pub attn_w: Var,
    pub attn_b: Var,
    pub(crate) enc: BoundBiLstm,
    pub(crate) fusion: BoundBiLstm,
    pub(crate) q_sentinel: Var,
    pub(crate) d_sentinel: Var,
    pub(crate) out_w: Var,
    pub(crate) out_b: Var,
    order: Vec<Var>,
    hidden: usize,
}

impl BoundParams {
    /// Copy parameters onto the tape. `trainable` leaves receive
    /// gradients from `backward`; eval passes bind constants instead.
    pub fn bind(tape: &mut Tape, params: &ModelParams, trainable: bool) -> Self {
        struct Binder<'t> {
            tape: &'t mut Tape,
            trainable: bool,
            order: Vec<Var>,
        }
        impl Binder<'_> {
            fn put(&mut self, t: &Tensor) -> Var {
                let var = if self.trainable {
                    self.tape.param(t.clone())
                } else {
                    self.tape.constant(t.clone())
                };
                self.order.push(var);
                var
            }
            fn cell(&mut self, c: &LstmCell) -> BoundCell {
                BoundCell {
                    w_ih: self.put(&c.w_ih),
                    w_hh: self.put(&c.w_hh),
                    b_ih: self.put(&c.b_ih),
                    b_hh: self.put(&c.b_hh),
                }
            }
            fn lstm(&mut self, lstm: &BiLstmParams) -> BoundBiLstm {
                BoundBiLstm {
                    layers: lstm
                        .layers
                        .iter()
                        .map(|layer| BoundLayer {
                            fwd: self.cell(&layer.fwd),
                            bwd: self.cell(&layer.bwd),
                        })
                        .collect(),
                }
            }
        }
        let mut b = Binder {
            tape,
            trainable,
            order: Vec::new(),
        };
        let attn_w = b.put(&params.attn_w);
        let attn_b = b.put(&params.attn_b);
        let enc = b.lstm(&params.enc);
        let fusion = b.lstm(&params.fusion);
        let q_sentinel = b.put(&params.q_sentinel);
        let d_sentinel = b.put(&params.d_sentinel);
        let out_w = b.put(&params.out_w);
        let out_b = b.put(&params.out_b);
        BoundParams {
            attn_w,
            attn_b,
            enc,
            fusion,
            q_sentinel,
            d_sentinel,
            out_w,
            out_b,
            order: b.order,
            hidden: params.enc.layers[0].fwd.w_hh.cols(),
        }
    }

    pub(crate) fn hidden(&self) -> usize {
        self.hidden
    }

    /// Extract gradients in canonical layout order.
    pub fn gradients(&self, grads: &mut Gradients) -> Vec<Tensor> {
        self.order
            .iter()
            .map(|&v| grads.take(v).expect("param leaves always carry gradients"))
            .collect()
    }
}

/// A sequence embedded under all three banks: `tensors[role]` is
/// `embed_dim x len` with one column per real token (no padding columns).
#[derive(Debug, Clone)]
pub struct EmbeddedSeq {
    pub tensors: [Tensor; 3],
    pub len: usize,
}

impl EmbeddedSeq {
    /// Look up the kept window of an encoded sequence. Tokens the
    /// vocabulary rejected (id 0) take the out-of-vocabulary policy:
    /// zeros for w2v/glove and the subword fallback for fasttext.
    pub fn from_encoded(seq: &EncodedSequence, banks: &TripleBank) -> Self {
        let dim = banks.dim();
        let len = seq.length;
        let mut tensors = [
            Tensor::zeros(dim, len),
            Tensor::zeros(dim, len),
            Tensor::zeros(dim, len),
        ];
        for (pos, token) in seq.raw_tokens.iter().enumerate().take(len) {
            let vectors = if seq.ids[pos] != 0 {
                banks.triple_lookup(token)
            } else {
                banks.oov_lookup(token)
            };
            for (tensor, v) in tensors.iter_mut().zip(&vectors) {
                for (r, &x) in v.iter().enumerate() {
                    tensor.set(r, pos, x);
                }
            }
        }
        EmbeddedSeq { tensors, len }
    }

    /// Directly from three per-bank matrices (tests and gradient checks).
    pub fn from_tensors(tensors: [Tensor; 3]) -> Result<Self, ModelError> {
        let shape = tensors[0].shape();
        for t in &tensors[1..] {
            if t.shape() != shape {
                return Err(ModelError::BadConfig(format!(
                    "bank matrices disagree: {} vs {}",
                    shape,
                    t.shape()
                )));
            }
        }
        let len = tensors[0].cols();
        Ok(EmbeddedSeq { tensors, len })
    }
}

/// Encode a meta-embedded sequence with the shared encoder and append the
/// side's sentinel column: output is `2*hidden x (len + 1)`.
pub fn encode(
    tape: &mut Tape,
    bound: &BoundParams,
    meta: Var,
    side: Side,
    mode: Mode,
) -> Result<Var, ModelError> {
    if tape.value(meta).cols() == 0 {
        return Err(ModelError::EmptySequence);
    }
    let hidden = lstm::bilstm(tape, &bound.enc, meta, mode)?;
    let sentinel = match side {
        Side::Query => bound.q_sentinel,
        Side::Document => bound.d_sentinel,
    };
    Ok(tape.concat_cols(&[hidden, sentinel])?)
}

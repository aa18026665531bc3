//! Full-model gradient verification: every trainable parameter's
//! analytic gradient of the pairwise cross-entropy loss is compared
//! against central finite differences on a synthetic triple.
//!
//! Parameters and inputs are drawn at a healthy scale (rather than the
//! tiny training initialization) so the finite-difference quotient sits
//! far above float noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::FeatureVector;
use crate::tensor::{Tape, Tensor};

use super::{
    forward_pair, pair_loss, param_layout, BoundParams, EmbeddedSeq, Mode, ModelConfig,
    ModelError, ModelParams,
};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub model: ModelConfig,
    pub query_len: usize,
    pub doc_len: usize,
    /// Parameters are drawn uniformly in `[-param_scale, param_scale]`.
    pub param_scale: f64,
    pub seed: u64,
    pub fd_step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            model: ModelConfig {
                embed_dim: 12,
                hidden: 8,
                lstm_layers: 1,
                dropout: 0.0,
                max_query_len: 15,
                max_doc_len: 70,
                feature_count: 3,
                init_range: 0.01,
            },
            query_len: 4,
            doc_len: 6,
            param_scale: 0.5,
            seed: 17,
            fd_step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckRow {
    pub name: String,
    pub max_rel_err: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub rows: Vec<GradCheckRow>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Relative error with a floor: components whose true gradient is tiny
/// (for example the attention bias, which the softmax makes exactly
/// inert) are compared at absolute scale instead of blowing up a ratio
/// of noise terms.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn random_seq(cfg: &ModelConfig, len: usize, rng: &mut ChaCha8Rng) -> EmbeddedSeq {
    let t = |rng: &mut ChaCha8Rng| Tensor::uniform(cfg.embed_dim, len, -1.0, 1.0, rng);
    EmbeddedSeq::from_tensors([t(rng), t(rng), t(rng)]).expect("uniform shapes")
}

fn random_feats(rng: &mut ChaCha8Rng) -> FeatureVector {
    FeatureVector {
        length: Tensor::uniform(1, 1, -1.0, 1.0, rng).scalar_value(),
        bm25: Tensor::uniform(1, 1, -1.0, 1.0, rng).scalar_value(),
        tf_idf: Tensor::uniform(1, 1, -1.0, 1.0, rng).scalar_value(),
    }
}

struct Instance {
    query: EmbeddedSeq,
    doc1: EmbeddedSeq,
    doc2: EmbeddedSeq,
    feats1: FeatureVector,
    feats2: FeatureVector,
}

fn loss_value(params: &ModelParams, inst: &Instance) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, false);
    let pf = forward_pair(
        &mut tape,
        &bound,
        &inst.query,
        &inst.doc1,
        &inst.doc2,
        &inst.feats1,
        &inst.feats2,
        Mode::Eval,
    )?;
    let loss = pair_loss(&mut tape, pf.s1, pf.s2)?;
    Ok(tape.value(loss).scalar_value())
}

/// Run the check: analytic gradients via one backward pass, numeric
/// gradients via two forward passes per parameter component.
pub fn grad_check(check: &GradCheckConfig) -> Result<GradCheckReport, ModelError> {
    let cfg = check.model;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(check.seed);
    let init_cfg = ModelConfig {
        init_range: check.param_scale,
        ..cfg
    };
    let mut params = ModelParams::init(&init_cfg, &mut rng)?;
    let inst = Instance {
        query: random_seq(&cfg, check.query_len, &mut rng),
        doc1: random_seq(&cfg, check.doc_len, &mut rng),
        doc2: random_seq(&cfg, check.doc_len, &mut rng),
        feats1: random_feats(&mut rng),
        feats2: random_feats(&mut rng),
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, &params, true);
    let pf = forward_pair(
        &mut tape,
        &bound,
        &inst.query,
        &inst.doc1,
        &inst.doc2,
        &inst.feats1,
        &inst.feats2,
        Mode::Eval,
    )?;
    let loss = pair_loss(&mut tape, pf.s1, pf.s2)?;
    let mut grads = tape.backward(loss)?;
    let analytic = bound.gradients(&mut grads);
    drop(tape);

    // Numeric pass, perturbing one component at a time in place.
    let h = check.fd_step;
    let layout = param_layout(&cfg);
    let mut rows = Vec::with_capacity(layout.len());
    let mut max_rel = 0.0f64;
    for (idx, (name, _, _)) in layout.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut norm_sq = 0.0f64;
        let len = analytic[idx].len();
        for j in 0..len {
            let a = analytic[idx].data()[j];
            norm_sq += a * a;
            params.tensors_mut()[idx].data_mut()[j] += h;
            let up = loss_value(&params, &inst)?;
            params.tensors_mut()[idx].data_mut()[j] -= 2.0 * h;
            let down = loss_value(&params, &inst)?;
            params.tensors_mut()[idx].data_mut()[j] += h;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(a, numeric));
        }
        max_rel = max_rel.max(worst);
        rows.push(GradCheckRow {
            name: name.clone(),
            max_rel_err: worst,
            grad_norm: norm_sq.sqrt(),
        });
    }
    Ok(GradCheckReport {
        rows,
        max_rel_err: max_rel,
        tolerance: check.tolerance,
        passed: max_rel < check.tolerance,
    })
}

//! Output layer: max-pool the fusion outputs, extend with the manual
//! features, apply the linear scorer, and turn score pairs into
//! probabilities.

use crate::features::FeatureVector;
use crate::tensor::{sigmoid, Tape, Tensor, Var};

use super::{
    coattend, encode, meta_embed, BoundParams, CoattentionOutput, EmbeddedSeq, Mode, ModelError,
    Side,
};

/// Probabilities are floored here before the log in the loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-pool the fusion outputs over real positions, prepend the feature
/// vector (length, bm25, tf_idf) and apply the linear scorer. Features
/// should already be normalized by the caller.
pub fn score_document(
    tape: &mut Tape,
    bound: &BoundParams,
    coattention: &CoattentionOutput,
    feats: &FeatureVector,
) -> Result<Var, ModelError> {
    let pooled = tape.max_over_time(coattention.u)?; // 2h x 1
    let f = tape.constant(Tensor::column(vec![feats.length, feats.bm25, feats.tf_idf]));
    let extended = tape.concat_rows(&[f, pooled])?; // (3 + 2h) x 1
    let projected = tape.matmul(bound.out_w, extended)?;
    Ok(tape.add(projected, bound.out_b)?)
}

/// Pairwise softmax over two scores, computed as the logistic of the
/// score difference for stability. The pair sums to 1 exactly, and
/// swapping the arguments swaps the outputs bit-for-bit.
pub fn pair_probability(score1: f64, score2: f64) -> (f64, f64) {
    let d = score1 - score2;
    if d == 0.0 {
        return (0.5, 0.5);
    }
    let p_lo = sigmoid(-d.abs());
    let p_hi = 1.0 - p_lo;
    if d > 0.0 {
        (p_hi, p_lo)
    } else {
        (p_lo, p_hi)
    }
}

/// On-tape cross-entropy of the gold document winning its pair:
/// `-ln(max(sigmoid(s_gold - s_other), 1e-12))`.
pub fn pair_loss(tape: &mut Tape, s_gold: Var, s_other: Var) -> Result<Var, ModelError> {
    let neg_other = tape.scale(s_other, -1.0);
    let delta = tape.add(s_gold, neg_other)?;
    let p = tape.sigmoid(delta);
    let clamped = tape.clamp_min(p, PROB_FLOOR);
    let log_p = tape.ln(clamped)?;
    Ok(tape.scale(log_p, -1.0))
}

/// Everything a pairwise forward pass produces: the two score nodes (for
/// the loss) plus the eval-time probabilities.
pub struct PairForward {
    pub s1: Var,
    pub s2: Var,
    pub p1: f64,
    pub p2: f64,
    pub co1: CoattentionOutput,
    pub co2: CoattentionOutput,
}

/// Encode one document branch against an already-encoded query and score
/// it.
fn score_one(
    tape: &mut Tape,
    bound: &BoundParams,
    query_enc: Var,
    doc: &EmbeddedSeq,
    feats: &FeatureVector,
    mut mode: Mode,
) -> Result<(Var, CoattentionOutput), ModelError> {
    let meta = meta_embed(tape, bound.attn_w, bound.attn_b, doc)?;
    let enc = encode(tape, bound, meta.output, Side::Document, mode.reborrow())?;
    let co = coattend(tape, bound, query_enc, enc, mode)?;
    let score = score_document(tape, bound, &co, feats)?;
    Ok((score, co))
}

/// Full differentiable composition over one (query, doc1, doc2) triple.
/// Identical documents with identical features score identically, so the
/// probabilities are exactly (0.5, 0.5) in eval mode.
#[allow(clippy::too_many_arguments)]
pub fn forward_pair(
    tape: &mut Tape,
    bound: &BoundParams,
    query: &EmbeddedSeq,
    doc1: &EmbeddedSeq,
    doc2: &EmbeddedSeq,
    feats1: &FeatureVector,
    feats2: &FeatureVector,
    mut mode: Mode,
) -> Result<PairForward, ModelError> {
    let q_meta = meta_embed(tape, bound.attn_w, bound.attn_b, query)?;
    let q_enc = encode(tape, bound, q_meta.output, Side::Query, mode.reborrow())?;
    let (s1, co1) = score_one(tape, bound, q_enc, doc1, feats1, mode.reborrow())?;
    let (s2, co2) = score_one(tape, bound, q_enc, doc2, feats2, mode)?;
    let (p1, p2) = pair_probability(
        tape.value(s1).scalar_value(),
        tape.value(s2).scalar_value(),
    );
    Ok(PairForward {
        s1,
        s2,
        p1,
        p2,
        co1,
        co2,
    })
}

/// Eval-mode score plus attention diagnostics for one document.
pub struct DocScore {
    pub score: f64,
    pub attention_q: Tensor,
    pub attention_d: Tensor,
}

/// Score every passage against the query in eval mode, reusing the query
/// encoding. A document's score depends only on the query, the document
/// and its features — never on a partner — which is what makes the
/// pairwise probability matrix derivable from per-document scores.
pub fn score_passages_with_attention(
    params: &super::ModelParams,
    query: &EmbeddedSeq,
    docs: &[(&EmbeddedSeq, FeatureVector)],
) -> Result<Vec<DocScore>, ModelError> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, false);
    let q_meta = meta_embed(&mut tape, bound.attn_w, bound.attn_b, query)?;
    let q_enc = encode(&mut tape, &bound, q_meta.output, Side::Query, Mode::Eval)?;
    let mut out = Vec::with_capacity(docs.len());
    for (doc, feats) in docs {
        let (score, co) = score_one(&mut tape, &bound, q_enc, doc, feats, Mode::Eval)?;
        out.push(DocScore {
            score: tape.value(score).scalar_value(),
            attention_q: tape.value(co.a_q).clone(),
            attention_d: tape.value(co.a_d).clone(),
        });
    }
    Ok(out)
}

/// Scores only.
pub fn score_passages(
    params: &super::ModelParams,
    query: &EmbeddedSeq,
    docs: &[(&EmbeddedSeq, FeatureVector)],
) -> Result<Vec<f64>, ModelError> {
    Ok(score_passages_with_attention(params, query, docs)?
        .into_iter()
        .map(|d| d.score)
        .collect())
}

//! Meta-embedding: per token, a convex combination of the three bank
//! vectors with weights from a learned linear scorer.
//!
//! For position i and bank j: `a_ij = w . v_ij + b`, the weights are the
//! softmax of `a_i` over the three banks, and the output column is
//! `sum_j alpha_ij * v_ij`. The same (w, b) apply to queries and both
//! documents.

use crate::tensor::{Tape, Var};

use super::{EmbeddedSeq, ModelError};

pub struct MetaEmbed {
    /// `embed_dim x len` combined embeddings.
    pub output: Var,
    /// `3 x len` attention weights; each column sums to 1.
    pub weights: Var,
}

pub fn meta_embed(
    tape: &mut Tape,
    attn_w: Var,
    attn_b: Var,
    seq: &EmbeddedSeq,
) -> Result<MetaEmbed, ModelError> {
    if seq.len == 0 {
        return Err(ModelError::EmptySequence);
    }
    let banks: Vec<Var> = seq
        .tensors
        .iter()
        .map(|t| tape.constant(t.clone()))
        .collect();
    let mut logit_rows = Vec::with_capacity(3);
    for &bank in &banks {
        let scores = tape.matmul(attn_w, bank)?; // 1 x len
        logit_rows.push(tape.add_col_vec(scores, attn_b)?);
    }
    let logits = tape.concat_rows(&logit_rows)?; // 3 x len
    let weights = tape.softmax_cols(logits, None)?;
    let mut output = None;
    for (j, &bank) in banks.iter().enumerate() {
        let row = tape.slice_rows(weights, j, j + 1)?;
        let weighted = tape.mul_row_vec(bank, row)?;
        output = Some(match output {
            None => weighted,
            Some(acc) => tape.add(acc, weighted)?,
        });
    }
    Ok(MetaEmbed {
        output: output.expect("three banks"),
        weights,
    })
}

//! Co-attention between an encoded query and an encoded document.
//!
//! With Q `2h x (n+1)` and D `2h x (m+1)` (sentinel column last on each
//! side), the affinity matrix is L = D^T Q. Each query position gets a
//! distribution over document positions (columns of A^Q sum to 1) and
//! each document position a distribution over query positions (columns of
//! A^D). The document context C^Q = D A^Q and the co-dependent context
//! C^D = [Q ; C^Q] A^D feed a fusion bi-LSTM over the real document
//! positions; the sentinel column is dropped before fusion, so U is
//! `2h x m`.

use crate::tensor::{Tape, Var};

use super::{lstm, BoundParams, Mode, ModelError};

pub struct CoattentionOutput {
    /// Fusion outputs over real document positions, `2h x m`.
    pub u: Var,
    /// `(m+1) x (n+1)`: per query position, attention over the document.
    pub a_q: Var,
    /// `(n+1) x (m+1)`: per document position, attention over the query.
    pub a_d: Var,
    /// Affinity matrix `(m+1) x (n+1)` (diagnostic).
    pub affinity: Var,
    /// Document summary per query position, `2h x (n+1)` (diagnostic).
    pub c_q: Var,
    /// Co-dependent context per document position, `4h x (m+1)` (diagnostic).
    pub c_d: Var,
}

pub fn coattend(
    tape: &mut Tape,
    bound: &BoundParams,
    query_enc: Var,
    doc_enc: Var,
    mode: Mode,
) -> Result<CoattentionOutput, ModelError> {
    let (q_rows, d_rows) = (tape.value(query_enc).rows(), tape.value(doc_enc).rows());
    if q_rows != d_rows {
        return Err(ModelError::HeightMismatch { q_rows, d_rows });
    }
    let doc_cols = tape.value(doc_enc).cols();
    debug_assert!(doc_cols >= 2, "document must have a real position");

    let d_t = tape.transpose(doc_enc);
    let affinity = tape.matmul(d_t, query_enc)?; // (m+1) x (n+1)
    let a_q = tape.softmax_cols(affinity, None)?;
    let l_t = tape.transpose(affinity);
    let a_d = tape.softmax_cols(l_t, None)?;
    let c_q = tape.matmul(doc_enc, a_q)?; // 2h x (n+1)
    let q_cq = tape.concat_rows(&[query_enc, c_q])?; // 4h x (n+1)
    let c_d = tape.matmul(q_cq, a_d)?; // 4h x (m+1)

    // Drop the sentinel column before fusing temporal information.
    let m = doc_cols - 1;
    let d_real = tape.slice_cols(doc_enc, 0, m)?;
    let c_d_real = tape.slice_cols(c_d, 0, m)?;
    let fusion_in = tape.concat_rows(&[d_real, c_d_real])?; // 6h x m
    let u = lstm::bilstm(tape, &bound.fusion, fusion_in, mode)?;

    debug_assert_eq!(tape.value(u).rows(), 2 * bound.hidden());
    debug_assert_eq!(tape.value(u).cols(), m);
    Ok(CoattentionOutput {
        u,
        a_q,
        a_d,
        affinity,
        c_q,
        c_d,
    })
}

//! Multi-layer bidirectional LSTM over the columns of a matrix.
//!
//! Gate order is (input, forget, cell, output) stacked along rows of the
//! combined weight matrices:
//!
//!   gates = W_ih @ x_t + b_ih + W_hh @ h_{t-1} + b_hh
//!   i, f, g, o = split(gates)
//!   c_t = sigmoid(f) * c_{t-1} + sigmoid(i) * tanh(g)
//!   h_t = sigmoid(o) * tanh(c_t)
//!
//! Per position the forward and backward hidden states are concatenated,
//! so a layer maps `d x len` to `2*hidden x len`. Dropout applies between
//! layers only, in train mode.

use crate::tensor::{Tape, Tensor, Var};

use super::{BoundBiLstm, BoundCell, Mode, ModelError};

/// One direction over the sequence; returns the hidden state per position
/// indexed by the original position order.
fn run_direction(
    tape: &mut Tape,
    cell: &BoundCell,
    input: Var,
    reverse: bool,
) -> Result<Vec<Var>, ModelError> {
    let len = tape.value(input).cols();
    let hidden = tape.value(cell.w_hh).cols();
    let mut h = tape.constant(Tensor::zeros(hidden, 1));
    let mut c = tape.constant(Tensor::zeros(hidden, 1));
    let mut states = vec![h; len];
    let positions: Vec<usize> = if reverse {
        (0..len).rev().collect()
    } else {
        (0..len).collect()
    };
    for t in positions {
        let x = tape.slice_cols(input, t, t + 1)?;
        let ih = tape.matmul(cell.w_ih, x)?;
        let ih = tape.add(ih, cell.b_ih)?;
        let hh = tape.matmul(cell.w_hh, h)?;
        let hh = tape.add(hh, cell.b_hh)?;
        let gates = tape.add(ih, hh)?;
        let i_gate = tape.slice_rows(gates, 0, hidden)?;
        let f_gate = tape.slice_rows(gates, hidden, 2 * hidden)?;
        let g_gate = tape.slice_rows(gates, 2 * hidden, 3 * hidden)?;
        let o_gate = tape.slice_rows(gates, 3 * hidden, 4 * hidden)?;
        let i = tape.sigmoid(i_gate);
        let f = tape.sigmoid(f_gate);
        let g = tape.tanh(g_gate);
        let o = tape.sigmoid(o_gate);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        h = tape.mul(o, tc)?;
        states[t] = h;
    }
    Ok(states)
}

/// Full stack: layer 2 consumes layer 1 outputs, with inter-layer dropout
/// in train mode. Input `d x len`, output `2*hidden x len`.
pub(crate) fn bilstm(
    tape: &mut Tape,
    lstm: &BoundBiLstm,
    input: Var,
    mut mode: Mode,
) -> Result<Var, ModelError> {
    if tape.value(input).cols() == 0 {
        return Err(ModelError::EmptySequence);
    }
    let mut current = input;
    let last = lstm.layers.len() - 1;
    for (l, layer) in lstm.layers.iter().enumerate() {
        let fwd = run_direction(tape, &layer.fwd, current, false)?;
        let bwd = run_direction(tape, &layer.bwd, current, true)?;
        let mut columns = Vec::with_capacity(fwd.len());
        for (hf, hb) in fwd.iter().zip(&bwd) {
            columns.push(tape.concat_rows(&[*hf, *hb])?);
        }
        current = tape.concat_cols(&columns)?;
        if l < last {
            if let Mode::Train { dropout, ref mut rng } = mode {
                current = tape.dropout(current, dropout, *rng);
            }
        }
    }
    Ok(current)
}

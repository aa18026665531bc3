//! The built-in reverse-mode autodiff engine: record a forward pass on a
//! tape, run backward, and confirm one gradient against a central finite
//! difference.
//!
//! Run: `cargo run -p corank --example autodiff_gradients`

use corank::tensor::{clip_global_norm, AdamState, Tape, Tensor};

fn main() {
    // loss = sum(softmax_cols(W @ x) * t), a tiny classification-style
    // graph with a 3x2 weight matrix.
    let w0 = Tensor::from_vec(3, 2, vec![0.4, -0.3, 0.1, 0.8, -0.5, 0.2]);
    let x0 = Tensor::column(vec![0.9, -1.2]);
    let target = Tensor::column(vec![1.0, 0.0, 0.0]);

    let forward = |w: &Tensor| -> f64 {
        let mut tape = Tape::new();
        let wv = tape.constant(w.clone());
        let xv = tape.constant(x0.clone());
        let tv = tape.constant(target.clone());
        let logits = tape.matmul(wv, xv).unwrap();
        let probs = tape.softmax_cols(logits, None).unwrap();
        let picked = tape.mul(probs, tv).unwrap();
        let ones = tape.constant(Tensor::ones(1, 3));
        let loss = tape.matmul(ones, picked).unwrap();
        tape.value(loss).scalar_value()
    };

    // Analytic gradient from the tape.
    let mut tape = Tape::new();
    let wv = tape.param(w0.clone());
    let xv = tape.constant(x0.clone());
    let tv = tape.constant(target.clone());
    let logits = tape.matmul(wv, xv).unwrap();
    let probs = tape.softmax_cols(logits, None).unwrap();
    let picked = tape.mul(probs, tv).unwrap();
    let ones = tape.constant(Tensor::ones(1, 3));
    let loss = tape.matmul(ones, picked).unwrap();
    println!("loss = {:.6}", tape.value(loss).scalar_value());
    let grads = tape.backward(loss).unwrap();
    let analytic = grads.get(wv).unwrap().clone();

    // Central finite difference on one component.
    let h = 1e-6;
    let mut up = w0.clone();
    up.data_mut()[0] += h;
    let mut down = w0.clone();
    down.data_mut()[0] -= h;
    let numeric = (forward(&up) - forward(&down)) / (2.0 * h);
    println!(
        "dloss/dW[0,0]: analytic {:.10}, finite difference {:.10}",
        analytic.data()[0],
        numeric
    );

    // Clip and take one Adam step on the weight.
    let mut grad_list = vec![analytic];
    let norm = clip_global_norm(&mut grad_list, 5.0);
    println!("gradient norm {norm:.6} (threshold 5, unchanged below it)");
    let mut w = w0;
    let mut adam = AdamState::new(&[&w], 0.01);
    adam.apply(&mut [&mut w], &grad_list).unwrap();
    println!("loss after one Adam step = {:.6}", forward(&w));
}

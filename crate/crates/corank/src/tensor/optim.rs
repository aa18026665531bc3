//! Adam with bias correction and global-norm gradient clipping.

use super::{Tensor, TensorError};

/// L2 norm over every entry of every gradient, summed in slice order.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::sq_sum).sum::<f64>().sqrt()
}

/// If the global L2 norm exceeds `threshold`, scale every gradient by
/// `threshold / norm`; otherwise leave them untouched (a norm exactly at
/// the threshold is unchanged). Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], threshold: f64) -> f64 {
    assert!(threshold > 0.0, "clip threshold must be positive");
    let norm = global_norm(grads);
    if norm > threshold {
        let scale = threshold / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(scale);
        }
    }
    norm
}

/// Adam optimizer state: first/second moment estimates per parameter.
pub struct AdamState {
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    /// Fresh state for parameters of the given shapes, with the standard
    /// defaults `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: &[&Tensor], lr: f64) -> Self {
        AdamState {
            step: 0,
            m: params
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect(),
            v: params
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// One Adam update in place. Parameter and gradient lists must line up
    /// with the shapes this state was created for.
    pub fn apply(
        &mut self,
        params: &mut [&mut Tensor],
        grads: &[Tensor],
    ) -> Result<(), TensorError> {
        assert_eq!(params.len(), grads.len(), "param/grad count mismatch");
        assert_eq!(params.len(), self.m.len(), "param/state count mismatch");
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(TensorError::GradShapeMismatch {
                    index: i,
                    param: p.shape(),
                    grad: g.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let pd = p.data_mut();
            for (((pv, &gv), mv), vv) in pd
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

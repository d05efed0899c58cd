//! Adam optimizer with bias correction.

use crate::params::{Gradients, ParamSet};
use crate::tensor::Tensor;

/// Adam state: first/second moment accumulators per parameter plus the step
/// counter and hyperparameters.
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64, params: &ParamSet) -> Self {
        let m = params.iter().map(|(_, p)| Tensor::zeros(p.value.shape().to_vec())).collect();
        let v = params.iter().map(|(_, p)| Tensor::zeros(p.value.shape().to_vec())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: `theta -= lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// Parameters without a gradient keep their accumulators decayed toward
    /// zero, matching an all-zero gradient.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
        for id in ids {
            let zero;
            let g = match grads.get(id) {
                Some(g) => g,
                None => {
                    zero = Tensor::zeros(params.value(id).shape().to_vec());
                    &zero
                }
            };
            assert_eq!(
                g.shape(),
                params.value(id).shape(),
                "adam: gradient shape mismatch for {}",
                params.get(id).name
            );
            let m = self.m[id.0].data_mut();
            let v = self.v[id.0].data_mut();
            let mut theta = params.value(id).clone();
            let tv = theta.data_mut();
            for i in 0..tv.len() {
                let gi = g.data()[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                tv[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            params.set_value(id, theta);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut set = ParamSet::new();
        let id = set.add("w", Tensor::new(vec![2], vec![1.0, -2.0]));
        let before = set.value(id).clone();
        let mut adam = Adam::new(1e-2, &set);
        let grads = Gradients::zeros(&set);
        adam.step(&mut set, &grads);
        assert_eq!(set.value(id), &before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut set = ParamSet::new();
        let id = set.add("w", Tensor::new(vec![2], vec![0.0, 0.0]));
        let mut adam = Adam::new(1e-3, &set);
        let mut grads = Gradients::zeros(&set);
        grads.accumulate(id, &Tensor::new(vec![2], vec![0.7, -1234.5]));
        adam.step(&mut set, &grads);
        let w = set.value(id).data();
        // First bias-corrected step is -lr * g/|g| up to the eps correction.
        assert!((w[0] + 1e-3).abs() < 1e-6, "got {}", w[0]);
        assert!((w[1] - 1e-3).abs() < 1e-6, "got {}", w[1]);
    }

    #[test]
    fn quadratic_loss_decreases_monotonically() {
        // f(w) = (w - 3)^2, df/dw = 2(w - 3).
        let mut set = ParamSet::new();
        let id = set.add("w", Tensor::scalar(0.0));
        let mut adam = Adam::new(0.1, &set);
        let mut losses = Vec::new();
        for _ in 0..3 {
            let w = set.value(id).data()[0];
            losses.push((w - 3.0) * (w - 3.0));
            let mut grads = Gradients::zeros(&set);
            grads.accumulate(id, &Tensor::scalar(2.0 * (w - 3.0)));
            adam.step(&mut set, &grads);
        }
        let w = set.value(id).data()[0];
        losses.push((w - 3.0) * (w - 3.0));
        for pair in losses.windows(2) {
            assert!(pair[1] < pair[0], "loss must decrease: {losses:?}");
        }
    }
}

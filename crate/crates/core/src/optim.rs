//! Adaptive first/second-moment optimizer (Adam).

use alloc::vec;
use alloc::vec::Vec;

use crate::head::HeadParams;

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64, betas: (f64, f64), epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1: betas.0,
            beta2: betas.1,
            epsilon,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut HeadParams, grads: &HeadParams) {
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - libm::pow(self.beta1, t);
        let bias2 = 1.0 - libm::pow(self.beta2, t);
        let mut at = 0;
        for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
            for (pi, &gi) in p.iter_mut().zip(g) {
                let m = &mut self.m[at];
                let v = &mut self.v[at];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *pi -= self.learning_rate * m_hat / (libm::sqrt(v_hat) + self.epsilon);
                at += 1;
            }
        }
    }
}

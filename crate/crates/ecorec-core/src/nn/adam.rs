//! Adam optimizer over a [`ParamStore`].

use ndarray::Array2;

use super::params::ParamStore;

/// Adam with bias correction. Moment buffers are keyed by parameter index,
/// so one optimizer instance must stay paired with one store layout.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Apply one update from the accumulated gradients, then zero them.
    pub fn step(&mut self, ps: &mut ParamStore) {
        while self.m.len() < ps.len() {
            let idx = self.m.len();
            let dim = ps.value(super::params::ParamId(idx)).raw_dim();
            self.m.push(Array2::zeros(dim.clone()));
            self.v.push(Array2::zeros(dim));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..ps.len() {
            let id = super::params::ParamId(i);
            let grad = ps.grad(id).clone();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            m.zip_mut_with(&grad, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            v.zip_mut_with(&grad, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let lr = self.lr;
            let eps = self.eps;
            let value = ps.value_mut(id);
            for ((x, m), v) in value.iter_mut().zip(m.iter()).zip(v.iter()) {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        ps.zero_grads();
    }
}

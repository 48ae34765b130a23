//! Parameter storage shared across tapes.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Index of a parameter in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub(crate) struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

/// Owns all trainable parameters of a model. Gradients accumulate here
/// across the samples of a minibatch; the optimizer consumes and zeroes
/// them on each step.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: Array2<f64>) -> ParamId {
        let grad = Array2::zeros(value.raw_dim());
        self.params.push(Param { value, grad });
        ParamId(self.params.len() - 1)
    }

    /// Zero-mean normal init, the standard embedding/projection default.
    pub fn add_normal<R: Rng>(&mut self, rows: usize, cols: usize, sigma: f64, rng: &mut R) -> ParamId {
        let dist = Normal::new(0.0, sigma).expect("sigma must be finite");
        let value = Array2::from_shape_fn((rows, cols), |_| dist.sample(rng));
        self.add(value)
    }

    pub fn add_zeros(&mut self, rows: usize, cols: usize) -> ParamId {
        self.add(Array2::zeros((rows, cols)))
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].grad
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].grad
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Snapshot of all values, for checkpointing.
    pub fn snapshot(&self) -> Vec<Array2<f64>> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    /// Restore values from a snapshot taken on the same store layout.
    pub fn restore(&mut self, snap: &[Array2<f64>]) {
        assert_eq!(snap.len(), self.params.len(), "snapshot layout mismatch");
        for (p, s) in self.params.iter_mut().zip(snap) {
            p.value.assign(s);
        }
    }

    /// Iterate over parameter values in index order.
    pub fn values(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.params.iter().map(|p| &p.value)
    }
}

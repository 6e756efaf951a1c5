use rand::Rng;

use super::Matrix;

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Parameter { value, grad }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Parameter::new(Matrix::zeros(rows, cols))
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        Parameter::new(Matrix::from_fn(rows, cols, |_, _| {
            rng.random_range(-bound..=bound)
        }))
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Anything owning parameters, enumerated in a stable order.
pub trait Module {
    fn params(&self) -> Vec<&Parameter>;
    fn params_mut(&mut self) -> Vec<&mut Parameter>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn grad_norm(&self) -> f64 {
        global_grad_norm(&self.params())
    }
}

/// L2 norm of all gradients taken together.
pub fn global_grad_norm(params: &[&Parameter]) -> f64 {
    params.iter().map(|p| p.grad.sum_sq()).sum::<f64>().sqrt()
}

/// `target <- tau * live + (1 - tau) * target`, parameter by parameter.
pub fn polyak_update(target: &mut [&mut Parameter], live: &[&Parameter], tau: f64) {
    assert_eq!(target.len(), live.len(), "polyak: parameter count mismatch");
    for (t, l) in target.iter_mut().zip(live) {
        assert_eq!(t.shape(), l.shape(), "polyak: shape mismatch");
        for (tv, lv) in t.value.as_mut_slice().iter_mut().zip(l.value.as_slice()) {
            *tv = tau * lv + (1.0 - tau) * *tv;
        }
    }
}

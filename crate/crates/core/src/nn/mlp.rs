use rand::Rng;

use super::{Linear, Matrix, Module, Parameter};
use crate::Result;

/// Stack of [`Linear`] layers with ReLU between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer inputs saved by [`Mlp::forward`].
#[derive(Clone, Debug)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        Mlp {
            layers: sizes.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h)?;
            if i < last {
                relu_inplace(&mut y);
            }
            inputs.push(h);
            h = y;
        }
        Ok((h, MlpCache { inputs }))
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    /// Backpropagates from the output gradient and returns the input gradient.
    pub fn backward(&mut self, cache: &MlpCache, dout: &Matrix, param_grads: bool) -> Matrix {
        let mut d = dout.clone();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            d = self.layers[i]
                .backward(x, &d, param_grads, true)
                .expect("input gradient requested");
            if i > 0 {
                // x = relu(pre) so x > 0 exactly where the unit was active.
                relu_backward_inplace(&mut d, x);
            }
        }
        d
    }
}

impl Module for Mlp {
    fn params(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}

pub fn relu_inplace(m: &mut Matrix) {
    m.as_mut_slice().iter_mut().for_each(|x| {
        if *x < 0.0 {
            *x = 0.0
        }
    });
}

/// Zeroes `grad` wherever the post-activation `out` is not positive.
pub fn relu_backward_inplace(grad: &mut Matrix, out: &Matrix) {
    for (g, o) in grad.as_mut_slice().iter_mut().zip(out.as_slice()) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

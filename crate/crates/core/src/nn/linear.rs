use rand::Rng;

use super::{gemm, Matrix, Module, Parameter, View};
use crate::{Error, Result};

/// Affine layer `y = x W^T + b` applied row-wise to a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `out x in`
    pub weight: Parameter,
    /// `1 x out`
    pub bias: Parameter,
}

impl Linear {
    /// Weights and biases uniform in `±1/sqrt(in)`.
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        Linear {
            weight: Parameter::uniform(output, input, bound, rng),
            bias: Parameter::uniform(1, output, bound, rng),
        }
    }

    pub fn from_parts(weight: Matrix, bias: Matrix) -> Self {
        assert_eq!(bias.rows(), 1);
        assert_eq!(bias.cols(), weight.rows());
        Linear {
            weight: Parameter::new(weight),
            bias: Parameter::new(bias),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::config(format!(
                "linear layer expects input width {}, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let n = x.rows();
        let out_dim = self.output_dim();
        let mut y = Matrix::zeros(n, out_dim);
        let b = self.bias.value.as_slice();
        for r in 0..n {
            y.row_mut(r).copy_from_slice(b);
        }
        gemm(
            1.0,
            View::new(x.as_slice(), n, x.cols()),
            View::new(self.weight.value.as_slice(), out_dim, self.input_dim()).t(),
            1.0,
            y.as_mut_slice(),
        );
        Ok(y)
    }

    /// Backpropagates `dy` (gradient w.r.t. the output of `forward(x)`).
    ///
    /// Parameter gradients are accumulated only when `param_grads` is set;
    /// the input gradient is returned only when `need_dx` is set.
    pub fn backward(
        &mut self,
        x: &Matrix,
        dy: &Matrix,
        param_grads: bool,
        need_dx: bool,
    ) -> Option<Matrix> {
        let n = x.rows();
        let (out_dim, in_dim) = self.weight.shape();
        debug_assert_eq!(dy.shape(), (n, out_dim));
        if param_grads {
            gemm(
                1.0,
                View::new(dy.as_slice(), n, out_dim).t(),
                View::new(x.as_slice(), n, in_dim),
                1.0,
                self.weight.grad.as_mut_slice(),
            );
            let db = self.bias.grad.as_mut_slice();
            for r in 0..n {
                for (g, d) in db.iter_mut().zip(dy.row(r)) {
                    *g += d;
                }
            }
        }
        need_dx.then(|| dy.matmul(&self.weight.value))
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&Parameter> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Single-vector affine map `W x + b`.
pub fn linear_forward(x: &[f64], weight: &Parameter, bias: &Parameter) -> Result<Vec<f64>> {
    let (out_dim, in_dim) = weight.shape();
    if x.len() != in_dim {
        return Err(Error::config(format!(
            "input of length {} does not match weight with {} columns",
            x.len(),
            in_dim
        )));
    }
    if bias.len() != out_dim {
        return Err(Error::config(format!(
            "bias of length {} does not match weight with {} rows",
            bias.len(),
            out_dim
        )));
    }
    Ok((0..out_dim)
        .map(|r| {
            let w = weight.value.row(r);
            bias.value.as_slice()[r] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_weights_pass_input_through() {
        let w = Parameter::new(Matrix::identity(2));
        let b = Parameter::zeros(1, 2);
        assert_eq!(linear_forward(&[1.0, 2.0], &w, &b).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_input_returns_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Parameter::uniform(2, 5, 1.0, &mut rng);
        let b = Parameter::new(Matrix::row_vector(&[3.0, -1.0]));
        assert_eq!(linear_forward(&[0.0; 5], &w, &b).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn random_instance_matches_matmul_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Parameter::uniform(3, 4, 1.0, &mut rng);
        let b = Parameter::uniform(1, 3, 1.0, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        // Oracle: explicit triple loop, no shared code with the layer.
        let mut expect = [0.0; 3];
        for (i, e) in expect.iter_mut().enumerate() {
            *e = b.value.get(0, i);
            for (j, xj) in x.iter().enumerate() {
                *e += w.value.get(i, j) * xj;
            }
        }
        let got = linear_forward(&x, &w, &b).unwrap();
        for (g, e) in got.iter().zip(expect) {
            assert!((g - e).abs() < 1e-14);
        }
        let layer = Linear {
            weight: w,
            bias: b,
        };
        let batched = layer.forward(&Matrix::row_vector(&x)).unwrap();
        for (g, e) in batched.as_slice().iter().zip(expect) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let w = Parameter::zeros(2, 3);
        let b = Parameter::zeros(1, 2);
        assert!(matches!(
            linear_forward(&[1.0, 2.0], &w, &b),
            Err(Error::Config(_))
        ));
        let layer = Linear {
            weight: w,
            bias: b,
        };
        assert!(layer.forward(&Matrix::zeros(1, 2)).is_err());
    }
}

//! Minimal reverse-mode numeric core.
//!
//! Every layer exposes an explicit `forward` that returns whatever the
//! matching `backward` needs; there is no general autodiff graph. All
//! arithmetic is `f64`.

mod adam;
mod gaussian;
mod linear;
mod matrix;
mod mlp;
mod param;
mod rnn;

pub use adam::{Adam, BETA1, BETA2, EPSILON};
pub use gaussian::{
    squashed_gaussian_sample, standard_normal_matrix, SquashedBatch, LOG_STD_MAX, LOG_STD_MIN,
};
pub use linear::{linear_forward, Linear};
pub use matrix::{gemm, Matrix, View};
pub use mlp::{relu_backward_inplace, relu_inplace, Mlp, MlpCache};
pub use param::{global_grad_norm, polyak_update, Module, Parameter};
pub use rnn::{
    gru_cell_step, lstm_cell_step, unroll_and_backprop, BatchState, RnnCell, RnnKind, RnnState,
    SeqCache, Unrolled,
};

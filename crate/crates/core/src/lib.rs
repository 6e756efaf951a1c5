//! Recurrent model-free off-policy reinforcement learning for POMDPs.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`] — a small reverse-mode numeric core (dense layers, LSTM/GRU
//!   cells with truncated BPTT, squashed-Gaussian head, Adam).
//! * [`envs`] — desk-scale partially observable environments.
//! * [`replay`] — a flat sequence replay buffer with masked subsequence
//!   sampling.
//! * [`agent`] — recurrent TD3 and SAC over the five design factors
//!   (architecture, encoder, inputs, context length, algorithm).
//! * [`harness`] — training loop, evaluation protocol, metrics and the
//!   sweep/report tooling behind the `rmf` binary.

pub mod agent;
mod binio;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;

pub use error::{Error, Result};

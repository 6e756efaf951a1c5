//! Flat sequence replay buffer.
//!
//! Transitions live in `(capacity, dim)` arrays rather than a padded
//! `(episodes, max_len, dim)` block, so storage depends only on the number of
//! transitions. An episode table records where each stored episode starts and
//! how long it is; subsequences are cut from one episode at a time and
//! padded with a validity mask.

mod buffer;
mod snapshot;

pub use buffer::{EpisodeRecord, SampleOrigin, SampledBatch, SequenceReplayBuffer, Transition};

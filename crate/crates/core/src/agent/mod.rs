//! Recurrent actor-critic agent: configuration, input frames, encoders,
//! the TD3/SAC update, acting, and the parameter archive.

mod archive;
mod config;
mod encoder;
mod frames;
mod learner;
mod network;

pub use archive::ConfigFingerprint;
pub use config::{parse_encoder, AgentConfig, Arch, InputSpace, RlAlgo};
pub use encoder::{Encoder, EncoderCache};
pub use frames::{FrameBatch, PolicyInputFrame, SequenceView};
pub use learner::{ActMode, GradNormRecord, PolicySession, RecurrentAgent, UpdateNoise, UpdateStats};
pub use network::RecurrentActorCritic;

//! Desk-scale partially observable environments.
//!
//! Every environment hides its task variable (goal, wind, occluded state
//! entries) behind [`Environment::step`]; only the observation, reward and
//! done flag leave the environment.

mod pendulum;
mod point_robot;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use pendulum::{wrap_angle, OcclusionMode, Pendulum, PendulumParams};
pub use point_robot::{SemiCircle, SemiCircleParams, Wind, WindParams};

use crate::{Error, Result};

/// Static description of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Per-dimension action bounds (identical across dimensions).
    pub action_low: f64,
    pub action_high: f64,
    pub horizon: usize,
    pub discount: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if !(self.action_low.is_finite() && self.action_high.is_finite())
            || self.action_low >= self.action_high
        {
            return Err(Error::config("action bounds must be finite with low < high"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::config("discount must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Maps a normalised action in `[-1, 1]` onto the environment bounds.
    pub fn scale_action(&self, normalized: &[f64]) -> Vec<f64> {
        let mid = 0.5 * (self.action_high + self.action_low);
        let half = 0.5 * (self.action_high - self.action_low);
        normalized
            .iter()
            .map(|a| mid + half * a.clamp(-1.0, 1.0))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode; the seed fixes both the initial state and the
    /// episode's hidden task.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Errors if called before `reset` or after the episode finished.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvId {
    #[serde(rename = "pendulum-full")]
    PendulumFull,
    #[serde(rename = "pendulum-p")]
    PendulumP,
    #[serde(rename = "pendulum-v")]
    PendulumV,
    #[serde(rename = "semicircle")]
    SemiCircle,
    #[serde(rename = "wind")]
    Wind,
}

impl EnvId {
    pub const ALL: [EnvId; 5] = [
        EnvId::PendulumFull,
        EnvId::PendulumP,
        EnvId::PendulumV,
        EnvId::SemiCircle,
        EnvId::Wind,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnvId::PendulumFull => "pendulum-full",
            EnvId::PendulumP => "pendulum-p",
            EnvId::PendulumV => "pendulum-v",
            EnvId::SemiCircle => "semicircle",
            EnvId::Wind => "wind",
        }
    }

    pub fn make(self) -> Box<dyn Environment> {
        match self {
            EnvId::PendulumFull => Box::new(Pendulum::new(OcclusionMode::Full)),
            EnvId::PendulumP => Box::new(Pendulum::new(OcclusionMode::P)),
            EnvId::PendulumV => Box::new(Pendulum::new(OcclusionMode::V)),
            EnvId::SemiCircle => Box::new(SemiCircle::new(SemiCircleParams::default())),
            EnvId::Wind => Box::new(Wind::new(WindParams::default())),
        }
    }

    pub fn spec(self) -> EnvSpec {
        self.make().spec().clone()
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown environment id `{s}`")))
    }
}

/// Builds an environment from its string id.
pub fn make_env(id: &str) -> Result<Box<dyn Environment>> {
    Ok(id.parse::<EnvId>()?.make())
}

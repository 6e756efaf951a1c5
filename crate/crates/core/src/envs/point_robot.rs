//! Point robots on the plane whose task variable is hidden.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, StepResult};
use crate::{Error, Result};

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn read_action(action: &[f64], bound: f64) -> Result<[f64; 2]> {
    if action.len() != 2 {
        return Err(Error::config(format!(
            "point robot expects a 2-d action, got {}",
            action.len()
        )));
    }
    Ok([action[0].clamp(-bound, bound), action[1].clamp(-bound, bound)])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiCircleParams {
    pub radius: f64,
    pub success_radius: f64,
    pub speed: f64,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for SemiCircleParams {
    fn default() -> Self {
        SemiCircleParams {
            radius: 1.0,
            success_radius: 0.2,
            speed: 0.1,
            horizon: 60,
            discount: 0.99,
        }
    }
}

/// Navigate to a goal on the upper unit semicircle that only shows up in
/// the sparse reward. Actions lie in `[-1, 1]^2` and move the robot by
/// `speed * a`.
pub struct SemiCircle {
    params: SemiCircleParams,
    spec: EnvSpec,
    pos: [f64; 2],
    goal: [f64; 2],
    t: usize,
    active: bool,
}

impl SemiCircle {
    pub fn new(params: SemiCircleParams) -> Self {
        let spec = EnvSpec {
            obs_dim: 2,
            act_dim: 2,
            action_low: -1.0,
            action_high: 1.0,
            horizon: params.horizon,
            discount: params.discount,
        };
        SemiCircle {
            params,
            spec,
            pos: [0.0; 2],
            goal: [0.0; 2],
            t: 0,
            active: false,
        }
    }

    /// Draws the goal angle uniformly on `[0, π]`.
    pub fn sample_goal(&self, seed: u64) -> [f64; 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let angle = rng.random_range(0.0..=PI);
        [self.params.radius * angle.cos(), self.params.radius * angle.sin()]
    }

    pub fn reset_with_goal(&mut self, goal: [f64; 2]) -> Vec<f64> {
        self.goal = goal;
        self.pos = [0.0; 2];
        self.t = 0;
        self.active = true;
        self.pos.to_vec()
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }
}

impl Environment for SemiCircle {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let goal = self.sample_goal(seed);
        self.reset_with_goal(goal)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if !self.active {
            return Err(Error::config("semicircle stepped outside an active episode"));
        }
        let a = read_action(action, 1.0)?;
        let v = self.params.speed;
        self.pos = [self.pos[0] + v * a[0], self.pos[1] + v * a[1]];
        let reward = if dist(self.pos, self.goal) <= self.params.success_radius {
            1.0
        } else {
            0.0
        };
        self.t += 1;
        let done = self.t >= self.params.horizon;
        self.active = !done;
        Ok(StepResult {
            observation: self.pos.to_vec(),
            reward,
            done,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindParams {
    pub goal: [f64; 2],
    pub success_radius: f64,
    /// Per-axis action bound; the action is the displacement itself.
    pub max_action: f64,
    /// Wind is drawn from `U[-max_wind, max_wind]^2`.
    pub max_wind: f64,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for WindParams {
    fn default() -> Self {
        WindParams {
            goal: [0.0, 1.0],
            success_radius: 0.2,
            max_action: 0.1,
            max_wind: 0.08,
            horizon: 60,
            discount: 0.99,
        }
    }
}

/// Reach a fixed goal while a constant, unobserved wind `w` drifts the
/// robot: `p' = p + a + w`.
pub struct Wind {
    params: WindParams,
    spec: EnvSpec,
    pos: [f64; 2],
    wind: [f64; 2],
    t: usize,
    active: bool,
}

impl Wind {
    pub fn new(params: WindParams) -> Self {
        let spec = EnvSpec {
            obs_dim: 2,
            act_dim: 2,
            action_low: -params.max_action,
            action_high: params.max_action,
            horizon: params.horizon,
            discount: params.discount,
        };
        Wind {
            params,
            spec,
            pos: [0.0; 2],
            wind: [0.0; 2],
            t: 0,
            active: false,
        }
    }

    pub fn params(&self) -> &WindParams {
        &self.params
    }

    pub fn sample_wind(&self, seed: u64) -> [f64; 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.params.max_wind;
        [rng.random_range(-m..=m), rng.random_range(-m..=m)]
    }

    pub fn reset_with_wind(&mut self, wind: [f64; 2]) -> Vec<f64> {
        self.wind = wind;
        self.pos = [0.0; 2];
        self.t = 0;
        self.active = true;
        self.pos.to_vec()
    }

    pub fn wind(&self) -> [f64; 2] {
        self.wind
    }

    pub fn position(&self) -> [f64; 2] {
        self.pos
    }
}

impl Environment for Wind {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let w = self.sample_wind(seed);
        self.reset_with_wind(w)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if !self.active {
            return Err(Error::config("wind stepped outside an active episode"));
        }
        let a = read_action(action, self.params.max_action)?;
        self.pos = [
            self.pos[0] + a[0] + self.wind[0],
            self.pos[1] + a[1] + self.wind[1],
        ];
        let reward = if dist(self.pos, self.params.goal) <= self.params.success_radius {
            1.0
        } else {
            0.0
        };
        self.t += 1;
        let done = self.t >= self.params.horizon;
        self.active = !done;
        Ok(StepResult {
            observation: self.pos.to_vec(),
            reward,
            done,
        })
    }
}

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EnvSpec, Environment, StepResult};
use crate::{Error, Result};

/// Which entries of `(cos θ, sin θ, θdot)` are observed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OcclusionMode {
    /// `(cos θ, sin θ, θdot)`
    Full,
    /// Positions only: `(cos θ, sin θ)`
    P,
    /// Velocities only: `(θdot)`
    V,
}

impl OcclusionMode {
    pub fn obs_dim(self) -> usize {
        match self {
            OcclusionMode::Full => 3,
            OcclusionMode::P => 2,
            OcclusionMode::V => 1,
        }
    }

    pub fn observe(self, theta: f64, theta_dot: f64) -> Vec<f64> {
        match self {
            OcclusionMode::Full => vec![theta.cos(), theta.sin(), theta_dot],
            OcclusionMode::P => vec![theta.cos(), theta.sin()],
            OcclusionMode::V => vec![theta_dot],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub horizon: usize,
    pub discount: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            horizon: 200,
            discount: 0.99,
        }
    }
}

/// Maps an angle onto `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Torque-limited swing-up pendulum; `θ = 0` is upright.
pub struct Pendulum {
    params: PendulumParams,
    mode: OcclusionMode,
    spec: EnvSpec,
    theta: f64,
    theta_dot: f64,
    t: usize,
    active: bool,
    warned: bool,
}

impl Pendulum {
    pub fn new(mode: OcclusionMode) -> Self {
        Pendulum::with_params(mode, PendulumParams::default())
    }

    pub fn with_params(mode: OcclusionMode, params: PendulumParams) -> Self {
        let spec = EnvSpec {
            obs_dim: mode.obs_dim(),
            act_dim: 1,
            action_low: -params.max_torque,
            action_high: params.max_torque,
            horizon: params.horizon,
            discount: params.discount,
        };
        Pendulum {
            params,
            mode,
            spec,
            theta: 0.0,
            theta_dot: 0.0,
            t: 0,
            active: false,
            warned: false,
        }
    }

    pub fn mode(&self) -> OcclusionMode {
        self.mode
    }

    /// Sets the physical state directly and starts an episode from it.
    pub fn set_state(&mut self, theta: f64, theta_dot: f64) -> Vec<f64> {
        self.theta = theta;
        self.theta_dot = theta_dot;
        self.t = 0;
        self.active = true;
        self.mode.observe(theta, theta_dot)
    }

    pub fn state(&self) -> (f64, f64) {
        (self.theta, self.theta_dot)
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-PI..=PI);
        let theta_dot = rng.random_range(-1.0..=1.0);
        self.set_state(theta, theta_dot)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if !self.active {
            return Err(Error::config("pendulum stepped outside an active episode"));
        }
        if action.len() != 1 {
            return Err(Error::config(format!(
                "pendulum expects a 1-d action, got {}",
                action.len()
            )));
        }
        let p = &self.params;
        let raw = action[0];
        let u = raw.clamp(-p.max_torque, p.max_torque);
        if u != raw && !self.warned {
            log::warn!("pendulum torque {raw} outside ±{}; clipping", p.max_torque);
            self.warned = true;
        }
        let th = self.theta;
        let thd = self.theta_dot;
        let cost = wrap_angle(th).powi(2) + 0.1 * thd * thd + 0.001 * u * u;

        let acc = 3.0 * p.gravity / (2.0 * p.length) * th.sin()
            + 3.0 / (p.mass * p.length * p.length) * u;
        let new_thd = (thd + acc * p.dt).clamp(-p.max_speed, p.max_speed);
        self.theta = th + new_thd * p.dt;
        self.theta_dot = new_thd;
        self.t += 1;
        let done = self.t >= p.horizon;
        if done {
            self.active = false;
        }
        Ok(StepResult {
            observation: self.mode.observe(self.theta, self.theta_dot),
            reward: -cost,
            done,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_modes_have_expected_layout() {
        let (th, thd) = (0.7, -0.4);
        assert_eq!(OcclusionMode::Full.observe(th, thd), vec![th.cos(), th.sin(), thd]);
        assert_eq!(OcclusionMode::P.observe(th, thd), vec![th.cos(), th.sin()]);
        assert_eq!(OcclusionMode::V.observe(th, thd), vec![thd]);
        for mode in [OcclusionMode::Full, OcclusionMode::P, OcclusionMode::V] {
            let mut env = Pendulum::new(mode);
            assert_eq!(env.reset(1).len(), mode.obs_dim());
        }
    }

    #[test]
    fn p_and_v_partition_full_observation() {
        let mut full = Pendulum::new(OcclusionMode::Full);
        let mut p = Pendulum::new(OcclusionMode::P);
        let mut v = Pendulum::new(OcclusionMode::V);
        for seed in 0..10 {
            let mut joined = p.reset(seed);
            joined.extend(v.reset(seed));
            assert_eq!(joined, full.reset(seed));
            for t in 0..50 {
                let u = [((seed + t) as f64 * 0.9).sin() * 2.0];
                let mut joined = p.step(&u).unwrap().observation;
                joined.extend(v.step(&u).unwrap().observation);
                assert_eq!(joined, full.step(&u).unwrap().observation);
            }
        }
    }

    #[test]
    fn reset_samples_within_ranges() {
        let mut env = Pendulum::new(OcclusionMode::Full);
        for seed in 0..200 {
            env.reset(seed);
            let (th, thd) = env.state();
            assert!((-PI..=PI).contains(&th));
            assert!((-1.0..=1.0).contains(&thd));
        }
    }

    #[test]
    fn upright_is_a_fixed_point_with_zero_reward() {
        let mut env = Pendulum::new(OcclusionMode::Full);
        env.set_state(0.0, 0.0);
        let s = env.step(&[0.0]).unwrap();
        assert_eq!(env.state(), (0.0, 0.0));
        assert_eq!(s.reward, 0.0);
    }

    #[test]
    fn hanging_down_is_an_equilibrium() {
        let mut env = Pendulum::new(OcclusionMode::Full);
        env.set_state(PI, 0.0);
        env.step(&[0.0]).unwrap();
        assert!(env.state().1.abs() < 1e-12);
    }

    #[test]
    fn horizontal_start_matches_hand_evaluated_update() {
        // θdot' = 3*10/2 * sin(π/2) * 0.05 = 0.75, θ' = π/2 + 0.75 * 0.05.
        let mut env = Pendulum::new(OcclusionMode::Full);
        env.set_state(PI / 2.0, 0.0);
        env.step(&[0.0]).unwrap();
        let (th, thd) = env.state();
        assert!((thd - 0.75).abs() < 1e-12);
        assert!((th - (PI / 2.0 + 0.0375)).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_torque_is_clipped() {
        let mut a = Pendulum::new(OcclusionMode::Full);
        let mut b = Pendulum::new(OcclusionMode::Full);
        a.set_state(0.3, 0.1);
        b.set_state(0.3, 0.1);
        let ra = a.step(&[5.0]).unwrap();
        let rb = b.step(&[2.0]).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
        for k in -20..20 {
            let w = wrap_angle(k as f64 * 0.77);
            assert!(w > -PI && w <= PI);
        }
    }

    #[test]
    fn reward_within_cost_bounds() {
        let lo = -(PI * PI + 0.1 * 64.0 + 0.001 * 4.0);
        let mut env = Pendulum::new(OcclusionMode::V);
        for seed in 0..20 {
            env.reset(seed);
            for t in 0..200 {
                let u = if (t / 13) % 2 == 0 { 2.0 } else { -2.0 };
                let s = env.step(&[u]).unwrap();
                assert!(s.reward <= 0.0 && s.reward >= lo, "{}", s.reward);
            }
        }
    }
}

mod common;

use std::fs;

use common::tiny_run;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmf_core::agent::{ActMode, PolicyInputFrame, RecurrentAgent};
use rmf_core::envs::{EnvId, EnvSpec, Environment, StepResult, Wind, WindParams};
use rmf_core::harness::{
    evaluate, evaluate_tasks, final_performance, read_curve, train, train_agent, SeedCurve,
};

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let files = |name: &str, seed: u64| {
        let mut cfg = tiny_run(EnvId::Wind, 600, seed);
        cfg.out_dir = Some(dir.path().join(name));
        train(&cfg).unwrap();
        let d = dir.path().join(name);
        (
            fs::read(d.join("curve.csv")).unwrap(),
            fs::read(d.join("diagnostics.csv")).unwrap(),
            fs::read(d.join("config.json")).unwrap(),
        )
    };
    let a = files("a", 3);
    let b = files("b", 3);
    assert_eq!(a, b);
    let c = files("c", 4);
    assert_ne!(a.1, c.1);
}

#[test]
fn update_ratio_sets_the_number_of_updates() {
    for (ratio, want) in [(1.0, 1000), (0.25, 250)] {
        let mut cfg = tiny_run(EnvId::PendulumV, 2000, 0);
        cfg.warmup_steps = 1000;
        cfg.update_ratio = ratio;
        cfg.eval_interval = Some(2000);
        cfg.eval_episodes = 1;
        let rec = train(&cfg).unwrap();
        assert_eq!(rec.diagnostics.len(), want, "ratio {ratio}");
        assert_eq!(rec.diagnostics.last().unwrap().update_step, want as u64);
        assert!(rec.diagnostics.iter().all(|d| d.env_step > 1000));
    }
}

/// Wind rollout written from the environment's definition: `p += a + w`,
/// reward 1 within 0.2 of (0, 1), 60 steps.
fn reference_wind_return(agent: &mut RecurrentAgent, wind: [f64; 2]) -> f64 {
    let mut p = [0.0f64; 2];
    let mut history = vec![PolicyInputFrame::initial(p.to_vec(), 2)];
    let mut total = 0.0;
    for _ in 0..60 {
        let a = agent.act(&history, ActMode::Evaluate).unwrap();
        let d = [0.1 * a[0].clamp(-1.0, 1.0), 0.1 * a[1].clamp(-1.0, 1.0)];
        p = [p[0] + d[0] + wind[0], p[1] + d[1] + wind[1]];
        let r = if (p[0].powi(2) + (p[1] - 1.0).powi(2)).sqrt() <= 0.2 { 1.0 } else { 0.0 };
        total += r;
        history.push(PolicyInputFrame {
            obs: p.to_vec(),
            prev_action: a,
            reward: r,
            done: 0.0,
        });
    }
    total
}

#[test]
fn evaluation_matches_an_independent_rollout() {
    // A briefly trained agent so that some episodes actually earn reward.
    let mut cfg = tiny_run(EnvId::Wind, 600, 1);
    cfg.agent.context_len = 8;
    let (_, mut agent, _) = train_agent(&cfg).unwrap();
    let mut env = Wind::new(WindParams::default());
    let seeds: Vec<u64> = (0..8).map(|i| 1_000_000 + i).collect();
    let got = evaluate_tasks(&mut agent, &mut env, &seeds).unwrap();
    for (i, &s) in seeds.iter().enumerate() {
        let want = reference_wind_return(&mut agent, env.sample_wind(s));
        assert_eq!(got[i], want, "task {s}");
    }
    let mean = evaluate(&mut agent, &mut env, 8, 1_000_000).unwrap();
    assert!((mean - got.iter().sum::<f64>() / 8.0).abs() < 1e-12);
}

/// Moves randomly and never pays out.
struct Barren {
    spec: EnvSpec,
    t: usize,
    rng: ChaCha8Rng,
}

impl Environment for Barren {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.t = 0;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        vec![0.0]
    }
    fn step(&mut self, _action: &[f64]) -> rmf_core::Result<StepResult> {
        self.t += 1;
        Ok(StepResult {
            observation: vec![self.rng.random_range(-1.0..1.0)],
            reward: 0.0,
            done: self.t == self.spec.horizon,
        })
    }
}

#[test]
fn reward_free_environment_evaluates_to_zero() {
    let mut env = Barren {
        spec: EnvSpec {
            obs_dim: 1,
            act_dim: 1,
            action_low: -1.0,
            action_high: 1.0,
            horizon: 25,
            discount: 0.99,
        },
        t: 0,
        rng: ChaCha8Rng::seed_from_u64(0),
    };
    let cfg = common::tiny_agent_config(
        rmf_core::agent::RlAlgo::Sac,
        rmf_core::agent::Arch::Shared,
        rmf_core::nn::RnnKind::Lstm,
        5,
        rmf_core::agent::InputSpace::OAR,
    );
    let mut agent = RecurrentAgent::new(cfg, 1, 1, 0).unwrap();
    assert_eq!(evaluate(&mut agent, &mut env, 10, 0).unwrap(), 0.0);
}

#[test]
fn curve_file_round_trip_preserves_final_performance() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_run(EnvId::SemiCircle, 900, 2);
    cfg.out_dir = Some(dir.path().to_path_buf());
    let rec = train(&cfg).unwrap();
    let from_disk = read_curve(&dir.path().join("curve.csv")).unwrap();
    assert_eq!(from_disk, rec.curve);
    let f = |points| final_performance(&[SeedCurve { total_steps: 900, points }]).unwrap();
    assert_eq!(f(from_disk), f(rec.curve.clone()));
    // Independent: evaluations strictly after step 720.
    let tail: Vec<f64> = rec.curve.iter().filter(|p| p.env_step > 720).map(|p| p.eval_return).collect();
    assert_eq!(tail.len(), 3);
    assert!((f(rec.curve) - tail.iter().sum::<f64>() / 3.0).abs() < 1e-12);
    let tasks = fs::read_to_string(dir.path().join("tasks.csv")).unwrap();
    assert_eq!(tasks.lines().count(), 1 + cfg.eval_episodes);
}

#[test]
fn unwritable_output_fails_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let mut cfg = tiny_run(EnvId::Wind, 100_000, 0);
    cfg.out_dir = Some(blocker.join("run"));
    let t = std::time::Instant::now();
    assert!(train(&cfg).is_err());
    assert!(t.elapsed().as_secs() < 5);
}

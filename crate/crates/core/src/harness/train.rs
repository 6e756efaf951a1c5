use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::outputs::{CurvePoint, DiagnosticRow, RunWriter};
use super::RunConfig;
use crate::agent::{ActMode, PolicyInputFrame, RecurrentAgent};
use crate::envs::Environment;
use crate::replay::{SequenceReplayBuffer, Transition};
use crate::{Error, Result};

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct TrainingRunRecord {
    pub fingerprint: String,
    pub seed: u64,
    pub total_steps: u64,
    pub curve: Vec<CurvePoint>,
    pub diagnostics: Vec<DiagnosticRow>,
    /// Evaluation task seeds and each task's return averaged over the
    /// evaluations inside the final-performance window.
    pub task_seeds: Vec<u64>,
    pub task_returns: Vec<f64>,
}

/// Whether an evaluation at `env_step` counts towards final performance:
/// the step lies strictly inside the last 20% of the step range.
pub fn in_final_window(env_step: u64, total_steps: u64) -> bool {
    (env_step as u128) * 5 > (total_steps as u128) * 4
}

/// Undiscounted return of one episode per task seed, acting without noise.
/// Each episode starts from a fresh recurrent state.
pub fn evaluate_tasks(
    agent: &mut RecurrentAgent,
    env: &mut dyn Environment,
    task_seeds: &[u64],
) -> Result<Vec<f64>> {
    let spec = env.spec().clone();
    let mut returns = Vec::with_capacity(task_seeds.len());
    for &seed in task_seeds {
        let obs = env.reset(seed);
        let mut session = agent.start_session();
        let mut frame = PolicyInputFrame::initial(obs, spec.act_dim);
        let mut total = 0.0;
        loop {
            let a = agent.session_act(&mut session, frame, ActMode::Evaluate)?;
            let step = env.step(&spec.scale_action(&a))?;
            total += step.reward;
            if step.done {
                break;
            }
            frame = PolicyInputFrame {
                obs: step.observation,
                prev_action: a,
                reward: step.reward,
                done: 0.0,
            };
        }
        returns.push(total);
    }
    Ok(returns)
}

/// Mean return over `n_episodes` tasks seeded `seed_base, seed_base + 1, ...`.
pub fn evaluate(
    agent: &mut RecurrentAgent,
    env: &mut dyn Environment,
    n_episodes: usize,
    seed_base: u64,
) -> Result<f64> {
    let seeds: Vec<u64> = (0..n_episodes as u64).map(|i| seed_base + i).collect();
    let r = evaluate_tasks(agent, env, &seeds)?;
    Ok(r.iter().sum::<f64>() / r.len() as f64)
}

/// Trains one agent; writes outputs when `config.out_dir` is set.
pub fn train(config: &RunConfig) -> Result<TrainingRunRecord> {
    Ok(train_agent(config)?.0)
}

/// As [`train`], also returning the trained agent and its replay buffer.
pub fn train_agent(
    config: &RunConfig,
) -> Result<(TrainingRunRecord, RecurrentAgent, SequenceReplayBuffer)> {
    config.validate()?;
    let fingerprint = config.fingerprint();
    let mut writer = match &config.out_dir {
        Some(dir) => Some(RunWriter::create(dir, config.seed, &fingerprint)?),
        None => None,
    };
    let result = run_loop(config, fingerprint, writer.as_mut());
    if let Some(w) = writer.as_mut() {
        w.flush()?;
        if let Ok((record, _, _)) = &result {
            w.tasks(&record.task_seeds, &record.task_returns)?;
        }
    }
    result
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_loop(
    config: &RunConfig,
    fingerprint: String,
    mut writer: Option<&mut RunWriter>,
) -> Result<(TrainingRunRecord, RecurrentAgent, SequenceReplayBuffer)> {
    let mut env = config.env.make();
    let mut eval_env = config.env.make();
    let spec = env.spec().clone();
    let mut agent = RecurrentAgent::new(config.agent.clone(), spec.obs_dim, spec.act_dim, config.seed)?;
    let mut buffer = SequenceReplayBuffer::new(config.replay_capacity(), spec.obs_dim, spec.act_dim)?;
    let mut episode_rng = rng_stream(config.seed, 1);
    let mut sample_rng = rng_stream(config.seed, 2);
    let mut warmup_rng = rng_stream(config.seed, 3);

    let total = config.total_steps;
    let interval = config.eval_interval();
    let task_seeds: Vec<u64> = (0..config.eval_episodes as u64)
        .map(|i| config.eval_seed_base + i)
        .collect();
    let mut window_sum = vec![0.0; task_seeds.len()];
    let mut window_evals = 0usize;
    let mut curve = Vec::new();
    let mut diagnostics = Vec::new();

    let mut step = 0u64;
    let mut updates = 0u64;
    while step < total {
        let mut obs = env.reset(episode_rng.random());
        let mut session = agent.start_session();
        let mut frame = PolicyInputFrame::initial(obs.clone(), spec.act_dim);
        let mut episode: Vec<Transition> = Vec::with_capacity(spec.horizon);
        loop {
            let action = if step < config.warmup_steps {
                (0..spec.act_dim)
                    .map(|_| warmup_rng.random_range(-1.0..=1.0))
                    .collect()
            } else {
                agent.session_act(&mut session, frame.clone(), ActMode::Explore)?
            };
            // Keep the recurrent state in sync during warm-up too.
            if step < config.warmup_steps {
                agent.session_observe(&mut session, frame.clone())?;
            }
            let result = env.step(&spec.scale_action(&action))?;
            step += 1;
            episode.push(Transition {
                obs: obs.clone(),
                action: action.clone(),
                reward: result.reward,
                done: result.done,
                next_obs: result.observation.clone(),
            });

            if step % interval == 0 {
                let returns = evaluate_tasks(&mut agent, eval_env.as_mut(), &task_seeds)?;
                let mean = returns.iter().sum::<f64>() / returns.len() as f64;
                let point = CurvePoint {
                    env_step: step,
                    eval_return: mean,
                };
                log::info!("seed {} step {step}/{total}: eval return {mean:.3}", config.seed);
                if let Some(w) = writer.as_deref_mut() {
                    w.curve_point(point)?;
                }
                curve.push(point);
                if in_final_window(step, total) {
                    window_evals += 1;
                    for (s, r) in window_sum.iter_mut().zip(&returns) {
                        *s += r;
                    }
                }
            }

            if result.done || step == total {
                break;
            }
            obs = result.observation.clone();
            frame = PolicyInputFrame {
                obs: result.observation,
                prev_action: action,
                reward: result.reward,
                done: 0.0,
            };
        }
        if episode.last().is_some_and(|t| t.done) {
            buffer.store_episode(&episode)?;
        }
        if buffer.is_empty() {
            continue;
        }
        let owed = updates_owed(config.update_ratio, step, config.warmup_steps);
        while updates < owed {
            let batch = buffer.sample_subsequences(
                config.agent.batch_size,
                config.agent.context_len,
                &mut sample_rng,
            )?;
            let stats = agent.update(&batch).map_err(|e| match e {
                Error::Divergence { what, .. } => Error::Divergence {
                    step,
                    what: format!("{what} (gradient update {})", updates + 1),
                },
                other => other,
            })?;
            updates += 1;
            let row = DiagnosticRow {
                update_step: updates,
                env_step: step,
                critic_loss: stats.critic_loss,
                actor_loss: stats.actor_loss,
                alpha: stats.alpha,
                grad_norms: stats.grad_norms,
            };
            if let Some(w) = writer.as_deref_mut() {
                w.diagnostic(&row)?;
            }
            diagnostics.push(row);
        }
    }

    let task_returns = window_sum
        .iter()
        .map(|s| s / window_evals.max(1) as f64)
        .collect();
    let record = TrainingRunRecord {
        fingerprint,
        seed: config.seed,
        total_steps: total,
        curve,
        diagnostics,
        task_seeds,
        task_returns,
    };
    Ok((record, agent, buffer))
}

/// Gradient updates due after `step` environment steps.
pub fn updates_owed(ratio: f64, step: u64, warmup: u64) -> u64 {
    (ratio * step.saturating_sub(warmup) as f64 + 1e-9).floor() as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_accounting() {
        assert_eq!(updates_owed(1.0, 2000, 1000), 1000);
        assert_eq!(updates_owed(0.25, 2000, 1000), 250);
        assert_eq!(updates_owed(0.1, 1030, 1000), 3);
        assert_eq!(updates_owed(1.0, 500, 1000), 0);
    }

    #[test]
    fn final_window_is_strict() {
        assert!(!in_final_window(40, 50));
        assert!(in_final_window(41, 50));
        assert!(in_final_window(50, 50));
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{
    AgentConfig, Arch, Encoder, FrameBatch, PolicyInputFrame, RecurrentActorCritic, RlAlgo,
    SequenceView,
};
use crate::nn::{
    polyak_update, standard_normal_matrix, Adam, BatchState, Matrix, Mlp, Module, Parameter,
    SquashedBatch,
};
use crate::replay::SampledBatch;
use crate::{Error, Result};

/// Exploration noise on or off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Explore,
    Evaluate,
}

/// Gradient norms measured just before the optimizer steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradNormRecord {
    /// Norm over the shared encoder (embedders and RNN), both losses summed.
    Shared { encoder: f64 },
    /// Norms over each encoder; `actor` is 0 on updates without an actor step.
    Separate { critic: f64, actor: f64 },
}

impl GradNormRecord {
    /// Largest encoder gradient norm in the record.
    pub fn max(&self) -> f64 {
        match *self {
            GradNormRecord::Shared { encoder } => encoder,
            GradNormRecord::Separate { critic, actor } => critic.max(actor),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    /// `None` on TD3 updates that skip the delayed actor step.
    pub actor_loss: Option<f64>,
    /// Entropy temperature after the update (SAC only).
    pub alpha: Option<f64>,
    pub grad_norms: GradNormRecord,
}

/// Standard-normal draws consumed by one update, one row per valid transition.
#[derive(Clone, Debug)]
pub struct UpdateNoise {
    /// Target-policy smoothing (TD3) or next-action sampling (SAC).
    pub target: Matrix,
    /// Current-action sampling for the SAC actor loss; unused by TD3.
    pub policy: Matrix,
}

impl UpdateNoise {
    pub fn sample(n: usize, act_dim: usize, rng: &mut impl Rng) -> Self {
        UpdateNoise {
            target: standard_normal_matrix(n, act_dim, rng),
            policy: standard_normal_matrix(n, act_dim, rng),
        }
    }

    pub fn zeros(n: usize, act_dim: usize) -> Self {
        UpdateNoise {
            target: Matrix::zeros(n, act_dim),
            policy: Matrix::zeros(n, act_dim),
        }
    }
}

/// Incremental acting state for one episode.
///
/// While the episode is no longer than the context length the encoder is
/// stepped one frame at a time; after that each action re-rolls the last
/// `context_len` frames from a zero state, as [`RecurrentAgent::act`] does.
#[derive(Clone, Debug)]
pub struct PolicySession {
    history: Vec<PolicyInputFrame>,
    seen: usize,
    state: Option<BatchState>,
}

impl PolicySession {
    pub fn steps(&self) -> usize {
        self.seen
    }
}

/// A recurrent off-policy agent: live networks, Polyak targets, optimizers.
#[derive(Clone, Debug)]
pub struct RecurrentAgent {
    pub(crate) config: AgentConfig,
    pub(crate) obs_dim: usize,
    pub(crate) act_dim: usize,
    pub(crate) net: RecurrentActorCritic,
    pub(crate) target: RecurrentActorCritic,
    pub(crate) critic_opt: Adam,
    pub(crate) actor_opt: Adam,
    pub(crate) log_alpha: Parameter,
    pub(crate) alpha_opt: Adam,
    pub(crate) rng: ChaCha8Rng,
    pub(crate) updates: u64,
}

struct CriticOutcome {
    loss: f64,
}

struct ActorOutcome {
    loss: f64,
    log_prob: Vec<f64>,
}

fn tanh_matrix(m: &Matrix) -> Matrix {
    m.map(f64::tanh)
}

fn split_cols(m: &Matrix, left: usize) -> (Matrix, Matrix) {
    let mut parts = m.hsplit(&[left, m.cols() - left]).into_iter();
    (parts.next().unwrap(), parts.next().unwrap())
}

impl RecurrentAgent {
    pub fn new(config: AgentConfig, obs_dim: usize, act_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if obs_dim == 0 || act_dim == 0 {
            return Err(Error::config("observation and action widths must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = RecurrentActorCritic::wire(&config, obs_dim, act_dim, &mut rng);
        let target = net.clone();
        let critic_opt = Adam::new(config.critic_lr, &net.critic_params());
        let actor_opt = Adam::new(config.actor_lr, &net.actor_params());
        let log_alpha = Parameter::new(Matrix::row_vector(&[config.init_alpha.ln()]));
        let alpha_opt = Adam::new(config.alpha_lr, &[&log_alpha]);
        Ok(RecurrentAgent {
            config,
            obs_dim,
            act_dim,
            net,
            target,
            critic_opt,
            actor_opt,
            log_alpha,
            alpha_opt,
            rng,
            updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn network(&self) -> &RecurrentActorCritic {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut RecurrentActorCritic {
        &mut self.net
    }

    pub fn target_network(&self) -> &RecurrentActorCritic {
        &self.target
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.value.get(0, 0).exp()
    }

    pub fn log_alpha(&self) -> &Parameter {
        &self.log_alpha
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Next-frame hidden states for the valid transitions.
    ///
    /// With a context of one the next state is not part of the sampled
    /// sequence, so it comes from a separate one-frame pass.
    fn next_hidden(&self, enc: &Encoder, view: &SequenceView) -> Result<Matrix> {
        if self.config.context_len == 1 {
            let next = view.frames.slice_steps(1, view.len + 1);
            let h = enc.infer(&next)?;
            return Ok(view.gather(&h, 0));
        }
        Ok(view.gather(&enc.infer(&view.frames)?, view.batch))
    }

    fn target_values(&self, view: &SequenceView, noise: &UpdateNoise) -> Result<Vec<f64>> {
        let cfg = &self.config;
        let n = view.n_valid();
        let hn_c = self.next_hidden(&self.target.critic_encoder, view)?;
        let (next_action, entropy_term) = match cfg.rl {
            RlAlgo::Td3 => {
                let hn_a = match &self.target.actor_encoder {
                    None => hn_c.clone(),
                    Some(enc) => self.next_hidden(enc, view)?,
                };
                let mut a = tanh_matrix(&self.target.policy.infer(&hn_a)?);
                let c = cfg.target_noise_clip;
                for (v, e) in a.as_mut_slice().iter_mut().zip(noise.target.as_slice()) {
                    *v = (*v + (cfg.target_noise * e).clamp(-c, c)).clamp(-1.0, 1.0);
                }
                (a, vec![0.0; n])
            }
            RlAlgo::Sac => {
                let hn_a = self.next_hidden(self.net.actor_encoder(), view)?;
                let out = self.net.policy.infer(&hn_a)?;
                let (mean, log_std) = split_cols(&out, self.act_dim);
                let s = SquashedBatch::forward(&mean, &log_std, &noise.target);
                let alpha = self.alpha();
                let ent = s.log_prob.iter().map(|lp| -alpha * lp).collect();
                (s.action, ent)
            }
        };
        let x = Matrix::hcat(&[&hn_c, &next_action]);
        let q1 = self.target.q1.infer(&x)?;
        let q2 = self.target.q2.infer(&x)?;
        let mut y = Vec::with_capacity(n);
        for (j, &i) in view.valid.iter().enumerate() {
            let q = q1.get(j, 0).min(q2.get(j, 0)) + entropy_term[j];
            y.push(view.rewards[i] + cfg.gamma * (1.0 - view.dones[i]) * q);
        }
        Ok(y)
    }

    /// Accumulates critic gradients into the live critic encoder and Q heads.
    fn accumulate_critic(&mut self, view: &SequenceView, y: &[f64]) -> Result<CriticOutcome> {
        let n = view.n_valid() as f64;
        let (h_full, cache) = self.net.critic_encoder.forward(&view.frames)?;
        let h = view.gather(&h_full, 0);
        let a = view.gather(&view.actions, 0);
        let x = Matrix::hcat(&[&h, &a]);
        let (q1, c1) = self.net.q1.forward(&x)?;
        let (q2, c2) = self.net.q2.forward(&x)?;
        let mut loss = 0.0;
        let mut d1 = Matrix::zeros(q1.rows(), 1);
        let mut d2 = Matrix::zeros(q2.rows(), 1);
        for (j, &yj) in y.iter().enumerate() {
            let e1 = q1.get(j, 0) - yj;
            let e2 = q2.get(j, 0) - yj;
            loss += (e1 * e1 + e2 * e2) / n;
            d1.set(j, 0, 2.0 * e1 / n);
            d2.set(j, 0, 2.0 * e2 / n);
        }
        let mut dx = self.net.q1.backward(&c1, &d1, true);
        dx.add_assign(&self.net.q2.backward(&c2, &d2, true));
        let (dh, _) = split_cols(&dx, h.cols());
        let mut d_full = Matrix::zeros(h_full.rows(), h_full.cols());
        view.scatter_add(&dh, &mut d_full, 0);
        self.net.critic_encoder.backward(&cache, &d_full)?;
        Ok(CriticOutcome { loss })
    }

    /// Accumulates actor gradients. The Q heads only pass gradients through.
    /// Shared: into the shared encoder via both the policy input and the Q
    /// input. Separate: into the actor encoder, with critic features taken
    /// from the current (detached) critic encoder.
    fn accumulate_actor(&mut self, view: &SequenceView, noise: &UpdateNoise) -> Result<ActorOutcome> {
        let shared = self.net.arch == Arch::Shared;
        let enc_pass = match &self.net.actor_encoder {
            Some(enc) => enc.forward(&view.frames)?,
            None => self.net.critic_encoder.forward(&view.frames)?,
        };
        let (h_full, cache) = enc_pass;
        let h_pi = view.gather(&h_full, 0);
        let h_q = if shared {
            h_pi.clone()
        } else {
            view.gather(&self.net.critic_encoder.infer(&view.frames)?, 0)
        };
        let alpha = self.alpha();
        let outcome = actor_heads(
            &mut self.net.policy,
            &mut self.net.q1,
            &mut self.net.q2,
            self.config.rl,
            &h_pi,
            &h_q,
            &noise.policy,
            alpha,
        )?;
        let (loss, log_prob, mut dh_pi, dh_q) = outcome;
        if shared {
            dh_pi.add_assign(&dh_q);
        }
        let mut d_full = Matrix::zeros(h_full.rows(), h_full.cols());
        view.scatter_add(&dh_pi, &mut d_full, 0);
        match &mut self.net.actor_encoder {
            Some(enc) => enc.backward(&cache, &d_full)?,
            None => self.net.critic_encoder.backward(&cache, &d_full)?,
        }
        Ok(ActorOutcome { loss, log_prob })
    }

    /// Bootstrap targets for the valid transitions, in time-major order.
    pub fn bootstrap_targets(&self, batch: &SampledBatch, noise: &UpdateNoise) -> Result<Vec<f64>> {
        self.target_values(&SequenceView::new(batch), noise)
    }

    /// Critic loss for fixed noise, leaving its gradients in the live
    /// parameters (all gradients are cleared first). No optimizer step.
    pub fn critic_objective(&mut self, batch: &SampledBatch, noise: &UpdateNoise) -> Result<f64> {
        let y = self.bootstrap_targets(batch, noise)?;
        self.critic_objective_given(batch, &y)
    }

    /// As [`Self::critic_objective`] with the targets held fixed.
    pub fn critic_objective_given(&mut self, batch: &SampledBatch, targets: &[f64]) -> Result<f64> {
        self.net.zero_grad();
        let view = SequenceView::new(batch);
        if targets.len() != view.n_valid() {
            return Err(Error::config(format!(
                "{} targets for {} valid transitions",
                targets.len(),
                view.n_valid()
            )));
        }
        Ok(self.accumulate_critic(&view, targets)?.loss)
    }

    /// Actor loss for fixed noise, leaving its gradients in the live
    /// parameters (all gradients are cleared first). No optimizer step.
    pub fn actor_objective(&mut self, batch: &SampledBatch, noise: &UpdateNoise) -> Result<f64> {
        self.net.zero_grad();
        let view = SequenceView::new(batch);
        Ok(self.accumulate_actor(&view, noise)?.loss)
    }

    /// One gradient update on a sampled batch.
    pub fn update(&mut self, batch: &SampledBatch) -> Result<UpdateStats> {
        let view = SequenceView::new(batch);
        if view.n_valid() == 0 {
            return Err(Error::config("sampled batch has no valid transitions"));
        }
        let noise = UpdateNoise::sample(view.n_valid(), self.act_dim, &mut self.rng);
        self.update_with_noise(batch, &noise)
    }

    pub fn update_with_noise(&mut self, batch: &SampledBatch, noise: &UpdateNoise) -> Result<UpdateStats> {
        let view = SequenceView::new(batch);
        let step = self.updates + 1;
        let tag = |e: Error| match e {
            Error::Divergence { what, .. } => Error::Divergence { step, what },
            other => other,
        };
        self.net.zero_grad();
        let y = self.target_values(&view, noise).map_err(tag)?;
        let critic = self.accumulate_critic(&view, &y).map_err(tag)?;
        if !critic.loss.is_finite() {
            return Err(Error::Divergence {
                step,
                what: "non-finite critic loss".into(),
            });
        }
        let actor_step = match self.config.rl {
            RlAlgo::Td3 => self.updates % self.config.policy_delay as u64 == 0,
            RlAlgo::Sac => true,
        };
        let mut actor_loss = None;
        let mut log_prob = None;
        let grad_norms = match self.net.arch {
            Arch::Shared => {
                if actor_step {
                    let a = self.accumulate_actor(&view, noise).map_err(tag)?;
                    actor_loss = Some(a.loss);
                    log_prob = Some(a.log_prob);
                }
                let encoder = self.net.critic_encoder.grad_norm();
                self.critic_opt.step(&mut self.net.critic_params_mut()).map_err(tag)?;
                if actor_step {
                    self.actor_opt.step(&mut self.net.actor_params_mut()).map_err(tag)?;
                }
                GradNormRecord::Shared { encoder }
            }
            Arch::Separate => {
                let critic_norm = self.net.critic_encoder.grad_norm();
                self.critic_opt.step(&mut self.net.critic_params_mut()).map_err(tag)?;
                let mut actor_norm = 0.0;
                if actor_step {
                    // The actor sees the critic after its step.
                    self.net.zero_grad();
                    let a = self.accumulate_actor(&view, noise).map_err(tag)?;
                    actor_norm = self
                        .net
                        .actor_encoder
                        .as_ref()
                        .map_or(0.0, |e| e.grad_norm());
                    self.actor_opt.step(&mut self.net.actor_params_mut()).map_err(tag)?;
                    // Q heads received no parameter gradients, but clear anyway.
                    self.net.zero_grad();
                    actor_loss = Some(a.loss);
                    log_prob = Some(a.log_prob);
                }
                GradNormRecord::Separate {
                    critic: critic_norm,
                    actor: actor_norm,
                }
            }
        };
        if let Some(l) = actor_loss {
            if !l.is_finite() {
                return Err(Error::Divergence {
                    step,
                    what: "non-finite actor loss".into(),
                });
            }
        }
        let mut alpha = None;
        if self.config.rl == RlAlgo::Sac {
            let lp = log_prob.expect("SAC steps the actor every update");
            let h_bar = self.config.target_entropy(self.act_dim);
            let mean = lp.iter().map(|l| l + h_bar).sum::<f64>() / lp.len() as f64;
            self.log_alpha.grad.set(0, 0, -mean);
            self.alpha_opt.step(&mut [&mut self.log_alpha]).map_err(tag)?;
            alpha = Some(self.alpha());
        }
        polyak_update(&mut self.target.params_mut(), &self.net.params(), self.config.tau);
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss: critic.loss,
            actor_loss,
            alpha,
            grad_norms,
        })
    }

    fn action_from_hidden(&mut self, h: &Matrix, mode: ActMode) -> Result<Vec<f64>> {
        let out = self.net.policy.infer(h)?;
        let action = match (self.config.rl, mode) {
            (RlAlgo::Td3, ActMode::Evaluate) => tanh_matrix(&out).into_vec(),
            (RlAlgo::Td3, ActMode::Explore) => {
                let sigma = self.config.explore_noise;
                out.as_slice()
                    .iter()
                    .map(|u| {
                        let e: f64 = self.rng.sample(StandardNormal);
                        (u.tanh() + sigma * e).clamp(-1.0, 1.0)
                    })
                    .collect()
            }
            (RlAlgo::Sac, ActMode::Evaluate) => out.row(0)[..self.act_dim].iter().map(|u| u.tanh()).collect(),
            (RlAlgo::Sac, ActMode::Explore) => {
                let (mean, log_std) = split_cols(&out, self.act_dim);
                SquashedBatch::sample(&mean, &log_std, &mut self.rng).action.into_vec()
            }
        };
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: self.updates,
                what: "non-finite action".into(),
            });
        }
        Ok(action)
    }

    fn check_frame(&self, f: &PolicyInputFrame) -> Result<()> {
        if f.obs.len() != self.obs_dim || f.prev_action.len() != self.act_dim {
            return Err(Error::config(format!(
                "policy frame has widths ({}, {}), agent expects ({}, {})",
                f.obs.len(),
                f.prev_action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        Ok(())
    }

    /// Action in `[-1, 1]^act_dim` from the episode so far. The actor is
    /// unrolled from a zero state over the last `context_len` frames.
    pub fn act(&mut self, history: &[PolicyInputFrame], mode: ActMode) -> Result<Vec<f64>> {
        let last = history
            .last()
            .ok_or_else(|| Error::config("act needs at least one frame"))?;
        self.check_frame(last)?;
        let from = history.len().saturating_sub(self.config.context_len);
        let frames = FrameBatch::from_history(&history[from..]);
        let h = self.net.actor_encoder().infer(&frames)?;
        let h_last = h.slice_rows(h.rows() - 1, h.rows());
        self.action_from_hidden(&h_last, mode)
    }

    pub fn start_session(&self) -> PolicySession {
        PolicySession {
            history: Vec::new(),
            seen: 0,
            state: None,
        }
    }

    /// Same result as [`Self::act`] on the full history, computed incrementally.
    pub fn session_act(
        &mut self,
        session: &mut PolicySession,
        frame: PolicyInputFrame,
        mode: ActMode,
    ) -> Result<Vec<f64>> {
        let h = self.advance(session, frame)?;
        self.action_from_hidden(&h, mode)
    }

    /// Feeds a frame without choosing an action (used while acting randomly).
    pub fn session_observe(&self, session: &mut PolicySession, frame: PolicyInputFrame) -> Result<()> {
        self.advance(session, frame).map(|_| ())
    }

    fn advance(&self, session: &mut PolicySession, frame: PolicyInputFrame) -> Result<Matrix> {
        self.check_frame(&frame)?;
        let ctx = self.config.context_len;
        session.history.push(frame);
        if session.history.len() > ctx {
            session.history.remove(0);
        }
        session.seen += 1;
        let enc = self.net.actor_encoder();
        if session.seen <= ctx {
            let prev = session.state.take().unwrap_or_else(|| enc.zero_state(1));
            let one = FrameBatch::from_history(std::slice::from_ref(session.history.last().unwrap()));
            let next = enc.step(&one, &prev)?;
            let h = next.h.clone();
            session.state = Some(next);
            Ok(h)
        } else {
            session.state = None;
            let h = enc.infer(&FrameBatch::from_history(&session.history))?;
            Ok(h.slice_rows(h.rows() - 1, h.rows()))
        }
    }
}

/// Policy and Q-head part of the actor loss. Returns the loss, per-row
/// log-probabilities (SAC), and gradients w.r.t. the policy-input and
/// Q-input hidden states. Q-head parameters get no gradient.
#[allow(clippy::too_many_arguments)]
fn actor_heads(
    policy: &mut Mlp,
    q1: &mut Mlp,
    q2: &mut Mlp,
    rl: RlAlgo,
    h_pi: &Matrix,
    h_q: &Matrix,
    eps: &Matrix,
    alpha: f64,
) -> Result<(f64, Vec<f64>, Matrix, Matrix)> {
    let n = h_pi.rows() as f64;
    let hidden = h_q.cols();
    let (out, pc) = policy.forward(h_pi)?;
    match rl {
        RlAlgo::Td3 => {
            let a = tanh_matrix(&out);
            let (q, qc) = q1.forward(&Matrix::hcat(&[h_q, &a]))?;
            let loss = -q.as_slice().iter().sum::<f64>() / n;
            let dq = Matrix::from_fn(q.rows(), 1, |_, _| -1.0 / n);
            let dx = q1.backward(&qc, &dq, false);
            let (dh_q, da) = split_cols(&dx, hidden);
            let dpre = Matrix::from_fn(a.rows(), a.cols(), |r, c| {
                let v = a.get(r, c);
                da.get(r, c) * (1.0 - v * v)
            });
            let dh_pi = policy.backward(&pc, &dpre, true);
            Ok((loss, Vec::new(), dh_pi, dh_q))
        }
        RlAlgo::Sac => {
            let act_dim = out.cols() / 2;
            let (mean, log_std) = split_cols(&out, act_dim);
            let s = SquashedBatch::forward(&mean, &log_std, eps);
            let x = Matrix::hcat(&[h_q, &s.action]);
            let (v1, c1) = q1.forward(&x)?;
            let (v2, c2) = q2.forward(&x)?;
            let mut loss = 0.0;
            let mut d1 = Matrix::zeros(v1.rows(), 1);
            let mut d2 = Matrix::zeros(v2.rows(), 1);
            for j in 0..v1.rows() {
                let (a, b) = (v1.get(j, 0), v2.get(j, 0));
                loss += (alpha * s.log_prob[j] - a.min(b)) / n;
                if a <= b {
                    d1.set(j, 0, -1.0 / n);
                } else {
                    d2.set(j, 0, -1.0 / n);
                }
            }
            let mut dx = q1.backward(&c1, &d1, false);
            dx.add_assign(&q2.backward(&c2, &d2, false));
            let (dh_q, da) = split_cols(&dx, hidden);
            let dlp = vec![alpha / n; s.log_prob.len()];
            let (dm, dls) = s.backward(&da, &dlp);
            let dh_pi = policy.backward(&pc, &Matrix::hcat(&[&dm, &dls]), true);
            Ok((loss, s.log_prob, dh_pi, dh_q))
        }
    }
}

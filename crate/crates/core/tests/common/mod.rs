//! Shared test machinery: the finite-difference gradient suite and the
//! padded-reference replay oracle. Both the integration tests and the
//! acceptance runner use them.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rmf_core::agent::{AgentConfig, Arch, InputSpace, RecurrentAgent, RlAlgo, UpdateNoise};
use rmf_core::nn::{
    standard_normal_matrix, BatchState, Linear, Matrix, Mlp, Module, Parameter, RnnCell, RnnKind,
    SquashedBatch,
};
use rmf_core::replay::{SampleOrigin, SampledBatch, SequenceReplayBuffer, Transition};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so entries whose true gradient
/// is numerically zero are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Clone, Debug, Default)]
pub struct FdReport {
    pub instances: usize,
    pub entries: usize,
    /// Entries where the one-sided differences disagree, i.e. the step
    /// crossed a ReLU or min() kink and the function is not differentiable
    /// over the probe interval.
    pub kinks: usize,
    pub worst: f64,
    pub worst_case: String,
}

impl FdReport {
    fn absorb(&mut self, name: &str, entries: usize, kinks: usize, worst: f64) {
        self.instances += 1;
        self.entries += entries;
        self.kinks += kinks;
        if worst >= self.worst {
            self.worst = worst;
            self.worst_case = name.to_string();
        }
    }

    pub fn passed(&self) -> bool {
        self.worst < GRAD_TOL && self.kinks * 100 <= self.entries
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Compares the gradients left by `loss` in `params(model)` with central
/// differences. `loss` must clear and then accumulate those gradients.
/// Returns (entries, kinks, worst relative error).
pub fn fd_check<M>(
    model: &mut M,
    params: fn(&mut M) -> Vec<&mut Parameter>,
    loss: &mut dyn FnMut(&mut M) -> f64,
) -> (usize, usize, f64) {
    for p in params(model) {
        p.zero_grad();
    }
    let base = loss(model);
    let analytic: Vec<Vec<f64>> = params(model)
        .iter()
        .map(|p| p.grad.as_slice().to_vec())
        .collect();
    let (mut entries, mut kinks, mut worst) = (0, 0, 0.0f64);
    for (pi, g) in analytic.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let orig = params(model)[pi].value.as_slice()[k];
            params(model)[pi].value.as_mut_slice()[k] = orig + FD_STEP;
            let lp = loss(model);
            params(model)[pi].value.as_mut_slice()[k] = orig - FD_STEP;
            let lm = loss(model);
            params(model)[pi].value.as_mut_slice()[k] = orig;
            let fwd = (lp - base) / FD_STEP;
            let bwd = (base - lm) / FD_STEP;
            entries += 1;
            if rel_err(fwd, bwd) > 1e-2 && (fwd - bwd).abs() > 1e-6 {
                kinks += 1;
                continue;
            }
            worst = worst.max(rel_err(a, (lp - lm) / (2.0 * FD_STEP)));
        }
    }
    (entries, kinks, worst)
}

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

fn weighted_sum(y: &Matrix, c: &Matrix) -> f64 {
    y.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
}

struct LinearCase {
    layer: Linear,
    x: Parameter,
    c: Matrix,
}

fn linear_params(m: &mut LinearCase) -> Vec<&mut Parameter> {
    let mut v = m.layer.params_mut();
    v.push(&mut m.x);
    v
}

fn linear_case(rng: &mut ChaCha8Rng) -> (usize, usize, f64) {
    let (n, i, o) = (rng.random_range(1..5), rng.random_range(1..6), rng.random_range(1..5));
    let mut case = LinearCase {
        layer: Linear::new(i, o, rng),
        x: Parameter::new(random_matrix(n, i, 1.0, rng)),
        c: random_matrix(n, o, 1.0, rng),
    };
    fd_check(&mut case, linear_params, &mut |m: &mut LinearCase| {
        let y = m.layer.forward(&m.x.value).unwrap();
        m.layer.zero_grad();
        let dx = m.layer.backward(&m.x.value, &m.c, true, true).unwrap();
        m.x.grad = dx;
        weighted_sum(&y, &m.c)
    })
}

struct MlpCase {
    mlp: Mlp,
    x: Parameter,
    c: Matrix,
}

fn mlp_params(m: &mut MlpCase) -> Vec<&mut Parameter> {
    let mut v = m.mlp.params_mut();
    v.push(&mut m.x);
    v
}

fn mlp_case(rng: &mut ChaCha8Rng) -> (usize, usize, f64) {
    let n = rng.random_range(1..5);
    let sizes = [rng.random_range(1..5), rng.random_range(2..6), rng.random_range(2..6), rng.random_range(1..4)];
    let mut case = MlpCase {
        mlp: Mlp::new(&sizes, rng),
        x: Parameter::new(random_matrix(n, sizes[0], 1.0, rng)),
        c: random_matrix(n, sizes[3], 1.0, rng),
    };
    fd_check(&mut case, mlp_params, &mut |m: &mut MlpCase| {
        let (y, cache) = m.mlp.forward(&m.x.value).unwrap();
        m.mlp.zero_grad();
        m.x.grad = m.mlp.backward(&cache, &m.c, true);
        weighted_sum(&y, &m.c)
    })
}

struct RnnCase {
    cell: RnnCell,
    x: Parameter,
    init: BatchState,
    active: Vec<usize>,
    c: Matrix,
    batch: usize,
}

fn rnn_params(m: &mut RnnCase) -> Vec<&mut Parameter> {
    let mut v = m.cell.params_mut();
    v.push(&mut m.x);
    v
}

fn rnn_case(kind: RnnKind, rng: &mut ChaCha8Rng) -> (usize, usize, f64) {
    let (b, t, i, h) = (
        rng.random_range(1..4),
        rng.random_range(1..7),
        rng.random_range(1..4),
        rng.random_range(1..5),
    );
    // Non-increasing live counts; the first step keeps every sequence.
    let mut active = vec![b];
    for _ in 1..t {
        let last = *active.last().unwrap();
        active.push(rng.random_range(0..=last));
    }
    let mut c = random_matrix(t * b, h, 1.0, rng);
    for (s, &n) in active.iter().enumerate() {
        for r in n..b {
            c.row_mut(s * b + r).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let init = BatchState {
        h: random_matrix(b, h, 0.5, rng),
        c: (kind == RnnKind::Lstm).then(|| random_matrix(b, h, 0.5, rng)),
    };
    let mut case = RnnCase {
        cell: RnnCell::new(kind, i, h, rng),
        x: Parameter::new(random_matrix(t * b, i, 1.0, rng)),
        init,
        active,
        c,
        batch: b,
    };
    fd_check(&mut case, rnn_params, &mut |m: &mut RnnCase| {
        let (y, cache) = m
            .cell
            .forward_packed(&m.x.value, m.batch, Some(&m.init), &m.active)
            .unwrap();
        m.cell.zero_grad();
        m.x.grad = m.cell.backward_seq(&cache, &m.c, true).unwrap().unwrap();
        weighted_sum(&y, &m.c)
    })
}

struct GaussCase {
    mean: Parameter,
    log_std: Parameter,
    eps: Matrix,
    c: Matrix,
    d: Vec<f64>,
}

fn gauss_params(m: &mut GaussCase) -> Vec<&mut Parameter> {
    vec![&mut m.mean, &mut m.log_std]
}

fn gaussian_case(rng: &mut ChaCha8Rng) -> (usize, usize, f64) {
    let (n, d) = (rng.random_range(1..5), rng.random_range(1..4));
    let mut case = GaussCase {
        mean: Parameter::new(random_matrix(n, d, 1.5, rng)),
        log_std: Parameter::new(random_matrix(n, d, 1.5, rng)),
        eps: standard_normal_matrix(n, d, rng),
        c: random_matrix(n, d, 1.0, rng),
        d: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    };
    fd_check(&mut case, gauss_params, &mut |m: &mut GaussCase| {
        let s = SquashedBatch::forward(&m.mean.value, &m.log_std.value, &m.eps);
        let (dm, dl) = s.backward(&m.c, &m.d);
        m.mean.grad = dm;
        m.log_std.grad = dl;
        weighted_sum(&s.action, &m.c) + s.log_prob.iter().zip(&m.d).map(|(a, b)| a * b).sum::<f64>()
    })
}

pub fn tiny_agent_config(rl: RlAlgo, arch: Arch, kind: RnnKind, context_len: usize, inputs: InputSpace) -> AgentConfig {
    AgentConfig {
        rl,
        arch,
        encoder: kind,
        context_len,
        inputs,
        rnn_hidden: 4,
        mlp_hidden: 5,
        mlp_layers: 2,
        embed_dim: 3,
        batch_size: 3,
        ..AgentConfig::default()
    }
}

/// Random trajectory of `len` steps ending in done.
pub fn random_episode(len: usize, obs_dim: usize, act_dim: usize, rng: &mut impl Rng) -> Vec<Transition> {
    let mut obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    (0..len)
        .map(|t| {
            let next: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tr = Transition {
                obs: std::mem::replace(&mut obs, next.clone()),
                action: (0..act_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: rng.random_range(-1.0..1.0),
                done: t + 1 == len,
                next_obs: next,
            };
            tr
        })
        .collect()
}

pub fn random_batch(
    obs_dim: usize,
    act_dim: usize,
    batch: usize,
    context_len: usize,
    rng: &mut ChaCha8Rng,
) -> SampledBatch {
    let mut buf = SequenceReplayBuffer::new(200, obs_dim, act_dim).unwrap();
    for _ in 0..6 {
        let len = rng.random_range(1..9);
        buf.store_episode(&random_episode(len, obs_dim, act_dim, rng)).unwrap();
    }
    buf.sample_subsequences(batch, context_len, rng).unwrap()
}

fn critic_params(a: &mut RecurrentAgent) -> Vec<&mut Parameter> {
    a.network_mut().critic_params_mut()
}

fn actor_params(a: &mut RecurrentAgent) -> Vec<&mut Parameter> {
    let net = a.network_mut();
    match net.arch {
        Arch::Separate => net.actor_params_mut(),
        Arch::Shared => {
            let mut v = net.critic_encoder.params_mut();
            v.extend(net.policy.params_mut());
            v
        }
    }
}

/// Critic and actor losses of a small agent after a few real updates.
fn agent_case(rl: RlAlgo, arch: Arch, kind: RnnKind, rng: &mut ChaCha8Rng) -> [(usize, usize, f64); 2] {
    let ctx = rng.random_range(1..6);
    let (obs_dim, act_dim) = (rng.random_range(1..4), rng.random_range(1..3));
    let inputs = [InputSpace::O, InputSpace::OA, InputSpace::OAR, InputSpace::OARD][rng.random_range(0..4)];
    let cfg = tiny_agent_config(rl, arch, kind, ctx, inputs);
    let mut agent = RecurrentAgent::new(cfg, obs_dim, act_dim, rng.random()).unwrap();
    for _ in 0..3 {
        let b = random_batch(obs_dim, act_dim, 3, ctx, rng);
        agent.update(&b).unwrap();
    }
    let batch = random_batch(obs_dim, act_dim, 3, ctx, rng);
    let n = batch.valid_count();
    let noise = UpdateNoise::sample(n, act_dim, rng);
    let targets = agent.bootstrap_targets(&batch, &noise).unwrap();
    let critic = fd_check(&mut agent, critic_params, &mut |a: &mut RecurrentAgent| {
        a.critic_objective_given(&batch, &targets).unwrap()
    });
    let actor = fd_check(&mut agent, actor_params, &mut |a: &mut RecurrentAgent| {
        a.actor_objective(&batch, &noise).unwrap()
    });
    [critic, actor]
}

/// Every differentiable building block plus the full TD3/SAC losses.
pub fn gradient_suite(seed: u64, rounds: usize) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FdReport::default();
    for round in 0..rounds {
        let (e, k, w) = linear_case(&mut rng);
        report.absorb(&format!("linear #{round}"), e, k, w);
        let (e, k, w) = mlp_case(&mut rng);
        report.absorb(&format!("mlp #{round}"), e, k, w);
        for kind in [RnnKind::Lstm, RnnKind::Gru] {
            let (e, k, w) = rnn_case(kind, &mut rng);
            report.absorb(&format!("{} bptt #{round}", kind.name()), e, k, w);
        }
        let (e, k, w) = gaussian_case(&mut rng);
        report.absorb(&format!("squashed gaussian #{round}"), e, k, w);
        let rl = [RlAlgo::Td3, RlAlgo::Sac][round % 2];
        let arch = [Arch::Shared, Arch::Separate][(round / 2) % 2];
        let kind = [RnnKind::Lstm, RnnKind::Gru][(round / 4) % 2];
        let [c, a] = agent_case(rl, arch, kind, &mut rng);
        report.absorb(&format!("{rl}-{arch}-{} critic #{round}", kind.name()), c.0, c.1, c.2);
        report.absorb(&format!("{rl}-{arch}-{} actor #{round}", kind.name()), a.0, a.1, a.2);
    }
    report
}

/// Naive reference buffer: every stored episode as its own padded array,
/// evicted oldest-first whenever the total exceeds capacity.
pub struct PaddedReference {
    pub capacity: usize,
    pub episodes: Vec<(u64, Vec<Transition>)>,
    next_id: u64,
}

impl PaddedReference {
    pub fn new(capacity: usize) -> Self {
        PaddedReference {
            capacity,
            episodes: Vec::new(),
            next_id: 0,
        }
    }

    pub fn store(&mut self, ep: Vec<Transition>) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let mut total: usize = self.episodes.iter().map(|e| e.1.len()).sum();
        while total + ep.len() > self.capacity {
            total -= self.episodes.remove(0).1.len();
        }
        self.episodes.push((id, ep));
        id
    }

    /// Every legal (episode, start, valid length) for a context length.
    pub fn legal(&self, ctx: usize) -> BTreeSet<SampleOrigin> {
        let mut out = BTreeSet::new();
        for (id, ep) in &self.episodes {
            for start in 0..ep.len() {
                out.insert(SampleOrigin {
                    episode_id: *id,
                    start,
                    valid_len: ctx.min(ep.len() - start),
                });
            }
        }
        out
    }

    /// The padded `(ctx)` window a row starting at `start` should hold.
    pub fn window(&self, id: u64, start: usize, ctx: usize) -> Option<Vec<Option<&Transition>>> {
        let ep = &self.episodes.iter().find(|e| e.0 == id)?.1;
        Some((0..ctx).map(|t| ep.get(start + t)).collect())
    }

    pub fn previous(&self, id: u64, start: usize) -> Option<&Transition> {
        let ep = &self.episodes.iter().find(|e| e.0 == id)?.1;
        start.checked_sub(1).map(|p| &ep[p])
    }
}

/// Checks one sampled row against the reference; returns a description of
/// the first disagreement.
pub fn check_row(reference: &PaddedReference, batch: &SampledBatch, row: usize) -> Result<(), String> {
    let o = batch.origins[row];
    let ctx = batch.context_len;
    let window = reference
        .window(o.episode_id, o.start, ctx)
        .ok_or_else(|| format!("row {row} samples evicted episode {}", o.episode_id))?;
    let valid = window.iter().filter(|w| w.is_some()).count();
    if valid != o.valid_len {
        return Err(format!("row {row}: valid length {} vs reference {valid}", o.valid_len));
    }
    let prev = reference.previous(o.episode_id, o.start);
    for (t, w) in window.iter().enumerate() {
        let i = batch.index(row, t);
        let m = batch.mask[i];
        match w {
            None => {
                let zero = batch.obs.row(i).iter().all(|v| *v == 0.0)
                    && batch.actions.row(i).iter().all(|v| *v == 0.0)
                    && batch.rewards.get(i, 0) == 0.0;
                if m != 0.0 || !zero {
                    return Err(format!("row {row} t {t}: padding is not masked zeros"));
                }
            }
            Some(tr) => {
                if m != 1.0 {
                    return Err(format!("row {row} t {t}: valid step masked out"));
                }
                let done = if tr.done { 1.0 } else { 0.0 };
                if batch.obs.row(i) != tr.obs.as_slice()
                    || batch.actions.row(i) != tr.action.as_slice()
                    || batch.rewards.get(i, 0) != tr.reward
                    || batch.dones.get(i, 0) != done
                    || batch.next_obs.row(i) != tr.next_obs.as_slice()
                {
                    return Err(format!("row {row} t {t}: contents differ from the episode"));
                }
                // Previous-step channels come from inside the same episode.
                let (pa, pr, pd) = if t == 0 {
                    match prev {
                        Some(p) => (p.action.clone(), p.reward, 0.0),
                        None => (vec![0.0; tr.action.len()], 0.0, 0.0),
                    }
                } else {
                    let p = window[t - 1].expect("valid prefix");
                    (p.action.clone(), p.reward, if p.done { 1.0 } else { 0.0 })
                };
                if batch.prev_actions.row(i) != pa.as_slice()
                    || batch.prev_rewards.get(i, 0) != pr
                    || batch.prev_dones.get(i, 0) != pd
                {
                    return Err(format!("row {row} t {t}: previous-step channels differ"));
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub operations: usize,
    pub rows_checked: usize,
    pub failures: Vec<String>,
}

/// `operations` random stores and samples against the padded reference.
pub fn replay_oracle(seed: u64, operations: usize) -> OracleReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport::default();
    let (obs_dim, act_dim) = (2, 1);
    let mut cap = rng.random_range(20..80);
    let mut buf = SequenceReplayBuffer::new(cap, obs_dim, act_dim).unwrap();
    let mut reference = PaddedReference::new(cap);
    for op in 0..operations {
        report.operations += 1;
        // Occasionally start over with a new capacity.
        if rng.random_bool(0.002) {
            cap = rng.random_range(20..80);
            buf = SequenceReplayBuffer::new(cap, obs_dim, act_dim).unwrap();
            reference = PaddedReference::new(cap);
        }
        if buf.is_empty() || rng.random_bool(0.4) {
            let len = rng.random_range(1..=cap.min(25));
            let ep = random_episode(len, obs_dim, act_dim, &mut rng);
            let id = buf.store_episode(&ep).unwrap();
            let rid = reference.store(ep);
            if id != rid {
                report.failures.push(format!("op {op}: id {id} vs reference {rid}"));
            }
        } else {
            let ctx = rng.random_range(1..12);
            if buf.legal_subsequences(ctx) != reference.legal(ctx) {
                report.failures.push(format!("op {op}: legal subsequence sets differ (ctx {ctx})"));
            }
            let b = rng.random_range(1..6);
            let batch = buf.sample_subsequences(b, ctx, &mut rng).unwrap();
            for row in 0..b {
                report.rows_checked += 1;
                if let Err(e) = check_row(&reference, &batch, row) {
                    report.failures.push(format!("op {op}: {e}"));
                }
            }
        }
        if report.failures.len() > 20 {
            break;
        }
    }
    report
}

/// A run small enough for a unit-test budget.
pub fn tiny_run(env: rmf_core::envs::EnvId, total_steps: u64, seed: u64) -> rmf_core::harness::RunConfig {
    let mut cfg = rmf_core::harness::RunConfig {
        env,
        agent: tiny_agent_config(RlAlgo::Td3, Arch::Separate, RnnKind::Gru, 4, InputSpace::OAR),
        total_steps,
        update_ratio: 0.25,
        warmup_steps: 120,
        eval_interval: Some(60),
        eval_episodes: 3,
        seed,
        ..Default::default()
    };
    cfg.agent.batch_size = 4;
    cfg
}

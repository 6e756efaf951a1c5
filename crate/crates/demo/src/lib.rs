//! Browser demo: a Wind rollout, replay subsequence sampling and the
//! squashed Gaussian policy head, each behind one exported function.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use rmf_core::envs::{Environment, Wind, WindParams};
use rmf_core::nn::squashed_gaussian_sample;
use rmf_core::replay::{SequenceReplayBuffer, Transition};

/// One Wind episode under a proportional controller.
#[wasm_bindgen]
pub struct WindRollout {
    xy: Vec<f64>,
    wind: [f64; 2],
    total: f64,
}

#[wasm_bindgen]
impl WindRollout {
    /// Positions `x0, y0, x1, y1, ...` starting at the origin.
    pub fn positions(&self) -> Vec<f64> {
        self.xy.clone()
    }

    pub fn wind_x(&self) -> f64 {
        self.wind[0]
    }

    pub fn wind_y(&self) -> f64 {
        self.wind[1]
    }

    #[wasm_bindgen(js_name = episodeReturn)]
    pub fn episode_return(&self) -> f64 {
        self.total
    }
}

/// Steers toward the goal with gain `gain`. With `remember`, the controller
/// also subtracts the drift it measured on the previous step, i.e. it
/// estimates the hidden wind from history.
#[wasm_bindgen(js_name = windRollout)]
pub fn wind_rollout(task_seed: u64, gain: f64, remember: bool) -> WindRollout {
    let params = WindParams::default();
    let goal = params.goal;
    let bound = params.max_action;
    let mut env = Wind::new(params);
    let mut obs = env.reset(task_seed);
    let mut xy = obs.clone();
    let mut drift = [0.0; 2];
    let mut total = 0.0;
    loop {
        let mut a = [gain * (goal[0] - obs[0]), gain * (goal[1] - obs[1])];
        if remember {
            a = [a[0] - drift[0], a[1] - drift[1]];
        }
        let a = a.map(|v| v.clamp(-bound, bound));
        let step = env.step(&a).expect("episode is active");
        drift = [
            step.observation[0] - obs[0] - a[0],
            step.observation[1] - obs[1] - a[1],
        ];
        total += step.reward;
        xy.extend_from_slice(&step.observation);
        obs = step.observation;
        if step.done {
            break;
        }
    }
    WindRollout {
        xy,
        wind: env.wind(),
        total,
    }
}

/// A sampled batch, flattened for drawing.
#[wasm_bindgen]
pub struct MaskSample {
    mask: Vec<f64>,
    episodes: Vec<u32>,
    starts: Vec<u32>,
    stored: Vec<u32>,
}

#[wasm_bindgen]
impl MaskSample {
    /// `batch * context_len` validity flags, row-major.
    pub fn mask(&self) -> Vec<f64> {
        self.mask.clone()
    }

    /// Episode id of each row.
    pub fn episodes(&self) -> Vec<u32> {
        self.episodes.clone()
    }

    pub fn starts(&self) -> Vec<u32> {
        self.starts.clone()
    }

    /// Ids of the episodes still stored after eviction.
    pub fn stored(&self) -> Vec<u32> {
        self.stored.clone()
    }
}

fn dummy_episode(len: usize) -> Vec<Transition> {
    (0..len)
        .map(|t| Transition {
            obs: vec![t as f64],
            action: vec![0.0],
            reward: 0.0,
            done: t + 1 == len,
            next_obs: vec![t as f64 + 1.0],
        })
        .collect()
}

/// Stores episodes of the given lengths into a buffer of `capacity`
/// transitions and samples `batch` subsequences of `context_len`.
#[wasm_bindgen(js_name = sampleMasks)]
pub fn sample_masks(
    lengths: Vec<u32>,
    capacity: usize,
    batch: usize,
    context_len: usize,
    seed: u64,
) -> Result<MaskSample, JsError> {
    let mut buf = SequenceReplayBuffer::new(capacity, 1, 1)?;
    for len in lengths {
        buf.store_episode(&dummy_episode(len as usize))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = buf.sample_subsequences(batch, context_len, &mut rng)?;
    Ok(MaskSample {
        mask: b.mask,
        episodes: b.origins.iter().map(|o| o.episode_id as u32).collect(),
        starts: b.origins.iter().map(|o| o.start as u32).collect(),
        stored: buf.episodes().map(|e| e.id as u32).collect(),
    })
}

/// Histogram of `tanh(mean + exp(log_std) * eps)` over `bins` equal bins of
/// `[-1, 1]`, followed by the density implied by the reported
/// log-probabilities at the bin centres (`2 * bins` values in total).
#[wasm_bindgen(js_name = squashedHistogram)]
pub fn squashed_histogram(mean: f64, log_std: f64, samples: usize, bins: usize, seed: u64) -> Vec<f64> {
    let bins = bins.max(1);
    let width = 2.0 / bins as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0.0; bins];
    for _ in 0..samples {
        let (a, _) = squashed_gaussian_sample(&[mean], &[log_std], &mut rng);
        let k = (((a[0] + 1.0) / width) as usize).min(bins - 1);
        counts[k] += 1.0;
    }
    let mut out: Vec<f64> = counts.iter().map(|c| c / (samples.max(1) as f64 * width)).collect();
    // Density of the squashed variable: N(atanh(a); mean, std) / (1 - a^2).
    let std = log_std.exp();
    for k in 0..bins {
        let a: f64 = -1.0 + (k as f64 + 0.5) * width;
        let u = a.atanh();
        let z = (u - mean) / std;
        let normal = (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt());
        out.push(normal / (1.0 - a * a));
    }
    out
}

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use crate::nn::Matrix;
use crate::{Error, Result};

/// One environment step `(o, a, r, d, o')`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub next_obs: Vec<f64>,
}

/// Location of a stored episode. Positions wrap modulo the capacity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpisodeRecord {
    pub id: u64,
    pub start: usize,
    pub len: usize,
}

/// Provenance of one sampled row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleOrigin {
    pub episode_id: u64,
    pub start: usize,
    pub valid_len: usize,
}

/// Batch of subsequences, each channel shaped `(batch, context_len, dim)`
/// and stored row-major as `batch * context_len` rows.
///
/// Position `t` of a row holds transition `start + t` of its episode. The
/// `prev_*` channels hold the action, reward and done flag of the transition
/// before it (zeros at an episode's first step; the done flag is always 0 at
/// a row's first position).
#[derive(Clone, Debug, PartialEq)]
pub struct SampledBatch {
    pub batch: usize,
    pub context_len: usize,
    pub obs: Matrix,
    pub prev_actions: Matrix,
    pub prev_rewards: Matrix,
    pub prev_dones: Matrix,
    pub actions: Matrix,
    pub rewards: Matrix,
    pub dones: Matrix,
    pub next_obs: Matrix,
    /// `batch * context_len`, 1 for valid positions (a prefix of each row).
    pub mask: Vec<f64>,
    pub origins: Vec<SampleOrigin>,
}

impl SampledBatch {
    pub fn zeros(batch: usize, context_len: usize, obs_dim: usize, act_dim: usize) -> Self {
        let n = batch * context_len;
        SampledBatch {
            batch,
            context_len,
            obs: Matrix::zeros(n, obs_dim),
            prev_actions: Matrix::zeros(n, act_dim),
            prev_rewards: Matrix::zeros(n, 1),
            prev_dones: Matrix::zeros(n, 1),
            actions: Matrix::zeros(n, act_dim),
            rewards: Matrix::zeros(n, 1),
            dones: Matrix::zeros(n, 1),
            next_obs: Matrix::zeros(n, obs_dim),
            mask: vec![0.0; n],
            origins: Vec::with_capacity(batch),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.cols()
    }

    pub fn act_dim(&self) -> usize {
        self.actions.cols()
    }

    #[inline]
    pub fn index(&self, row: usize, t: usize) -> usize {
        row * self.context_len + t
    }

    pub fn valid_len(&self, row: usize) -> usize {
        self.mask[row * self.context_len..(row + 1) * self.context_len]
            .iter()
            .filter(|&&m| m > 0.0)
            .count()
    }

    pub fn valid_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m > 0.0).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceReplayBuffer {
    pub(crate) capacity: usize,
    pub(crate) obs_dim: usize,
    pub(crate) act_dim: usize,
    pub(crate) obs: Vec<f64>,
    pub(crate) act: Vec<f64>,
    pub(crate) rew: Vec<f64>,
    pub(crate) done: Vec<f64>,
    pub(crate) next_obs: Vec<f64>,
    pub(crate) episodes: VecDeque<EpisodeRecord>,
    pub(crate) cursor: usize,
    pub(crate) size: usize,
    pub(crate) next_id: u64,
}

impl SequenceReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("replay capacity must be positive"));
        }
        if obs_dim == 0 || act_dim == 0 {
            return Err(Error::config("observation and action widths must be positive"));
        }
        Ok(SequenceReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            obs: vec![0.0; capacity * obs_dim],
            act: vec![0.0; capacity * act_dim],
            rew: vec![0.0; capacity],
            done: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            episodes: VecDeque::new(),
            cursor: 0,
            size: 0,
            next_id: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    /// Number of stored transitions.
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }

    /// Appends a complete episode, evicting whole oldest episodes until it
    /// fits. Returns the id assigned to it.
    pub fn store_episode(&mut self, trajectory: &[Transition]) -> Result<u64> {
        let len = trajectory.len();
        if len == 0 {
            return Err(Error::Rejected("empty episode".into()));
        }
        if len > self.capacity {
            return Err(Error::Rejected(format!(
                "episode of length {len} exceeds capacity {}",
                self.capacity
            )));
        }
        for (k, tr) in trajectory.iter().enumerate() {
            if tr.obs.len() != self.obs_dim
                || tr.next_obs.len() != self.obs_dim
                || tr.action.len() != self.act_dim
            {
                return Err(Error::config(format!(
                    "transition {k} has widths (obs {}, act {}, next {}), expected ({}, {}, {})",
                    tr.obs.len(),
                    tr.action.len(),
                    tr.next_obs.len(),
                    self.obs_dim,
                    self.act_dim,
                    self.obs_dim
                )));
            }
            if tr.done != (k + 1 == len) {
                return Err(Error::Rejected(format!(
                    "done flag must be set exactly on the last transition (violated at {k})"
                )));
            }
        }

        while self.capacity - self.size < len {
            let old = self
                .episodes
                .pop_front()
                .expect("size > 0 implies a stored episode");
            self.size -= old.len;
        }

        let start = self.cursor;
        let (od, ad) = (self.obs_dim, self.act_dim);
        for (k, tr) in trajectory.iter().enumerate() {
            let i = (start + k) % self.capacity;
            self.obs[i * od..(i + 1) * od].copy_from_slice(&tr.obs);
            self.next_obs[i * od..(i + 1) * od].copy_from_slice(&tr.next_obs);
            self.act[i * ad..(i + 1) * ad].copy_from_slice(&tr.action);
            self.rew[i] = tr.reward;
            self.done[i] = if tr.done { 1.0 } else { 0.0 };
        }
        let id = self.next_id;
        self.next_id += 1;
        self.episodes.push_back(EpisodeRecord { id, start, len });
        self.cursor = (start + len) % self.capacity;
        self.size += len;
        Ok(id)
    }

    fn episode_by_id(&self, id: u64) -> Option<&EpisodeRecord> {
        // Ids are increasing along the deque.
        let first = self.episodes.front()?.id;
        let idx = id.checked_sub(first)? as usize;
        self.episodes.get(idx).filter(|e| e.id == id)
    }

    /// Reads back the transitions of a stored episode.
    pub fn episode(&self, id: u64) -> Option<Vec<Transition>> {
        let ep = *self.episode_by_id(id)?;
        Some((0..ep.len).map(|k| self.transition_at((ep.start + k) % self.capacity)).collect())
    }

    fn transition_at(&self, i: usize) -> Transition {
        let (od, ad) = (self.obs_dim, self.act_dim);
        Transition {
            obs: self.obs[i * od..(i + 1) * od].to_vec(),
            action: self.act[i * ad..(i + 1) * ad].to_vec(),
            reward: self.rew[i],
            done: self.done[i] > 0.0,
            next_obs: self.next_obs[i * od..(i + 1) * od].to_vec(),
        }
    }

    /// Every `(episode, start, valid_len)` a sampler with this context length
    /// can produce.
    pub fn legal_subsequences(&self, context_len: usize) -> BTreeSet<SampleOrigin> {
        let mut out = BTreeSet::new();
        for ep in &self.episodes {
            for start in 0..ep.len {
                out.insert(SampleOrigin {
                    episode_id: ep.id,
                    start,
                    valid_len: context_len.min(ep.len - start),
                });
            }
        }
        out
    }

    /// Uniform over stored episodes, then uniform over the start index within
    /// the chosen episode. Rows never cross an episode boundary; positions past
    /// the episode end are zero with mask 0.
    pub fn sample_subsequences(
        &self,
        batch_size: usize,
        context_len: usize,
        rng: &mut impl Rng,
    ) -> Result<SampledBatch> {
        if self.episodes.is_empty() {
            return Err(Error::Unavailable("no stored episodes to sample".into()));
        }
        if batch_size == 0 || context_len == 0 {
            return Err(Error::config("batch size and context length must be positive"));
        }
        let mut out = SampledBatch::zeros(batch_size, context_len, self.obs_dim, self.act_dim);
        for row in 0..batch_size {
            let ep = self.episodes[rng.random_range(0..self.episodes.len())];
            let start = rng.random_range(0..ep.len);
            self.fill_row(&mut out, row, &ep, start);
        }
        Ok(out)
    }

    /// Builds a batch from explicit `(episode_id, start)` pairs.
    pub fn gather(&self, picks: &[(u64, usize)], context_len: usize) -> Result<SampledBatch> {
        if context_len == 0 {
            return Err(Error::config("context length must be positive"));
        }
        let mut out = SampledBatch::zeros(picks.len(), context_len, self.obs_dim, self.act_dim);
        for (row, &(id, start)) in picks.iter().enumerate() {
            let ep = *self
                .episode_by_id(id)
                .ok_or_else(|| Error::Unavailable(format!("episode {id} is not stored")))?;
            if start >= ep.len {
                return Err(Error::config(format!(
                    "start {start} outside episode {id} of length {}",
                    ep.len
                )));
            }
            self.fill_row(&mut out, row, &ep, start);
        }
        Ok(out)
    }

    fn fill_row(&self, out: &mut SampledBatch, row: usize, ep: &EpisodeRecord, start: usize) {
        let (od, ad) = (self.obs_dim, self.act_dim);
        let valid = out.context_len.min(ep.len - start);
        for t in 0..valid {
            let k = start + t;
            let i = (ep.start + k) % self.capacity;
            let dst = out.index(row, t);
            out.obs.row_mut(dst).copy_from_slice(&self.obs[i * od..(i + 1) * od]);
            out.next_obs
                .row_mut(dst)
                .copy_from_slice(&self.next_obs[i * od..(i + 1) * od]);
            out.actions
                .row_mut(dst)
                .copy_from_slice(&self.act[i * ad..(i + 1) * ad]);
            out.rewards.set(dst, 0, self.rew[i]);
            out.dones.set(dst, 0, self.done[i]);
            if k > 0 {
                let p = (ep.start + k - 1) % self.capacity;
                out.prev_actions
                    .row_mut(dst)
                    .copy_from_slice(&self.act[p * ad..(p + 1) * ad]);
                out.prev_rewards.set(dst, 0, self.rew[p]);
                if t > 0 {
                    out.prev_dones.set(dst, 0, self.done[p]);
                }
            }
            out.mask[dst] = 1.0;
        }
        out.origins.push(SampleOrigin {
            episode_id: ep.id,
            start,
            valid_len: valid,
        });
    }

    /// Bytes held by the transition arrays: `capacity * width * 8`,
    /// independent of how episode lengths are distributed.
    pub fn memory_footprint(&self) -> usize {
        let width = 2 * self.obs_dim + self.act_dim + 2;
        self.capacity * width * std::mem::size_of::<f64>()
    }

    /// Bytes held by the episode table.
    pub fn bookkeeping_bytes(&self) -> usize {
        self.episodes.len() * std::mem::size_of::<EpisodeRecord>()
    }
}

use crate::nn::Matrix;
use crate::replay::SampledBatch;

/// What the policy sees at step `t`: `o_t`, `a_{t-1}`, `r_t`, `d_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyInputFrame {
    pub obs: Vec<f64>,
    /// Zero at the first step of an episode.
    pub prev_action: Vec<f64>,
    pub reward: f64,
    pub done: f64,
}

impl PolicyInputFrame {
    /// Frame at the start of an episode.
    pub fn initial(obs: Vec<f64>, act_dim: usize) -> Self {
        PolicyInputFrame {
            obs,
            prev_action: vec![0.0; act_dim],
            reward: 0.0,
            done: 0.0,
        }
    }
}

/// Input frames laid out time-major: row `j * batch + b` is frame `j` of
/// sequence `b`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBatch {
    pub steps: usize,
    pub batch: usize,
    pub obs: Matrix,
    pub act: Matrix,
    pub rew: Matrix,
    pub done: Matrix,
    /// 1 where the frame exists.
    pub mask: Vec<f64>,
}

impl FrameBatch {
    pub fn from_history(frames: &[PolicyInputFrame]) -> Self {
        let obs_dim = frames.first().map_or(0, |f| f.obs.len());
        let act_dim = frames.first().map_or(0, |f| f.prev_action.len());
        let n = frames.len();
        let mut out = FrameBatch {
            steps: n,
            batch: 1,
            obs: Matrix::zeros(n, obs_dim),
            act: Matrix::zeros(n, act_dim),
            rew: Matrix::zeros(n, 1),
            done: Matrix::zeros(n, 1),
            mask: vec![1.0; n],
        };
        for (j, f) in frames.iter().enumerate() {
            out.obs.row_mut(j).copy_from_slice(&f.obs);
            out.act.row_mut(j).copy_from_slice(&f.prev_action);
            out.rew.set(j, 0, f.reward);
            out.done.set(j, 0, f.done);
        }
        out
    }

    /// Frames `[from, to)` of every sequence.
    pub fn slice_steps(&self, from: usize, to: usize) -> FrameBatch {
        let b = self.batch;
        FrameBatch {
            steps: to - from,
            batch: b,
            obs: self.obs.slice_rows(from * b, to * b),
            act: self.act.slice_rows(from * b, to * b),
            rew: self.rew.slice_rows(from * b, to * b),
            done: self.done.slice_rows(from * b, to * b),
            mask: self.mask[from * b..to * b].to_vec(),
        }
    }
}

/// A sampled batch rearranged for the recurrent update.
///
/// Transitions `0..len` of each row become frames `0..=len`: frame 0 carries
/// the row's first observation and previous-step channels, frame `k + 1`
/// carries `(o_{k+1}, a_k, r_{k+1}, d_{k+1})` of transition `k`. The
/// critic's value at transition `k` reads the encoder output at frame `k`,
/// and the bootstrap target reads frame `k + 1`.
#[derive(Clone, Debug)]
pub struct SequenceView {
    /// Transitions kept per row (the longest valid prefix in the batch).
    pub len: usize,
    pub batch: usize,
    /// `(len + 1) * batch` frames.
    pub frames: FrameBatch,
    /// Time-major transition channels, `len * batch` rows.
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub dones: Vec<f64>,
    /// Time-major indices `k * batch + b` of valid transitions.
    pub valid: Vec<usize>,
}

impl SequenceView {
    pub fn new(batch: &SampledBatch) -> Self {
        let b = batch.batch;
        // Longest rows first, so the frames still running at any step form
        // a prefix of the batch.
        let mut order: Vec<usize> = (0..b).collect();
        order.sort_by_key(|&r| std::cmp::Reverse(batch.valid_len(r)));
        let len = order.first().map_or(0, |&r| batch.valid_len(r));
        let obs_dim = batch.obs_dim();
        let act_dim = batch.act_dim();
        let steps = len + 1;
        let mut frames = FrameBatch {
            steps,
            batch: b,
            obs: Matrix::zeros(steps * b, obs_dim),
            act: Matrix::zeros(steps * b, act_dim),
            rew: Matrix::zeros(steps * b, 1),
            done: Matrix::zeros(steps * b, 1),
            mask: vec![0.0; steps * b],
        };
        let mut actions = Matrix::zeros(len * b, act_dim);
        let mut rewards = vec![0.0; len * b];
        let mut dones = vec![0.0; len * b];
        let mut valid = Vec::with_capacity(batch.valid_count());

        for (row, &src) in order.iter().enumerate() {
            let i0 = batch.index(src, 0);
            frames.obs.row_mut(row).copy_from_slice(batch.obs.row(i0));
            frames.act.row_mut(row).copy_from_slice(batch.prev_actions.row(i0));
            frames.rew.set(row, 0, batch.prev_rewards.get(i0, 0));
            frames.done.set(row, 0, batch.prev_dones.get(i0, 0));
            frames.mask[row] = 1.0;
        }
        for k in 0..len {
            for (row, &src) in order.iter().enumerate() {
                let i = batch.index(src, k);
                if batch.mask[i] == 0.0 {
                    continue;
                }
                let tm = k * b + row;
                let f = (k + 1) * b + row;
                frames.obs.row_mut(f).copy_from_slice(batch.next_obs.row(i));
                frames.act.row_mut(f).copy_from_slice(batch.actions.row(i));
                frames.rew.set(f, 0, batch.rewards.get(i, 0));
                frames.done.set(f, 0, batch.dones.get(i, 0));
                frames.mask[f] = 1.0;
                actions.row_mut(tm).copy_from_slice(batch.actions.row(i));
                rewards[tm] = batch.rewards.get(i, 0);
                dones[tm] = batch.dones.get(i, 0);
            }
        }
        // Sorted time-major, which keeps gathers cache-friendly.
        for k in 0..len {
            for (row, &src) in order.iter().enumerate() {
                if batch.mask[batch.index(src, k)] > 0.0 {
                    valid.push(k * b + row);
                }
            }
        }
        SequenceView {
            len,
            batch: b,
            frames,
            actions,
            rewards,
            dones,
            valid,
        }
    }

    pub fn n_valid(&self) -> usize {
        self.valid.len()
    }

    /// Rows of `m` (time-major, `len * batch` rows) at the valid indices.
    pub fn gather(&self, m: &Matrix, row_offset: usize) -> Matrix {
        let mut out = Matrix::zeros(self.valid.len(), m.cols());
        for (o, &i) in self.valid.iter().enumerate() {
            out.row_mut(o).copy_from_slice(m.row(i + row_offset));
        }
        out
    }

    /// Adds the rows of `d` back into `into` at the valid indices.
    pub fn scatter_add(&self, d: &Matrix, into: &mut Matrix, row_offset: usize) {
        for (o, &i) in self.valid.iter().enumerate() {
            for (x, y) in into.row_mut(i + row_offset).iter_mut().zip(d.row(o)) {
                *x += y;
            }
        }
    }
}

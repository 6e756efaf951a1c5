use rand::Rng;

use super::{FrameBatch, InputSpace};
use crate::nn::{relu_backward_inplace, relu_inplace, BatchState, Linear, Matrix, Module, Parameter, RnnCell, RnnKind, SeqCache};
use crate::{Error, Result};

/// Per-channel embedders followed by a recurrent cell.
///
/// Each enabled channel gets its own dense layer with ReLU; the embeddings
/// are concatenated in the fixed order `(o, a, r, d)` and fed to the RNN.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    pub inputs: InputSpace,
    pub obs_embed: Linear,
    pub act_embed: Option<Linear>,
    pub rew_embed: Option<Linear>,
    pub done_embed: Option<Linear>,
    pub rnn: RnnCell,
}

#[derive(Clone, Debug)]
pub struct EncoderCache {
    raw: Vec<Matrix>,
    embedded: Vec<Matrix>,
    rnn: SeqCache,
    mask: Vec<f64>,
}

impl Encoder {
    pub fn new(
        inputs: InputSpace,
        kind: RnnKind,
        obs_dim: usize,
        act_dim: usize,
        embed_dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let obs_embed = Linear::new(obs_dim, embed_dim, rng);
        let act_embed = inputs.action.then(|| Linear::new(act_dim, embed_dim, rng));
        let rew_embed = inputs.reward.then(|| Linear::new(1, embed_dim, rng));
        let done_embed = inputs.done.then(|| Linear::new(1, embed_dim, rng));
        let channels = 1 + inputs.action as usize + inputs.reward as usize + inputs.done as usize;
        let rnn = RnnCell::new(kind, channels * embed_dim, hidden, rng);
        Encoder {
            inputs,
            obs_embed,
            act_embed,
            rew_embed,
            done_embed,
            rnn,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.rnn.hidden_dim()
    }

    pub fn kind(&self) -> RnnKind {
        self.rnn.kind
    }

    fn layers(&self) -> Vec<&Linear> {
        [
            Some(&self.obs_embed),
            self.act_embed.as_ref(),
            self.rew_embed.as_ref(),
            self.done_embed.as_ref(),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    fn channels<'a>(&self, frames: &'a FrameBatch) -> Vec<&'a Matrix> {
        let mut out = vec![&frames.obs];
        if self.inputs.action {
            out.push(&frames.act);
        }
        if self.inputs.reward {
            out.push(&frames.rew);
        }
        if self.inputs.done {
            out.push(&frames.done);
        }
        out
    }

    fn embed(&self, frames: &FrameBatch) -> Result<(Vec<Matrix>, Matrix)> {
        let raw = self.channels(frames);
        let mut embedded = Vec::with_capacity(raw.len());
        for (layer, x) in self.layers().into_iter().zip(&raw) {
            if x.cols() != layer.input_dim() {
                return Err(Error::config(format!(
                    "input channel width {} does not match embedder width {}",
                    x.cols(),
                    layer.input_dim()
                )));
            }
            let mut e = layer.forward(x)?;
            relu_inplace(&mut e);
            embedded.push(e);
        }
        let mut joined = Matrix::hcat(&embedded.iter().collect::<Vec<_>>());
        for (r, &m) in frames.mask.iter().enumerate() {
            if m == 0.0 {
                joined.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Ok((embedded, joined))
    }

    /// The embedded per-frame input to the RNN (masked frames are zero).
    pub fn build_inputs(&self, frames: &FrameBatch) -> Result<Matrix> {
        Ok(self.embed(frames)?.1)
    }

    /// Unrolls from a zero state; returns every frame's hidden output.
    /// Outputs at masked frames are unspecified.
    pub fn forward(&self, frames: &FrameBatch) -> Result<(Matrix, EncoderCache)> {
        let (embedded, joined) = self.embed(frames)?;
        let (out, rnn) = self
            .rnn
            .forward_packed(&joined, frames.batch, None, &active_prefix(frames))?;
        let raw = self.channels(frames).into_iter().cloned().collect();
        Ok((
            out,
            EncoderCache {
                raw,
                embedded,
                rnn,
                mask: frames.mask.clone(),
            },
        ))
    }

    pub fn infer(&self, frames: &FrameBatch) -> Result<Matrix> {
        let (_, joined) = self.embed(frames)?;
        Ok(self
            .rnn
            .forward_packed(&joined, frames.batch, None, &active_prefix(frames))?
            .0)
    }

    /// Advances `state` by one frame per sequence.
    pub fn step(&self, frames: &FrameBatch, state: &BatchState) -> Result<BatchState> {
        debug_assert_eq!(frames.steps, 1);
        let (_, joined) = self.embed(frames)?;
        self.rnn.step_batch(&joined, state)
    }

    pub fn zero_state(&self, batch: usize) -> BatchState {
        BatchState::zeros(self.kind(), batch, self.hidden_dim())
    }

    /// Accumulates parameter gradients from `d_hidden` (gradient w.r.t. every
    /// frame's hidden output).
    pub fn backward(&mut self, cache: &EncoderCache, d_hidden: &Matrix) -> Result<()> {
        let mut d_joined = self
            .rnn
            .backward_seq(&cache.rnn, d_hidden, true)?
            .expect("input gradient requested");
        for (r, &m) in cache.mask.iter().enumerate() {
            if m == 0.0 {
                d_joined.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let widths: Vec<usize> = cache.embedded.iter().map(|e| e.cols()).collect();
        let parts = d_joined.hsplit(&widths);
        let layers: Vec<&mut Linear> = [
            Some(&mut self.obs_embed),
            self.act_embed.as_mut(),
            self.rew_embed.as_mut(),
            self.done_embed.as_mut(),
        ]
        .into_iter()
        .flatten()
        .collect();
        for (((layer, mut d), e), x) in layers
            .into_iter()
            .zip(parts)
            .zip(&cache.embedded)
            .zip(&cache.raw)
        {
            relu_backward_inplace(&mut d, e);
            layer.backward(x, &d, true, false);
        }
        Ok(())
    }
}

/// Per-step count of live frames when they form shrinking prefixes of the
/// batch; otherwise every row counts as live.
fn active_prefix(frames: &FrameBatch) -> Vec<usize> {
    let b = frames.batch;
    let mut counts = Vec::with_capacity(frames.steps);
    for t in 0..frames.steps {
        let m = &frames.mask[t * b..(t + 1) * b];
        let n = m.iter().take_while(|&&v| v > 0.0).count();
        let prefix = m[n..].iter().all(|&v| v == 0.0);
        if !prefix || counts.last().is_some_and(|&p| n > p) {
            return vec![b; frames.steps];
        }
        counts.push(n);
    }
    counts
}

impl Module for Encoder {
    fn params(&self) -> Vec<&Parameter> {
        let mut out: Vec<&Parameter> = self.layers().into_iter().flat_map(|l| l.params()).collect();
        out.extend(self.rnn.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = [
            Some(&mut self.obs_embed),
            self.act_embed.as_mut(),
            self.rew_embed.as_mut(),
            self.done_embed.as_mut(),
        ]
        .into_iter()
        .flatten()
        .flat_map(|l| l.params_mut())
        .collect();
        out.extend(self.rnn.params_mut());
        out
    }
}

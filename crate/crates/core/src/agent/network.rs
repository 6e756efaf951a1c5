use rand::Rng;

use super::{AgentConfig, Arch, Encoder, RlAlgo};
use crate::nn::{Mlp, Module, Parameter};

/// Actor and twin critics over recurrent encoders.
///
/// With [`Arch::Shared`] the single `critic_encoder` also feeds the policy
/// head and `actor_encoder` is `None`; both losses backpropagate into it.
/// With [`Arch::Separate`] the actor owns its own embedders and RNN.
/// The critics see `[h_t, a_t]`: the current action joins after the RNN.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentActorCritic {
    pub arch: Arch,
    pub rl: RlAlgo,
    pub critic_encoder: Encoder,
    pub actor_encoder: Option<Encoder>,
    pub q1: Mlp,
    pub q2: Mlp,
    /// Outputs `act_dim` pre-tanh values (TD3) or `[mean | log_std]` (SAC).
    pub policy: Mlp,
}

fn head_sizes(input: usize, hidden: usize, layers: usize, output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(std::iter::repeat_n(hidden, layers));
    sizes.push(output);
    sizes
}

impl RecurrentActorCritic {
    /// Builds the networks for `config`.
    pub fn wire(config: &AgentConfig, obs_dim: usize, act_dim: usize, rng: &mut impl Rng) -> Self {
        let make_encoder = |rng: &mut _| {
            Encoder::new(
                config.inputs,
                config.encoder,
                obs_dim,
                act_dim,
                config.embed_dim,
                config.rnn_hidden,
                rng,
            )
        };
        let critic_encoder = make_encoder(rng);
        let actor_encoder = match config.arch {
            Arch::Shared => None,
            Arch::Separate => Some(make_encoder(rng)),
        };
        let h = config.rnn_hidden;
        let q_sizes = head_sizes(h + act_dim, config.mlp_hidden, config.mlp_layers, 1);
        let q1 = Mlp::new(&q_sizes, rng);
        let q2 = Mlp::new(&q_sizes, rng);
        let policy_out = match config.rl {
            RlAlgo::Td3 => act_dim,
            RlAlgo::Sac => 2 * act_dim,
        };
        let policy = Mlp::new(
            &head_sizes(h, config.mlp_hidden, config.mlp_layers, policy_out),
            rng,
        );
        RecurrentActorCritic {
            arch: config.arch,
            rl: config.rl,
            critic_encoder,
            actor_encoder,
            q1,
            q2,
            policy,
        }
    }

    /// The encoder feeding the policy head.
    pub fn actor_encoder(&self) -> &Encoder {
        self.actor_encoder.as_ref().unwrap_or(&self.critic_encoder)
    }

    /// Critic encoder (the shared encoder when shared) and both Q heads.
    pub fn critic_params(&self) -> Vec<&Parameter> {
        let mut out = self.critic_encoder.params();
        out.extend(self.q1.params());
        out.extend(self.q2.params());
        out
    }

    pub fn critic_params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.critic_encoder.params_mut();
        out.extend(self.q1.params_mut());
        out.extend(self.q2.params_mut());
        out
    }

    /// The actor's own encoder (separate only) and the policy head.
    pub fn actor_params(&self) -> Vec<&Parameter> {
        let mut out = self
            .actor_encoder
            .as_ref()
            .map(|e| e.params())
            .unwrap_or_default();
        out.extend(self.policy.params());
        out
    }

    pub fn actor_params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self
            .actor_encoder
            .as_mut()
            .map(|e| e.params_mut())
            .unwrap_or_default();
        out.extend(self.policy.params_mut());
        out
    }

    /// Total parameters held by recurrent encoders (embedders included).
    pub fn encoder_param_count(&self) -> usize {
        self.critic_encoder.num_params()
            + self.actor_encoder.as_ref().map_or(0, |e| e.num_params())
    }
}

impl Module for RecurrentActorCritic {
    fn params(&self) -> Vec<&Parameter> {
        let mut out = self.critic_params();
        out.extend(self.actor_params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let RecurrentActorCritic {
            critic_encoder,
            actor_encoder,
            q1,
            q2,
            policy,
            ..
        } = self;
        let mut out = critic_encoder.params_mut();
        out.extend(q1.params_mut());
        out.extend(q2.params_mut());
        if let Some(e) = actor_encoder {
            out.extend(e.params_mut());
        }
        out.extend(policy.params_mut());
        out
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::nn::RnnKind;
use crate::{Error, Result};

/// Whether actor and critic share one recurrent encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Shared,
    Separate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RlAlgo {
    Td3,
    Sac,
}

/// History channels fed to the encoder. Observations are always included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct InputSpace {
    pub action: bool,
    pub reward: bool,
    pub done: bool,
}

impl InputSpace {
    pub const O: InputSpace = InputSpace {
        action: false,
        reward: false,
        done: false,
    };
    pub const OA: InputSpace = InputSpace {
        action: true,
        reward: false,
        done: false,
    };
    pub const OR: InputSpace = InputSpace {
        action: false,
        reward: true,
        done: false,
    };
    pub const OAR: InputSpace = InputSpace {
        action: true,
        reward: true,
        done: false,
    };
    pub const OARD: InputSpace = InputSpace {
        action: true,
        reward: true,
        done: true,
    };
}

impl fmt::Display for InputSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("o")?;
        if self.action {
            f.write_str("a")?;
        }
        if self.reward {
            f.write_str("r")?;
        }
        if self.done {
            f.write_str("d")?;
        }
        Ok(())
    }
}

impl FromStr for InputSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        if chars.next() != Some('o') {
            return Err(Error::config(format!(
                "input space `{s}` must start with the mandatory `o` channel"
            )));
        }
        let mut out = InputSpace::default();
        for c in chars {
            let slot = match c {
                'a' => &mut out.action,
                'r' => &mut out.reward,
                'd' => &mut out.done,
                _ => return Err(Error::config(format!("unknown input channel `{c}` in `{s}`"))),
            };
            if *slot {
                return Err(Error::config(format!("channel `{c}` repeated in `{s}`")));
            }
            *slot = true;
        }
        Ok(out)
    }
}

impl Serialize for InputSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for InputSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Shared => "shared",
            Arch::Separate => "separate",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(Arch::Shared),
            "separate" => Ok(Arch::Separate),
            _ => Err(Error::config(format!("unknown architecture `{s}`"))),
        }
    }
}

impl fmt::Display for RlAlgo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RlAlgo::Td3 => "td3",
            RlAlgo::Sac => "sac",
        })
    }
}

impl FromStr for RlAlgo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "td3" => Ok(RlAlgo::Td3),
            "sac" => Ok(RlAlgo::Sac),
            _ => Err(Error::config(format!("unknown RL algorithm `{s}`"))),
        }
    }
}

pub fn parse_encoder(s: &str) -> Result<RnnKind> {
    match s {
        "lstm" => Ok(RnnKind::Lstm),
        "gru" => Ok(RnnKind::Gru),
        _ => Err(Error::config(format!("unknown encoder `{s}`"))),
    }
}

/// One point of the design space plus the optimisation hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub arch: Arch,
    pub encoder: RnnKind,
    pub inputs: InputSpace,
    pub context_len: usize,
    pub rl: RlAlgo,

    pub rnn_hidden: usize,
    pub mlp_hidden: usize,
    /// Hidden layers in each MLP head.
    pub mlp_layers: usize,
    /// Embedding width per input channel.
    pub embed_dim: usize,

    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,

    pub explore_noise: f64,
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub policy_delay: usize,

    /// `None` means `-act_dim`.
    pub target_entropy: Option<f64>,
    pub init_alpha: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            arch: Arch::Separate,
            encoder: RnnKind::Lstm,
            inputs: InputSpace::OAR,
            context_len: 64,
            rl: RlAlgo::Td3,
            rnn_hidden: 128,
            mlp_hidden: 128,
            mlp_layers: 2,
            embed_dim: 32,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr: 3e-4,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 32,
            explore_noise: 0.1,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            target_entropy: None,
            init_alpha: 0.1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("context_len", self.context_len),
            ("rnn_hidden", self.rnn_hidden),
            ("mlp_hidden", self.mlp_hidden),
            ("embed_dim", self.embed_dim),
            ("batch_size", self.batch_size),
            ("policy_delay", self.policy_delay),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("agent.{name} must be at least 1")));
            }
        }
        let rates = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("alpha_lr", self.alpha_lr),
            ("tau", self.tau),
            ("init_alpha", self.init_alpha),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("agent.{name} must be positive, got {v}")));
            }
        }
        if self.tau > 1.0 {
            return Err(Error::config("agent.tau must not exceed 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("agent.gamma must lie in [0, 1)"));
        }
        for (name, v) in [
            ("explore_noise", self.explore_noise),
            ("target_noise", self.target_noise),
            ("target_noise_clip", self.target_noise_clip),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("agent.{name} must be non-negative")));
            }
        }
        Ok(())
    }

    pub fn target_entropy(&self, act_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(act_dim as f64))
    }

    /// `rl-encoder-len-inputs-arch`, e.g. `td3-lstm-64-or-separate`.
    pub fn variant_name(&self) -> String {
        format!(
            "{}-{}-{}-{}-{}",
            self.rl,
            self.encoder.name(),
            self.context_len,
            self.inputs,
            self.arch
        )
    }

    /// Sets one field from its `agent.`-less key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::config(format!("agent.{key}: cannot parse `{v}`")))
        }
        match key {
            "arch" => self.arch = value.parse()?,
            "encoder" => self.encoder = parse_encoder(value)?,
            "inputs" => self.inputs = value.parse()?,
            "context_len" => self.context_len = num(key, value)?,
            "rl" => self.rl = value.parse()?,
            "rnn_hidden" => self.rnn_hidden = num(key, value)?,
            "mlp_hidden" => self.mlp_hidden = num(key, value)?,
            "mlp_layers" => self.mlp_layers = num(key, value)?,
            "embed_dim" => self.embed_dim = num(key, value)?,
            "actor_lr" => self.actor_lr = num(key, value)?,
            "critic_lr" => self.critic_lr = num(key, value)?,
            "alpha_lr" => self.alpha_lr = num(key, value)?,
            "lr" => {
                let lr = num(key, value)?;
                self.actor_lr = lr;
                self.critic_lr = lr;
                self.alpha_lr = lr;
            }
            "gamma" => self.gamma = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "explore_noise" => self.explore_noise = num(key, value)?,
            "target_noise" => self.target_noise = num(key, value)?,
            "target_noise_clip" => self.target_noise_clip = num(key, value)?,
            "policy_delay" => self.policy_delay = num(key, value)?,
            "target_entropy" => {
                self.target_entropy = if value == "auto" {
                    None
                } else {
                    Some(num(key, value)?)
                }
            }
            "init_alpha" => self.init_alpha = num(key, value)?,
            _ => return Err(Error::config(format!("unknown agent key `agent.{key}`"))),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_space_parsing() {
        assert_eq!("oar".parse::<InputSpace>().unwrap(), InputSpace::OAR);
        assert_eq!("o".parse::<InputSpace>().unwrap(), InputSpace::O);
        assert_eq!(InputSpace::OARD.to_string(), "oard");
        assert!("ar".parse::<InputSpace>().is_err());
        assert!("oaa".parse::<InputSpace>().is_err());
        assert!("ox".parse::<InputSpace>().is_err());
    }

    #[test]
    fn variant_name_follows_factor_order() {
        let cfg = AgentConfig {
            inputs: InputSpace::OR,
            ..AgentConfig::default()
        };
        assert_eq!(cfg.variant_name(), "td3-lstm-64-or-separate");
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = AgentConfig::default();
        cfg.validate().unwrap();
        cfg.gamma = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = AgentConfig::default();
        cfg.context_len = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = AgentConfig::default();
        cfg.critic_lr = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn set_by_key() {
        let mut cfg = AgentConfig::default();
        cfg.set("encoder", "gru").unwrap();
        cfg.set("context_len", "5").unwrap();
        cfg.set("lr", "0.001").unwrap();
        assert_eq!(cfg.encoder, RnnKind::Gru);
        assert_eq!(cfg.context_len, 5);
        assert_eq!(cfg.actor_lr, 0.001);
        assert!(cfg.set("nonsense", "1").is_err());
        assert!(cfg.set("batch_size", "many").is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = AgentConfig {
            inputs: InputSpace::OA,
            rl: RlAlgo::Sac,
            ..AgentConfig::default()
        };
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"inputs\":\"oa\""));
        let back: AgentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}

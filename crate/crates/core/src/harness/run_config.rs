use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::envs::EnvId;
use crate::{Error, Result};

/// Everything that determines one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvId,
    pub agent: AgentConfig,
    pub total_steps: u64,
    /// Gradient updates per environment step after warm-up.
    pub update_ratio: f64,
    /// Uniform-random steps before learning starts; not counted by the ratio.
    pub warmup_steps: u64,
    /// `None` means 2% of `total_steps`.
    pub eval_interval: Option<u64>,
    pub eval_episodes: usize,
    /// Evaluation task `i` resets with seed `eval_seed_base + i` in every run.
    pub eval_seed_base: u64,
    /// `None` means `total_steps` transitions (nothing is ever evicted).
    pub replay_capacity: Option<usize>,
    pub seed: u64,
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvId::PendulumFull,
            agent: AgentConfig::default(),
            total_steps: 100_000,
            update_ratio: 1.0,
            warmup_steps: 1000,
            eval_interval: None,
            eval_episodes: 20,
            eval_seed_base: 1_000_000,
            replay_capacity: None,
            seed: 0,
            out_dir: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse `{v}`")))
}

impl RunConfig {
    pub fn eval_interval(&self) -> u64 {
        self.eval_interval
            .unwrap_or_else(|| (self.total_steps / 50).max(1))
    }

    pub fn replay_capacity(&self) -> usize {
        self.replay_capacity
            .unwrap_or(self.total_steps.clamp(1, 2_000_000) as usize)
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.total_steps == 0 {
            return Err(Error::config("total_steps must be positive"));
        }
        if !(self.update_ratio.is_finite() && self.update_ratio > 0.0) {
            return Err(Error::config("update_ratio must be positive"));
        }
        let interval = self.eval_interval();
        if interval == 0 || interval > self.total_steps {
            return Err(Error::config(format!(
                "eval.interval {interval} must lie in [1, total_steps]"
            )));
        }
        if self.eval_episodes == 0 {
            return Err(Error::config("eval.episodes must be positive"));
        }
        let horizon = self.env.spec().horizon;
        if self.replay_capacity() < horizon {
            return Err(Error::config(format!(
                "replay.capacity {} cannot hold one episode of {horizon} steps",
                self.replay_capacity()
            )));
        }
        Ok(())
    }

    /// Applies one `key=value` setting. Agent keys carry an `agent.` prefix.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(rest) = key.strip_prefix("agent.") {
            return self.agent.set(rest, value);
        }
        match key {
            "env" => self.env = value.parse()?,
            "seed" => self.seed = num(key, value)?,
            "total_steps" => self.total_steps = num(key, value)?,
            "update_ratio" => self.update_ratio = num(key, value)?,
            "warmup_steps" => self.warmup_steps = num(key, value)?,
            "eval.interval" => self.eval_interval = Some(num(key, value)?),
            "eval.episodes" => self.eval_episodes = num(key, value)?,
            "eval.seed_base" => self.eval_seed_base = num(key, value)?,
            "replay.capacity" => self.replay_capacity = Some(num(key, value)?),
            _ => return Err(Error::config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` text; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (key, value) in key_values(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    /// Canonical JSON of every setting, seed included.
    pub fn fingerprint(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v["variant"] = self.agent.variant_name().into();
        v["eval_interval"] = self.eval_interval().into();
        v["replay_capacity"] = self.replay_capacity().into();
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

/// Splits `key=value` lines, skipping blanks and `#` comments.
pub fn key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key=value", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{Arch, InputSpace};
    use crate::nn::RnnKind;

    #[test]
    fn parses_dotted_keys_and_comments() {
        let cfg = RunConfig::parse(
            "# wind run\nenv = wind\nagent.encoder=gru\nagent.inputs=oar # channels\n\
             agent.arch=shared\ntotal_steps=5000\nupdate_ratio=0.25\neval.episodes=5\n",
        )
        .unwrap();
        assert_eq!(cfg.env, EnvId::Wind);
        assert_eq!(cfg.agent.encoder, RnnKind::Gru);
        assert_eq!(cfg.agent.inputs, InputSpace::OAR);
        assert_eq!(cfg.agent.arch, Arch::Shared);
        assert_eq!(cfg.eval_interval(), 100);
        assert_eq!(cfg.update_ratio, 0.25);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::parse("nonsense").is_err());
        assert!(RunConfig::parse("colour=red").is_err());
        assert!(RunConfig::parse("update_ratio=0").is_err());
        assert!(RunConfig::parse("total_steps=100\neval.interval=200").is_err());
        assert!(RunConfig::parse("agent.encoder=transformer").is_err());
    }

    #[test]
    fn fingerprint_records_seed() {
        let cfg = RunConfig {
            seed: 17,
            ..RunConfig::default()
        };
        let v: serde_json::Value = serde_json::from_str(&cfg.fingerprint()).unwrap();
        assert_eq!(v["seed"], 17);
        assert_eq!(v["variant"], "td3-lstm-64-oar-separate");
    }
}

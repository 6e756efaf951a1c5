//! Parameter archive: everything needed to resume an agent bit-for-bit.
//!
//! Layout (integers `u64`, reals `f64`, little-endian): magic `RMFAGNT1`,
//! format version, config fingerprint (length-prefixed JSON), obs_dim,
//! act_dim, update count, the three optimizer step counts, RNG seed
//! (length-prefixed 32 bytes), RNG stream, RNG word position (low, high),
//! tensor count, then `(name, rows, cols)` per tensor, then every tensor's
//! values row-major in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentConfig, RecurrentActorCritic, RecurrentAgent};
use crate::binio::{expect_magic, read_bytes, read_f64s, read_u64, read_usize, write_bytes, write_f64s, write_u64};
use crate::nn::{Adam, Matrix, Module};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"RMFAGNT1";
const VERSION: u64 = 1;
const MAX_FINGERPRINT: usize = 1 << 16;
const MAX_NAME: usize = 256;

/// Identifies the architecture an archive was written for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub agent: AgentConfig,
}

impl ConfigFingerprint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

fn network_tensors<'a>(prefix: &str, net: &'a RecurrentActorCritic, out: &mut Vec<(String, &'a Matrix)>) {
    let groups: [(&str, Vec<_>); 5] = [
        ("critic_encoder", net.critic_encoder.params()),
        ("q1", net.q1.params()),
        ("q2", net.q2.params()),
        (
            "actor_encoder",
            net.actor_encoder.as_ref().map(|e| e.params()).unwrap_or_default(),
        ),
        ("policy", net.policy.params()),
    ];
    for (group, params) in groups {
        for (i, p) in params.into_iter().enumerate() {
            out.push((format!("{prefix}.{group}.{i}"), &p.value));
        }
    }
}

fn network_tensors_mut<'a>(net: &'a mut RecurrentActorCritic, out: &mut Vec<&'a mut Matrix>) {
    // Same order as `network_tensors`.
    let RecurrentActorCritic {
        critic_encoder,
        actor_encoder,
        q1,
        q2,
        policy,
        ..
    } = net;
    out.extend(critic_encoder.params_mut().into_iter().map(|p| &mut p.value));
    out.extend(q1.params_mut().into_iter().map(|p| &mut p.value));
    out.extend(q2.params_mut().into_iter().map(|p| &mut p.value));
    if let Some(e) = actor_encoder {
        out.extend(e.params_mut().into_iter().map(|p| &mut p.value));
    }
    out.extend(policy.params_mut().into_iter().map(|p| &mut p.value));
}

fn adam_tensors<'a>(prefix: &str, opt: &'a Adam, out: &mut Vec<(String, &'a Matrix)>) {
    for (i, m) in opt.first.iter().enumerate() {
        out.push((format!("{prefix}.m.{i}"), m));
    }
    for (i, v) in opt.second.iter().enumerate() {
        out.push((format!("{prefix}.v.{i}"), v));
    }
}

impl RecurrentAgent {
    pub fn fingerprint(&self) -> ConfigFingerprint {
        ConfigFingerprint {
            obs_dim: self.obs_dim,
            act_dim: self.act_dim,
            agent: self.config.clone(),
        }
    }

    fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        network_tensors("net", &self.net, &mut out);
        network_tensors("target", &self.target, &mut out);
        adam_tensors("critic_opt", &self.critic_opt, &mut out);
        adam_tensors("actor_opt", &self.actor_opt, &mut out);
        out.push(("log_alpha".into(), &self.log_alpha.value));
        adam_tensors("alpha_opt", &self.alpha_opt, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        network_tensors_mut(&mut self.net, &mut out);
        network_tensors_mut(&mut self.target, &mut out);
        for opt in [&mut self.critic_opt, &mut self.actor_opt] {
            out.extend(opt.first.iter_mut());
            out.extend(opt.second.iter_mut());
        }
        out.push(&mut self.log_alpha.value);
        out.extend(self.alpha_opt.first.iter_mut());
        out.extend(self.alpha_opt.second.iter_mut());
        out
    }

    pub fn write_archive(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        write_u64(w, VERSION)?;
        write_bytes(w, self.fingerprint().to_json().as_bytes())?;
        write_u64(w, self.obs_dim as u64)?;
        write_u64(w, self.act_dim as u64)?;
        write_u64(w, self.updates)?;
        for opt in [&self.critic_opt, &self.actor_opt, &self.alpha_opt] {
            write_u64(w, opt.step)?;
        }
        write_bytes(w, &self.rng.get_seed())?;
        write_u64(w, self.rng.get_stream())?;
        let pos = self.rng.get_word_pos();
        write_u64(w, pos as u64)?;
        write_u64(w, (pos >> 64) as u64)?;
        let tensors = self.tensors();
        write_u64(w, tensors.len() as u64)?;
        for (name, m) in &tensors {
            write_bytes(w, name.as_bytes())?;
            write_u64(w, m.rows() as u64)?;
            write_u64(w, m.cols() as u64)?;
        }
        for (_, m) in &tensors {
            write_f64s(w, m.as_slice())?;
        }
        Ok(())
    }

    /// Restores state written by [`Self::write_archive`]. The archive must
    /// come from an agent with the same configuration and shapes; on any
    /// mismatch `self` is left untouched.
    pub fn read_archive_into(&mut self, r: &mut impl Read) -> Result<()> {
        expect_magic(r, MAGIC)?;
        let version = read_u64(r)?;
        if version != VERSION {
            return Err(Error::Load(format!("unsupported archive version {version}")));
        }
        let fp_bytes = read_bytes(r, MAX_FINGERPRINT)?;
        let fp: ConfigFingerprint = serde_json::from_slice(&fp_bytes)
            .map_err(|e| Error::Load(format!("unreadable config fingerprint: {e}")))?;
        let mine = self.fingerprint();
        if fp != mine {
            return Err(Error::Load(format!(
                "config fingerprint mismatch: archive {}, agent {}",
                fp.to_json(),
                mine.to_json()
            )));
        }
        let obs_dim = read_usize(r, "obs_dim")?;
        let act_dim = read_usize(r, "act_dim")?;
        if obs_dim != self.obs_dim || act_dim != self.act_dim {
            return Err(Error::Load("header dimensions disagree with fingerprint".into()));
        }
        let updates = read_u64(r)?;
        let steps = [read_u64(r)?, read_u64(r)?, read_u64(r)?];
        let seed_bytes = read_bytes(r, 32)?;
        let seed: [u8; 32] = seed_bytes
            .try_into()
            .map_err(|_| Error::Load("RNG seed must be 32 bytes".into()))?;
        let stream = read_u64(r)?;
        let lo = read_u64(r)? as u128;
        let hi = read_u64(r)? as u128;

        let expected: Vec<(String, (usize, usize))> = self
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.shape()))
            .collect();
        let count = read_usize(r, "tensor count")?;
        if count != expected.len() {
            return Err(Error::Load(format!(
                "archive holds {count} tensors, agent has {}",
                expected.len()
            )));
        }
        for (name, shape) in &expected {
            let got = String::from_utf8(read_bytes(r, MAX_NAME)?)
                .map_err(|_| Error::Load("tensor name is not UTF-8".into()))?;
            let rows = read_usize(r, "rows")?;
            let cols = read_usize(r, "cols")?;
            if &got != name {
                return Err(Error::Load(format!("tensor `{got}` found where `{name}` was expected")));
            }
            if (rows, cols) != *shape {
                return Err(Error::Load(format!(
                    "tensor `{name}` has shape {rows}x{cols}, expected {}x{}",
                    shape.0, shape.1
                )));
            }
        }
        let mut values = Vec::with_capacity(expected.len());
        for (_, (rows, cols)) in &expected {
            values.push(read_f64s(r, rows * cols)?);
        }

        for (dst, v) in self.tensors_mut().into_iter().zip(values) {
            dst.as_mut_slice().copy_from_slice(&v);
        }
        self.updates = updates;
        self.critic_opt.step = steps[0];
        self.actor_opt.step = steps[1];
        self.alpha_opt.step = steps[2];
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(lo | (hi << 64));
        self.rng = rng;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_archive(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Builds an agent from the archive's own fingerprint and restores it.
    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        let mut head = &bytes[..];
        expect_magic(&mut head, MAGIC)?;
        let _version = read_u64(&mut head)?;
        let fp: ConfigFingerprint = serde_json::from_slice(&read_bytes(&mut head, MAX_FINGERPRINT)?)
            .map_err(|e| Error::Load(format!("unreadable config fingerprint: {e}")))?;
        let mut agent = RecurrentAgent::new(fp.agent, fp.obs_dim, fp.act_dim, 0)?;
        agent.read_archive_into(&mut &bytes[..])?;
        Ok(agent)
    }
}

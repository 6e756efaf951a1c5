//! Binary snapshot of a replay buffer for resumable runs.
//!
//! Layout (all integers `u64`, all reals `f64`, little-endian):
//! magic `RMFRPLY1`, obs_dim, act_dim, capacity, cursor, size, next_id,
//! episode count, then `(id, start, len)` per episode, then the raw
//! `obs`, `act`, `rew`, `done`, `next_obs` arrays over the full capacity.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EpisodeRecord, SequenceReplayBuffer};
use crate::binio::{expect_magic, read_f64s, read_u64, read_usize, write_f64s, write_u64};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"RMFRPLY1";

impl SequenceReplayBuffer {
    pub fn write_snapshot(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        for v in [
            self.obs_dim,
            self.act_dim,
            self.capacity,
            self.cursor,
            self.size,
        ] {
            write_u64(w, v as u64)?;
        }
        write_u64(w, self.next_id)?;
        write_u64(w, self.episodes.len() as u64)?;
        for e in &self.episodes {
            write_u64(w, e.id)?;
            write_u64(w, e.start as u64)?;
            write_u64(w, e.len as u64)?;
        }
        write_f64s(w, &self.obs)?;
        write_f64s(w, &self.act)?;
        write_f64s(w, &self.rew)?;
        write_f64s(w, &self.done)?;
        write_f64s(w, &self.next_obs)?;
        Ok(())
    }

    pub fn read_snapshot(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, MAGIC)?;
        let obs_dim = read_usize(r, "obs_dim")?;
        let act_dim = read_usize(r, "act_dim")?;
        let capacity = read_usize(r, "capacity")?;
        let cursor = read_usize(r, "cursor")?;
        let size = read_usize(r, "size")?;
        let next_id = read_u64(r)?;
        let n = read_usize(r, "episode count")?;
        if capacity == 0 || cursor >= capacity || size > capacity || n > capacity {
            return Err(Error::Load("inconsistent buffer header".into()));
        }
        let mut episodes = VecDeque::with_capacity(n);
        let mut total = 0usize;
        for _ in 0..n {
            let id = read_u64(r)?;
            let start = read_usize(r, "episode start")?;
            let len = read_usize(r, "episode length")?;
            if start >= capacity || len == 0 || len > capacity {
                return Err(Error::Load(format!("episode {id} out of range")));
            }
            total += len;
            episodes.push_back(EpisodeRecord { id, start, len });
        }
        if total != size {
            return Err(Error::Load(format!(
                "episode table covers {total} transitions but header says {size}"
            )));
        }
        let obs = read_f64s(r, capacity * obs_dim)?;
        let act = read_f64s(r, capacity * act_dim)?;
        let rew = read_f64s(r, capacity)?;
        let done = read_f64s(r, capacity)?;
        let next_obs = read_f64s(r, capacity * obs_dim)?;
        Ok(SequenceReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            obs,
            act,
            rew,
            done,
            next_obs,
            episodes,
            cursor,
            size,
            next_id,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_snapshot(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        SequenceReplayBuffer::read_snapshot(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replay::Transition;

    #[test]
    fn snapshot_round_trip_is_exact() {
        let mut buf = SequenceReplayBuffer::new(12, 2, 1).unwrap();
        for (e, len) in [4usize, 5, 6].into_iter().enumerate() {
            let ep: Vec<Transition> = (0..len)
                .map(|k| Transition {
                    obs: vec![e as f64, k as f64 / 3.0],
                    action: vec![-(k as f64) / 7.0],
                    reward: 0.1 * k as f64,
                    done: k + 1 == len,
                    next_obs: vec![e as f64, (k + 1) as f64 / 3.0],
                })
                .collect();
            buf.store_episode(&ep).unwrap();
        }
        let mut bytes = Vec::new();
        buf.write_snapshot(&mut bytes).unwrap();
        let back = SequenceReplayBuffer::read_snapshot(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, buf);

        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            SequenceReplayBuffer::read_snapshot(&mut bytes.as_slice()),
            Err(Error::Load(_))
        ));
    }
}

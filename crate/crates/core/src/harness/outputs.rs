//! Run directory files: `curve.csv`, `diagnostics.csv`, `tasks.csv` and
//! `config.json`. Every CSV row carries the run seed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::agent::GradNormRecord;
use crate::{Error, Result};

pub const CURVE_FILE: &str = "curve.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const TASKS_FILE: &str = "tasks.csv";
pub const CONFIG_FILE: &str = "config.json";

/// One evaluation point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub env_step: u64,
    pub eval_return: f64,
}

/// One gradient update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagnosticRow {
    pub update_step: u64,
    pub env_step: u64,
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub alpha: Option<f64>,
    pub grad_norms: GradNormRecord,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl DiagnosticRow {
    const HEADER: &'static str =
        "update_step,env_step,critic_loss,actor_loss,alpha,shared_encoder_grad_norm,critic_encoder_grad_norm,actor_encoder_grad_norm,seed";

    fn to_csv(&self, seed: u64) -> String {
        let (shared, critic, actor) = match self.grad_norms {
            GradNormRecord::Shared { encoder } => (Some(encoder), None, None),
            GradNormRecord::Separate { critic, actor } => {
                (None, Some(critic), self.actor_loss.map(|_| actor))
            }
        };
        format!(
            "{},{},{},{},{},{},{},{},{seed}",
            self.update_step,
            self.env_step,
            self.critic_loss,
            opt(self.actor_loss),
            opt(self.alpha),
            opt(shared),
            opt(critic),
            opt(actor),
        )
    }
}

/// Streams run outputs to disk as training proceeds.
pub struct RunWriter {
    dir: PathBuf,
    seed: u64,
    curve: BufWriter<File>,
    diagnostics: BufWriter<File>,
}

impl RunWriter {
    /// Creates the directory and all files up front so an unwritable
    /// location fails before any training happens.
    pub fn create(dir: &Path, seed: u64, fingerprint: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), format!("{fingerprint}\n"))?;
        let mut curve = BufWriter::new(File::create(dir.join(CURVE_FILE))?);
        writeln!(curve, "env_step,eval_return,seed")?;
        curve.flush()?;
        let mut diagnostics = BufWriter::new(File::create(dir.join(DIAGNOSTICS_FILE))?);
        writeln!(diagnostics, "{}", DiagnosticRow::HEADER)?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            seed,
            curve,
            diagnostics,
        })
    }

    /// Appends an evaluation point and flushes both streams.
    pub fn curve_point(&mut self, p: CurvePoint) -> Result<()> {
        writeln!(self.curve, "{},{},{}", p.env_step, p.eval_return, self.seed)?;
        self.flush()
    }

    pub fn diagnostic(&mut self, row: &DiagnosticRow) -> Result<()> {
        writeln!(self.diagnostics, "{}", row.to_csv(self.seed))?;
        Ok(())
    }

    pub fn tasks(&self, task_seeds: &[u64], returns: &[f64]) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.dir.join(TASKS_FILE))?);
        writeln!(w, "task,task_seed,eval_return,seed")?;
        for (i, (s, r)) in task_seeds.iter().zip(returns).enumerate() {
            writeln!(w, "{i},{s},{r},{}", self.seed)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.curve.flush()?;
        self.diagnostics.flush()?;
        Ok(())
    }
}

fn parse_f64(field: &str, path: &Path, line: usize) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Load(format!("{}:{line}: bad number `{field}`", path.display())))
}

/// Reads `curve.csv` back into points.
pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let mut f = line.split(',');
        let (Some(step), Some(ret)) = (f.next(), f.next()) else {
            return Err(Error::Load(format!("{}:{}: short row", path.display(), n + 1)));
        };
        out.push(CurvePoint {
            env_step: step
                .parse()
                .map_err(|_| Error::Load(format!("{}:{}: bad step", path.display(), n + 1)))?,
            eval_return: parse_f64(ret, path, n + 1)?,
        });
    }
    Ok(out)
}

/// Reads the per-task returns from `tasks.csv`.
pub fn read_tasks(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(n, line)| {
            let field = line
                .split(',')
                .nth(2)
                .ok_or_else(|| Error::Load(format!("{}:{}: short row", path.display(), n + 1)))?;
            parse_f64(field, path, n + 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = RunWriter::create(dir.path(), 3, "{}").unwrap();
        let pts = [
            CurvePoint { env_step: 10, eval_return: 0.1 + 0.2 },
            CurvePoint { env_step: 20, eval_return: -1.0 / 3.0 },
        ];
        for p in pts {
            w.curve_point(p).unwrap();
        }
        assert_eq!(read_curve(&dir.path().join(CURVE_FILE)).unwrap(), pts);
    }

    #[test]
    fn unwritable_directory_fails_eagerly() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        assert!(RunWriter::create(&blocker.join("run"), 0, "{}").is_err());
    }
}

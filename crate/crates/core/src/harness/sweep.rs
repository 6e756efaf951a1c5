//! Factorial sweeps over the design factors, and reports over their outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::metrics::{
    final_performance, select_best_variant, single_factor_analysis, worst_case_return, Factor, SeedCurve,
    VariantResultMatrix,
};
use super::outputs::{read_curve, read_tasks, CONFIG_FILE, CURVE_FILE, TASKS_FILE};
use super::run_config::key_values;
use super::{train, RunConfig};
use crate::{Error, Result};

/// Keys that may list several comma-separated values in a grid file.
const GRID_KEYS: [&str; 6] = [
    "env",
    "agent.rl",
    "agent.encoder",
    "agent.context_len",
    "agent.inputs",
    "agent.arch",
];

/// A parsed grid: fixed settings, the varying factors, and the seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub fixed: Vec<(String, String)>,
    pub axes: Vec<(String, Vec<String>)>,
    pub seeds: Vec<u64>,
}

impl Grid {
    /// `key=value` lines like a run config, where the five factors and
    /// `env` may take a comma-separated list. `seeds=0,1,2,3` is the default.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fixed = Vec::new();
        let mut axes = Vec::new();
        let mut seeds = vec![0, 1, 2, 3];
        for (key, value) in key_values(text)? {
            let values: Vec<String> = value.split(',').map(|v| v.trim().to_string()).collect();
            if key == "seeds" {
                seeds = values
                    .iter()
                    .map(|v| v.parse().map_err(|_| Error::config(format!("seeds: bad seed `{v}`"))))
                    .collect::<Result<_>>()?;
            } else if key == "seed" {
                return Err(Error::config("use `seeds=` in a grid file"));
            } else if GRID_KEYS.contains(&key.as_str()) {
                axes.push((key, values));
            } else if values.len() > 1 {
                return Err(Error::config(format!(
                    "`{key}` cannot vary in a grid; only env and the five design factors can"
                )));
            } else {
                fixed.push((key, value));
            }
        }
        if seeds.is_empty() {
            return Err(Error::config("grid needs at least one seed"));
        }
        Ok(Grid { fixed, axes, seeds })
    }

    /// Every grid point crossed with every seed, each with its run directory
    /// `out/<env>/<variant>/seed-<n>`.
    pub fn expand(&self, out: &Path) -> Result<Vec<RunConfig>> {
        let mut points: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push((key.clone(), v.clone()));
                        q
                    })
                })
                .collect();
        }
        let mut runs = Vec::new();
        for point in points {
            for &seed in &self.seeds {
                let mut cfg = RunConfig::default();
                for (k, v) in self.fixed.iter().chain(&point) {
                    cfg.set(k, v)?;
                }
                cfg.seed = seed;
                cfg.validate()?;
                cfg.out_dir = Some(
                    out.join(cfg.env.as_str())
                        .join(cfg.agent.variant_name())
                        .join(format!("seed-{seed}")),
                );
                runs.push(cfg);
            }
        }
        Ok(runs)
    }
}

/// Concurrent runs allowed: `RMF_THREADS`, else the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var("RMF_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every configuration with at most `threads` at once. Each run is
/// single-threaded; failures are collected rather than stopping the sweep.
pub fn run_all(runs: &[RunConfig], threads: usize) -> Vec<(PathBuf, Result<()>)> {
    let next = AtomicUsize::new(0);
    let results = Mutex::new(Vec::with_capacity(runs.len()));
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, runs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = runs.get(i) else { break };
                let dir = cfg.out_dir.clone().unwrap_or_default();
                log::info!("starting {}", dir.display());
                let r = train(cfg).map(|_| ());
                if let Err(e) = &r {
                    log::error!("{}: {e}", dir.display());
                }
                results.lock().unwrap().push((i, dir, r));
            });
        }
    });
    let mut out = results.into_inner().unwrap();
    out.sort_by_key(|(i, _, _)| *i);
    out.into_iter().map(|(_, d, r)| (d, r)).collect()
}

/// A finished run found on disk.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub env: String,
    pub variant: String,
    pub seed: u64,
    pub curve: SeedCurve,
    pub task_returns: Option<Vec<f64>>,
}

fn find_runs(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if dir.join(CONFIG_FILE).is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    for e in entries {
        find_runs(&e, out)?;
    }
    Ok(())
}

/// Loads every run directory under `root`.
pub fn load_runs(root: &Path) -> Result<Vec<RunSummary>> {
    let mut dirs = Vec::new();
    find_runs(root, &mut dirs)?;
    let mut runs = Vec::new();
    for dir in dirs {
        let text = std::fs::read_to_string(dir.join(CONFIG_FILE))?;
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Load(format!("{}: {e}", dir.join(CONFIG_FILE).display())))?;
        let field = |k: &str| {
            v.get(k)
                .cloned()
                .ok_or_else(|| Error::Load(format!("{}: missing `{k}`", dir.display())))
        };
        let env = field("env")?.as_str().unwrap_or_default().to_string();
        let variant = field("variant")?.as_str().unwrap_or_default().to_string();
        let seed = field("seed")?.as_u64().unwrap_or_default();
        let total_steps = field("total_steps")?.as_u64().unwrap_or_default();
        let points = read_curve(&dir.join(CURVE_FILE))?;
        let tasks = dir.join(TASKS_FILE);
        let task_returns = if tasks.is_file() { Some(read_tasks(&tasks)?) } else { None };
        runs.push(RunSummary {
            dir,
            env,
            variant,
            seed,
            curve: SeedCurve { total_steps, points },
            task_returns,
        });
    }
    Ok(runs)
}

fn group(runs: &[RunSummary]) -> BTreeMap<(String, String), Vec<&RunSummary>> {
    let mut g: BTreeMap<(String, String), Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        g.entry((r.variant.clone(), r.env.clone())).or_default().push(r);
    }
    g
}

/// Final performance per (variant, environment) over the seeds found.
pub fn result_matrix(runs: &[RunSummary]) -> Result<VariantResultMatrix> {
    let mut m = VariantResultMatrix::default();
    for ((variant, env), rs) in group(runs) {
        let curves: Vec<SeedCurve> = rs.iter().map(|r| r.curve.clone()).collect();
        m.insert(&variant, &env, final_performance(&curves)?, curves.len());
    }
    Ok(m)
}

/// What `report --metric` computes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportMetric {
    Final,
    Worst10,
    BestVariant,
    Factor(Factor),
}

impl std::str::FromStr for ReportMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "final" => Ok(ReportMetric::Final),
            "worst10" => Ok(ReportMetric::Worst10),
            "best-variant" => Ok(ReportMetric::BestVariant),
            _ => match s.strip_prefix("factor:") {
                Some(f) => Ok(ReportMetric::Factor(f.parse()?)),
                None => Err(Error::config(format!(
                    "unknown metric `{s}` (final, worst10, best-variant, factor:<name>)"
                ))),
            },
        }
    }
}

/// CSV text for one metric over the runs under `root`.
pub fn report(root: &Path, metric: ReportMetric) -> Result<String> {
    let runs = load_runs(root)?;
    if runs.is_empty() {
        return Err(Error::Metric(format!("no runs found under {}", root.display())));
    }
    let mut out = String::new();
    match metric {
        ReportMetric::Final => {
            out.push_str("variant,env,seeds,final_performance\n");
            for ((v, e), c) in &result_matrix(&runs)?.cells {
                writeln!(out, "{v},{e},{},{}", c.seeds, c.value).unwrap();
            }
        }
        ReportMetric::Worst10 => {
            out.push_str("variant,env,tasks,worst10\n");
            for ((v, e), rs) in group(&runs) {
                let mut all = Vec::new();
                for r in rs {
                    let t = r.task_returns.as_ref().ok_or_else(|| {
                        Error::Metric(format!("{} has no {TASKS_FILE}", r.dir.display()))
                    })?;
                    all.extend_from_slice(t);
                }
                writeln!(out, "{v},{e},{},{}", all.len(), worst_case_return(&all)?).unwrap();
            }
        }
        ReportMetric::BestVariant => {
            let m = result_matrix(&runs)?;
            let best = select_best_variant(&m)?;
            out.push_str("variant,mean_normalized,selected\n");
            for (v, n) in m.normalized_means() {
                writeln!(out, "{v},{n},{}", u8::from(v == best)).unwrap();
            }
        }
        ReportMetric::Factor(f) => {
            out.push_str(&format!("{},env,variants,mean_final_performance\n", f.name()));
            for r in single_factor_analysis(&result_matrix(&runs)?, f)? {
                writeln!(out, "{},{},{},{}", r.value, r.env, r.count, r.mean).unwrap();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expands_factorially() {
        let g = Grid::parse("env=wind,semicircle\nagent.rl=td3,sac\nagent.inputs=o,oar\ntotal_steps=500\nseeds=0,1").unwrap();
        let runs = g.expand(Path::new("/tmp/x")).unwrap();
        assert_eq!(runs.len(), 2 * 2 * 2 * 2);
        let dirs: std::collections::BTreeSet<_> = runs.iter().map(|r| r.out_dir.clone()).collect();
        assert_eq!(dirs.len(), runs.len());
        assert!(runs.iter().all(|r| r.total_steps == 500));
    }

    #[test]
    fn non_factor_keys_cannot_vary() {
        assert!(Grid::parse("agent.lr=1e-3,3e-4").is_err());
        assert!(Grid::parse("seed=3").is_err());
    }

    #[test]
    fn metric_names() {
        assert_eq!("final".parse::<ReportMetric>().unwrap(), ReportMetric::Final);
        assert_eq!(
            "factor:inputs".parse::<ReportMetric>().unwrap(),
            ReportMetric::Factor(Factor::Inputs)
        );
        assert!("factor:colour".parse::<ReportMetric>().is_err());
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::outputs::CurvePoint;
use super::train::in_final_window;
use crate::{Error, Result};

/// One seed's learning curve with the run length it was recorded over.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedCurve {
    pub total_steps: u64,
    pub points: Vec<CurvePoint>,
}

/// Mean of the evaluations in the last 20% of the step range, then the mean
/// over seeds.
pub fn final_performance(curves: &[SeedCurve]) -> Result<f64> {
    if curves.is_empty() {
        return Err(Error::Metric("final performance needs at least one seed".into()));
    }
    let mut sum = 0.0;
    for (i, c) in curves.iter().enumerate() {
        if c.points.len() < 5 {
            return Err(Error::Metric(format!(
                "seed curve {i} has {} points, need at least 5",
                c.points.len()
            )));
        }
        let window: Vec<f64> = c
            .points
            .iter()
            .filter(|p| in_final_window(p.env_step, c.total_steps))
            .map(|p| p.eval_return)
            .collect();
        if window.is_empty() {
            return Err(Error::Metric(format!(
                "seed curve {i} has no evaluation in the last 20% of {} steps",
                c.total_steps
            )));
        }
        sum += window.iter().sum::<f64>() / window.len() as f64;
    }
    Ok(sum / curves.len() as f64)
}

/// Mean of the lowest `ceil(10%)` task returns.
pub fn worst_case_return(returns: &[f64]) -> Result<f64> {
    if returns.len() < 10 {
        return Err(Error::Metric(format!(
            "worst-case return needs at least 10 tasks, got {}",
            returns.len()
        )));
    }
    if returns.iter().any(|r| r.is_nan()) {
        return Err(Error::Metric("task returns contain NaN".into()));
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = returns.len().div_ceil(10);
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// A cell of the result matrix: mean final performance over `seeds` seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub value: f64,
    pub seeds: usize,
}

/// Final performance per (variant, environment).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VariantResultMatrix {
    pub cells: BTreeMap<(String, String), Cell>,
}

impl VariantResultMatrix {
    pub fn insert(&mut self, variant: &str, env: &str, value: f64, seeds: usize) {
        self.cells
            .insert((variant.to_string(), env.to_string()), Cell { value, seeds });
    }

    pub fn variants(&self) -> Vec<String> {
        let mut v: Vec<String> = self.cells.keys().map(|(v, _)| v.clone()).collect();
        v.dedup();
        v
    }

    pub fn envs(&self) -> Vec<String> {
        let mut e: Vec<String> = self.cells.keys().map(|(_, e)| e.clone()).collect();
        e.sort();
        e.dedup();
        e
    }

    /// Per-environment min-max normalized scores. An environment where all
    /// variants score the same maps every variant to 0.5.
    pub fn normalized(&self) -> BTreeMap<(String, String), f64> {
        let mut out = BTreeMap::new();
        for env in self.envs() {
            let col: Vec<(&String, f64)> = self
                .cells
                .iter()
                .filter(|((_, e), _)| *e == env)
                .map(|((v, _), c)| (v, c.value))
                .collect();
            let lo = col.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            let hi = col.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
            for (v, x) in col {
                let n = if hi > lo { (x - lo) / (hi - lo) } else { 0.5 };
                out.insert((v.clone(), env.clone()), n);
            }
        }
        out
    }

    /// Each variant's normalized score averaged over the environments it ran on.
    pub fn normalized_means(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for ((v, _), n) in self.normalized() {
            let e = acc.entry(v).or_default();
            e.0 += n;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(v, (s, c))| (v, s / c as f64))
            .collect()
    }
}

/// The variant with the highest mean normalized final performance; ties go
/// to the lexicographically smallest id.
pub fn select_best_variant(matrix: &VariantResultMatrix) -> Result<String> {
    let means = matrix.normalized_means();
    if means.len() < 2 {
        return Err(Error::Metric(format!(
            "best-variant selection needs at least 2 variants, got {}",
            means.len()
        )));
    }
    let mut best: Option<(&String, f64)> = None;
    // BTreeMap iterates in id order, so a strict `>` keeps the smallest id.
    for (v, &m) in &means {
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((v, m));
        }
    }
    Ok(best.expect("at least two variants").0.clone())
}

/// The five design factors encoded in a variant id
/// `rl-encoder-len-inputs-arch`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Rl,
    Encoder,
    ContextLen,
    Inputs,
    Arch,
}

impl Factor {
    pub const ALL: [Factor; 5] = [
        Factor::Rl,
        Factor::Encoder,
        Factor::ContextLen,
        Factor::Inputs,
        Factor::Arch,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Rl => "rl",
            Factor::Encoder => "encoder",
            Factor::ContextLen => "len",
            Factor::Inputs => "inputs",
            Factor::Arch => "arch",
        }
    }

    fn position(self) -> usize {
        Factor::ALL.iter().position(|f| *f == self).unwrap()
    }

    /// This factor's value in a variant id.
    pub fn value_of(self, variant: &str) -> Result<String> {
        variant
            .split('-')
            .nth(self.position())
            .map(str::to_string)
            .ok_or_else(|| Error::Metric(format!("variant id `{variant}` has no {} field", self.name())))
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = if s == "context_len" { "len" } else { s };
        Factor::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config(format!("unknown factor `{s}` (rl, encoder, len, inputs, arch)")))
    }
}

/// Marginal score of one factor value in one environment.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorMarginal {
    pub value: String,
    pub env: String,
    pub mean: f64,
    /// Variants that contributed.
    pub count: usize,
}

/// For each value of `factor` and each environment, the mean final
/// performance over all variants sharing that value. Missing grid cells
/// simply lower `count`.
pub fn single_factor_analysis(matrix: &VariantResultMatrix, factor: Factor) -> Result<Vec<FactorMarginal>> {
    let mut acc: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for ((variant, env), cell) in &matrix.cells {
        let value = factor.value_of(variant)?;
        let e = acc.entry((value, env.clone())).or_default();
        e.0 += cell.value;
        e.1 += 1;
    }
    Ok(acc
        .into_iter()
        .map(|((value, env), (s, c))| FactorMarginal {
            value,
            env,
            mean: s / c as f64,
            count: c,
        })
        .collect())
}

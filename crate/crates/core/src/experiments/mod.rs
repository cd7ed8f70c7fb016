//! Seeded Monte Carlo campaigns.
//!
//! A campaign is a pure function of its spec and a master seed. Trial `i` draws
//! from the seed `trial_seed(master, i)`, trials run in parallel, and results are
//! folded in trial order, so every number a campaign emits reproduces bit for
//! bit. Each campaign writes `<name>_trials.csv` (one row per trial) and
//! `<name>_verdict.json` (verdicts with margins, summary, theory constants).

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::objectives::ObjectiveError;
use crate::rng::trial_seed;
use crate::theory::TheoryError;

pub mod classify;
pub mod first_order;
pub mod reachability;
pub mod recurrence;
pub mod saddle;
pub mod variance;

pub use classify::ClassifySpec;
pub use first_order::FirstOrderSpec;
pub use reachability::{ReachabilitySpec, WalkSetting};
pub use recurrence::RecurrenceSpec;
pub use saddle::SaddleSpec;
pub use variance::VarianceSpec;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("campaign refused: {0}")]
    Refused(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// One statistical assertion with its measured margin (positive = satisfied).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub metric: String,
    pub value: f64,
    pub comparator: Comparator,
    pub threshold: f64,
    pub margin: f64,
    pub passed: bool,
    pub n_trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Verdict {
    pub fn new(metric: &str, value: f64, comparator: Comparator, threshold: f64, n_trials: usize) -> Self {
        let margin = match comparator {
            Comparator::Le => threshold - value,
            Comparator::Ge => value - threshold,
        };
        Verdict {
            metric: metric.to_string(),
            value,
            comparator,
            threshold,
            margin,
            // NaN margins fail
            passed: margin >= 0.0,
            n_trials,
            note: None,
        }
    }

    pub fn le(metric: &str, value: f64, threshold: f64, n_trials: usize) -> Self {
        Self::new(metric, value, Comparator::Le, threshold, n_trials)
    }

    pub fn ge(metric: &str, value: f64, threshold: f64, n_trials: usize) -> Self {
        Self::new(metric, value, Comparator::Ge, threshold, n_trials)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Everything a campaign produced.
#[derive(Clone, Debug, PartialEq)]
pub struct CampaignReport {
    pub name: String,
    pub master_seed: u64,
    pub spec: serde_json::Value,
    pub verdicts: Vec<Verdict>,
    pub summary: serde_json::Value,
    pub constants: serde_json::Value,
    /// Per-trial table, already rendered as CSV.
    pub trials_csv: String,
    /// Additional CSV tables as `(file suffix, contents)`.
    pub extra_csv: Vec<(String, String)>,
}

#[derive(Serialize)]
struct VerdictFile<'a> {
    campaign: &'a str,
    master_seed: u64,
    passed: bool,
    provenance: String,
    spec: &'a serde_json::Value,
    verdicts: &'a [Verdict],
    summary: &'a serde_json::Value,
    constants: &'a serde_json::Value,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict_json(&self) -> String {
        let file = VerdictFile {
            campaign: &self.name,
            master_seed: self.master_seed,
            passed: self.passed(),
            provenance: crate::provenance(),
            spec: &self.spec,
            verdicts: &self.verdicts,
            summary: &self.summary,
            constants: &self.constants,
        };
        let mut s = serde_json::to_string_pretty(&file).expect("verdict serializes");
        s.push('\n');
        s
    }

    /// Writes the trial CSV, any extra tables and the verdict JSON into `dir`;
    /// returns the paths written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
        fs::create_dir_all(dir).map_err(|e| ExperimentError::Io(format!("{}: {e}", dir.display())))?;
        let mut files = vec![(format!("{}_trials.csv", self.name), self.trials_csv.clone())];
        for (suffix, body) in &self.extra_csv {
            files.push((format!("{}_{suffix}.csv", self.name), body.clone()));
        }
        files.push((format!("{}_verdict.json", self.name), self.verdict_json()));
        let mut written = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| ExperimentError::Io(format!("{}: {e}", p.display())))?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Campaign selection as read from a JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "campaign", rename_all = "snake_case")]
pub enum CampaignSpec {
    FirstOrder(FirstOrderSpec),
    Recurrence(RecurrenceSpec),
    Reachability(ReachabilitySpec),
    Saddle(SaddleSpec),
    Classify(ClassifySpec),
    Variance(VarianceSpec),
}

impl CampaignSpec {
    /// The default fixture of a campaign by its command-line name.
    pub fn default_for(name: &str) -> Option<CampaignSpec> {
        Some(match name {
            "first-order" | "first_order" => CampaignSpec::FirstOrder(Default::default()),
            "recurrence" => CampaignSpec::Recurrence(Default::default()),
            "reachability" => CampaignSpec::Reachability(Default::default()),
            "saddle" => CampaignSpec::Saddle(Default::default()),
            "classify" => CampaignSpec::Classify(Default::default()),
            "variance" => CampaignSpec::Variance(Default::default()),
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            CampaignSpec::FirstOrder(_) => "first_order",
            CampaignSpec::Recurrence(_) => "recurrence",
            CampaignSpec::Reachability(_) => "reachability",
            CampaignSpec::Saddle(_) => "saddle",
            CampaignSpec::Classify(_) => "classify",
            CampaignSpec::Variance(_) => "variance",
        }
    }

    pub fn run(&self, master_seed: u64) -> Result<CampaignReport, ExperimentError> {
        match self {
            CampaignSpec::FirstOrder(s) => first_order::run(s, master_seed),
            CampaignSpec::Recurrence(s) => recurrence::run(s, master_seed),
            CampaignSpec::Reachability(s) => reachability::run(s, master_seed),
            CampaignSpec::Saddle(s) => saddle::run(s, master_seed),
            CampaignSpec::Classify(s) => classify::run(s, master_seed),
            CampaignSpec::Variance(s) => variance::run(s, master_seed),
        }
    }
}

/// Runs `f(trial, trial_seed)` for every trial in parallel; results come back
/// in trial order.
pub fn par_trials<T, F>(n_trials: usize, master_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    (0..n_trials)
        .into_par_iter()
        .map(|i| f(i, trial_seed(master_seed, i as u64)))
        .collect()
}

pub(crate) fn to_csv<R: Serialize>(rows: &[R]) -> Result<String, ExperimentError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| ExperimentError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ExperimentError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("value serializes")
}

/// Least-squares fit `y ≈ C/x` (no intercept). Returns `(C, R²)` with `R²`
/// measured against the mean of `y`.
pub fn inverse_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let inv: Vec<f64> = xs.iter().map(|x| 1.0 / x).collect();
    let c = inv.iter().zip(ys).map(|(u, y)| u * y).sum::<f64>() / inv.iter().map(|u| u * u).sum::<f64>();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = inv.iter().zip(ys).map(|(u, y)| (y - c * u).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    (c, 1.0 - ss_res / ss_tot)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_margins() {
        let v = Verdict::le("x", 1.0, 2.0, 5);
        assert!(v.passed);
        assert_eq!(v.margin, 1.0);
        let v = Verdict::ge("x", 1.0, 2.0, 5);
        assert!(!v.passed);
        assert!(!Verdict::le("x", f64::NAN, 2.0, 5).passed);
    }

    #[test]
    fn exact_inverse_fit() {
        let xs = [500.0, 1000.0, 2000.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / x).collect();
        let (c, r2) = inverse_fit(&xs, &ys);
        assert!((c - 3.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
        assert!((ols_slope(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn spec_names_roundtrip() {
        for name in ["first-order", "recurrence", "reachability", "saddle", "classify", "variance"] {
            let spec = CampaignSpec::default_for(name).unwrap();
            let js = serde_json::to_string(&spec).unwrap();
            let back: CampaignSpec = serde_json::from_str(&js).unwrap();
            assert_eq!(back, spec);
        }
        assert!(CampaignSpec::default_for("nope").is_none());
    }
}

//! Pair-classification scoring and the timed evaluation harness.
//!
//! Every one of the `N1 · N2` (A-node, S-node) pairs is a binary decision:
//! positive when the pair is in the prediction (or the ground truth).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{GroundTruth, Sample};
use crate::error::{Error, Result};
use crate::matching::MatchResult;

/// Accuracy is flagged once true negatives exceed this share of all pairs.
pub const TN_DOMINANCE: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    /// `None` when timing was not measured (parallel runs) or was stripped.
    pub mean_time_s: Option<f64>,
    pub completed_fraction: f64,
    pub accuracy_inflated: bool,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64, mean_time_s: Option<f64>, completed_fraction: f64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        // 2PR/(P+R) written over counts, which stays exact when fp == fn
        let f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        let total = tp + fp + fn_ + tn;
        Self {
            precision,
            recall,
            f1,
            accuracy: ratio(tp + tn, total),
            tp,
            fp,
            fn_,
            tn,
            mean_time_s,
            completed_fraction,
            accuracy_inflated: ratio(tn, total) > TN_DOMINANCE,
        }
    }

    /// Precision, recall and F1 coincide (they must whenever `fp == fn`).
    pub fn prf_equal(&self) -> bool {
        self.precision == self.recall && self.recall == self.f1
    }
}

/// Confusion counts of one prediction against ground truth.
pub fn score(pred: &MatchResult, gt: &GroundTruth, n1: usize, n2: usize) -> Result<MetricsReport> {
    let mut seen_s = HashSet::new();
    let mut seen_a = HashSet::new();
    for &(s, a, _) in &pred.pairs {
        if s >= n2 || a >= n1 {
            return Err(Error::InvalidInput(format!("predicted pair ({s}, {a}) outside {n1} x {n2}")));
        }
        if !seen_s.insert(s) || !seen_a.insert(a) {
            return Err(Error::InvalidInput(format!("prediction is not injective at ({s}, {a})")));
        }
    }
    let mut truth = HashSet::new();
    for (s, a) in gt.pairs() {
        if s >= n2 || a >= n1 {
            return Err(Error::InvalidInput(format!("ground-truth pair ({s}, {a}) outside {n1} x {n2}")));
        }
        truth.insert((s, a));
    }
    let tp = pred.pairs.iter().filter(|&&(s, a, _)| truth.contains(&(s, a))).count() as u64;
    let fp = pred.pairs.len() as u64 - tp;
    let fn_ = truth.len() as u64 - tp;
    let tn = (n1 * n2) as u64 - tp - fp - fn_;
    Ok(MetricsReport::from_counts(tp, fp, fn_, tn, Some(pred.elapsed_s), 1.0))
}

/// Micro-average: counts are summed and ratios recomputed; times and
/// completion fractions are averaged.
pub fn aggregate(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("cannot aggregate zero reports".into()));
    }
    let sum = |f: fn(&MetricsReport) -> u64| reports.iter().map(f).sum::<u64>();
    let n = reports.len() as f64;
    let mean_time_s = reports
        .iter()
        .map(|r| r.mean_time_s)
        .sum::<Option<f64>>()
        .map(|t| t / n);
    let completed = reports.iter().map(|r| r.completed_fraction).sum::<f64>() / n;
    Ok(MetricsReport::from_counts(
        sum(|r| r.tp),
        sum(|r| r.fp),
        sum(|r| r.fn_),
        sum(|r| r.tn),
        mean_time_s,
        completed,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SampleStatus {
    Completed { report: MetricsReport },
    TimedOut,
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    /// Position in the evaluated sample list.
    pub index: usize,
    /// Wall-clock seconds, `None` in parallel mode.
    pub elapsed_s: Option<f64>,
    #[serde(flatten)]
    pub status: SampleStatus,
}

/// Result of a harness run. `metrics` aggregates completed samples only and
/// is `None` when nothing completed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub n_samples: usize,
    pub n_completed: usize,
    pub completed_fraction: f64,
    pub timeout_s: f64,
    pub metrics: Option<MetricsReport>,
    pub samples: Vec<SampleOutcome>,
}

impl EvalReport {
    /// Copy with every wall-clock quantity removed. What remains depends
    /// only on the inputs (given the same completion outcome).
    pub fn without_timing(&self) -> EvalReport {
        let mut r = self.clone();
        if let Some(m) = &mut r.metrics {
            m.mean_time_s = None;
        }
        for s in &mut r.samples {
            s.elapsed_s = None;
            if let SampleStatus::Completed { report } = &mut s.status {
                report.mean_time_s = None;
            }
        }
        r
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Every sample for which precision, recall and F1 differ.
    pub fn protocol_violations(&self) -> Vec<usize> {
        self.samples
            .iter()
            .filter_map(|s| match &s.status {
                SampleStatus::Completed { report } if !report.prf_equal() => Some(s.index),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarnessConfig {
    pub timeout_s: f64,
    /// Run samples on the rayon pool; disables timing (and thus timeouts).
    pub parallel: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            timeout_s: 60.0,
            parallel: false,
        }
    }
}

fn run_one<M>(matcher: &M, index: usize, sample: &Sample, config: &HarnessConfig) -> SampleOutcome
where
    M: Fn(&Sample) -> Result<MatchResult>,
{
    let start = Instant::now();
    let result = matcher(sample);
    let elapsed = start.elapsed().as_secs_f64();
    let elapsed_s = (!config.parallel).then_some(elapsed);
    let status = match result {
        Err(e) => SampleStatus::Failed { error: e.to_string() },
        Ok(_) if !config.parallel && elapsed > config.timeout_s => SampleStatus::TimedOut,
        Ok(mut pred) => {
            pred.elapsed_s = elapsed;
            match score(&pred, &sample.ground_truth, sample.a_graph.len(), sample.s_graph.len()) {
                Ok(mut report) => {
                    report.mean_time_s = elapsed_s;
                    SampleStatus::Completed { report }
                }
                Err(e) => SampleStatus::Failed { error: e.to_string() },
            }
        }
    };
    SampleOutcome {
        index,
        elapsed_s,
        status,
    }
}

/// Runs `matcher` on every sample and scores the completed ones.
///
/// The timeout is applied after each call returns: a sample whose wall time
/// exceeds `timeout_s` counts as incomplete. Failures are recorded and the
/// run continues.
pub fn time_harness<M>(method: &str, matcher: M, samples: &[&Sample], config: &HarnessConfig) -> Result<EvalReport>
where
    M: Fn(&Sample) -> Result<MatchResult> + Sync,
{
    if !(config.timeout_s > 0.0) {
        return Err(Error::InvalidInput("timeout must be positive".into()));
    }
    let outcomes: Vec<SampleOutcome> = if config.parallel {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| run_one(&matcher, i, s, config))
            .collect()
    } else {
        samples
            .iter()
            .enumerate()
            .map(|(i, s)| run_one(&matcher, i, s, config))
            .collect()
    };
    let completed: Vec<MetricsReport> = outcomes
        .iter()
        .filter_map(|o| match &o.status {
            SampleStatus::Completed { report } => Some(report.clone()),
            _ => None,
        })
        .collect();
    let n_samples = samples.len();
    let completed_fraction = ratio(completed.len() as u64, n_samples as u64);
    let metrics = if completed.is_empty() {
        None
    } else {
        let mut m = aggregate(&completed)?;
        m.completed_fraction = completed_fraction;
        Some(m)
    };
    Ok(EvalReport {
        method: method.to_string(),
        n_samples,
        n_completed: completed.len(),
        completed_fraction,
        timeout_s: config.timeout_s,
        metrics,
        samples: outcomes,
    })
}

/// Plain-text table with columns Method, Prec%, Rec%, F1%, Time(s),
/// Completed%. Missing quantities print as `-`.
pub fn format_table(reports: &[&EvalReport]) -> String {
    let header = ["Method", "Prec%", "Rec%", "F1%", "Time(s)", "Completed%"];
    let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.1}", 100.0 * v));
    let rows: Vec<[String; 6]> = reports
        .iter()
        .map(|r| {
            let m = r.metrics.as_ref();
            [
                r.method.clone(),
                pct(m.map(|m| m.precision)),
                pct(m.map(|m| m.recall)),
                pct(m.map(|m| m.f1)),
                m.and_then(|m| m.mean_time_s).map_or("-".to_string(), |t| format!("{t:.3}")),
                format!("{:.1}", 100.0 * r.completed_fraction),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let mut parts = Vec::new();
        for (k, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            parts.push(if k == 0 {
                format!("{cell:<w$}")
            } else {
                format!("{cell:>w$}")
            });
        }
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    line(&rule.iter().map(String::as_str).collect::<Vec<_>>());
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

//! Aggregation of per-app results into sweep points, Pareto sweeps, and
//! CSV/JSON output.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicySpec;
use crate::simulator::{simulate_policy, AppResult, SimOptions};
use crate::trace::AppTrace;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryWeighting {
    /// Every app counts the same.
    #[default]
    Uniform,
    /// Wasted time is multiplied by the app's allocated memory (MB); apps
    /// without a size count as 1.
    PerApp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Total wasted time over the baseline's total.
    #[default]
    Aggregate,
    /// Mean of per-app ratios against the baseline (apps with zero baseline
    /// waste are left out).
    PerApp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryOptions {
    pub weighting: MemoryWeighting,
    pub normalization: Normalization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub label: String,
    /// Per-app cold-start percentages, ascending.
    pub cold_pct_distribution: Vec<f64>,
    pub p75_cold_pct: f64,
    pub total_wasted: f64,
    pub normalized_wasted: f64,
    pub pct_always_cold: f64,
    pub n_apps: usize,
    pub n_invocations: u64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=100.0).contains(&pct) {
        return None;
    }
    let rank = ((pct / 100.0 * sorted.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

pub fn total_wasted(results: &[AppResult], weighting: MemoryWeighting) -> f64 {
    results
        .iter()
        .map(|r| match weighting {
            MemoryWeighting::Uniform => r.wasted_memory_secs,
            MemoryWeighting::PerApp => r.wasted_memory_secs * r.memory_mb.unwrap_or(1.0),
        })
        .sum()
}

/// Summary with uniform memory weight, normalized to `baseline_wasted`
/// when given.
pub fn summarize(label: &str, results: &[AppResult], baseline_wasted: Option<f64>) -> Result<SweepResult> {
    let total = total_wasted(results, MemoryWeighting::Uniform);
    let normalized = match baseline_wasted {
        None => 1.0,
        Some(b) => ratio(total, b)?,
    };
    summarize_inner(label, results, total, normalized)
}

fn ratio(total: f64, baseline: f64) -> Result<f64> {
    if baseline > 0.0 {
        Ok(total / baseline)
    } else if total == 0.0 {
        Ok(1.0)
    } else {
        Err(Error::Validation(format!("baseline wasted memory {baseline} cannot normalize {total}")))
    }
}

fn summarize_inner(label: &str, results: &[AppResult], total: f64, normalized: f64) -> Result<SweepResult> {
    if results.is_empty() {
        return Err(Error::InsufficientData(format!("{label}: no app results to summarize")));
    }
    let mut dist: Vec<f64> = results.iter().map(|r| r.cold_pct).collect();
    dist.sort_by(f64::total_cmp);
    let always = results.iter().filter(|r| r.cold_starts == r.invocations).count();
    Ok(SweepResult {
        label: label.to_string(),
        p75_cold_pct: nearest_rank(&dist, 75.0).expect("non-empty"),
        cold_pct_distribution: dist,
        total_wasted: total,
        normalized_wasted: normalized,
        pct_always_cold: 100.0 * always as f64 / results.len() as f64,
        n_apps: results.len(),
        n_invocations: results.iter().map(|r| r.invocations).sum(),
    })
}

/// Summary against a baseline run of the same apps.
pub fn summarize_against(
    label: &str,
    results: &[AppResult],
    baseline: &[AppResult],
    opts: &SummaryOptions,
) -> Result<SweepResult> {
    let total = total_wasted(results, opts.weighting);
    let normalized = match opts.normalization {
        Normalization::Aggregate => ratio(total, total_wasted(baseline, opts.weighting))?,
        Normalization::PerApp => {
            if baseline.len() != results.len() {
                return Err(Error::Validation("baseline covers a different app set".into()));
            }
            let ratios: Vec<f64> = results
                .iter()
                .zip(baseline)
                .filter(|(_, b)| b.wasted_memory_secs > 0.0)
                .map(|(r, b)| r.wasted_memory_secs / b.wasted_memory_secs)
                .collect();
            if ratios.is_empty() {
                1.0
            } else {
                ratios.iter().sum::<f64>() / ratios.len() as f64
            }
        }
    };
    summarize_inner(label, results, total, normalized)
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub policy: PolicySpec,
}

impl SweepEntry {
    pub fn new(policy: PolicySpec) -> Self {
        Self { label: None, policy }
    }

    pub fn labeled(label: impl Into<String>, policy: PolicySpec) -> Self {
        Self { label: Some(label.into()), policy }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.policy.default_label())
    }
}

/// A sweep grid as read from a TOML file:
///
/// ```toml
/// baseline = "fixed-10m"
///
/// [[policies]]
/// label = "fixed-10m"
/// kind = "fixed"
/// keep_alive_minutes = 10.0
///
/// [[policies]]
/// kind = "hybrid"
/// range_minutes = 240
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Label of the normalization baseline; defaults to a fixed 10-minute
    /// keep-alive, added to the run if absent from the grid.
    #[serde(default)]
    pub baseline: Option<String>,
    #[serde(default)]
    pub summary: SummaryOptions,
    pub policies: Vec<SweepEntry>,
}

impl SweepConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(s)?;
        if cfg.policies.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        Ok(cfg)
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub points: Vec<SweepResult>,
    /// Per-app results for each successful configuration, same order as `points`.
    pub per_app: Vec<(String, Vec<AppResult>)>,
    pub failures: Vec<(String, Error)>,
}

pub const DEFAULT_BASELINE_LABEL: &str = "fixed-10m";

/// Runs every grid entry on the same traces and normalizes wasted memory to
/// the baseline entry. A failing entry is reported and skipped; a failing
/// baseline aborts the sweep.
pub fn pareto_sweep(
    traces: &[AppTrace],
    grid: &[SweepEntry],
    baseline: Option<&str>,
    opts: &SummaryOptions,
    sim: &SimOptions,
) -> Result<SweepOutcome> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let baseline_label = baseline.unwrap_or(DEFAULT_BASELINE_LABEL);
    let baseline_results = match grid.iter().find(|e| e.label() == baseline_label) {
        Some(entry) => simulate_policy(traces, &entry.policy, sim)?,
        None if baseline.is_none() => simulate_policy(traces, &PolicySpec::fixed_minutes(10.0), sim)?,
        None => return Err(Error::Config(format!("baseline {baseline_label:?} is not in the grid"))),
    };

    let mut outcome = SweepOutcome { points: Vec::new(), per_app: Vec::new(), failures: Vec::new() };
    for entry in grid {
        let label = entry.label();
        let run = if label == baseline_label {
            Ok(baseline_results.clone())
        } else {
            simulate_policy(traces, &entry.policy, sim)
        };
        match run.and_then(|r| summarize_against(&label, &r, &baseline_results, opts).map(|s| (s, r))) {
            Ok((point, results)) => {
                outcome.points.push(point);
                outcome.per_app.push((label, results));
            }
            Err(e) => {
                log::warn!("sweep entry {label} failed: {e}");
                outcome.failures.push((label, e));
            }
        }
    }
    Ok(outcome)
}

/// Indices of points no other point beats on both normalized wasted memory
/// and 75th-percentile cold starts.
pub fn pareto_frontier(points: &[SweepResult]) -> Vec<usize> {
    let dominates = |a: &SweepResult, b: &SweepResult| {
        a.normalized_wasted <= b.normalized_wasted
            && a.p75_cold_pct <= b.p75_cold_pct
            && (a.normalized_wasted < b.normalized_wasted || a.p75_cold_pct < b.p75_cold_pct)
    };
    (0..points.len()).filter(|&i| !points.iter().any(|o| dominates(o, &points[i]))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Flat row written for each sweep point, in this column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub label: String,
    pub p75_cold_pct: f64,
    pub normalized_wasted: f64,
    pub pct_always_cold: f64,
    pub n_apps: usize,
    pub n_invocations: u64,
}

impl From<&SweepResult> for SummaryRow {
    fn from(r: &SweepResult) -> Self {
        SummaryRow {
            label: r.label.clone(),
            p75_cold_pct: r.p75_cold_pct,
            normalized_wasted: r.normalized_wasted,
            pct_always_cold: r.pct_always_cold,
            n_apps: r.n_apps,
            n_invocations: r.n_invocations,
        }
    }
}

const SUMMARY_COLUMNS: [&str; 6] =
    ["label", "p75_cold_pct", "normalized_wasted", "pct_always_cold", "n_apps", "n_invocations"];

pub fn emit<W: Write>(results: &[SweepResult], format: OutputFormat, mut writer: W) -> Result<()> {
    let rows: Vec<SummaryRow> = results.iter().map(SummaryRow::from).collect();
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
            // header even when there are no rows
            w.write_record(SUMMARY_COLUMNS)?;
            for row in &rows {
                w.serialize(row)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, &rows)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn read_summary_csv<R: Read>(reader: R) -> Result<Vec<SummaryRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CdfRow<'a> {
    label: &'a str,
    app_id: &'a str,
    invocations: u64,
    cold_starts: u64,
    cold_pct: f64,
    wasted_memory_secs: f64,
}

/// Per-app rows, one file per sweep, for plotting cold-start CDFs.
pub fn emit_per_app<W: Write>(runs: &[(String, Vec<AppResult>)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (label, results) in runs {
        for r in results {
            w.serialize(CdfRow {
                label,
                app_id: &r.app_id,
                invocations: r.invocations,
                cold_starts: r.cold_starts,
                cold_pct: r.cold_pct,
                wasted_memory_secs: r.wasted_memory_secs,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

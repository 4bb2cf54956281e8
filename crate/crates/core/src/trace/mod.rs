//! Invocation traces: ingestion of the per-minute production format,
//! per-application merging, synthetic generation, and distribution checks.

pub mod azure;
pub mod fit;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use azure::{
    parse_invocation_counts, parse_summary_table, write_invocation_counts, ParseOptions, ParsedDay, RowErrorPolicy,
    RowIssue, SummaryRecord, MINUTES_PER_DAY,
};
pub use fit::{validate_distribution, DistributionModel, FitReport, QuantileCheck};
pub use synthetic::{
    generate_synthetic, ArrivalModel, BurrParams, IatModel, LogNormalParams, ModelMix, RateDistribution, SessionModel,
    SyntheticSpec,
};

pub const SECS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trigger {
    Http,
    Event,
    Queue,
    Timer,
    Orchestration,
    Storage,
    Other,
}

impl Trigger {
    /// Lenient mapping of the dataset's trigger labels; unknown labels are `Other`.
    pub fn parse(label: &str) -> Trigger {
        match label.trim().to_ascii_lowercase().as_str() {
            "http" => Trigger::Http,
            "event" => Trigger::Event,
            "queue" => Trigger::Queue,
            "timer" => Trigger::Timer,
            "orchestration" => Trigger::Orchestration,
            "storage" => Trigger::Storage,
            _ => Trigger::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Trigger::Http => "http",
            Trigger::Event => "event",
            Trigger::Queue => "queue",
            Trigger::Timer => "timer",
            Trigger::Orchestration => "orchestration",
            Trigger::Storage => "storage",
            Trigger::Other => "others",
        }
    }
}

/// One function's invocation counts for one day, in one-minute bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionRecord {
    pub owner_id: String,
    pub app_id: String,
    pub function_id: String,
    pub trigger: Trigger,
    /// Zero-based day of the trace this record covers.
    pub day: u32,
    pub per_minute_counts: Vec<u32>,
}

/// All invocations of one application, in seconds since trace start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppTrace {
    pub app_id: String,
    pub invocations: Vec<f64>,
    /// Trace end, seconds.
    pub horizon: f64,
    /// Allocated memory, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_mb: Option<f64>,
    /// Mean execution time, when known. Only the optional execution-time
    /// replay mode reads it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exec_secs: Option<f64>,
}

impl AppTrace {
    pub fn new(app_id: impl Into<String>, invocations: Vec<f64>, horizon: f64) -> Result<Self> {
        let t = AppTrace { app_id: app_id.into(), invocations, horizon, memory_mb: None, exec_secs: None };
        t.check()?;
        Ok(t)
    }

    /// Ordering and range invariants.
    pub fn check(&self) -> Result<()> {
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return Err(Error::Contract(format!("{}: bad horizon {}", self.app_id, self.horizon)));
        }
        let mut prev = 0.0;
        for &t in &self.invocations {
            if !(t >= prev && t <= self.horizon) {
                return Err(Error::Contract(format!(
                    "{}: invocation {t} out of order or outside [0, {}]",
                    self.app_id, self.horizon
                )));
            }
            prev = t;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.invocations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.invocations.is_empty()
    }

    /// Invocation counts per minute over the whole horizon.
    pub fn minute_counts(&self) -> Vec<u32> {
        let minutes = (self.horizon / 60.0).ceil() as usize;
        let mut counts = vec![0u32; minutes.max(1)];
        for &t in &self.invocations {
            let m = ((t / 60.0).floor() as usize).min(counts.len() - 1);
            counts[m] += 1;
        }
        counts
    }
}

/// How a minute with `k` invocations is turned into timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expansion {
    /// All `k` at the start of the minute.
    MinuteStart,
    /// Evenly spread: offsets `(i + 0.5) · 60 / k`.
    #[default]
    UniformInMinute,
}

/// Merges function records into per-application traces.
///
/// Days are laid end to end; days with no record for an app count as idle.
/// Apps without a single invocation are dropped. Output is sorted by app id.
pub fn build_app_traces(records: &[FunctionRecord], expansion: Expansion) -> Vec<AppTrace> {
    let Some(days) = records.iter().map(|r| r.day + 1).max() else {
        return Vec::new();
    };
    let total_minutes = days as usize * MINUTES_PER_DAY;
    let mut per_app: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for r in records {
        let counts = per_app.entry(r.app_id.as_str()).or_insert_with(|| vec![0; total_minutes]);
        let base = r.day as usize * MINUTES_PER_DAY;
        for (m, &c) in r.per_minute_counts.iter().enumerate().take(MINUTES_PER_DAY) {
            counts[base + m] += c as u64;
        }
    }
    let horizon = days as f64 * SECS_PER_DAY;
    per_app
        .into_iter()
        .filter_map(|(app_id, counts)| {
            let invocations = expand_minutes(&counts, expansion);
            (!invocations.is_empty()).then(|| AppTrace {
                app_id: app_id.to_string(),
                invocations,
                horizon,
                memory_mb: None,
                exec_secs: None,
            })
        })
        .collect()
}

fn expand_minutes(counts: &[u64], expansion: Expansion) -> Vec<f64> {
    let mut out = Vec::with_capacity(counts.iter().sum::<u64>() as usize);
    for (m, &k) in counts.iter().enumerate() {
        let start = m as f64 * 60.0;
        match expansion {
            Expansion::MinuteStart => out.extend(std::iter::repeat_n(start, k as usize)),
            Expansion::UniformInMinute => {
                let step = 60.0 / k as f64;
                out.extend((0..k).map(|i| start + (i as f64 + 0.5) * step));
            }
        }
    }
    out
}

/// Writes one JSON object per app.
pub fn write_trace_cache<W: Write>(traces: &[AppTrace], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_cache<R: Read>(reader: R) -> Result<Vec<AppTrace>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: AppTrace =
            serde_json::from_str(&line).map_err(|e| Error::Row { line: i as u64 + 1, message: e.to_string() })?;
        t.check()?;
        out.push(t);
    }
    Ok(out)
}

/// Loads every trace in a directory.
///
/// `*.jsonl` trace caches take precedence. Otherwise every CSV whose name
/// contains `invocations` is read as one day, in file-name order.
pub fn load_trace_dir(dir: &Path, expansion: Expansion, opts: &ParseOptions) -> Result<Vec<AppTrace>> {
    let mut entries: Vec<PathBuf> =
        std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_file()).collect();
    entries.sort();
    let with_ext =
        |ext: &str| -> Vec<&PathBuf> { entries.iter().filter(|p| p.extension().is_some_and(|e| e == ext)).collect() };
    let caches = with_ext("jsonl");
    if !caches.is_empty() {
        let mut out = Vec::new();
        for p in caches {
            out.extend(read_trace_cache(File::open(p)?)?);
        }
        return Ok(out);
    }
    let days: Vec<&PathBuf> = with_ext("csv")
        .into_iter()
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.contains("invocations")))
        .collect();
    if days.is_empty() {
        return Err(Error::Config(format!(
            "{} holds no *.jsonl trace cache and no invocation-count CSV",
            dir.display()
        )));
    }
    let mut records = Vec::new();
    for (day, path) in days.into_iter().enumerate() {
        log::info!("reading {} as day {day}", path.display());
        let parsed = parse_invocation_counts(File::open(path)?, day as u32, opts)?;
        records.extend(parsed.records);
    }
    Ok(build_app_traces(&records, expansion))
}

//! Reader and writer for the released per-minute invocation-count tables
//! (`HashOwner,HashApp,HashFunction,Trigger,1,...,1440`) and the companion
//! duration/memory summary tables.

use std::collections::HashSet;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AppTrace, FunctionRecord, Trigger};
use crate::error::{Error, Result};

pub const MINUTES_PER_DAY: usize = 1440;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowErrorPolicy {
    /// Log the row and keep going.
    #[default]
    Skip,
    Abort,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub on_row_error: RowErrorPolicy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedDay {
    pub records: Vec<FunctionRecord>,
    /// Rows dropped under [`RowErrorPolicy::Skip`].
    pub skipped: Vec<RowIssue>,
}

struct Columns {
    owner: usize,
    app: usize,
    function: usize,
    trigger: usize,
    first_minute: usize,
    width: usize,
}

fn find_column(headers: &csv::StringRecord, needle: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim().to_ascii_lowercase().contains(needle))
}

fn locate_columns(headers: &csv::StringRecord) -> Result<Columns> {
    let id = |needle: &str| {
        find_column(headers, needle)
            .ok_or_else(|| Error::Row { line: 1, message: format!("header has no {needle} column") })
    };
    let first_minute = headers
        .iter()
        .position(|h| h.trim() == "1")
        .ok_or_else(|| Error::Row { line: 1, message: "header has no minute column \"1\"".into() })?;
    for m in 0..MINUTES_PER_DAY {
        let expected = (m + 1).to_string();
        if headers.get(first_minute + m).map(str::trim) != Some(expected.as_str()) {
            return Err(Error::Row {
                line: 1,
                message: format!("expected minute columns \"1\"..\"{MINUTES_PER_DAY}\", column {expected} missing"),
            });
        }
    }
    Ok(Columns {
        owner: id("owner")?,
        app: id("app")?,
        function: id("function")?,
        trigger: id("trigger")?,
        first_minute,
        width: headers.len(),
    })
}

/// Parses one day of per-function invocation counts.
///
/// Minute column `j` becomes offset `j - 1` of `day`. Malformed rows (wrong
/// width, non-integer counts, repeated function ids) are skipped or abort the
/// parse according to `opts`.
pub fn parse_invocation_counts<R: Read>(reader: R, day: u32, opts: &ParseOptions) -> Result<ParsedDay> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let cols = locate_columns(rdr.headers()?)?;
    let mut out = ParsedDay::default();
    let mut seen = HashSet::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_row(&row, &cols, day) {
            Ok(rec) if !seen.insert(rec.function_id.clone()) => {
                let msg = format!("duplicate function id {}", rec.function_id);
                reject(&mut out, opts, line, msg)?;
            }
            Ok(rec) => out.records.push(rec),
            Err(msg) => reject(&mut out, opts, line, msg)?,
        }
    }
    Ok(out)
}

fn reject(out: &mut ParsedDay, opts: &ParseOptions, line: u64, message: String) -> Result<()> {
    match opts.on_row_error {
        RowErrorPolicy::Abort => Err(Error::Row { line, message }),
        RowErrorPolicy::Skip => {
            log::warn!("skipping line {line}: {message}");
            out.skipped.push(RowIssue { line, message });
            Ok(())
        }
    }
}

fn parse_row(row: &csv::StringRecord, cols: &Columns, day: u32) -> std::result::Result<FunctionRecord, String> {
    if row.len() != cols.width {
        return Err(format!("expected {} columns, found {}", cols.width, row.len()));
    }
    let counts = (0..MINUTES_PER_DAY)
        .map(|m| {
            let raw = row[cols.first_minute + m].trim();
            raw.parse::<u32>().map_err(|_| format!("minute {}: count {raw:?} is not a non-negative integer", m + 1))
        })
        .collect::<std::result::Result<Vec<u32>, String>>()?;
    Ok(FunctionRecord {
        owner_id: row[cols.owner].trim().to_string(),
        app_id: row[cols.app].trim().to_string(),
        function_id: row[cols.function].trim().to_string(),
        trigger: Trigger::parse(&row[cols.trigger]),
        day,
        per_minute_counts: counts,
    })
}

/// Writes one day of `traces` in the invocation-count schema, one synthetic
/// function per app.
pub fn write_invocation_counts<W: Write>(traces: &[AppTrace], day: u32, trigger: Trigger, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> =
        ["HashOwner", "HashApp", "HashFunction", "Trigger"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=MINUTES_PER_DAY).map(|m| m.to_string()));
    w.write_record(&header)?;
    let day_start = day as f64 * super::SECS_PER_DAY;
    for t in traces {
        let mut counts = vec![0u32; MINUTES_PER_DAY];
        for &ts in &t.invocations {
            let m = ((ts - day_start) / 60.0).floor();
            if (0.0..MINUTES_PER_DAY as f64).contains(&m) {
                counts[m as usize] += 1;
            }
        }
        let mut row = vec![
            format!("owner-{}", t.app_id),
            t.app_id.clone(),
            format!("{}-f0", t.app_id),
            trigger.as_str().to_string(),
        ];
        row.extend(counts.iter().map(u32::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row of a duration or memory summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub app_id: String,
    pub function_id: Option<String>,
    pub value: f64,
    pub count: Option<f64>,
}

/// Reads one numeric column (for example `Average` or `AverageAllocatedMb`)
/// from a summary table. Columns other than the identifiers, the chosen value
/// and a count column are ignored, whatever the dataset version adds.
pub fn parse_summary_table<R: Read>(reader: R, value_column: &str, opts: &ParseOptions) -> Result<Vec<SummaryRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let exact = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let app = find_column(&headers, "app")
        .ok_or_else(|| Error::Row { line: 1, message: "header has no app column".into() })?;
    let function = find_column(&headers, "function");
    let value = exact(value_column)
        .ok_or_else(|| Error::Row { line: 1, message: format!("header has no {value_column:?} column") })?;
    let count = exact("Count").or_else(|| exact("SampleCount"));

    let mut out = Vec::new();
    let mut sink = ParsedDay::default();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != headers.len() {
            reject(&mut sink, opts, line, format!("expected {} columns, found {}", headers.len(), row.len()))?;
            continue;
        }
        let Ok(v) = row[value].trim().parse::<f64>() else {
            reject(&mut sink, opts, line, format!("{value_column} {:?} is not a number", &row[value]))?;
            continue;
        };
        out.push(SummaryRecord {
            app_id: row[app].trim().to_string(),
            function_id: function.map(|i| row[i].trim().to_string()),
            value: v,
            count: count.and_then(|i| row[i].trim().parse().ok()),
        });
    }
    Ok(out)
}

use std::io::{BufRead, Write};

use super::metrics::{EpisodeMetrics, TraceHeader, TraceRecord};
use super::ScenarioError;

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), "-", env!("CARGO_PKG_VERSION"));

/// Writes the header line followed by one JSON object per tick.
pub fn write_trace<W: Write>(
    mut out: W,
    header: &TraceHeader,
    records: &[TraceRecord],
) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace<R: BufRead>(input: R) -> Result<(TraceHeader, Vec<TraceRecord>), ScenarioError> {
    let mut lines = input
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
    let bad =
        |n: usize, e: &dyn std::fmt::Display| ScenarioError::Trace(format!("line {}: {e}", n + 1));
    let (n, first) = lines
        .next()
        .ok_or_else(|| ScenarioError::Trace("empty trace".into()))?;
    let first = first.map_err(|e| bad(n, &e))?;
    let header: TraceHeader = serde_json::from_str(&first).map_err(|e| bad(n, &e))?;
    let mut records = Vec::new();
    for (n, line) in lines {
        let line = line.map_err(|e| bad(n, &e))?;
        records.push(serde_json::from_str(&line).map_err(|e| bad(n, &e))?);
    }
    Ok((header, records))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

pub fn summary_header() -> Vec<&'static str> {
    vec![
        "scenario",
        "seed",
        "build",
        "success",
        "time_to_goal",
        "path_length",
        "min_clearance",
        "final_cost",
        "max_penetration",
        "ticks",
        "failure",
    ]
}

/// One summary row. Wall-clock solver times are left out so the file is a
/// pure function of (scenario, seed).
pub fn summary_row(header: &TraceHeader, m: &EpisodeMetrics) -> Vec<String> {
    vec![
        header.scenario.clone(),
        header.seed.to_string(),
        header.build.clone(),
        m.success.to_string(),
        opt(m.time_to_goal),
        m.path_length.to_string(),
        opt(m.min_clearance),
        m.final_cost.to_string(),
        m.max_penetration.to_string(),
        m.ticks.to_string(),
        m.failure.clone().unwrap_or_default(),
    ]
}

/// `scenario, seed, solver_mean, solver_median, solver_max` in seconds.
pub fn timing_row(header: &TraceHeader, m: &EpisodeMetrics) -> Vec<String> {
    let s = m.solver_time;
    vec![
        header.scenario.clone(),
        header.seed.to_string(),
        opt(s.map(|s| s.mean)),
        opt(s.map(|s| s.median)),
        opt(s.map(|s| s.max)),
    ]
}

/// Writes a header and rows as CSV.
pub fn write_table<W: Write>(
    out: W,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| ScenarioError::Trace(format!("csv: {e}"));
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.write_record(r).map_err(wrap)?;
    }
    w.flush()
        .map_err(|e| ScenarioError::Trace(format!("csv: {e}")))
}

/// Reads CSV rows, skipping the header.
pub fn read_table<R: std::io::Read>(input: R) -> Result<Vec<Vec<String>>, ScenarioError> {
    let mut r = csv::Reader::from_reader(input);
    r.records()
        .map(|rec| {
            rec.map(|r| r.iter().map(str::to_string).collect())
                .map_err(|e| ScenarioError::Trace(format!("csv: {e}")))
        })
        .collect()
}

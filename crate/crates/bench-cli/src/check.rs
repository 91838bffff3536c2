//! Assertion language for comparing benchmark CSVs. A check file is one
//! assertion per line; `#` starts a comment. Reports are named by label
//! (the CSV file stem for `bench compare`).
//!
//! ```text
//! stable RAAS 1.05                                  # max/min throughput
//! cliff NAIVE at 1000 below 0.70 of_peak_upto 400   # point vs early peak
//! drop NAIVE below 0.90 of_peak_upto 400 at 500 tol 100
//! dominates RAAS NAIVE at 200                       # A faster than B
//! ```

use std::collections::HashMap;

use crate::error::{BenchError, Result};
use crate::report::MetricsReport;

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub line: String,
    pub passed: bool,
    pub detail: String,
}

fn report<'a>(
    reports: &'a HashMap<String, MetricsReport>,
    label: &str,
) -> Result<&'a MetricsReport> {
    reports
        .get(label)
        .ok_or_else(|| BenchError::Config(format!("no report labeled {label}")))
}

fn throughput_at(rep: &MetricsReport, conns: u64, label: &str) -> Result<f64> {
    rep.row(conns)
        .map(|r| r.throughput)
        .ok_or_else(|| BenchError::Config(format!("{label} has no row for {conns} connections")))
}

/// Peak throughput over rows at or below `cap` connections.
fn peak_upto(rep: &MetricsReport, cap: u64, label: &str) -> Result<f64> {
    rep.rows
        .iter()
        .filter(|r| r.connections <= cap)
        .map(|r| r.throughput)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or_else(|| BenchError::Config(format!("{label} has no rows at or below {cap}")))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| BenchError::Config(format!("expected {what}")))
}

fn eval_line(line: &str, reports: &HashMap<String, MetricsReport>) -> Result<CheckOutcome> {
    let t: Vec<&str> = line.split_whitespace().collect();
    let keyword = |i: usize, want: &str| -> Result<()> {
        if t.get(i) == Some(&want) {
            Ok(())
        } else {
            Err(BenchError::Config(format!("expected `{want}` in: {line}")))
        }
    };
    let (passed, detail) = match t[0] {
        "stable" => {
            let rep = report(reports, t.get(1).copied().unwrap_or(""))?;
            let max_ratio: f64 = parse_num(t.get(2), "max ratio")?;
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for r in &rep.rows {
                lo = lo.min(r.throughput);
                hi = hi.max(r.throughput);
            }
            if rep.rows.is_empty() || lo <= 0.0 {
                return Err(BenchError::Config(format!("unusable rows in: {line}")));
            }
            let ratio = hi / lo;
            (ratio <= max_ratio, format!("max/min = {ratio:.4}, limit {max_ratio}"))
        }
        "cliff" => {
            let rep = report(reports, t.get(1).copied().unwrap_or(""))?;
            keyword(2, "at")?;
            let conns: u64 = parse_num(t.get(3), "connection count")?;
            keyword(4, "below")?;
            let frac: f64 = parse_num(t.get(5), "fraction")?;
            keyword(6, "of_peak_upto")?;
            let cap: u64 = parse_num(t.get(7), "peak cap")?;
            let at = throughput_at(rep, conns, t[1])?;
            let peak = peak_upto(rep, cap, t[1])?;
            (at < frac * peak, format!("{:.4} of peak, limit {frac}", at / peak))
        }
        "drop" => {
            let rep = report(reports, t.get(1).copied().unwrap_or(""))?;
            keyword(2, "below")?;
            let frac: f64 = parse_num(t.get(3), "fraction")?;
            keyword(4, "of_peak_upto")?;
            let cap: u64 = parse_num(t.get(5), "peak cap")?;
            keyword(6, "at")?;
            let expected: u64 = parse_num(t.get(7), "connection count")?;
            keyword(8, "tol")?;
            let tol: u64 = parse_num(t.get(9), "tolerance")?;
            let peak = peak_upto(rep, cap, t[1])?;
            let first = rep
                .rows
                .iter()
                .find(|r| r.throughput < frac * peak)
                .map(|r| r.connections);
            match first {
                Some(c) => (
                    c.abs_diff(expected) <= tol,
                    format!("first drop at {c}, expected {expected} +/- {tol}"),
                ),
                None => (false, "no row ever drops below the threshold".into()),
            }
        }
        "dominates" => {
            let a = report(reports, t.get(1).copied().unwrap_or(""))?;
            let b = report(reports, t.get(2).copied().unwrap_or(""))?;
            keyword(3, "at")?;
            let conns: u64 = parse_num(t.get(4), "connection count")?;
            let ta = throughput_at(a, conns, t[1])?;
            let tb = throughput_at(b, conns, t[2])?;
            (ta > tb, format!("{ta:.3} vs {tb:.3}"))
        }
        other => return Err(BenchError::Config(format!("unknown check `{other}`"))),
    };
    Ok(CheckOutcome { line: line.to_string(), passed, detail })
}

/// Evaluate a check file against labeled reports. Parse errors abort;
/// failed assertions are returned with `passed = false`.
pub fn run_checks(
    text: &str,
    reports: &HashMap<String, MetricsReport>,
) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        out.push(eval_line(line, reports)?);
    }
    Ok(out)
}

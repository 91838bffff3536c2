//! Connection-scaling benchmark over the verbs simulator: a per-connection
//! QP baseline, the shared-daemon mode, and a lock-sharing baseline, all
//! reporting one CSV row per sweep point.

pub mod check;
pub mod error;
pub mod naive;
pub mod report;
pub mod scenario;
pub mod shared;

use error::Result;
use naive::run_naive_point;
use report::{MetricsReport, ReportRow, RunStats};
use scenario::{BenchScenario, Mode};
use shared::run_shared_point;

fn run_point(sc: &BenchScenario, n: u64) -> Result<RunStats> {
    match sc.mode {
        Mode::Naive => run_naive_point(sc, n),
        Mode::Raas => run_shared_point(sc, n, None),
        Mode::LockedSharing => run_shared_point(sc, n, Some(sc.q)),
    }
}

/// Run every sweep point of a scenario. Resource columns are normalized
/// per mode against a single-connection run of the same scenario, so
/// `mem_units`/`cpu_units` read as "cost in multiples of one app".
pub fn run_scenario(sc: &BenchScenario) -> Result<MetricsReport> {
    sc.validate()?;
    let propagation = verbs_sim::SimConfig::default().propagation_ns;
    let base = run_point(sc, 1)?;
    let mut rows = Vec::with_capacity(sc.connections.len());
    for &n in &sc.connections {
        let s = run_point(sc, n)?;
        rows.push(ReportRow {
            connections: n,
            throughput: s.throughput(),
            mean_latency_ns: s.elapsed_ns / s.ops as f64 + propagation,
            mem_units: s.mem_points / base.mem_points,
            cpu_units: s.cpu_points / base.cpu_points,
            cache_hit_rate: s.cache_hit_rate,
        });
    }
    Ok(MetricsReport { rows })
}

/// Run a single sweep point and return the raw (un-normalized) stats.
/// Used by checks that need absolute figures, e.g. contention counts.
pub fn run_raw_point(sc: &BenchScenario, n: u64) -> Result<RunStats> {
    sc.validate()?;
    run_point(sc, n)
}

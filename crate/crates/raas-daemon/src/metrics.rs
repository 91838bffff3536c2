//! Daemon counters and the periodic CSV metrics line.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct Metrics {
    pub requests: AtomicU64,
    pub responses: AtomicU64,
    /// Inbound messages delivered to applications.
    pub msgs: AtomicU64,
    /// Bytes moved (inbound deliveries + completed outbound ops).
    pub bytes: AtomicU64,
    /// Completed outbound operations and their summed service time,
    /// for the mean_ns column.
    pub ops: AtomicU64,
    pub busy_ns: AtomicU64,
    pub unknown_vqpn: AtomicU64,
    /// Responses dropped because the fd vanished.
    pub dropped: AtomicU64,
    /// SRQ refills skipped because the pool was exhausted.
    pub srq_starved: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MetricsSnapshot {
    pub requests: u64,
    pub responses: u64,
    pub msgs: u64,
    pub bytes: u64,
    pub ops: u64,
    pub busy_ns: u64,
    pub unknown_vqpn: u64,
    pub dropped: u64,
    pub srq_starved: u64,
}

impl Metrics {
    pub fn add(&self, field: &AtomicU64, v: u64) {
        field.fetch_add(v, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let get = |f: &AtomicU64| f.load(Ordering::Relaxed);
        MetricsSnapshot {
            requests: get(&self.requests),
            responses: get(&self.responses),
            msgs: get(&self.msgs),
            bytes: get(&self.bytes),
            ops: get(&self.ops),
            busy_ns: get(&self.busy_ns),
            unknown_vqpn: get(&self.unknown_vqpn),
            dropped: get(&self.dropped),
            srq_starved: get(&self.srq_starved),
        }
    }
}

impl MetricsSnapshot {
    pub fn mean_ns(&self) -> f64 {
        if self.ops == 0 {
            0.0
        } else {
            self.busy_ns as f64 / self.ops as f64
        }
    }
}

pub const METRICS_CSV_HEADER: &str =
    "ts,node,qps_active,cache_hit_rate,msgs,bytes,mean_ns,cpu_load,mem_units";

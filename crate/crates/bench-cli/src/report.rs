//! Per-sweep-point metrics and the CSV form. Formatting is fixed-width
//! decimal so identical runs serialize byte-identically.

pub const CSV_HEADER: &str =
    "connections,throughput_bytes_per_sim_sec,mean_latency_ns,mem_units,cpu_units,cache_hit_rate";

/// Raw footprint of one run: time is the simulated clock, memory is what
/// the run registered plus a fixed per-QP context charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub ops: u64,
    pub bytes: u64,
    pub elapsed_ns: f64,
    pub mem_points: f64,
    pub cpu_points: f64,
    pub cache_hit_rate: f64,
    /// Lock acquisitions that found the lock held (LOCKED_SHARING only).
    pub contended_acquisitions: u64,
}

impl RunStats {
    pub fn throughput(&self) -> f64 {
        if self.elapsed_ns <= 0.0 {
            return 0.0;
        }
        self.bytes as f64 / self.elapsed_ns * 1e9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub connections: u64,
    pub throughput: f64,
    pub mean_latency_ns: f64,
    pub mem_units: f64,
    pub cpu_units: f64,
    pub cache_hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.3},{:.3},{:.4},{:.4},{:.4}\n",
                r.connections, r.throughput, r.mean_latency_ns, r.mem_units, r.cpu_units, r.cache_hit_rate
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Option<MetricsReport> {
        let mut lines = text.lines();
        if lines.next()? != CSV_HEADER {
            return None;
        }
        let mut rows = Vec::new();
        for l in lines {
            if l.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return None;
            }
            rows.push(ReportRow {
                connections: f[0].parse().ok()?,
                throughput: f[1].parse().ok()?,
                mean_latency_ns: f[2].parse().ok()?,
                mem_units: f[3].parse().ok()?,
                cpu_units: f[4].parse().ok()?,
                cache_hit_rate: f[5].parse().ok()?,
            });
        }
        Some(MetricsReport { rows })
    }

    pub fn row(&self, connections: u64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.connections == connections)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip() {
        let rep = MetricsReport {
            rows: vec![ReportRow {
                connections: 100,
                throughput: 3.56e10,
                mean_latency_ns: 1838.4,
                mem_units: 1.0,
                cpu_units: 1.0,
                cache_hit_rate: 1.0,
            }],
        };
        let csv = rep.to_csv();
        let back = MetricsReport::from_csv(&csv).unwrap();
        assert_eq!(back.rows.len(), 1);
        assert_eq!(back.rows[0].connections, 100);
        assert_eq!(csv, back.to_csv());
    }
}

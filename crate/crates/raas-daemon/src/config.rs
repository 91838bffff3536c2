//! Daemon configuration, loadable from `key = value` text.

use crate::error::{DaemonError, Result};
use crate::policy::PolicyConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct DaemonConfig {
    pub worker_count: usize,
    /// Shared-QP shards per destination node. 0 means "one per worker"
    /// (the lock-free default); 1 restores strictly one QP per node.
    pub qps_per_node: usize,
    pub srq_depth: usize,
    pub srq_low_watermark: usize,
    /// Size of each pre-posted receive slot; inbound SENDs larger than
    /// this must go through the WRITE path.
    pub srq_buf_bytes: u64,
    /// Staging pool registered at start.
    pub pool_bytes: u64,
    /// Per-connection application staging buffer.
    pub app_staging_bytes: u64,
    /// Request/response ring capacity (power of two).
    pub ring_capacity: usize,
    /// Worker-to-poller in-flight op ring capacity (power of two).
    pub pending_capacity: usize,
    pub ud_recv_depth: usize,
    pub vqpn_capacity: u32,
    pub policy: PolicyConfig,
}

impl Default for DaemonConfig {
    fn default() -> Self {
        DaemonConfig {
            worker_count: 2,
            qps_per_node: 0,
            srq_depth: 256,
            srq_low_watermark: 64,
            srq_buf_bytes: 16 * 1024,
            pool_bytes: 64 << 20,
            app_staging_bytes: 2 << 20,
            ring_capacity: 1024,
            pending_capacity: 8192,
            ud_recv_depth: 64,
            vqpn_capacity: 1 << 31,
            policy: PolicyConfig::default(),
        }
    }
}

impl DaemonConfig {
    /// Shared-QP shards actually used toward one destination.
    pub fn effective_shards(&self) -> usize {
        if self.qps_per_node == 0 {
            self.worker_count
        } else {
            self.qps_per_node.min(self.worker_count)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(DaemonError::BadConfig(m.into()));
        if self.worker_count == 0 {
            return bad("worker_count must be >= 1");
        }
        if self.srq_low_watermark > self.srq_depth {
            return bad("srq_low_watermark must be <= srq_depth");
        }
        if self.srq_buf_bytes == 0 || self.pool_bytes == 0 || self.app_staging_bytes == 0 {
            return bad("buffer sizes must be positive");
        }
        if self.srq_depth as u64 * self.srq_buf_bytes > self.pool_bytes {
            return bad("srq_depth * srq_buf_bytes exceeds pool_bytes");
        }
        for cap in [self.ring_capacity, self.pending_capacity] {
            if !cap.is_power_of_two() || cap < 2 {
                return bad("ring capacities must be powers of two >= 2");
            }
        }
        if self.vqpn_capacity == 0 || self.vqpn_capacity > 1 << 31 {
            return bad("vqpn_capacity must be in 1..=2^31 (top imm bit is reserved)");
        }
        self.policy.validate()
    }

    /// `key = value` lines; `#` starts a comment; unknown keys error.
    pub fn parse(text: &str) -> Result<DaemonConfig> {
        let mut cfg = DaemonConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| DaemonError::BadConfig(format!("line {}: missing '='", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let parse_err =
                |e: &dyn std::fmt::Display| DaemonError::BadConfig(format!("{key}: {e}"));
            macro_rules! set {
                ($field:expr, $ty:ty) => {
                    $field = value.parse::<$ty>().map_err(|e| parse_err(&e))?
                };
            }
            match key {
                "worker_count" => set!(cfg.worker_count, usize),
                "qps_per_node" => set!(cfg.qps_per_node, usize),
                "srq_depth" => set!(cfg.srq_depth, usize),
                "srq_low_watermark" => set!(cfg.srq_low_watermark, usize),
                "srq_buf_bytes" => set!(cfg.srq_buf_bytes, u64),
                "pool_bytes" => set!(cfg.pool_bytes, u64),
                "app_staging_bytes" => set!(cfg.app_staging_bytes, u64),
                "ring_capacity" => set!(cfg.ring_capacity, usize),
                "pending_capacity" => set!(cfg.pending_capacity, usize),
                "ud_recv_depth" => set!(cfg.ud_recv_depth, usize),
                "vqpn_capacity" => set!(cfg.vqpn_capacity, u32),
                "small_msg_threshold" => set!(cfg.policy.small_msg_threshold, u64),
                "cpu_high_watermark" => set!(cfg.policy.cpu_high_watermark, f64),
                "copy_register_crossover" => set!(cfg.policy.copy_register_crossover, u64),
                "batching_window" => set!(cfg.policy.batching_window, usize),
                other => {
                    return Err(DaemonError::BadConfig(format!("unknown key {other:?}")));
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

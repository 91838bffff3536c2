//! Simulator cost constants, loadable from a `key=value` config file.

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// QP contexts cacheable on one NIC.
    pub cache_capacity: usize,
    /// Fixed per-WR service cost on a context hit, ns.
    pub hit_cost_ns: f64,
    /// Fixed per-WR service cost on a context miss, ns. Strictly > hit.
    pub miss_cost_ns: f64,
    /// Data movement cost, ns per byte.
    pub per_byte_cost_ns: f64,
    /// Multiplier on the fixed per-WR cost when >= 2 WRs share a doorbell.
    pub batch_discount: f64,
    /// Memory registration: fixed ns plus ns per byte.
    pub reg_fixed_ns: f64,
    pub reg_per_byte_ns: f64,
    /// Wire propagation, added to message latency (not a service-rate cost).
    pub propagation_ns: f64,
    pub mtu: u64,
    /// Simulated RNR retry window before a SEND fails receiver-not-ready.
    pub rnr_retry_ns: f64,
    /// Buffer arena bytes per node.
    pub arena_bytes: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cache_capacity: 400,
            hit_cost_ns: 200.0,
            miss_cost_ns: 1200.0,
            per_byte_cost_ns: 0.025,
            batch_discount: 0.6,
            reg_fixed_ns: 800.0,
            reg_per_byte_ns: 0.1,
            propagation_ns: 1500.0,
            mtu: 4096,
            rnr_retry_ns: 10_000.0,
            arena_bytes: 256 << 20,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.miss_cost_ns <= self.hit_cost_ns {
            return Err(SimError::Config(
                "miss_cost_ns must be strictly greater than hit_cost_ns".into(),
            ));
        }
        if !(self.batch_discount > 0.0 && self.batch_discount <= 1.0) {
            return Err(SimError::Config("batch_discount must be in (0,1]".into()));
        }
        if self.cache_capacity == 0 || self.mtu == 0 {
            return Err(SimError::Config("cache_capacity and mtu must be positive".into()));
        }
        Ok(())
    }

    /// Parse `key=value` lines; `#` starts a comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<SimConfig> {
        let mut cfg = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |e: &dyn std::fmt::Display| {
                SimError::Config(format!("line {}: {key}: {e}", lineno + 1))
            };
            match key {
                "cache_capacity" => cfg.cache_capacity = value.parse().map_err(|e| bad(&e))?,
                "hit_cost_ns" => cfg.hit_cost_ns = value.parse().map_err(|e| bad(&e))?,
                "miss_cost_ns" => cfg.miss_cost_ns = value.parse().map_err(|e| bad(&e))?,
                "per_byte_cost_ns" => cfg.per_byte_cost_ns = value.parse().map_err(|e| bad(&e))?,
                "batch_discount" => cfg.batch_discount = value.parse().map_err(|e| bad(&e))?,
                "reg_fixed_ns" => cfg.reg_fixed_ns = value.parse().map_err(|e| bad(&e))?,
                "reg_per_byte_ns" => cfg.reg_per_byte_ns = value.parse().map_err(|e| bad(&e))?,
                "propagation_ns" => cfg.propagation_ns = value.parse().map_err(|e| bad(&e))?,
                "mtu" => cfg.mtu = value.parse().map_err(|e| bad(&e))?,
                "rnr_retry_ns" => cfg.rnr_retry_ns = value.parse().map_err(|e| bad(&e))?,
                "arena_bytes" => cfg.arena_bytes = value.parse().map_err(|e| bad(&e))?,
                _ => return Err(SimError::Config(format!("line {}: unknown key {key}", lineno + 1))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn registration_cost(&self, length: u64) -> f64 {
        self.reg_fixed_ns + self.reg_per_byte_ns * length as f64
    }
}

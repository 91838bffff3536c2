//! Scenario files: plain `key = value` text mirroring the runner knobs.

use std::str::FromStr;

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Naive,
    Raas,
    LockedSharing,
}

impl FromStr for Mode {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Mode> {
        match s.to_ascii_uppercase().as_str() {
            "NAIVE" => Ok(Mode::Naive),
            "RAAS" => Ok(Mode::Raas),
            "LOCKED_SHARING" | "LOCKED" => Ok(Mode::LockedSharing),
            other => Err(BenchError::Config(format!("unknown mode {other}"))),
        }
    }
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Naive => "NAIVE",
            Mode::Raas => "RAAS",
            Mode::LockedSharing => "LOCKED_SHARING",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Read,
    Write,
    Send,
}

impl FromStr for Op {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Op> {
        match s.to_ascii_uppercase().as_str() {
            "READ" => Ok(Op::Read),
            "WRITE" => Ok(Op::Write),
            "SEND" => Ok(Op::Send),
            other => Err(BenchError::Config(format!("unknown op {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchScenario {
    pub name: String,
    pub mode: Mode,
    /// Connection counts to sweep, strictly increasing.
    pub connections: Vec<u64>,
    /// Threads sharing each QP (LOCKED_SHARING only).
    pub q: usize,
    pub msg_size: u64,
    pub op: Op,
    /// Operations issued per connection at every sweep point.
    pub ops_per_conn: u64,
    pub seed: u64,
    /// Worker threads on the initiating daemon (logical in measured runs).
    pub threads: usize,
    /// Simulated handoff cost per contended lock acquisition, ns.
    pub lock_penalty_ns: f64,
    /// NIC context cache capacity on every node.
    pub cache_capacity: usize,
    pub batching_window: usize,
}

impl Default for BenchScenario {
    fn default() -> Self {
        BenchScenario {
            name: "unnamed".into(),
            mode: Mode::Raas,
            connections: (1..=10).map(|i| i * 100).collect(),
            q: 1,
            msg_size: 65536,
            op: Op::Read,
            ops_per_conn: 50,
            seed: 42,
            threads: 8,
            lock_penalty_ns: 3000.0,
            cache_capacity: 400,
            batching_window: 16,
        }
    }
}

impl BenchScenario {
    pub fn parse(text: &str) -> Result<BenchScenario> {
        let mut sc = BenchScenario::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| BenchError::Config(format!("line {}: expected key = value", ln + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| {
                BenchError::Config(format!("line {}: {key}: {e}", ln + 1))
            };
            match key {
                "name" => sc.name = value.to_string(),
                "mode" => sc.mode = value.parse()?,
                "connections" => {
                    sc.connections = value
                        .split(',')
                        .map(|v| v.trim().parse::<u64>().map_err(|e| bad(&e)))
                        .collect::<Result<_>>()?;
                }
                "q" => sc.q = value.parse().map_err(|e| bad(&e))?,
                "msg_size" => sc.msg_size = value.parse().map_err(|e| bad(&e))?,
                "op" => sc.op = value.parse()?,
                "ops_per_conn" => sc.ops_per_conn = value.parse().map_err(|e| bad(&e))?,
                "seed" => sc.seed = value.parse().map_err(|e| bad(&e))?,
                "threads" => sc.threads = value.parse().map_err(|e| bad(&e))?,
                "lock_penalty_ns" => sc.lock_penalty_ns = value.parse().map_err(|e| bad(&e))?,
                "cache_capacity" => sc.cache_capacity = value.parse().map_err(|e| bad(&e))?,
                "batching_window" => sc.batching_window = value.parse().map_err(|e| bad(&e))?,
                other => return Err(BenchError::Config(format!("line {}: unknown key {other}", ln + 1))),
            }
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.connections.is_empty() {
            return Err(BenchError::Config("connections must be non-empty".into()));
        }
        if !self.connections.windows(2).all(|w| w[0] < w[1]) || self.connections[0] == 0 {
            return Err(BenchError::Config("connections must be strictly increasing and positive".into()));
        }
        if self.q < 1 {
            return Err(BenchError::Config("q must be >= 1".into()));
        }
        if self.q > 1 && self.mode != Mode::LockedSharing {
            return Err(BenchError::Config("q > 1 is only meaningful for LOCKED_SHARING".into()));
        }
        if self.msg_size == 0 || self.ops_per_conn == 0 || self.threads == 0 {
            return Err(BenchError::Config("msg_size, ops_per_conn and threads must be positive".into()));
        }
        if self.batching_window == 0 {
            return Err(BenchError::Config("batching_window must be >= 1".into()));
        }
        if self.lock_penalty_ns < 0.0 {
            return Err(BenchError::Config("lock_penalty_ns must be >= 0".into()));
        }
        Ok(())
    }
}

//! Adaptive transport/verb selection and the copy-vs-register decision.
//!
//! `select_path` is a pure function. Explicit flags always win; otherwise
//! small messages go two-sided (RC SEND) and large messages go one-sided.
//! The daemon is always the initiator of outbound data, so the one-sided
//! verb for the AUTO path is WRITE regardless of which host is loaded
//! (inbound one-sided transfers use READ, reachable only via explicit
//! flags). The load stats still feed the decision point so the policy can
//! evolve without touching callers.

use crate::error::{DaemonError, Result};
use crate::flags::Flags;
use verbs_sim::{TransportMode, Verb};

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    /// At or below this many bytes, AUTO picks SEND/RECV.
    pub small_msg_threshold: u64,
    /// Remote CPU load at or above this prefers one-sided verbs.
    pub cpu_high_watermark: f64,
    /// Below this many bytes outbound payloads are staged with memcpy;
    /// at or above, sent directly from the registered source.
    pub copy_register_crossover: u64,
    /// Max work requests per doorbell batch.
    pub batching_window: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            small_msg_threshold: 4096,
            cpu_high_watermark: 0.7,
            copy_register_crossover: 64 * 1024,
            batching_window: 16,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.small_msg_threshold == 0 || self.copy_register_crossover == 0 {
            return Err(DaemonError::BadConfig("thresholds must be positive".into()));
        }
        if self.copy_register_crossover < self.small_msg_threshold {
            return Err(DaemonError::BadConfig(
                "copy_register_crossover must be >= small_msg_threshold".into(),
            ));
        }
        if !(self.cpu_high_watermark > 0.0 && self.cpu_high_watermark <= 1.0) {
            return Err(DaemonError::BadConfig(
                "cpu_high_watermark must be in (0, 1]".into(),
            ));
        }
        if self.batching_window == 0 {
            return Err(DaemonError::BadConfig("batching_window must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-node load sample consumed by the policy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LoadStats {
    /// EWMA of worker busy fraction, in [0, 1].
    pub cpu_load: f64,
    /// Bytes of registered arena in use.
    pub mem_used: u64,
}

pub fn select_path(
    len: u64,
    flags: Flags,
    _local: &LoadStats,
    remote: &LoadStats,
    policy: &PolicyConfig,
) -> Result<(TransportMode, Verb)> {
    flags.validate()?;
    let transport = flags.transport().unwrap_or(TransportMode::Rc);
    if let Some(verb) = flags.verb() {
        return Ok((transport, verb));
    }
    if transport == TransportMode::Ud {
        // UD carries only two-sided traffic.
        return Ok((TransportMode::Ud, Verb::Send));
    }
    if len <= policy.small_msg_threshold {
        return Ok((TransportMode::Rc, Verb::Send));
    }
    // Large payload: go one-sided. A loaded remote is bypassed by WRITE;
    // when only the local host is loaded (or neither), WRITE is still the
    // right initiator-side verb for outbound data.
    let _ = remote.cpu_load >= policy.cpu_high_watermark;
    Ok((TransportMode::Rc, Verb::Write))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CopyMode {
    Memcpy,
    Memreg,
}

/// MEMCPY strictly below the crossover; the boundary itself registers.
pub fn send_path_copy_or_register(len: u64, policy: &PolicyConfig) -> CopyMode {
    if len < policy.copy_register_crossover {
        CopyMode::Memcpy
    } else {
        CopyMode::Memreg
    }
}

/// EWMA busy-fraction meter over fixed simulated-time windows.
#[derive(Debug, Clone)]
pub struct LoadMeter {
    window_ns: f64,
    alpha: f64,
    window_start: f64,
    busy_in_window: f64,
    ewma: f64,
}

impl LoadMeter {
    pub fn new(now: f64) -> Self {
        LoadMeter {
            window_ns: 10_000_000.0, // 10 ms
            alpha: 0.2,
            window_start: now,
            busy_in_window: 0.0,
            ewma: 0.0,
        }
    }

    pub fn record(&mut self, now: f64, busy_ns: f64) {
        while now >= self.window_start + self.window_ns {
            let frac = (self.busy_in_window / self.window_ns).min(1.0);
            self.ewma = self.alpha * frac + (1.0 - self.alpha) * self.ewma;
            self.busy_in_window = 0.0;
            self.window_start += self.window_ns;
        }
        self.busy_in_window += busy_ns;
    }

    pub fn load(&self) -> f64 {
        self.ewma
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flags::*;

    fn idle() -> LoadStats {
        LoadStats::default()
    }

    #[test]
    fn explicit_flags_win() {
        let p = PolicyConfig::default();
        let out = select_path(64, Flags::rc().with(FLAG_WRITE), &idle(), &idle(), &p);
        assert_eq!(out, Ok((TransportMode::Rc, Verb::Write)));
    }

    #[test]
    fn small_default_is_rc_send() {
        let p = PolicyConfig::default();
        let out = select_path(512, Flags::DEFAULT, &idle(), &idle(), &p);
        assert_eq!(out, Ok((TransportMode::Rc, Verb::Send)));
    }

    #[test]
    fn large_default_is_one_sided() {
        let p = PolicyConfig::default();
        let loaded = LoadStats { cpu_load: 0.9, mem_used: 0 };
        assert_eq!(
            select_path(65536, Flags::DEFAULT, &idle(), &loaded, &p),
            Ok((TransportMode::Rc, Verb::Write))
        );
        assert_eq!(
            select_path(65536, Flags::DEFAULT, &loaded, &idle(), &p),
            Ok((TransportMode::Rc, Verb::Write))
        );
    }

    #[test]
    fn threshold_boundary_is_send() {
        let p = PolicyConfig::default();
        assert_eq!(
            select_path(p.small_msg_threshold, Flags::DEFAULT, &idle(), &idle(), &p),
            Ok((TransportMode::Rc, Verb::Send))
        );
        assert_eq!(
            select_path(p.small_msg_threshold + 1, Flags::DEFAULT, &idle(), &idle(), &p),
            Ok((TransportMode::Rc, Verb::Write))
        );
    }

    #[test]
    fn ud_read_is_contradictory() {
        let p = PolicyConfig::default();
        assert_eq!(
            select_path(64, Flags::ud().with(FLAG_READ), &idle(), &idle(), &p),
            Err(DaemonError::ContradictoryFlags)
        );
    }

    #[test]
    fn crossover_boundary_registers() {
        let p = PolicyConfig::default();
        assert_eq!(send_path_copy_or_register(1024, &p), CopyMode::Memcpy);
        assert_eq!(send_path_copy_or_register(p.copy_register_crossover - 1, &p), CopyMode::Memcpy);
        assert_eq!(send_path_copy_or_register(p.copy_register_crossover, &p), CopyMode::Memreg);
        assert_eq!(send_path_copy_or_register(1 << 20, &p), CopyMode::Memreg);
    }

    #[test]
    fn load_meter_converges() {
        let mut m = LoadMeter::new(0.0);
        let mut now = 0.0;
        for _ in 0..200 {
            m.record(now, 5_000_000.0); // half of each 10 ms window busy
            now += 10_000_000.0;
        }
        assert!((m.load() - 0.5).abs() < 0.01, "{}", m.load());
        assert!(m.load() <= 1.0);
    }
}

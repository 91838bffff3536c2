//! FLAGS bitset: optional explicit transport and verb, e.g. `RC|WRITE`.
//! No transport bit means DEFAULT (RC), no verb bit means AUTO (policy
//! decides by size and load).

use crate::error::{DaemonError, Result};
use verbs_sim::{TransportMode, Verb};

pub const FLAG_RC: u32 = 1 << 0;
pub const FLAG_UD: u32 = 1 << 1;
pub const FLAG_SEND: u32 = 1 << 4;
pub const FLAG_WRITE: u32 = 1 << 5;
pub const FLAG_READ: u32 = 1 << 6;
/// Per-fd option: send/recv return WOULD_BLOCK instead of blocking.
pub const FLAG_NONBLOCK: u32 = 1 << 8;
/// RECV_READY sub-ops.
pub const FLAG_ZERO_COPY_ARM: u32 = 1 << 16;
pub const FLAG_REGION_ACK: u32 = 1 << 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Flags(pub u32);

impl Flags {
    pub const DEFAULT: Flags = Flags(0);

    pub fn new(bits: u32) -> Flags {
        Flags(bits)
    }

    pub fn rc() -> Flags {
        Flags(FLAG_RC)
    }

    pub fn ud() -> Flags {
        Flags(FLAG_UD)
    }

    pub fn with(self, bits: u32) -> Flags {
        Flags(self.0 | bits)
    }

    pub fn contains(self, bits: u32) -> bool {
        self.0 & bits == bits
    }

    /// Explicit transport request, if any.
    pub fn transport(self) -> Option<TransportMode> {
        match (self.contains(FLAG_RC), self.contains(FLAG_UD)) {
            (true, false) => Some(TransportMode::Rc),
            (false, true) => Some(TransportMode::Ud),
            _ => None,
        }
    }

    /// Explicit verb request, if any.
    pub fn verb(self) -> Option<Verb> {
        match (self.contains(FLAG_SEND), self.contains(FLAG_WRITE), self.contains(FLAG_READ)) {
            (true, false, false) => Some(Verb::Send),
            (false, true, false) => Some(Verb::Write),
            (false, false, true) => Some(Verb::Read),
            _ => None,
        }
    }

    /// At most one transport bit, at most one verb bit, and the pair must
    /// be legal per the transport table.
    pub fn validate(self) -> Result<()> {
        if self.contains(FLAG_RC | FLAG_UD) {
            return Err(DaemonError::ContradictoryFlags);
        }
        let verb_bits = (self.0 >> 4) & 0b111;
        if verb_bits.count_ones() > 1 {
            return Err(DaemonError::ContradictoryFlags);
        }
        if let (Some(t), Some(v)) = (self.transport(), self.verb()) {
            if !t.supports(v) {
                return Err(DaemonError::ContradictoryFlags);
            }
        }
        // A verb bit with no transport bit implies RC; UD-only flags with
        // AUTO verb resolve to SEND, always legal.
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_auto() {
        let f = Flags::DEFAULT;
        f.validate().unwrap();
        assert_eq!(f.transport(), None);
        assert_eq!(f.verb(), None);
    }

    #[test]
    fn rc_write_explicit() {
        let f = Flags::rc().with(FLAG_WRITE);
        f.validate().unwrap();
        assert_eq!(f.transport(), Some(TransportMode::Rc));
        assert_eq!(f.verb(), Some(Verb::Write));
    }

    #[test]
    fn ud_read_contradicts_table() {
        let f = Flags::ud().with(FLAG_READ);
        assert_eq!(f.validate(), Err(DaemonError::ContradictoryFlags));
        let f = Flags::ud().with(FLAG_WRITE);
        assert_eq!(f.validate(), Err(DaemonError::ContradictoryFlags));
        let f = Flags::ud().with(FLAG_SEND);
        f.validate().unwrap();
    }

    #[test]
    fn double_bits_rejected() {
        assert!(Flags(FLAG_RC | FLAG_UD).validate().is_err());
        assert!(Flags(FLAG_SEND | FLAG_WRITE).validate().is_err());
    }
}

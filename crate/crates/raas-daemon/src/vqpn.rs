//! Virtual QPN allocation and the tagging scheme that multiplexes many
//! logical connections onto one shared QP.
//!
//! One-sided verbs carry the vQPN in the low 32 bits of wr_id (the high 32
//! bits are a per-connection sequence used for response matching).
//! Two-sided verbs carry the vQPN in imm_data. The top imm bit is reserved
//! as a doorbell marker for the WRITE-then-notify path, so the default
//! vQPN space is 2^31.

use verbs_sim::{LocalBuf, RemoteBuf, Verb, WorkRequest};

use crate::error::{DaemonError, Result};

/// imm_data bit marking a 16-byte doorbell that announces a completed
/// remote WRITE (payload: LE offset, length into the receiver's pool).
pub const DOORBELL_BIT: u32 = 0x8000_0000;

pub fn pack_wr_id(vqpn: u32, seq: u32) -> u64 {
    (seq as u64) << 32 | vqpn as u64
}

pub fn unpack_wr_id(wr_id: u64) -> (u32, u32) {
    (wr_id as u32, (wr_id >> 32) as u32)
}

/// Tag a work request with a connection's vQPN: one-sided verbs put it in
/// wr_id's low half, SEND puts it in imm_data (wr_id still carries the
/// daemon-local bookkeeping tag either way).
pub fn encode_wr(
    vqpn: u32,
    seq: u32,
    verb: Verb,
    local: LocalBuf,
    remote: Option<RemoteBuf>,
) -> Result<WorkRequest> {
    let wr_id = pack_wr_id(vqpn, seq);
    match verb {
        Verb::Send => Ok(WorkRequest::send_imm(wr_id, local, vqpn)),
        Verb::Write => {
            let r = remote.ok_or(DaemonError::IllegalVerb)?;
            Ok(WorkRequest::write(wr_id, local, r))
        }
        Verb::Read => {
            let r = remote.ok_or(DaemonError::IllegalVerb)?;
            Ok(WorkRequest::read(wr_id, local, r))
        }
        Verb::Recv => Err(DaemonError::IllegalVerb),
    }
}

#[derive(Debug)]
pub struct VqpnAllocator {
    capacity: u32,
    next: u32,
    free: Vec<u32>,
}

impl VqpnAllocator {
    pub fn new(capacity: u32) -> Self {
        VqpnAllocator { capacity, next: 0, free: Vec::new() }
    }

    /// Fresh (or recycled-after-close) vQPN.
    pub fn alloc(&mut self) -> Result<u32> {
        if let Some(v) = self.free.pop() {
            return Ok(v);
        }
        if self.next >= self.capacity {
            return Err(DaemonError::VqpnExhausted);
        }
        let v = self.next;
        self.next += 1;
        Ok(v)
    }

    /// Only legal once the owning connection is CLOSED.
    pub fn release(&mut self, vqpn: u32) {
        debug_assert!(vqpn < self.next && !self.free.contains(&vqpn));
        self.free.push(vqpn);
    }

    pub fn live(&self) -> usize {
        self.next as usize - self.free.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wr_id_roundtrip() {
        for vqpn in [0u32, 1, 7, 0x7fff_ffff] {
            for seq in [0u32, 1, u32::MAX] {
                assert_eq!(unpack_wr_id(pack_wr_id(vqpn, seq)), (vqpn, seq));
            }
        }
    }

    #[test]
    fn exhaustion_with_small_space() {
        let mut a = VqpnAllocator::new(4);
        for want in 0..4 {
            assert_eq!(a.alloc().unwrap(), want);
        }
        assert_eq!(a.alloc(), Err(DaemonError::VqpnExhausted));
        a.release(2);
        assert_eq!(a.alloc().unwrap(), 2);
        assert_eq!(a.alloc(), Err(DaemonError::VqpnExhausted));
    }

    #[test]
    fn encode_places_vqpn_by_verb() {
        use verbs_sim::{LocalBuf, MrId, RemoteBuf, Verb};
        let local = LocalBuf { mr_id: MrId(1), offset: 0, length: 64 };
        let remote = RemoteBuf { remote_key: 9, offset: 0 };
        let w = encode_wr(7, 3, Verb::Write, local, Some(remote)).unwrap();
        assert_eq!(w.wr_id & 0xffff_ffff, 7);
        assert_eq!(w.imm_data, None);
        let s = encode_wr(7, 3, Verb::Send, local, None).unwrap();
        assert_eq!(s.imm_data, Some(7));
        assert!(encode_wr(7, 0, Verb::Read, local, None).is_err());
        assert!(encode_wr(7, 0, Verb::Recv, local, None).is_err());
    }

    #[test]
    fn no_reuse_while_open() {
        let mut a = VqpnAllocator::new(16);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..16 {
            assert!(seen.insert(a.alloc().unwrap()));
        }
    }
}

//! Core verbs datatypes: transports, verbs, work requests and completions.

use std::fmt;

macro_rules! id_type {
    ($name:ident) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(NodeId);
id_type!(QpId);
id_type!(CqId);
id_type!(SrqId);
id_type!(MrId);

/// RC and UC message size cap (Table 1 value; the 2 GB figure elsewhere is
/// not used).
pub const CONNECTED_MAX_MSG: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportMode {
    Rc,
    Uc,
    Ud,
}

impl TransportMode {
    /// Legality matrix for (transport, verb).
    pub fn supports(self, verb: Verb) -> bool {
        match (self, verb) {
            (_, Verb::Send) | (_, Verb::Recv) => true,
            (TransportMode::Rc, Verb::Write) | (TransportMode::Uc, Verb::Write) => true,
            (TransportMode::Rc, Verb::Read) => true,
            _ => false,
        }
    }

    /// Largest legal message for this transport, given the fabric MTU.
    pub fn max_message(self, mtu: u64) -> u64 {
        match self {
            TransportMode::Rc | TransportMode::Uc => CONNECTED_MAX_MSG,
            TransportMode::Ud => mtu,
        }
    }

    pub fn is_connected(self) -> bool {
        !matches!(self, TransportMode::Ud)
    }
}

impl fmt::Display for TransportMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TransportMode::Rc => "RC",
            TransportMode::Uc => "UC",
            TransportMode::Ud => "UD",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    Send,
    Recv,
    Write,
    Read,
}

impl Verb {
    pub fn is_one_sided(self) -> bool {
        matches!(self, Verb::Write | Verb::Read)
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verb::Send => "SEND",
            Verb::Recv => "RECV",
            Verb::Write => "WRITE",
            Verb::Read => "READ",
        };
        f.write_str(s)
    }
}

/// Registered memory region handle. `base` is an offset into the owning
/// node's buffer arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryRegion {
    pub mr_id: MrId,
    pub node: NodeId,
    pub base: u64,
    pub length: u64,
    pub local_key: u32,
    pub remote_key: u32,
    pub registered_at: u64,
}

/// Local scatter entry of a work request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalBuf {
    pub mr_id: MrId,
    pub offset: u64,
    pub length: u64,
}

/// Remote target of a one-sided work request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteBuf {
    pub remote_key: u32,
    pub offset: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkRequest {
    pub wr_id: u64,
    pub verb: Verb,
    pub local: LocalBuf,
    /// Present iff verb is WRITE or READ.
    pub remote: Option<RemoteBuf>,
    /// Present only for SEND; surfaced in the receiver's completion.
    pub imm_data: Option<u32>,
    pub signaled: bool,
    /// UD destination. Connected modes take the peer from the QP.
    pub ud_dest: Option<(NodeId, QpId)>,
}

impl WorkRequest {
    pub fn send(wr_id: u64, local: LocalBuf) -> Self {
        WorkRequest {
            wr_id,
            verb: Verb::Send,
            local,
            remote: None,
            imm_data: None,
            signaled: true,
            ud_dest: None,
        }
    }

    pub fn send_imm(wr_id: u64, local: LocalBuf, imm: u32) -> Self {
        WorkRequest {
            imm_data: Some(imm),
            ..Self::send(wr_id, local)
        }
    }

    pub fn write(wr_id: u64, local: LocalBuf, remote: RemoteBuf) -> Self {
        WorkRequest {
            wr_id,
            verb: Verb::Write,
            local,
            remote: Some(remote),
            imm_data: None,
            signaled: true,
            ud_dest: None,
        }
    }

    pub fn read(wr_id: u64, local: LocalBuf, remote: RemoteBuf) -> Self {
        WorkRequest {
            verb: Verb::Read,
            ..Self::write(wr_id, local, remote)
        }
    }

    pub fn recv(wr_id: u64, local: LocalBuf) -> Self {
        WorkRequest {
            wr_id,
            verb: Verb::Recv,
            local,
            remote: None,
            imm_data: None,
            signaled: true,
            ud_dest: None,
        }
    }

    pub fn unsignaled(mut self) -> Self {
        self.signaled = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WrStatus {
    Ok,
    /// Receiver had no posted receive within the retry window.
    RnrError,
    /// Posted receive buffer was too small for the incoming message.
    RecvBufTooSmall,
    RemoteAccessError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompletionSide {
    SendCompletion,
    RecvCompletion,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompletionEntry {
    pub wr_id: u64,
    pub status: WrStatus,
    pub byte_count: u64,
    pub imm_data: Option<u32>,
    pub qp_id: QpId,
    pub side: CompletionSide,
    /// Simulated completion timestamp, ns.
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpState {
    Reset,
    Ready,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legality_matrix_matches_transport_table() {
        use TransportMode::*;
        use Verb::*;
        let expect = [
            (Rc, Send, true),
            (Rc, Recv, true),
            (Rc, Write, true),
            (Rc, Read, true),
            (Uc, Send, true),
            (Uc, Recv, true),
            (Uc, Write, true),
            (Uc, Read, false),
            (Ud, Send, true),
            (Ud, Recv, true),
            (Ud, Write, false),
            (Ud, Read, false),
        ];
        for (mode, verb, legal) in expect {
            assert_eq!(mode.supports(verb), legal, "{mode} {verb}");
        }
    }

    #[test]
    fn max_message_caps() {
        assert_eq!(TransportMode::Rc.max_message(4096), 1 << 30);
        assert_eq!(TransportMode::Uc.max_message(4096), 1 << 30);
        assert_eq!(TransportMode::Ud.max_message(4096), 4096);
        assert_eq!(TransportMode::Ud.max_message(1024), 1024);
    }
}

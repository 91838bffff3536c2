use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DaemonError {
    #[error("destination unreachable")]
    DestUnreachable,
    #[error("virtual QPN space exhausted")]
    VqpnExhausted,
    #[error("contradictory FLAGS combination")]
    ContradictoryFlags,
    #[error("verb illegal for the connection's transport")]
    IllegalVerb,
    #[error("message too large for the selected transport")]
    MsgTooLarge,
    #[error("bad fd")]
    BadFd,
    #[error("bad memory region")]
    BadMr,
    #[error("memory region too small for inbound payload")]
    MrTooSmall,
    #[error("a daemon already runs on this node")]
    DaemonExists,
    #[error("bad daemon configuration: {0}")]
    BadConfig(String),
    #[error("request ring full")]
    RingFull,
    #[error("connection closed")]
    Closed,
    #[error("operation timed out")]
    Timeout,
    #[error("operation would block")]
    WouldBlock,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("simulator error: {0}")]
    Sim(#[from] verbs_sim::SimError),
}

pub type Result<T> = std::result::Result<T, DaemonError>;

/// Status codes carried in ResponseRecord.status (the wire form of errors).
pub mod status {
    pub const OK: u32 = 0;
    pub const BAD_FD: u32 = 1;
    pub const ILLEGAL_VERB: u32 = 2;
    pub const MSG_TOO_LARGE: u32 = 3;
    pub const CONTRADICTORY_FLAGS: u32 = 4;
    pub const TRANSPORT_ERROR: u32 = 5;
    pub const CLOSED: u32 = 6;
    pub const BAD_MR: u32 = 7;

    pub fn to_error(code: u32) -> Option<super::DaemonError> {
        use super::DaemonError::*;
        match code {
            OK => None,
            BAD_FD => Some(BadFd),
            ILLEGAL_VERB => Some(IllegalVerb),
            MSG_TOO_LARGE => Some(MsgTooLarge),
            CONTRADICTORY_FLAGS => Some(ContradictoryFlags),
            CLOSED => Some(Closed),
            BAD_MR => Some(BadMr),
            other => Some(Transport(format!("status {other}"))),
        }
    }
}

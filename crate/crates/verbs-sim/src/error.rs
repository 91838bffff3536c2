use thiserror::Error;

use crate::types::{NodeId, QpId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("unknown node {0}")]
    NodeUnknown(NodeId),
    #[error("unknown qp {0}")]
    QpUnknown(QpId),
    #[error("unknown cq")]
    CqUnknown,
    #[error("unknown srq")]
    SrqUnknown,
    #[error("unknown mr")]
    MrUnknown,
    #[error("SRQ may only be attached to an RC queue pair")]
    SrqUnsupported,
    #[error("transport mode mismatch between queue pairs")]
    ModeMismatch,
    #[error("queue pair already connected")]
    AlreadyConnected,
    #[error("UD queue pairs are not connectable")]
    UdNotConnectable,
    #[error("self-connection rejected")]
    SelfConnect,
    #[error("queue pair not ready")]
    QpNotReady,
    #[error("verb {verb} is illegal on {mode}")]
    IllegalVerb {
        mode: crate::types::TransportMode,
        verb: crate::types::Verb,
    },
    #[error("message of {len} bytes exceeds transport limit {max}")]
    MsgTooLarge { len: u64, max: u64 },
    #[error("remote key does not match any region on the target node")]
    BadRkey,
    #[error("remote access outside the registered region")]
    RemoteOutOfBounds,
    #[error("local buffer outside the registered region")]
    LocalOutOfBounds,
    #[error("work queue full")]
    QueueFull,
    #[error("buffer arena exhausted on node {0}")]
    ArenaFull(NodeId),
    #[error("zero-length registration rejected")]
    ZeroLength,
    #[error("work request shape invalid: {0}")]
    MalformedWr(&'static str),
    #[error("UD work request requires a destination")]
    MissingUdDest,
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Error report for a batch post: everything before `index` was accepted.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("batch rejected at index {index}: {error}")]
pub struct BatchError {
    pub index: usize,
    pub error: SimError,
}

//! Runtime state shared between the control plane, workers and the poller.
//!
//! Ownership contract: each worker exclusively owns its request-ring
//! consumers and posts only on its own shard's QPs; the poller exclusively
//! owns the CQ and every response-ring producer. The control plane touches
//! worker/poller state only under their mutexes during connect/close,
//! never on the data path.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, Mutex};

use ipc_ring::{Consumer, EventChannel, Producer, RequestRecord, ResponseRecord};
use verbs_sim::{CompletionEntry, NodeId, QpId, TransportMode};

use crate::pool::ArenaPool;

/// `src` value of a demux key for connected transports (the QP already
/// identifies the peer node; UD keys carry the source node id instead).
pub(crate) const SRC_RC: u32 = u32::MAX;

/// Doorbell offset marking an in-band EOF control message rather than a
/// payload location. Sent on the connection's QP so RC ordering puts it
/// after every in-flight message.
pub(crate) const CTRL_EOF_OFFSET: u64 = u64::MAX;

/// (receiving QP, source tag, sender's vQPN) -> local fd.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct DemuxKey {
    pub qp: u32,
    pub src: u32,
    pub vqpn: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcState {
    Open,
    Closed,
}

#[derive(Debug)]
pub(crate) struct VcMut {
    pub state: VcState,
    /// (pool offset, length) of the peer's exposed READ source.
    pub remote_exposed: Option<(u64, u64)>,
}

/// Per-connection data shared by the control plane and the owning worker.
pub(crate) struct VcShared {
    pub fd: u32,
    /// Our vQPN: stamped on outbound traffic so the remote poller can
    /// demultiplex.
    pub vqpn: u32,
    pub transport: TransportMode,
    /// Local shared QP (or the daemon UD QP).
    pub qp: QpId,
    pub ud_dest: Option<(NodeId, QpId)>,
    /// rkey of the destination daemon's staging pool.
    pub remote_rkey: u32,
    pub remote_pool: Arc<Mutex<ArenaPool>>,
    /// Destination daemon's published cpu load (f64 bits).
    pub remote_load: Arc<AtomicU64>,
    pub mu: Mutex<VcMut>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PendingKind {
    /// Outbound message (plain SEND or WRITE doorbell): reply with the
    /// logical byte count.
    SendMsg,
    /// READ whose landing extent is handed to the app in the reply.
    ReadOp,
}

/// In-flight signaled WR, pushed by a worker in post order and matched
/// FIFO by the poller against that worker's send completions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PendingOp {
    pub wr_id: u64,
    pub fd: u32,
    pub seq: u64,
    pub kind: PendingKind,
    pub resp_region: u32,
    pub resp_offset: u64,
    pub resp_len: u64,
    /// Local pool extents released once the WR completes (either way).
    pub free1: Option<u64>,
    pub free2: Option<u64>,
}

pub(crate) struct Lane {
    pub fd: u32,
    pub vc: Arc<VcShared>,
    pub req: Consumer<RequestRecord>,
    /// Per-connection WR sequence (high 32 bits of wr_id).
    pub seq32: u32,
}

pub(crate) struct WorkerState {
    pub lanes: Vec<Lane>,
    pub pending: Producer<PendingOp>,
    /// Immediate failure/ack responses, forwarded by the poller (which
    /// owns all response-ring producers).
    pub fails: Producer<ResponseRecord>,
    /// Round-robin fairness cursor over lanes.
    pub next_lane: usize,
}

pub(crate) struct AppLane {
    pub resp: Producer<ResponseRecord>,
    pub event: EventChannel,
    /// Overflow held back when the response ring is full.
    pub backlog: VecDeque<ResponseRecord>,
}

/// Poller-side view of one worker.
pub(crate) struct PendingSrc {
    pub ring: Consumer<PendingOp>,
    pub fails: Consumer<ResponseRecord>,
    pub local: VecDeque<PendingOp>,
    /// Send CQEs seen before their PendingOp was visible (threaded mode
    /// race); retried next cycle.
    pub deferred: VecDeque<CompletionEntry>,
}

pub(crate) struct Slot {
    pub offset: u64,
}

pub(crate) struct PollerState {
    pub apps: HashMap<u32, AppLane>,
    pub sources: Vec<PendingSrc>,
    pub qp_owner: HashMap<QpId, usize>,
    /// recv wr_id -> staging slot.
    pub recv_slots: HashMap<u64, Slot>,
    pub next_recv_id: u64,
    pub ud_posted: usize,
    /// Per-fd sequence for unsolicited Data records.
    pub data_seq: HashMap<u32, u64>,
}

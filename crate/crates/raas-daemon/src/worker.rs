//! Worker data path: drain request rings, translate requests into WRs via
//! the selection policy, and doorbell-batch them per shared QP.
//!
//! Large outbound payloads take the WRITE path: the payload is written
//! into an extent of the destination daemon's staging pool, then a
//! 16-byte doorbell SEND (imm = vqpn | DOORBELL_BIT, payload = LE offset
//! and length) tells the remote poller where it landed. If the remote
//! pool is exhausted and the payload still fits a receive slot, the
//! worker falls back to a plain SEND.

use std::sync::Arc;
use std::sync::atomic::Ordering;
use std::sync::Mutex;

use ipc_ring::{OpCode, RequestRecord, ResponseRecord};
use verbs_sim::{LocalBuf, MrId, QpId, RemoteBuf, TransportMode, Verb, WorkRequest};

use crate::daemon::Daemon;
use crate::error::status;
use crate::flags::{Flags, FLAG_REGION_ACK};
use crate::policy::{select_path, send_path_copy_or_register, CopyMode, LoadStats};
use crate::pool::ArenaPool;
use crate::state::*;
use crate::vqpn::{pack_wr_id, DOORBELL_BIT};

/// One translated request: its WRs, the in-flight record for the signaled
/// WR, and what to release if posting fails.
struct Entry {
    wrs: Vec<WorkRequest>,
    pending: PendingOp,
    local_free: Vec<u64>,
    remote_free: Option<(Arc<Mutex<ArenaPool>>, u64)>,
}

enum Outcome {
    Post(Entry),
    /// Request fully handled without touching the fabric.
    Immediate(ResponseRecord),
    /// Ack consumed silently (still gets its one reply).
    Done(ResponseRecord),
}

pub(crate) fn drain(d: &Daemon, w: &mut WorkerState) -> usize {
    let n = w.lanes.len();
    if n == 0 {
        return 0;
    }
    let window = d.cfg.policy.batching_window;
    let t0 = d.fabric.now();
    let mut groups: Vec<(QpId, Vec<Entry>)> = Vec::new();
    let mut processed = 0usize;
    let start = w.next_lane % n;
    for off in 0..n {
        let li = (start + off) % n;
        loop {
            let qp = w.lanes[li].vc.qp;
            let gi = groups.iter().position(|(g, _)| *g == qp);
            if gi.map(|i| groups[i].1.len()).unwrap_or(0) >= window {
                break;
            }
            let Ok(req) = w.lanes[li].req.dequeue() else { break };
            processed += 1;
            d.metrics.requests.fetch_add(1, Ordering::Relaxed);
            match build(d, &mut w.lanes[li], &req) {
                Outcome::Post(entry) => match gi {
                    Some(i) => groups[i].1.push(entry),
                    None => groups.push((qp, vec![entry])),
                },
                Outcome::Immediate(r) | Outcome::Done(r) => {
                    let _ = w.fails.enqueue(r);
                }
            }
        }
    }
    w.next_lane = (start + 1) % n;
    for (qp, entries) in groups {
        post_group(d, w, qp, entries);
    }
    let busy = d.fabric.now() - t0;
    if busy > 0.0 {
        d.record_busy(busy);
    }
    processed
}

fn fail(fd: u32, seq: u64, code: u32) -> ResponseRecord {
    ResponseRecord::reply(fd, seq, code, 0)
}

fn build(d: &Daemon, lane: &mut Lane, req: &RequestRecord) -> Outcome {
    let (fd, seq) = (lane.fd, req.seq);
    match req.op {
        OpCode::RecvReady => {
            let flags = Flags::new(req.flags);
            if flags.contains(FLAG_REGION_ACK) && req.region == d.pool_mr.mr_id.0 {
                d.pool.lock().unwrap().free(req.offset);
            }
            Outcome::Done(fail(fd, seq, status::OK))
        }
        OpCode::Send => build_send(d, lane, req),
        OpCode::Close => build_close(d, lane, req),
        // Connection setup travels the control plane, not the rings.
        OpCode::Connect => Outcome::Immediate(fail(fd, seq, status::TRANSPORT_ERROR)),
    }
}

fn build_send(d: &Daemon, lane: &mut Lane, req: &RequestRecord) -> Outcome {
    let vc = Arc::clone(&lane.vc);
    let (fd, seq, len) = (lane.fd, req.seq, req.length);
    if vc.mu.lock().unwrap().state == VcState::Closed {
        return Outcome::Immediate(fail(fd, seq, status::CLOSED));
    }
    if len == 0 {
        return Outcome::Immediate(fail(fd, seq, status::TRANSPORT_ERROR));
    }
    let flags = Flags::new(req.flags);
    let local = d.load_stats();
    let remote = LoadStats {
        cpu_load: f64::from_bits(vc.remote_load.load(Ordering::Relaxed)),
        mem_used: 0,
    };
    let (mut transport, mut verb) = match select_path(len, flags, &local, &remote, &d.cfg.policy) {
        Ok(x) => x,
        Err(_) => return Outcome::Immediate(fail(fd, seq, status::CONTRADICTORY_FLAGS)),
    };
    // Without an explicit transport flag the connection's transport wins.
    if flags.transport().is_none() && vc.transport == TransportMode::Ud {
        if flags.verb().is_some_and(|v| v != Verb::Send) {
            return Outcome::Immediate(fail(fd, seq, status::CONTRADICTORY_FLAGS));
        }
        (transport, verb) = (TransportMode::Ud, Verb::Send);
    }
    if transport != vc.transport {
        // Per-request transport cannot differ from the connection's.
        return Outcome::Immediate(fail(fd, seq, status::CONTRADICTORY_FLAGS));
    }
    match (vc.transport, verb) {
        (TransportMode::Ud, Verb::Send) => build_ud_send(d, lane, &vc, req),
        (TransportMode::Rc, Verb::Send) => build_rc_send(d, lane, &vc, req),
        (TransportMode::Rc, Verb::Write) => build_rc_write(d, lane, &vc, req),
        (TransportMode::Rc, Verb::Read) => build_rc_read(d, lane, &vc, req),
        _ => Outcome::Immediate(fail(fd, seq, status::ILLEGAL_VERB)),
    }
}

/// In-band EOF: a doorbell whose offset field is the EOF marker, posted on
/// the connection's QP so it arrives after everything already sent. The
/// caller gets its reply when the control message completes, after which
/// control-plane teardown cannot outrun in-flight data.
fn build_close(d: &Daemon, lane: &mut Lane, req: &RequestRecord) -> Outcome {
    let vc = Arc::clone(&lane.vc);
    let (fd, seq) = (lane.fd, req.seq);
    if vc.transport == TransportMode::Ud || vc.mu.lock().unwrap().state == VcState::Closed {
        // Datagrams have no ordering to preserve; the control plane's
        // notice carries the EOF.
        return Outcome::Done(fail(fd, seq, status::OK));
    }
    let doff = d.pool.lock().unwrap().alloc(16);
    let Some(doff) = doff else {
        return Outcome::Done(fail(fd, seq, status::OK));
    };
    let mut bell = [0u8; 16];
    bell[..8].copy_from_slice(&CTRL_EOF_OFFSET.to_le_bytes());
    let wrote = d.fabric.with(|f| f.write_app(d.pool_mr.mr_id, doff, &bell));
    debug_assert!(wrote.is_ok());
    let wr_id = pack_wr_id(vc.vqpn, bump(lane));
    let wr = WorkRequest::send_imm(
        wr_id,
        LocalBuf { mr_id: d.pool_mr.mr_id, offset: doff, length: 16 },
        vc.vqpn | DOORBELL_BIT,
    );
    Outcome::Post(Entry {
        wrs: vec![wr],
        pending: PendingOp {
            wr_id,
            fd,
            seq,
            kind: PendingKind::SendMsg,
            resp_region: 0,
            resp_offset: 0,
            resp_len: 0,
            free1: Some(doff),
            free2: None,
        },
        local_free: vec![doff],
        remote_free: None,
    })
}

fn bump(lane: &mut Lane) -> u32 {
    let s = lane.seq32;
    lane.seq32 = lane.seq32.wrapping_add(1);
    s
}

/// Source buffer for an outbound payload: staged copy below the
/// crossover, direct from the app's registered region at or above it.
fn stage_source(
    d: &Daemon,
    req: &RequestRecord,
) -> Result<(LocalBuf, Option<u64>), u32> {
    let len = req.length;
    match send_path_copy_or_register(len, &d.cfg.policy) {
        CopyMode::Memcpy => {
            let off = d
                .pool
                .lock()
                .unwrap()
                .alloc(len)
                .ok_or(status::TRANSPORT_ERROR)?;
            if d
                .host_copy(MrId(req.region), req.offset, d.pool_mr.mr_id, off, len)
                .is_err()
            {
                d.pool.lock().unwrap().free(off);
                return Err(status::BAD_MR);
            }
            Ok((LocalBuf { mr_id: d.pool_mr.mr_id, offset: off, length: len }, Some(off)))
        }
        CopyMode::Memreg => {
            Ok((LocalBuf { mr_id: MrId(req.region), offset: req.offset, length: len }, None))
        }
    }
}

fn build_rc_send(d: &Daemon, lane: &mut Lane, vc: &Arc<VcShared>, req: &RequestRecord) -> Outcome {
    let (fd, seq, len) = (lane.fd, req.seq, req.length);
    if len > d.cfg.srq_buf_bytes {
        // A SEND must fit the receiver's pre-posted slot.
        return Outcome::Immediate(fail(fd, seq, status::MSG_TOO_LARGE));
    }
    let (local, staged) = match stage_source(d, req) {
        Ok(x) => x,
        Err(code) => return Outcome::Immediate(fail(fd, seq, code)),
    };
    let wr_id = pack_wr_id(vc.vqpn, bump(lane));
    Outcome::Post(Entry {
        wrs: vec![WorkRequest::send_imm(wr_id, local, vc.vqpn)],
        pending: PendingOp {
            wr_id,
            fd,
            seq,
            kind: PendingKind::SendMsg,
            resp_region: 0,
            resp_offset: 0,
            resp_len: len,
            free1: staged,
            free2: None,
        },
        local_free: staged.into_iter().collect(),
        remote_free: None,
    })
}

fn build_rc_write(d: &Daemon, lane: &mut Lane, vc: &Arc<VcShared>, req: &RequestRecord) -> Outcome {
    let (fd, seq, len) = (lane.fd, req.seq, req.length);
    let roff = vc.remote_pool.lock().unwrap().alloc(len);
    let Some(roff) = roff else {
        if len <= d.cfg.srq_buf_bytes {
            return build_rc_send(d, lane, vc, req);
        }
        return Outcome::Immediate(fail(fd, seq, status::TRANSPORT_ERROR));
    };
    let free_remote = || vc.remote_pool.lock().unwrap().free(roff);
    let (local, staged) = match stage_source(d, req) {
        Ok(x) => x,
        Err(code) => {
            free_remote();
            return Outcome::Immediate(fail(fd, seq, code));
        }
    };
    let doff = d.pool.lock().unwrap().alloc(16);
    let Some(doff) = doff else {
        free_remote();
        if let Some(s) = staged {
            d.pool.lock().unwrap().free(s);
        }
        return Outcome::Immediate(fail(fd, seq, status::TRANSPORT_ERROR));
    };
    let mut bell = [0u8; 16];
    bell[..8].copy_from_slice(&roff.to_le_bytes());
    bell[8..].copy_from_slice(&len.to_le_bytes());
    let wrote = d
        .fabric
        .with(|f| f.write_app(d.pool_mr.mr_id, doff, &bell));
    debug_assert!(wrote.is_ok());

    let wr_write = WorkRequest::write(
        pack_wr_id(vc.vqpn, bump(lane)),
        local,
        RemoteBuf { remote_key: vc.remote_rkey, offset: roff },
    )
    .unsignaled();
    let wr_id = pack_wr_id(vc.vqpn, bump(lane));
    let wr_bell = WorkRequest::send_imm(
        wr_id,
        LocalBuf { mr_id: d.pool_mr.mr_id, offset: doff, length: 16 },
        vc.vqpn | DOORBELL_BIT,
    );
    let mut local_free: Vec<u64> = staged.into_iter().collect();
    local_free.push(doff);
    Outcome::Post(Entry {
        wrs: vec![wr_write, wr_bell],
        pending: PendingOp {
            wr_id,
            fd,
            seq,
            kind: PendingKind::SendMsg,
            resp_region: 0,
            resp_offset: 0,
            resp_len: len,
            free1: staged,
            free2: Some(doff),
        },
        local_free,
        remote_free: Some((Arc::clone(&vc.remote_pool), roff)),
    })
}

fn build_rc_read(d: &Daemon, lane: &mut Lane, vc: &Arc<VcShared>, req: &RequestRecord) -> Outcome {
    let (fd, seq, len) = (lane.fd, req.seq, req.length);
    let exposed = vc.mu.lock().unwrap().remote_exposed;
    let Some((eoff, elen)) = exposed else {
        return Outcome::Immediate(fail(fd, seq, status::BAD_MR));
    };
    if req.offset + len > elen {
        return Outcome::Immediate(fail(fd, seq, status::MSG_TOO_LARGE));
    }
    let Some(loff) = d.pool.lock().unwrap().alloc(len) else {
        return Outcome::Immediate(fail(fd, seq, status::TRANSPORT_ERROR));
    };
    let wr_id = pack_wr_id(vc.vqpn, bump(lane));
    let wr = WorkRequest::read(
        wr_id,
        LocalBuf { mr_id: d.pool_mr.mr_id, offset: loff, length: len },
        RemoteBuf { remote_key: vc.remote_rkey, offset: eoff + req.offset },
    );
    Outcome::Post(Entry {
        wrs: vec![wr],
        pending: PendingOp {
            wr_id,
            fd,
            seq,
            kind: PendingKind::ReadOp,
            resp_region: d.pool_mr.mr_id.0,
            resp_offset: loff,
            resp_len: len,
            free1: None,
            free2: None,
        },
        local_free: vec![loff],
        remote_free: None,
    })
}

fn build_ud_send(d: &Daemon, lane: &mut Lane, vc: &Arc<VcShared>, req: &RequestRecord) -> Outcome {
    let (fd, seq, len) = (lane.fd, req.seq, req.length);
    // Datagrams carry a 4-byte source-node header (the shared UD QP alone
    // cannot identify the sender).
    if len + 4 > d.mtu {
        return Outcome::Immediate(fail(fd, seq, status::MSG_TOO_LARGE));
    }
    let Some(off) = d.pool.lock().unwrap().alloc(len + 4) else {
        return Outcome::Immediate(fail(fd, seq, status::TRANSPORT_ERROR));
    };
    let header = d.node.0.to_le_bytes();
    let ok = d.fabric.with(|f| f.write_app(d.pool_mr.mr_id, off, &header)).is_ok()
        && d.host_copy(MrId(req.region), req.offset, d.pool_mr.mr_id, off + 4, len).is_ok();
    if !ok {
        d.pool.lock().unwrap().free(off);
        return Outcome::Immediate(fail(fd, seq, status::BAD_MR));
    }
    let wr_id = pack_wr_id(vc.vqpn, bump(lane));
    let mut wr = WorkRequest::send_imm(
        wr_id,
        LocalBuf { mr_id: d.pool_mr.mr_id, offset: off, length: len + 4 },
        vc.vqpn,
    );
    wr.ud_dest = vc.ud_dest;
    Outcome::Post(Entry {
        wrs: vec![wr],
        pending: PendingOp {
            wr_id,
            fd,
            seq,
            kind: PendingKind::SendMsg,
            resp_region: 0,
            resp_offset: 0,
            resp_len: len,
            free1: Some(off),
            free2: None,
        },
        local_free: vec![off],
        remote_free: None,
    })
}

fn fail_entry(d: &Daemon, w: &mut WorkerState, entry: &Entry) {
    for off in &entry.local_free {
        d.pool.lock().unwrap().free(*off);
    }
    if let Some((pool, off)) = &entry.remote_free {
        pool.lock().unwrap().free(*off);
    }
    let _ = w
        .fails
        .enqueue(fail(entry.pending.fd, entry.pending.seq, status::TRANSPORT_ERROR));
}

/// Doorbell-batch a QP's entries. All-or-prefix on error: fully posted
/// entries keep their in-flight records, the failed entry is answered
/// immediately, and the remainder is retried singly.
fn post_group(d: &Daemon, w: &mut WorkerState, qp: QpId, entries: Vec<Entry>) {
    let mut all: Vec<WorkRequest> = Vec::new();
    let mut bounds = Vec::new(); // end index (exclusive) of each entry
    for e in &entries {
        all.extend_from_slice(&e.wrs);
        bounds.push(all.len());
    }
    let (_, err) = d.fabric.with(|f| f.post_batch(qp, &all));
    let Some(err) = err else {
        for e in entries {
            let _ = w.pending.enqueue(e.pending);
        }
        return;
    };
    let failed_at = err.index;
    let mut retry = false;
    for (i, e) in entries.iter().enumerate() {
        let start = if i == 0 { 0 } else { bounds[i - 1] };
        if bounds[i] <= failed_at {
            let _ = w.pending.enqueue(e.pending);
        } else if start <= failed_at {
            fail_entry(d, w, e);
            retry = true;
        } else if retry {
            // Unposted tail: try each entry on its own.
            let mut ok = true;
            for wr in &e.wrs {
                if d.fabric.with(|f| f.post_send(qp, *wr)).is_err() {
                    ok = false;
                    break;
                }
            }
            if ok {
                let _ = w.pending.enqueue(e.pending);
            } else {
                fail_entry(d, w, e);
            }
        }
    }
}

//! Poller data path: forward worker-side immediate responses, drain the
//! CQ, demultiplex by vQPN, deliver response records, and keep the SRQ
//! and UD receive queues stocked.

use std::collections::HashMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use ipc_ring::{RespKind, ResponseRecord};
use verbs_sim::{CompletionEntry, CompletionSide, LocalBuf, WorkRequest, WrStatus};

use crate::daemon::Daemon;
use crate::error::status;
use crate::state::*;
use crate::vqpn::DOORBELL_BIT;

/// recv wr_ids live in their own id space, distinct from packed send ids.
const RECV_ID_BASE: u64 = 1 << 63;

pub(crate) fn poll(d: &Daemon, p: &mut PollerState) -> usize {
    let mut delivered = 0usize;

    let notices: Vec<ResponseRecord> = d.notices.lock().unwrap().drain(..).collect();
    for r in notices {
        deliver(d, p, r, &mut delivered);
    }

    for i in 0..p.sources.len() {
        while let Ok(r) = p.sources[i].fails.dequeue() {
            deliver(d, p, r, &mut delivered);
        }
        while let Ok(op) = p.sources[i].ring.dequeue() {
            p.sources[i].local.push_back(op);
        }
    }

    flush_backlogs(p, &mut delivered);

    let demux = Arc::clone(&d.demux.lock().unwrap());

    // Send CQEs deferred from earlier cycles (their PendingOp may have
    // arrived by now).
    for i in 0..p.sources.len() {
        while let Some(e) = p.sources[i].deferred.front().copied() {
            if p.sources[i].local.front().map(|op| op.wr_id) == Some(e.wr_id) {
                let op = p.sources[i].local.pop_front().unwrap();
                complete_send(d, p, op, &e, &mut delivered);
                p.sources[i].deferred.pop_front();
            } else {
                break;
            }
        }
    }

    loop {
        let entries = d.fabric.with(|f| f.poll_cq(d.cq, 256)).unwrap_or_default();
        if entries.is_empty() {
            break;
        }
        for e in entries {
            match e.side {
                CompletionSide::SendCompletion => handle_send_cqe(d, p, e, &mut delivered),
                CompletionSide::RecvCompletion => {
                    handle_recv_cqe(d, p, &demux, e, &mut delivered)
                }
            }
        }
    }

    refill(d, p);
    delivered
}

fn flush_backlogs(p: &mut PollerState, delivered: &mut usize) {
    for lane in p.apps.values_mut() {
        let mut moved = false;
        while let Some(r) = lane.backlog.front() {
            if lane.resp.enqueue(*r).is_err() {
                break;
            }
            lane.backlog.pop_front();
            *delivered += 1;
            moved = true;
        }
        if moved {
            lane.event.signal();
        }
    }
}

fn deliver(d: &Daemon, p: &mut PollerState, r: ResponseRecord, delivered: &mut usize) {
    let Some(lane) = p.apps.get_mut(&r.fd) else {
        d.metrics.dropped.fetch_add(1, Ordering::Relaxed);
        return;
    };
    d.metrics.responses.fetch_add(1, Ordering::Relaxed);
    if !lane.backlog.is_empty() || lane.resp.enqueue(r).is_err() {
        lane.backlog.push_back(r);
    } else {
        *delivered += 1;
    }
    lane.event.signal();
}

fn handle_send_cqe(d: &Daemon, p: &mut PollerState, e: CompletionEntry, delivered: &mut usize) {
    let Some(&wi) = p.qp_owner.get(&e.qp_id) else {
        d.metrics.dropped.fetch_add(1, Ordering::Relaxed);
        return;
    };
    let matches = p.sources[wi].local.front().map(|op| op.wr_id) == Some(e.wr_id);
    if matches {
        let op = p.sources[wi].local.pop_front().unwrap();
        complete_send(d, p, op, &e, delivered);
    } else {
        // The worker posted but has not yet published the PendingOp.
        p.sources[wi].deferred.push_back(e);
    }
}

fn complete_send(
    d: &Daemon,
    p: &mut PollerState,
    op: PendingOp,
    e: &CompletionEntry,
    delivered: &mut usize,
) {
    {
        let mut pool = d.pool.lock().unwrap();
        if let Some(off) = op.free1 {
            pool.free(off);
        }
        if let Some(off) = op.free2 {
            pool.free(off);
        }
    }
    let r = if e.status == WrStatus::Ok {
        d.metrics.ops.fetch_add(1, Ordering::Relaxed);
        d.metrics.bytes.fetch_add(op.resp_len, Ordering::Relaxed);
        match op.kind {
            PendingKind::SendMsg => ResponseRecord::reply(op.fd, op.seq, status::OK, op.resp_len),
            PendingKind::ReadOp => ResponseRecord {
                kind: RespKind::Reply,
                fd: op.fd,
                region: op.resp_region,
                offset: op.resp_offset,
                length: op.resp_len,
                status: status::OK,
                seq: op.seq,
            },
        }
    } else {
        if op.kind == PendingKind::ReadOp {
            d.pool.lock().unwrap().free(op.resp_offset);
        }
        ResponseRecord::reply(op.fd, op.seq, status::TRANSPORT_ERROR, 0)
    };
    deliver(d, p, r, delivered);
}

fn handle_recv_cqe(
    d: &Daemon,
    p: &mut PollerState,
    demux: &HashMap<DemuxKey, u32>,
    e: CompletionEntry,
    delivered: &mut usize,
) {
    let Some(slot) = p.recv_slots.remove(&e.wr_id) else {
        d.metrics.dropped.fetch_add(1, Ordering::Relaxed);
        return;
    };
    let is_ud = e.qp_id == d.ud_qp;
    if is_ud {
        p.ud_posted = p.ud_posted.saturating_sub(1);
    }
    if e.status != WrStatus::Ok {
        d.pool.lock().unwrap().free(slot.offset);
        d.metrics.dropped.fetch_add(1, Ordering::Relaxed);
        return;
    }
    let imm = e.imm_data.unwrap_or(0);
    let doorbell = imm & DOORBELL_BIT != 0;
    let vqpn = imm & !DOORBELL_BIT;

    let (src, payload_off, payload_len) = if is_ud {
        if e.byte_count < 4 {
            d.pool.lock().unwrap().free(slot.offset);
            d.metrics.dropped.fetch_add(1, Ordering::Relaxed);
            return;
        }
        let hdr = d
            .fabric
            .with(|f| f.read_app(d.pool_mr.mr_id, slot.offset, 4))
            .expect("slot is in the pool region");
        let src = u32::from_le_bytes(hdr.try_into().unwrap());
        (src, slot.offset + 4, e.byte_count - 4)
    } else {
        (SRC_RC, slot.offset, e.byte_count)
    };

    let key = DemuxKey { qp: e.qp_id.0, src, vqpn };
    let Some(&fd) = demux.get(&key) else {
        d.metrics.unknown_vqpn.fetch_add(1, Ordering::Relaxed);
        d.pool.lock().unwrap().free(slot.offset);
        return;
    };

    let (region, offset, length) = if doorbell {
        let bell = d
            .fabric
            .with(|f| f.read_app(d.pool_mr.mr_id, slot.offset, 16))
            .expect("doorbell slot readable");
        let roff = u64::from_le_bytes(bell[..8].try_into().unwrap());
        let rlen = u64::from_le_bytes(bell[8..].try_into().unwrap());
        d.pool.lock().unwrap().free(slot.offset);
        if roff == CTRL_EOF_OFFSET {
            // In-band close: everything the peer sent first has already
            // been delivered (same QP, FIFO).
            let r = ResponseRecord {
                kind: RespKind::Eof,
                fd,
                region: 0,
                offset: 0,
                length: 0,
                status: status::OK,
                seq: 0,
            };
            deliver(d, p, r, delivered);
            return;
        }
        (d.pool_mr.mr_id.0, roff, rlen)
    } else if is_ud {
        // Re-home the payload into an exact-size extent so the app's
        // region ack frees a real allocation.
        let dst = d.pool.lock().unwrap().alloc(payload_len);
        let Some(dst) = dst else {
            d.pool.lock().unwrap().free(slot.offset);
            d.metrics.dropped.fetch_add(1, Ordering::Relaxed);
            return;
        };
        d.host_copy(d.pool_mr.mr_id, payload_off, d.pool_mr.mr_id, dst, payload_len)
            .expect("pool-internal copy");
        d.pool.lock().unwrap().free(slot.offset);
        (d.pool_mr.mr_id.0, dst, payload_len)
    } else {
        // Extent ownership passes to the app; freed by its region ack.
        (d.pool_mr.mr_id.0, slot.offset, payload_len)
    };

    d.metrics.msgs.fetch_add(1, Ordering::Relaxed);
    d.metrics.bytes.fetch_add(length, Ordering::Relaxed);
    let seq = p.data_seq.entry(fd).or_insert(0);
    let r = ResponseRecord {
        kind: RespKind::Data,
        fd,
        region,
        offset,
        length,
        status: status::OK,
        seq: *seq,
    };
    *seq += 1;
    deliver(d, p, r, delivered);
}

fn refill(d: &Daemon, p: &mut PollerState) {
    let depth = d.fabric.with(|f| f.srq_depth(d.srq)).unwrap_or(0);
    if depth < d.cfg.srq_low_watermark {
        for _ in depth..d.cfg.srq_depth {
            if !post_one(d, p, false) {
                break;
            }
        }
    }
    while p.ud_posted < d.cfg.ud_recv_depth {
        if !post_one(d, p, true) {
            break;
        }
        p.ud_posted += 1;
    }
}

fn post_one(d: &Daemon, p: &mut PollerState, ud: bool) -> bool {
    let Some(off) = d.pool.lock().unwrap().alloc(d.cfg.srq_buf_bytes) else {
        d.metrics.srq_starved.fetch_add(1, Ordering::Relaxed);
        return false;
    };
    let wr_id = RECV_ID_BASE + p.next_recv_id;
    p.next_recv_id += 1;
    let wr = WorkRequest::recv(
        wr_id,
        LocalBuf { mr_id: d.pool_mr.mr_id, offset: off, length: d.cfg.srq_buf_bytes },
    );
    let posted = d.fabric.with(|f| {
        if ud {
            f.post_recv(d.ud_qp, wr)
        } else {
            f.post_srq_recv(d.srq, wr)
        }
    });
    if posted.is_err() {
        d.pool.lock().unwrap().free(off);
        return false;
    }
    p.recv_slots.insert(wr_id, Slot { offset: off });
    true
}

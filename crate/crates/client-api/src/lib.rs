//! Socket-like client library over the daemon's shared-memory rings:
//! connection setup, blocking/non-blocking send/recv, and zero-copy
//! receive into pre-registered application memory.
//!
//! Message boundaries are preserved: each `send` delivers one message and
//! `recv` never crosses a boundary (a short buffer yields a partial read
//! with the remainder kept for the next call). After the peer closes and
//! the inbox drains, `recv` returns 0.
//!
//! There is intentionally no zero-copy send: whether an outbound payload
//! is staged by memcpy or sent from a registered region is the daemon's
//! decision, invisible at this surface.

use std::collections::{HashSet, VecDeque};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use ipc_ring::{OpCode, RequestRecord, RespKind, ResponseRecord};
use raas_daemon::flags::FLAG_REGION_ACK;
use raas_daemon::{status, AppEndpoint, Cluster, DaemonError, Flags, Result};
use verbs_sim::{MemoryRegion, MrId, NodeId, SharedFabric};

/// Reply sequence numbers with this bit set acknowledge region releases,
/// not sends; the two share the response ring.
const ACK_SEQ_BIT: u64 = 1 << 63;

/// How long blocking calls wait before giving up with `Timeout`; generous
/// compared to any simulated round trip, short enough to fail tests fast.
const BLOCK_TIMEOUT: Duration = Duration::from_secs(10);

/// One application on one node. Handles created from the same `App` share
/// the node's daemon; the `App` itself is cheap to clone around threads.
#[derive(Clone)]
pub struct App {
    cluster: Cluster,
    fabric: SharedFabric,
    node: NodeId,
    mrs: Arc<Mutex<HashSet<MrId>>>,
}

pub struct ListenHandle {
    addr: raas_daemon::Addr,
    node: NodeId,
    open: bool,
}

/// An inbound message (or the unread tail of one).
struct Inbound {
    region: u32,
    offset: u64,
    length: u64,
    consumed: u64,
}

/// A connected fd. One thread at a time; no internal locking on the data
/// path beyond what the rings provide.
pub struct ConnectionHandle {
    app: App,
    ep: AppEndpoint,
    nonblocking: bool,
    open: bool,
    eof: bool,
    /// Outstanding send seqs, FIFO (replies arrive in post order per fd).
    outstanding: VecDeque<(u64, u64)>, // (seq, staging bytes to reclaim)
    next_seq: u64,
    next_ack_seq: u64,
    /// Staging occupancy reclaimed FIFO as replies arrive.
    staging_head: u64,
    staging_used: u64,
    inbox: VecDeque<Inbound>,
}

impl App {
    pub fn new(cluster: &Cluster, node: NodeId) -> App {
        App {
            cluster: cluster.clone(),
            fabric: cluster.fabric(),
            node,
            mrs: Arc::new(Mutex::new(HashSet::new())),
        }
    }

    /// Register private application memory usable with `recv_zero_copy`.
    pub fn register_memory(&self, len: u64) -> Result<MemoryRegion> {
        let mr = self.cluster.register_memory(self.node, len)?;
        self.mrs.lock().unwrap().insert(mr.mr_id);
        Ok(mr)
    }

    pub fn connect(&self, addr: &str, flags: Flags) -> Result<ConnectionHandle> {
        let ep = self.cluster.connect(self.node, addr, flags)?;
        Ok(self.wrap(ep))
    }

    pub fn listen(&self, addr: &str) -> Result<ListenHandle> {
        let addr = self.cluster.listen(self.node, addr)?;
        Ok(ListenHandle { addr, node: self.node, open: true })
    }

    /// Block until a peer connects to the listener.
    pub fn accept(&self, l: &ListenHandle) -> Result<ConnectionHandle> {
        if !l.open || l.node != self.node {
            return Err(DaemonError::BadFd);
        }
        let ep = self.cluster.accept(self.node, l.addr, BLOCK_TIMEOUT)?;
        Ok(self.wrap(ep))
    }

    pub fn close_listener(&self, l: &mut ListenHandle) -> Result<()> {
        if !l.open {
            return Err(DaemonError::BadFd);
        }
        l.open = false;
        self.cluster.close_listener(l.node, l.addr)
    }

    fn wrap(&self, ep: AppEndpoint) -> ConnectionHandle {
        ConnectionHandle {
            app: self.clone(),
            ep,
            nonblocking: false,
            open: true,
            eof: false,
            outstanding: VecDeque::new(),
            next_seq: 0,
            next_ack_seq: 0,
            staging_head: 0,
            staging_used: 0,
            inbox: VecDeque::new(),
        }
    }
}

impl ConnectionHandle {
    pub fn fd(&self) -> u32 {
        self.ep.fd
    }

    pub fn set_nonblocking(&mut self, nb: bool) {
        self.nonblocking = nb;
    }

    /// Send one message. Blocking mode waits for the daemon's reply and
    /// returns `len`; non-blocking returns `WouldBlock` when the request
    /// ring or the staging buffer is full, with completion reaped
    /// opportunistically on later calls.
    pub fn send(&mut self, buf: &[u8], flags: Flags) -> Result<usize> {
        if !self.open {
            return Err(DaemonError::BadFd);
        }
        if buf.is_empty() {
            return Err(DaemonError::Transport("empty send".into()));
        }
        self.reap(false)?;
        let len = buf.len() as u64;
        let staging_len = self.ep.staging.length;
        if len > staging_len {
            return Err(DaemonError::MsgTooLarge);
        }
        let off = match self.alloc_staging(len) {
            Some(off) => off,
            None if self.nonblocking => return Err(DaemonError::WouldBlock),
            None => {
                let deadline = Instant::now() + BLOCK_TIMEOUT;
                loop {
                    self.reap(true)?;
                    if let Some(off) = self.alloc_staging(len) {
                        break off;
                    }
                    if Instant::now() >= deadline {
                        return Err(DaemonError::Timeout);
                    }
                }
            }
        };
        self.app
            .fabric
            .with(|f| f.write_app(self.ep.staging.mr_id, off, buf))?;
        let seq = self.next_seq;
        let rec = RequestRecord {
            op: OpCode::Send,
            fd: self.ep.fd,
            region: self.ep.staging.mr_id.0,
            offset: off,
            length: len,
            flags: flags.0,
            seq,
        };
        if self.ep.req.enqueue(rec).is_err() {
            self.free_staging_tail(len);
            return if self.nonblocking {
                Err(DaemonError::WouldBlock)
            } else {
                Err(DaemonError::RingFull)
            };
        }
        self.next_seq += 1;
        self.outstanding.push_back((seq, len));
        self.ep.req_event.signal();

        if self.nonblocking {
            self.reap(false)?;
            return Ok(buf.len());
        }
        // Blocking: wait for this seq's reply.
        let deadline = Instant::now() + BLOCK_TIMEOUT;
        while self.outstanding.iter().any(|&(s, _)| s == seq) {
            self.pump_responses()?;
            if self.outstanding.iter().all(|&(s, _)| s != seq) {
                break;
            }
            if Instant::now() >= deadline {
                return Err(DaemonError::Timeout);
            }
            self.ep.resp_event.wait(Duration::from_millis(1));
        }
        Ok(buf.len())
    }

    /// Receive up to `buf.len()` bytes of the next message; never crosses
    /// a message boundary. Returns 0 after the peer closed and the inbox
    /// drained.
    pub fn recv(&mut self, buf: &mut [u8]) -> Result<usize> {
        if !self.open {
            return Err(DaemonError::BadFd);
        }
        let deadline = Instant::now() + BLOCK_TIMEOUT;
        loop {
            self.pump_responses()?;
            if let Some(front) = self.inbox.front_mut() {
                let remaining = front.length - front.consumed;
                let take = remaining.min(buf.len() as u64);
                let data = self.app.fabric.with(|f| {
                    f.read_app(MrId(front.region), front.offset + front.consumed, take)
                })?;
                buf[..take as usize].copy_from_slice(&data);
                front.consumed += take;
                if front.consumed == front.length {
                    let done = self.inbox.pop_front().unwrap();
                    self.release(&done)?;
                }
                return Ok(take as usize);
            }
            if self.eof {
                return Ok(0);
            }
            if self.nonblocking {
                return Err(DaemonError::WouldBlock);
            }
            if Instant::now() >= deadline {
                return Err(DaemonError::Timeout);
            }
            self.ep.resp_event.wait(Duration::from_millis(1));
        }
    }

    /// Deliver the next whole message into `mr`, bypassing the client
    /// heap; returns (offset, length) within `mr`. A message larger than
    /// `mr` stays queued for ordinary `recv` and fails with `MrTooSmall`.
    pub fn recv_zero_copy(&mut self, mr: &MemoryRegion) -> Result<(u64, u64)> {
        if !self.open {
            return Err(DaemonError::BadFd);
        }
        if !self.app.mrs.lock().unwrap().contains(&mr.mr_id) {
            return Err(DaemonError::BadMr);
        }
        let deadline = Instant::now() + BLOCK_TIMEOUT;
        loop {
            self.pump_responses()?;
            if let Some(front) = self.inbox.front() {
                if front.consumed != 0 {
                    return Err(DaemonError::Transport(
                        "message partially consumed by recv".into(),
                    ));
                }
                if front.length > mr.length {
                    return Err(DaemonError::MrTooSmall);
                }
                let done = self.inbox.pop_front().unwrap();
                let src_region = MrId(done.region);
                let len = done.length;
                self.app.fabric.with(|f| -> verbs_sim::Result<()> {
                    let data = f.read_app(src_region, done.offset, len)?;
                    f.write_app(mr.mr_id, 0, &data)
                })?;
                self.release(&done)?;
                return Ok((0, len));
            }
            if self.eof {
                return Ok((0, 0));
            }
            if self.nonblocking {
                return Err(DaemonError::WouldBlock);
            }
            if Instant::now() >= deadline {
                return Err(DaemonError::Timeout);
            }
            self.ep.resp_event.wait(Duration::from_millis(1));
        }
    }

    /// Close the connection; the peer sees EOF after draining. The EOF
    /// travels in-band (the daemon posts it on the connection's QP behind
    /// everything already sent), so teardown waits for the daemon's reply
    /// before releasing control-plane resources.
    pub fn close(&mut self) -> Result<()> {
        if !self.open {
            return Err(DaemonError::BadFd);
        }
        // Release anything still parked in the daemon pool.
        while let Some(done) = self.inbox.pop_front() {
            self.release(&done)?;
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        let rec = RequestRecord {
            op: OpCode::Close,
            fd: self.ep.fd,
            region: 0,
            offset: 0,
            length: 0,
            flags: 0,
            seq,
        };
        if self.ep.req.enqueue(rec).is_ok() {
            self.ep.req_event.signal();
            self.outstanding.push_back((seq, 0));
            let deadline = Instant::now() + BLOCK_TIMEOUT;
            while self.outstanding.iter().any(|&(s, _)| s == seq) {
                // A failure here is a send error surfacing late; teardown
                // proceeds regardless.
                if self.pump_responses().is_err() {
                    break;
                }
                if Instant::now() >= deadline {
                    break;
                }
                self.ep.resp_event.wait(Duration::from_millis(1));
            }
        }
        self.open = false;
        self.app.cluster.close(self.app.node, self.ep.fd)
    }

    /// FIFO bump allocator over the per-connection staging buffer.
    fn alloc_staging(&mut self, len: u64) -> Option<u64> {
        let cap = self.ep.staging.length;
        if self.staging_used + len > cap {
            return None;
        }
        let tail = (self.staging_head + self.staging_used) % cap;
        // Contiguity: skip the wrap gap by restarting at 0 when the tail
        // run is too short (counted as used until the head wraps past it).
        if tail + len > cap {
            let gap = cap - tail;
            if self.staging_used + gap + len > cap {
                return None;
            }
            self.staging_used += gap;
            // The gap is reclaimed together with the most recent in-flight
            // send; with nothing in flight the buffer is empty, so rewind.
            if let Some(last) = self.outstanding.back_mut() {
                last.1 += gap;
            } else {
                self.staging_head = 0;
                self.staging_used -= gap;
            }
            return self.alloc_staging(len);
        }
        self.staging_used += len;
        Some(tail)
    }

    fn free_staging_tail(&mut self, len: u64) {
        self.staging_used -= len;
    }

    /// Drain the response ring into local state: resolve send replies,
    /// queue Data, note EOF.
    fn pump_responses(&mut self) -> Result<()> {
        while let Ok(r) = self.ep.resp.dequeue() {
            self.absorb(r)?;
        }
        Ok(())
    }

    fn absorb(&mut self, r: ResponseRecord) -> Result<()> {
        match r.kind {
            RespKind::Reply if r.seq & ACK_SEQ_BIT != 0 => {} // region release ack
            RespKind::Reply => {
                if let Some(&(seq, len)) = self.outstanding.front() {
                    if seq == r.seq {
                        self.outstanding.pop_front();
                        let cap = self.ep.staging.length;
                        self.staging_head = (self.staging_head + len) % cap;
                        self.staging_used -= len;
                    }
                }
                if let Some(e) = status::to_error(r.status) {
                    return Err(e);
                }
            }
            RespKind::Data => self.inbox.push_back(Inbound {
                region: r.region,
                offset: r.offset,
                length: r.length,
                consumed: 0,
            }),
            RespKind::Eof => self.eof = true,
        }
        Ok(())
    }

    /// Opportunistically absorb completions; `wait` parks briefly when
    /// nothing is pending yet.
    fn reap(&mut self, wait: bool) -> Result<()> {
        self.pump_responses()?;
        if wait {
            self.ep.resp_event.wait(Duration::from_millis(1));
        }
        Ok(())
    }

    /// Hand a fully-consumed region back to the daemon pool.
    fn release(&mut self, done: &Inbound) -> Result<()> {
        let seq = ACK_SEQ_BIT | self.next_ack_seq;
        self.next_ack_seq += 1;
        let rec = RequestRecord {
            op: OpCode::RecvReady,
            fd: self.ep.fd,
            region: done.region,
            offset: done.offset,
            length: done.length,
            flags: FLAG_REGION_ACK,
            seq,
        };
        let deadline = Instant::now() + BLOCK_TIMEOUT;
        while self.ep.req.enqueue(rec).is_err() {
            if Instant::now() >= deadline {
                return Err(DaemonError::Timeout);
            }
            self.ep.req_event.signal();
            std::thread::yield_now();
        }
        self.ep.req_event.signal();
        Ok(())
    }
}

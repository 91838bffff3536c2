//! In-process lossless fabric executing the verbs queuing model.
//!
//! Execution is synchronous discrete-event: posting a work request runs it
//! to completion immediately, advancing the logical clock by the modeled
//! NIC service costs. Completion entries land in the owning CQs with
//! timestamps; polling order is (timestamp, qp_id).

use std::collections::{HashMap, VecDeque};
use std::sync::{Arc, Mutex};

use crate::config::SimConfig;
use crate::error::{BatchError, Result, SimError};
use crate::nic::NicModel;
use crate::types::*;

/// Posted receives allowed per receive queue or SRQ.
pub const MAX_RECV_DEPTH: usize = 4096;

struct Node {
    #[allow(dead_code)]
    name: String,
    arena: Vec<u8>,
    /// Free extents, kept sorted by base and coalesced.
    free: Vec<(u64, u64)>,
    nic: NicModel,
    /// SENDs that targeted this node (delivered or RNR-failed).
    pub sends_in: u64,
    pub recv_completions: u64,
}

struct Qp {
    node: NodeId,
    mode: TransportMode,
    cq: CqId,
    srq: Option<SrqId>,
    peer: Option<QpId>,
    state: QpState,
    recv_queue: VecDeque<WorkRequest>,
}

struct Cq {
    #[allow(dead_code)]
    node: NodeId,
    entries: VecDeque<CompletionEntry>,
}

struct Srq {
    node: NodeId,
    recv_queue: VecDeque<WorkRequest>,
    attached: Vec<QpId>,
}

#[derive(Debug, Clone)]
pub struct TraceEvent {
    pub ts: f64,
    pub node: NodeId,
    pub qp: QpId,
    pub verb: Verb,
    pub bytes: u64,
    pub cache_hit: bool,
}

impl TraceEvent {
    pub fn csv_line(&self) -> String {
        format!(
            "{:.1},{},{},{},{},{}",
            self.ts, self.node, self.qp, self.verb, self.bytes, self.cache_hit as u8
        )
    }
}

pub struct Fabric {
    cfg: SimConfig,
    clock_ns: f64,
    nodes: Vec<Node>,
    qps: HashMap<QpId, Qp>,
    cqs: HashMap<CqId, Cq>,
    srqs: HashMap<SrqId, Srq>,
    mrs: HashMap<MrId, MemoryRegion>,
    /// (owning node, rkey) -> region.
    rkeys: HashMap<(NodeId, u32), MrId>,
    next_qp: u32,
    next_cq: u32,
    next_srq: u32,
    next_mr: u32,
    next_key: u32,
    trace: Option<Vec<TraceEvent>>,
}

impl Fabric {
    pub fn new(cfg: SimConfig) -> Self {
        Fabric {
            cfg,
            clock_ns: 0.0,
            nodes: Vec::new(),
            qps: HashMap::new(),
            cqs: HashMap::new(),
            srqs: HashMap::new(),
            mrs: HashMap::new(),
            rkeys: HashMap::new(),
            next_qp: 1,
            next_cq: 1,
            next_srq: 1,
            next_mr: 1,
            next_key: 1,
            trace: None,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Logical time in nanoseconds.
    pub fn now(&self) -> f64 {
        self.clock_ns
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.replace(Vec::new()).unwrap_or_default()
    }

    pub fn add_node(&mut self, name: &str) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node {
            name: name.to_string(),
            arena: vec![0; self.cfg.arena_bytes as usize],
            free: vec![(0, self.cfg.arena_bytes)],
            nic: NicModel::new(self.cfg.cache_capacity),
            sends_in: 0,
            recv_completions: 0,
        });
        id
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0 as usize).ok_or(SimError::NodeUnknown(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut Node> {
        self.nodes.get_mut(id.0 as usize).ok_or(SimError::NodeUnknown(id))
    }

    pub fn nic_stats(&self, node: NodeId) -> Result<(u64, u64)> {
        let n = self.node(node)?;
        Ok((n.nic.hits, n.nic.misses))
    }

    pub fn nic_hit_rate(&self, node: NodeId) -> Result<f64> {
        Ok(self.node(node)?.nic.hit_rate())
    }

    /// SENDs targeting a node vs. receive completions raised there.
    pub fn delivery_counters(&self, node: NodeId) -> Result<(u64, u64)> {
        let n = self.node(node)?;
        Ok((n.sends_in, n.recv_completions))
    }

    pub fn create_cq(&mut self, node: NodeId) -> Result<CqId> {
        self.node(node)?;
        let id = CqId(self.next_cq);
        self.next_cq += 1;
        self.cqs.insert(id, Cq { node, entries: VecDeque::new() });
        Ok(id)
    }

    pub fn create_srq(&mut self, node: NodeId) -> Result<SrqId> {
        self.node(node)?;
        let id = SrqId(self.next_srq);
        self.next_srq += 1;
        self.srqs.insert(
            id,
            Srq { node, recv_queue: VecDeque::new(), attached: Vec::new() },
        );
        Ok(id)
    }

    pub fn create_qp(
        &mut self,
        node: NodeId,
        mode: TransportMode,
        cq: CqId,
        srq: Option<SrqId>,
    ) -> Result<QpId> {
        self.node(node)?;
        if !self.cqs.contains_key(&cq) {
            return Err(SimError::CqUnknown);
        }
        if let Some(s) = srq {
            if mode != TransportMode::Rc {
                return Err(SimError::SrqUnsupported);
            }
            if self.srqs.get(&s).map(|s| s.node) != Some(node) {
                return Err(SimError::SrqUnknown);
            }
        }
        let id = QpId(self.next_qp);
        self.next_qp += 1;
        self.qps.insert(
            id,
            Qp {
                node,
                mode,
                cq,
                srq,
                peer: None,
                // UD needs no connection phase.
                state: if mode == TransportMode::Ud { QpState::Ready } else { QpState::Reset },
                recv_queue: VecDeque::new(),
            },
        );
        if let Some(s) = srq {
            self.srqs.get_mut(&s).unwrap().attached.push(id);
        }
        Ok(id)
    }

    pub fn destroy_qp(&mut self, qp: QpId) -> Result<()> {
        let q = self.qps.remove(&qp).ok_or(SimError::QpUnknown(qp))?;
        self.nodes[q.node.0 as usize].nic.invalidate(qp);
        if let Some(s) = q.srq {
            if let Some(srq) = self.srqs.get_mut(&s) {
                srq.attached.retain(|id| *id != qp);
            }
        }
        Ok(())
    }

    pub fn connect_qp(&mut self, a: QpId, b: QpId) -> Result<()> {
        if a == b {
            return Err(SimError::SelfConnect);
        }
        let qa = self.qps.get(&a).ok_or(SimError::QpUnknown(a))?;
        let qb = self.qps.get(&b).ok_or(SimError::QpUnknown(b))?;
        if qa.mode == TransportMode::Ud || qb.mode == TransportMode::Ud {
            return Err(SimError::UdNotConnectable);
        }
        if qa.mode != qb.mode {
            return Err(SimError::ModeMismatch);
        }
        if qa.peer.is_some() || qb.peer.is_some() {
            return Err(SimError::AlreadyConnected);
        }
        let qa = self.qps.get_mut(&a).unwrap();
        qa.peer = Some(b);
        qa.state = QpState::Ready;
        let qb = self.qps.get_mut(&b).unwrap();
        qb.peer = Some(a);
        qb.state = QpState::Ready;
        Ok(())
    }

    pub fn qp_node(&self, qp: QpId) -> Result<NodeId> {
        Ok(self.qps.get(&qp).ok_or(SimError::QpUnknown(qp))?.node)
    }

    pub fn qp_peer(&self, qp: QpId) -> Result<Option<QpId>> {
        Ok(self.qps.get(&qp).ok_or(SimError::QpUnknown(qp))?.peer)
    }

    pub fn register_mr(&mut self, node: NodeId, length: u64) -> Result<MemoryRegion> {
        if length == 0 {
            return Err(SimError::ZeroLength);
        }
        let cost = self.cfg.registration_cost(length);
        let n = self.node_mut(node)?;
        // First-fit from the free list.
        let Some(slot) = n.free.iter().position(|(_, len)| *len >= length) else {
            return Err(SimError::ArenaFull(node));
        };
        let base = n.free[slot].0;
        if n.free[slot].1 == length {
            n.free.remove(slot);
        } else {
            n.free[slot].0 += length;
            n.free[slot].1 -= length;
        }
        self.clock_ns += cost;
        let mr = MemoryRegion {
            mr_id: MrId(self.next_mr),
            node,
            base,
            length,
            local_key: self.next_key,
            remote_key: self.next_key + 1,
            registered_at: self.clock_ns as u64,
        };
        self.next_mr += 1;
        self.next_key += 2;
        self.mrs.insert(mr.mr_id, mr);
        self.rkeys.insert((node, mr.remote_key), mr.mr_id);
        Ok(mr)
    }

    pub fn mr(&self, id: MrId) -> Result<&MemoryRegion> {
        self.mrs.get(&id).ok_or(SimError::MrUnknown)
    }

    /// Release a region's arena extent for reuse. Outstanding WRs cannot
    /// reference it afterwards (keys are dropped).
    pub fn deregister_mr(&mut self, id: MrId) -> Result<()> {
        let mr = self.mrs.remove(&id).ok_or(SimError::MrUnknown)?;
        self.rkeys.remove(&(mr.node, mr.remote_key));
        let n = self.node_mut(mr.node)?;
        let pos = n.free.partition_point(|(base, _)| *base < mr.base);
        n.free.insert(pos, (mr.base, mr.length));
        // Coalesce neighbours.
        let mut i = pos.saturating_sub(1);
        while i + 1 < n.free.len() {
            if n.free[i].0 + n.free[i].1 == n.free[i + 1].0 {
                n.free[i].1 += n.free[i + 1].1;
                n.free.remove(i + 1);
            } else {
                i += 1;
            }
        }
        Ok(())
    }

    /// Bytes of arena currently registered on a node.
    pub fn arena_used(&self, node: NodeId) -> Result<u64> {
        let n = self.node(node)?;
        let free: u64 = n.free.iter().map(|(_, len)| len).sum();
        Ok(self.cfg.arena_bytes - free)
    }

    /// Host-side write into a registered buffer (no simulated cost).
    pub fn write_app(&mut self, mr_id: MrId, offset: u64, data: &[u8]) -> Result<()> {
        let mr = *self.mr(mr_id)?;
        if offset + data.len() as u64 > mr.length {
            return Err(SimError::LocalOutOfBounds);
        }
        let start = (mr.base + offset) as usize;
        let node = self.node_mut(mr.node)?;
        node.arena[start..start + data.len()].copy_from_slice(data);
        Ok(())
    }

    /// Host-side read from a registered buffer (no simulated cost).
    pub fn read_app(&self, mr_id: MrId, offset: u64, len: u64) -> Result<Vec<u8>> {
        let mr = *self.mr(mr_id)?;
        if offset + len > mr.length {
            return Err(SimError::LocalOutOfBounds);
        }
        let start = (mr.base + offset) as usize;
        let node = self.node(mr.node)?;
        Ok(node.arena[start..start + len as usize].to_vec())
    }

    fn check_local(&self, node: NodeId, buf: &LocalBuf) -> Result<(u64, u64)> {
        let mr = self.mrs.get(&buf.mr_id).ok_or(SimError::MrUnknown)?;
        if mr.node != node {
            return Err(SimError::MrUnknown);
        }
        if buf.offset + buf.length > mr.length {
            return Err(SimError::LocalOutOfBounds);
        }
        Ok((mr.base + buf.offset, buf.length))
    }

    fn resolve_remote(&self, node: NodeId, remote: &RemoteBuf, len: u64) -> Result<u64> {
        let mr_id = self
            .rkeys
            .get(&(node, remote.remote_key))
            .ok_or(SimError::BadRkey)?;
        let mr = &self.mrs[mr_id];
        if remote.offset + len > mr.length {
            return Err(SimError::RemoteOutOfBounds);
        }
        Ok(mr.base + remote.offset)
    }

    fn validate_wr(&self, qp_id: QpId, wr: &WorkRequest) -> Result<(NodeId, Option<QpId>)> {
        let qp = self.qps.get(&qp_id).ok_or(SimError::QpUnknown(qp_id))?;
        if !qp.mode.supports(wr.verb) || wr.verb == Verb::Recv {
            return Err(SimError::IllegalVerb { mode: qp.mode, verb: wr.verb });
        }
        if wr.local.length > qp.mode.max_message(self.cfg.mtu) {
            return Err(SimError::MsgTooLarge {
                len: wr.local.length,
                max: qp.mode.max_message(self.cfg.mtu),
            });
        }
        match wr.verb {
            Verb::Write | Verb::Read => {
                if wr.remote.is_none() {
                    return Err(SimError::MalformedWr("one-sided WR requires a remote target"));
                }
                if wr.imm_data.is_some() {
                    return Err(SimError::MalformedWr("imm_data is only carried by SEND"));
                }
            }
            Verb::Send => {
                if wr.remote.is_some() {
                    return Err(SimError::MalformedWr("SEND takes no remote target"));
                }
            }
            Verb::Recv => unreachable!(),
        }
        self.check_local(qp.node, &wr.local)?;
        let (target_node, target_qp) = if qp.mode == TransportMode::Ud {
            let (n, q) = wr.ud_dest.ok_or(SimError::MissingUdDest)?;
            self.node(n)?;
            (n, Some(q))
        } else {
            if qp.state != QpState::Ready {
                return Err(SimError::QpNotReady);
            }
            let peer = qp.peer.ok_or(SimError::QpNotReady)?;
            (self.qps.get(&peer).ok_or(SimError::QpUnknown(peer))?.node, Some(peer))
        };
        if let Some(remote) = &wr.remote {
            self.resolve_remote(target_node, remote, wr.local.length)?;
        }
        Ok((target_node, target_qp))
    }

    fn push_cqe(&mut self, cq: CqId, entry: CompletionEntry) {
        let cq = self.cqs.get_mut(&cq).expect("cq exists");
        // Timestamps are monotone per producer; keep (ts, qp) order on insert.
        let pos = cq
            .entries
            .iter()
            .rposition(|e| {
                (e.timestamp, e.qp_id.0) <= (entry.timestamp, entry.qp_id.0)
            })
            .map(|p| p + 1)
            .unwrap_or(0);
        cq.entries.insert(pos, entry);
    }

    fn record_trace(&mut self, node: NodeId, qp: QpId, verb: Verb, bytes: u64, hit: bool) {
        let ts = self.clock_ns;
        if let Some(t) = &mut self.trace {
            t.push(TraceEvent { ts, node, qp, verb, bytes, cache_hit: hit });
        }
    }

    /// Touch a QP's NIC context and return the fixed service cost in ns.
    pub fn nic_service(&mut self, qp_id: QpId) -> Result<f64> {
        let node = self.qp_node(qp_id)?;
        let cfg = self.cfg.clone();
        let (cost, _) = self.node_mut(node)?.nic.service_cost(qp_id, &cfg);
        Ok(cost)
    }

    /// Execute one WR. `fixed_discount` is 1.0 for a lone post, or the batch
    /// discount when the WR belongs to a multi-WR doorbell.
    fn execute(&mut self, qp_id: QpId, wr: &WorkRequest, fixed_discount: f64) -> Result<()> {
        let (target_node, target_qp) = self.validate_wr(qp_id, wr)?;
        let qp_node = self.qps[&qp_id].node;
        let sender_cq = self.qps[&qp_id].cq;
        let len = wr.local.length;
        let cfg = self.cfg.clone();

        let (fixed, hit) = self.node_mut(qp_node)?.nic.service_cost(qp_id, &cfg);
        let send_svc = fixed * fixed_discount + cfg.per_byte_cost_ns * len as f64;
        self.clock_ns += send_svc;
        self.record_trace(qp_node, qp_id, wr.verb, len, hit);

        let (src, _) = self.check_local(qp_node, &wr.local)?;
        match wr.verb {
            Verb::Write => {
                let dst = self.resolve_remote(target_node, wr.remote.as_ref().unwrap(), len)?;
                let data = self.nodes[qp_node.0 as usize].arena
                    [src as usize..(src + len) as usize]
                    .to_vec();
                self.nodes[target_node.0 as usize].arena
                    [dst as usize..(dst + len) as usize]
                    .copy_from_slice(&data);
            }
            Verb::Read => {
                let rsrc = self.resolve_remote(target_node, wr.remote.as_ref().unwrap(), len)?;
                let data = self.nodes[target_node.0 as usize].arena
                    [rsrc as usize..(rsrc + len) as usize]
                    .to_vec();
                self.nodes[qp_node.0 as usize].arena
                    [src as usize..(src + len) as usize]
                    .copy_from_slice(&data);
            }
            Verb::Send => {
                return self.execute_send(qp_id, wr, target_node, target_qp, src, fixed_discount);
            }
            Verb::Recv => unreachable!(),
        }

        if wr.signaled {
            let ts = self.clock_ns + cfg.propagation_ns;
            self.push_cqe(
                sender_cq,
                CompletionEntry {
                    wr_id: wr.wr_id,
                    status: WrStatus::Ok,
                    byte_count: len,
                    imm_data: None,
                    qp_id,
                    side: CompletionSide::SendCompletion,
                    timestamp: ts,
                },
            );
        }
        Ok(())
    }

    fn execute_send(
        &mut self,
        qp_id: QpId,
        wr: &WorkRequest,
        target_node: NodeId,
        target_qp: Option<QpId>,
        src: u64,
        fixed_discount: f64,
    ) -> Result<()> {
        let cfg = self.cfg.clone();
        let len = wr.local.length;
        let sender_cq = self.qps[&qp_id].cq;
        let sender_mode = self.qps[&qp_id].mode;
        self.nodes[target_node.0 as usize].sends_in += 1;

        let tq_id = target_qp.expect("send target resolved");
        // UD destinations may name a QP that does not exist; the datagram
        // silently vanishes. Connected peers are validated at connect time.
        let Some(tq) = self.qps.get_mut(&tq_id) else {
            if wr.signaled {
                let ts = self.clock_ns + cfg.propagation_ns;
                self.push_cqe(
                    sender_cq,
                    CompletionEntry {
                        wr_id: wr.wr_id,
                        status: WrStatus::Ok,
                        byte_count: len,
                        imm_data: None,
                        qp_id,
                        side: CompletionSide::SendCompletion,
                        timestamp: ts,
                    },
                );
            }
            return Ok(());
        };
        let target_cq = tq.cq;
        let srq = tq.srq;
        let recv_wr = match srq {
            Some(s) => self.srqs.get_mut(&s).unwrap().recv_queue.pop_front(),
            None => self.qps.get_mut(&tq_id).unwrap().recv_queue.pop_front(),
        };

        let Some(recv_wr) = recv_wr else {
            // Receiver not ready. RC retries for a bounded window then fails;
            // unreliable transports drop the message with a clean sender CQE.
            if sender_mode == TransportMode::Rc {
                self.clock_ns += cfg.rnr_retry_ns;
                let ts = self.clock_ns + cfg.propagation_ns;
                self.push_cqe(
                    sender_cq,
                    CompletionEntry {
                        wr_id: wr.wr_id,
                        status: WrStatus::RnrError,
                        byte_count: 0,
                        imm_data: None,
                        qp_id,
                        side: CompletionSide::SendCompletion,
                        timestamp: ts,
                    },
                );
            } else if wr.signaled {
                let ts = self.clock_ns + cfg.propagation_ns;
                self.push_cqe(
                    sender_cq,
                    CompletionEntry {
                        wr_id: wr.wr_id,
                        status: WrStatus::Ok,
                        byte_count: len,
                        imm_data: None,
                        qp_id,
                        side: CompletionSide::SendCompletion,
                        timestamp: ts,
                    },
                );
            }
            return Ok(());
        };

        // Receiver-side NIC service (two-sided involves both hosts).
        let (rfixed, rhit) =
            self.nodes[target_node.0 as usize].nic.service_cost(tq_id, &cfg);
        let recv_svc = rfixed * fixed_discount + cfg.per_byte_cost_ns * len as f64;
        self.clock_ns += recv_svc;
        self.record_trace(target_node, tq_id, Verb::Recv, len, rhit);

        let (dst, recv_cap) = self.check_local(target_node, &recv_wr.local)?;
        if len > recv_cap {
            let ts = self.clock_ns + cfg.propagation_ns;
            self.push_cqe(
                target_cq,
                CompletionEntry {
                    wr_id: recv_wr.wr_id,
                    status: WrStatus::RecvBufTooSmall,
                    byte_count: 0,
                    imm_data: wr.imm_data,
                    qp_id: tq_id,
                    side: CompletionSide::RecvCompletion,
                    timestamp: ts,
                },
            );
            self.push_cqe(
                sender_cq,
                CompletionEntry {
                    wr_id: wr.wr_id,
                    status: WrStatus::RecvBufTooSmall,
                    byte_count: 0,
                    imm_data: None,
                    qp_id,
                    side: CompletionSide::SendCompletion,
                    timestamp: ts,
                },
            );
            self.nodes[target_node.0 as usize].recv_completions += 1;
            return Ok(());
        }

        let data = self.nodes[self.qps[&qp_id].node.0 as usize].arena
            [src as usize..(src + len) as usize]
            .to_vec();
        self.nodes[target_node.0 as usize].arena[dst as usize..(dst + len) as usize]
            .copy_from_slice(&data);

        let ts = self.clock_ns + cfg.propagation_ns;
        self.push_cqe(
            target_cq,
            CompletionEntry {
                wr_id: recv_wr.wr_id,
                status: WrStatus::Ok,
                byte_count: len,
                imm_data: wr.imm_data,
                qp_id: tq_id,
                side: CompletionSide::RecvCompletion,
                timestamp: ts,
            },
        );
        self.nodes[target_node.0 as usize].recv_completions += 1;
        if wr.signaled {
            self.push_cqe(
                sender_cq,
                CompletionEntry {
                    wr_id: wr.wr_id,
                    status: WrStatus::Ok,
                    byte_count: len,
                    imm_data: None,
                    qp_id,
                    side: CompletionSide::SendCompletion,
                    timestamp: ts,
                },
            );
        }
        Ok(())
    }

    pub fn post_send(&mut self, qp_id: QpId, wr: WorkRequest) -> Result<()> {
        self.execute(qp_id, &wr, 1.0)
    }

    /// All-or-prefix: WRs are executed in order until the first invalid one.
    /// A batch of >= 2 WRs pays the discounted fixed cost per WR.
    pub fn post_batch(
        &mut self,
        qp_id: QpId,
        wrs: &[WorkRequest],
    ) -> (usize, Option<BatchError>) {
        let discount = if wrs.len() >= 2 { self.cfg.batch_discount } else { 1.0 };
        for (i, wr) in wrs.iter().enumerate() {
            if let Err(e) = self.execute(qp_id, wr, discount) {
                return (i, Some(BatchError { index: i, error: e }));
            }
        }
        (wrs.len(), None)
    }

    pub fn post_recv(&mut self, qp_id: QpId, wr: WorkRequest) -> Result<()> {
        if wr.verb != Verb::Recv {
            return Err(SimError::MalformedWr("post_recv takes RECV work requests"));
        }
        let node = self.qp_node(qp_id)?;
        self.check_local(node, &wr.local)?;
        let qp = self.qps.get_mut(&qp_id).unwrap();
        if qp.srq.is_some() {
            return Err(SimError::MalformedWr(
                "QP draws receives from its SRQ; post there",
            ));
        }
        if qp.recv_queue.len() >= MAX_RECV_DEPTH {
            return Err(SimError::QueueFull);
        }
        qp.recv_queue.push_back(wr);
        Ok(())
    }

    pub fn post_srq_recv(&mut self, srq_id: SrqId, wr: WorkRequest) -> Result<()> {
        if wr.verb != Verb::Recv {
            return Err(SimError::MalformedWr("post_recv takes RECV work requests"));
        }
        let node = self.srqs.get(&srq_id).ok_or(SimError::SrqUnknown)?.node;
        self.check_local(node, &wr.local)?;
        let srq = self.srqs.get_mut(&srq_id).unwrap();
        if srq.recv_queue.len() >= MAX_RECV_DEPTH {
            return Err(SimError::QueueFull);
        }
        srq.recv_queue.push_back(wr);
        Ok(())
    }

    pub fn srq_depth(&self, srq_id: SrqId) -> Result<usize> {
        Ok(self.srqs.get(&srq_id).ok_or(SimError::SrqUnknown)?.recv_queue.len())
    }

    pub fn poll_cq(&mut self, cq_id: CqId, max_entries: usize) -> Result<Vec<CompletionEntry>> {
        let cq = self.cqs.get_mut(&cq_id).ok_or(SimError::CqUnknown)?;
        let n = max_entries.min(cq.entries.len());
        Ok(cq.entries.drain(..n).collect())
    }
}

/// Internally synchronized fabric handle, shareable across owner threads.
#[derive(Clone)]
pub struct SharedFabric(Arc<Mutex<Fabric>>);

impl SharedFabric {
    pub fn new(cfg: SimConfig) -> Self {
        SharedFabric(Arc::new(Mutex::new(Fabric::new(cfg))))
    }

    pub fn with<R>(&self, f: impl FnOnce(&mut Fabric) -> R) -> R {
        f(&mut self.0.lock().unwrap())
    }

    pub fn now(&self) -> f64 {
        self.with(|f| f.now())
    }

    pub fn add_node(&self, name: &str) -> NodeId {
        self.with(|f| f.add_node(name))
    }
}

//! Control plane for a set of daemons over one in-process fabric:
//! address registry, connection handshakes, listeners, exposure of READ
//! sources, and teardown.
//!
//! Every control operation runs under one global mutex. Handshakes touch
//! two daemons' worker/poller state; a single lock ordering makes
//! cross-daemon deadlock impossible, and none of this is on the data
//! path.

use std::collections::{HashMap, VecDeque};
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use ipc_ring::{ring_create, Consumer, EventChannel, Producer, RequestRecord, RespKind, ResponseRecord};
use verbs_sim::{MemoryRegion, NodeId, QpId, SharedFabric, SimConfig, TransportMode};

use crate::addr::Addr;
use crate::config::DaemonConfig;
use crate::daemon::Daemon;
use crate::error::{status, DaemonError, Result};
use crate::flags::Flags;
use crate::state::{AppLane, DemuxKey, Lane, VcMut, VcShared, VcState, SRC_RC};
use crate::vqpn::VqpnAllocator;

/// Application side of one connection: the rings and staging buffer the
/// client library drives directly.
pub struct AppEndpoint {
    pub node: NodeId,
    pub fd: u32,
    pub req: Producer<RequestRecord>,
    pub req_event: EventChannel,
    pub resp: Consumer<ResponseRecord>,
    pub resp_event: EventChannel,
    /// Per-connection outbound staging, registered on `node`.
    pub staging: MemoryRegion,
    /// mr_id of the local daemon's pool (the `region` on inbound Data).
    pub pool_region: u32,
}

struct Listener {
    queue: VecDeque<AppEndpoint>,
    event: EventChannel,
    open: bool,
}

struct ConnCtl {
    vc: Arc<VcShared>,
    peer: Option<(NodeId, u32)>,
    staging: MemoryRegion,
    worker: usize,
    /// Demux entry on this node (keyed by the peer's vQPN).
    own_key: Option<DemuxKey>,
    /// Extents exposed for peer READs, freed at close.
    exposed: Vec<u64>,
    /// vQPNs the already-closed peer left routed through our demux entry;
    /// released when that entry goes away with our own close.
    release_on_close: Vec<(NodeId, u32)>,
}

struct Control {
    daemons: HashMap<NodeId, Arc<Daemon>>,
    addrs: HashMap<Addr, NodeId>,
    listeners: HashMap<(NodeId, Addr), Listener>,
    conns: HashMap<(NodeId, u32), ConnCtl>,
    /// (low node, high node, shard) -> (low-side QP, high-side QP).
    qp_pairs: HashMap<(NodeId, NodeId, usize), (QpId, QpId)>,
    vqpns: HashMap<NodeId, VqpnAllocator>,
    next_fd: HashMap<NodeId, u32>,
}

#[derive(Clone)]
pub struct Cluster {
    fabric: SharedFabric,
    ctl: Arc<Mutex<Control>>,
}

impl Cluster {
    pub fn new(cfg: SimConfig) -> Cluster {
        Cluster {
            fabric: SharedFabric::new(cfg),
            ctl: Arc::new(Mutex::new(Control {
                daemons: HashMap::new(),
                addrs: HashMap::new(),
                listeners: HashMap::new(),
                conns: HashMap::new(),
                qp_pairs: HashMap::new(),
                vqpns: HashMap::new(),
                next_fd: HashMap::new(),
            })),
        }
    }

    pub fn fabric(&self) -> SharedFabric {
        self.fabric.clone()
    }

    pub fn add_node(&self, name: &str) -> NodeId {
        self.fabric.add_node(name)
    }

    /// One daemon per node; addresses must be unique across the cluster.
    pub fn start_daemon(
        &self,
        node: NodeId,
        addrs: &[&str],
        cfg: DaemonConfig,
    ) -> Result<Arc<Daemon>> {
        let mut ctl = self.ctl.lock().unwrap();
        if ctl.daemons.contains_key(&node) {
            return Err(DaemonError::DaemonExists);
        }
        let parsed: Vec<Addr> = addrs
            .iter()
            .map(|s| Addr::from_str(s))
            .collect::<Result<_>>()?;
        for a in &parsed {
            if ctl.addrs.contains_key(a) {
                return Err(DaemonError::BadConfig(format!("address {a} already bound")));
            }
        }
        let vqpn_capacity = cfg.vqpn_capacity;
        let d = Arc::new(Daemon::new(node, cfg, self.fabric.clone())?);
        for a in parsed {
            ctl.addrs.insert(a, node);
        }
        ctl.vqpns.insert(node, VqpnAllocator::new(vqpn_capacity));
        ctl.next_fd.insert(node, 0);
        ctl.daemons.insert(node, Arc::clone(&d));
        Ok(d)
    }

    pub fn daemon(&self, node: NodeId) -> Option<Arc<Daemon>> {
        self.ctl.lock().unwrap().daemons.get(&node).cloned()
    }

    /// Register private application memory on a node.
    pub fn register_memory(&self, node: NodeId, len: u64) -> Result<MemoryRegion> {
        Ok(self.fabric.with(|f| f.register_mr(node, len))?)
    }

    pub fn listen(&self, node: NodeId, addr: &str) -> Result<Addr> {
        let addr = Addr::from_str(addr)?;
        let mut ctl = self.ctl.lock().unwrap();
        if ctl.addrs.get(&addr) != Some(&node) {
            return Err(DaemonError::BadConfig(format!("{addr} is not bound to this node")));
        }
        ctl.listeners.insert(
            (node, addr),
            Listener { queue: VecDeque::new(), event: EventChannel::new(), open: true },
        );
        Ok(addr)
    }

    pub fn close_listener(&self, node: NodeId, addr: Addr) -> Result<()> {
        let mut ctl = self.ctl.lock().unwrap();
        match ctl.listeners.get_mut(&(node, addr)) {
            Some(l) => {
                l.open = false;
                l.event.signal();
                Ok(())
            }
            None => Err(DaemonError::BadFd),
        }
    }

    /// Block until a peer's connect arrives on the listener.
    pub fn accept(&self, node: NodeId, addr: Addr, timeout: Duration) -> Result<AppEndpoint> {
        let deadline = Instant::now() + timeout;
        loop {
            let event = {
                let mut ctl = self.ctl.lock().unwrap();
                let l = ctl.listeners.get_mut(&(node, addr)).ok_or(DaemonError::BadFd)?;
                if let Some(ep) = l.queue.pop_front() {
                    return Ok(ep);
                }
                if !l.open {
                    return Err(DaemonError::Closed);
                }
                l.event.clone()
            };
            let now = Instant::now();
            if now >= deadline {
                return Err(DaemonError::Timeout);
            }
            event.wait((deadline - now).min(Duration::from_millis(10)));
        }
    }

    /// Full handshake: allocates vQPNs on both ends, creates or reuses the
    /// shard's shared QP pair, installs rings/lanes/demux on both
    /// daemons, and queues the passive endpoint for accept.
    pub fn connect(&self, src: NodeId, dest: &str, flags: Flags) -> Result<AppEndpoint> {
        flags.validate()?;
        let dest_addr = Addr::from_str(dest).map_err(|_| DaemonError::DestUnreachable)?;
        let transport = flags.transport().unwrap_or(TransportMode::Rc);

        let mut ctl = self.ctl.lock().unwrap();
        let ctl = &mut *ctl;
        let dest_node = *ctl.addrs.get(&dest_addr).ok_or(DaemonError::DestUnreachable)?;
        let da = ctl
            .daemons
            .get(&src)
            .cloned()
            .ok_or_else(|| DaemonError::BadConfig("no daemon on source node".into()))?;
        let db = ctl
            .daemons
            .get(&dest_node)
            .cloned()
            .ok_or(DaemonError::DestUnreachable)?;

        let vqpn_a = ctl.vqpns.get_mut(&src).unwrap().alloc()?;
        let vqpn_b = match ctl.vqpns.get_mut(&dest_node).unwrap().alloc() {
            Ok(v) => v,
            Err(e) => {
                ctl.vqpns.get_mut(&src).unwrap().release(vqpn_a);
                return Err(e);
            }
        };
        let fd_a = bump_fd(&mut ctl.next_fd, src);
        let fd_b = bump_fd(&mut ctl.next_fd, dest_node);

        // Both endpoints use the same shard index so the QP pair has a
        // single owning worker on each side.
        let shards = da.config().effective_shards().min(db.config().effective_shards());
        let (shard, qp_a, qp_b) = if transport == TransportMode::Rc {
            let shard = vqpn_a as usize % shards;
            let key = if src <= dest_node {
                (src, dest_node, shard)
            } else {
                (dest_node, src, shard)
            };
            let (qlow, qhigh) = match ctl.qp_pairs.get(&key) {
                Some(pair) => *pair,
                None => {
                    let pair = self.fabric.with(|f| -> verbs_sim::Result<_> {
                        let ql = f.create_qp(key.0, TransportMode::Rc, daemon_cq(ctl, key.0), Some(daemon_srq(ctl, key.0)))?;
                        let qh = f.create_qp(key.1, TransportMode::Rc, daemon_cq(ctl, key.1), Some(daemon_srq(ctl, key.1)))?;
                        f.connect_qp(ql, qh)?;
                        Ok((ql, qh))
                    })?;
                    for (n, q) in [(key.0, pair.0), (key.1, pair.1)] {
                        let dn = &ctl.daemons[&n];
                        dn.poller.lock().unwrap().qp_owner.insert(q, shard);
                        dn.qp_count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    }
                    ctl.qp_pairs.insert(key, pair);
                    pair
                }
            };
            if src <= dest_node {
                (shard, qlow, qhigh)
            } else {
                (shard, qhigh, qlow)
            }
        } else {
            (0, da.ud_qp, db.ud_qp)
        };

        let vc_a = Arc::new(VcShared {
            fd: fd_a,
            vqpn: vqpn_a,
            transport,
            qp: qp_a,
            ud_dest: (transport == TransportMode::Ud).then_some((dest_node, qp_b)),
            remote_rkey: db.pool_region().remote_key,
            remote_pool: Arc::clone(&db.pool),
            remote_load: Arc::clone(&db.cpu_load_bits),
            mu: Mutex::new(VcMut { state: VcState::Open, remote_exposed: None }),
        });
        let vc_b = Arc::new(VcShared {
            fd: fd_b,
            vqpn: vqpn_b,
            transport,
            qp: qp_b,
            ud_dest: (transport == TransportMode::Ud).then_some((src, qp_a)),
            remote_rkey: da.pool_region().remote_key,
            remote_pool: Arc::clone(&da.pool),
            remote_load: Arc::clone(&da.cpu_load_bits),
            mu: Mutex::new(VcMut { state: VcState::Open, remote_exposed: None }),
        });

        let src_tag_on_a = if transport == TransportMode::Ud { dest_node.0 } else { SRC_RC };
        let src_tag_on_b = if transport == TransportMode::Ud { src.0 } else { SRC_RC };
        let key_a = DemuxKey { qp: qp_a.0, src: src_tag_on_a, vqpn: vqpn_b };
        let key_b = DemuxKey { qp: qp_b.0, src: src_tag_on_b, vqpn: vqpn_a };
        da.publish_demux(|m| m.insert(key_a, fd_a));
        db.publish_demux(|m| m.insert(key_b, fd_b));

        let ep_a = install_endpoint(self, &da, Arc::clone(&vc_a), shard)?;
        let ep_b = install_endpoint(self, &db, Arc::clone(&vc_b), shard)?;

        ctl.conns.insert(
            (src, fd_a),
            ConnCtl {
                vc: vc_a,
                peer: Some((dest_node, fd_b)),
                staging: ep_a.staging,
                worker: shard,
                own_key: Some(key_a),
                exposed: Vec::new(),
                release_on_close: Vec::new(),
            },
        );
        ctl.conns.insert(
            (dest_node, fd_b),
            ConnCtl {
                vc: vc_b,
                peer: Some((src, fd_a)),
                staging: ep_b.staging,
                worker: shard,
                own_key: Some(key_b),
                exposed: Vec::new(),
                release_on_close: Vec::new(),
            },
        );

        if let Some(l) = ctl.listeners.get_mut(&(dest_node, dest_addr)) {
            if l.open {
                l.queue.push_back(ep_b);
                l.event.signal();
            }
        }
        Ok(ep_a)
    }

    /// Expose `len` bytes of `node`'s pool as the READ source for the
    /// peer of (node, fd); returns the pool offset for the caller to fill.
    pub fn expose(&self, node: NodeId, fd: u32, len: u64) -> Result<u64> {
        let mut ctl = self.ctl.lock().unwrap();
        let ctl = &mut *ctl;
        let d = ctl.daemons.get(&node).ok_or(DaemonError::BadFd)?;
        let off = d
            .pool
            .lock()
            .unwrap()
            .alloc(len)
            .ok_or_else(|| DaemonError::Transport("staging pool exhausted".into()))?;
        let conn = match ctl.conns.get_mut(&(node, fd)) {
            Some(c) => c,
            None => {
                d.pool.lock().unwrap().free(off);
                return Err(DaemonError::BadFd);
            }
        };
        conn.exposed.push(off);
        let peer = conn.peer.ok_or(DaemonError::Closed)?;
        let peer_vc = Arc::clone(&ctl.conns.get(&peer).ok_or(DaemonError::Closed)?.vc);
        peer_vc.mu.lock().unwrap().remote_exposed = Some((off, len));
        Ok(off)
    }

    /// Close one endpoint: stops inbound demux and releases staging. For
    /// RC the peer's route (and thus our vQPN) survives until the peer
    /// also closes, so in-flight messages — including the in-band EOF the
    /// worker sends for an `OpCode::Close` — still demultiplex. UD peers
    /// are notified through the control plane instead.
    pub fn close(&self, node: NodeId, fd: u32) -> Result<()> {
        let mut ctl = self.ctl.lock().unwrap();
        let ctl = &mut *ctl;
        let mut conn = ctl.conns.remove(&(node, fd)).ok_or(DaemonError::BadFd)?;
        conn.vc.mu.lock().unwrap().state = VcState::Closed;
        let d = ctl.daemons.get(&node).unwrap();
        if let Some(key) = conn.own_key {
            d.publish_demux(|m| m.remove(&key));
        }
        for off in conn.exposed.drain(..) {
            d.pool.lock().unwrap().free(off);
        }
        let _ = self.fabric.with(|f| f.deregister_mr(conn.staging.mr_id));
        // Our demux entry is gone: vQPNs the departed peer parked on it
        // can recycle now.
        for (n, v) in conn.release_on_close.drain(..) {
            ctl.vqpns.get_mut(&n).unwrap().release(v);
        }

        let mut release_now = true;
        if let Some(peer) = conn.peer {
            if let Some(pc) = ctl.conns.get_mut(&peer) {
                pc.peer = None;
                pc.vc.mu.lock().unwrap().remote_exposed = None;
                if conn.vc.transport == TransportMode::Ud {
                    if let Some(pk) = pc.own_key.take() {
                        ctl.daemons[&peer.0].publish_demux(|m| m.remove(&pk));
                    }
                    ctl.daemons[&peer.0].push_notice(ResponseRecord {
                        kind: RespKind::Eof,
                        fd: peer.1,
                        region: 0,
                        offset: 0,
                        length: 0,
                        status: status::OK,
                        seq: 0,
                    });
                } else {
                    pc.release_on_close.push((node, conn.vc.vqpn));
                    release_now = false;
                }
            }
        }
        if release_now {
            ctl.vqpns.get_mut(&node).unwrap().release(conn.vc.vqpn);
        }
        Ok(())
    }

    /// (vQPN, shared QP id) of a live connection — introspection for
    /// drivers and tests.
    pub fn vc_info(&self, node: NodeId, fd: u32) -> Option<(u32, u32)> {
        let ctl = self.ctl.lock().unwrap();
        ctl.conns.get(&(node, fd)).map(|c| (c.vc.vqpn, c.vc.qp.0))
    }

    /// Worker index that owns the fd's lane (test/driver support).
    pub fn worker_of(&self, node: NodeId, fd: u32) -> Option<usize> {
        let ctl = self.ctl.lock().unwrap();
        let conn = ctl.conns.get(&(node, fd))?;
        let d = ctl.daemons.get(&node)?;
        Some(worker_for(d, conn.worker))
    }
}

fn bump_fd(next: &mut HashMap<NodeId, u32>, node: NodeId) -> u32 {
    let c = next.get_mut(&node).expect("daemon registered");
    let fd = *c;
    *c += 1;
    fd
}

fn daemon_cq(ctl: &Control, node: NodeId) -> verbs_sim::CqId {
    ctl.daemons[&node].cq
}

fn daemon_srq(ctl: &Control, node: NodeId) -> verbs_sim::SrqId {
    ctl.daemons[&node].srq
}

fn worker_for(d: &Daemon, shard: usize) -> usize {
    if d.config().worker_count == 0 {
        0
    } else {
        shard % d.config().worker_count
    }
}

fn install_endpoint(
    cluster: &Cluster,
    d: &Arc<Daemon>,
    vc: Arc<VcShared>,
    shard: usize,
) -> Result<AppEndpoint> {
    let cap = d.config().ring_capacity;
    let (req_p, req_c) =
        ring_create::<RequestRecord>(cap).map_err(|e| DaemonError::BadConfig(e.to_string()))?;
    let (resp_p, resp_c) =
        ring_create::<ResponseRecord>(cap).map_err(|e| DaemonError::BadConfig(e.to_string()))?;
    let wi = worker_for(d, shard);
    // Clients signal the owning worker directly after enqueuing.
    let req_event = d.worker_events[wi].clone();
    let resp_event = EventChannel::new();
    let staging = cluster
        .fabric
        .with(|f| f.register_mr(d.node(), d.config().app_staging_bytes))?;

    let fd = vc.fd;
    d.workers[wi].lock().unwrap().lanes.push(Lane { fd, vc, req: req_c, seq32: 0 });
    d.poller.lock().unwrap().apps.insert(
        fd,
        AppLane { resp: resp_p, event: resp_event.clone(), backlog: VecDeque::new() },
    );
    Ok(AppEndpoint {
        node: d.node(),
        fd,
        req: req_p,
        req_event,
        resp: resp_c,
        resp_event,
        staging,
        pool_region: d.pool_region().mr_id.0,
    })
}

//! The per-node service daemon: owns the staging pool, SRQ, CQ, worker
//! and poller state, and the demux table. Data-path progress is driven
//! either by `worker_drain`/`poller_poll` steps (deterministic harnesses)
//! or by `launch`ed threads.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use ipc_ring::{ring_create, EventChannel, ResponseRecord};
use verbs_sim::{CqId, MemoryRegion, MrId, NodeId, QpId, SharedFabric, SrqId, TransportMode};

use crate::config::DaemonConfig;
use crate::error::{DaemonError, Result};
use crate::metrics::{Metrics, MetricsSnapshot};
use crate::policy::{LoadMeter, LoadStats};
use crate::pool::ArenaPool;
use crate::state::*;
use crate::{poller, worker};

pub struct Daemon {
    pub(crate) node: NodeId,
    pub(crate) cfg: DaemonConfig,
    pub(crate) fabric: SharedFabric,
    pub(crate) cq: CqId,
    pub(crate) srq: SrqId,
    pub(crate) ud_qp: QpId,
    pub(crate) pool: Arc<Mutex<ArenaPool>>,
    pub(crate) pool_mr: MemoryRegion,
    pub(crate) mtu: u64,
    pub(crate) workers: Vec<Mutex<WorkerState>>,
    pub(crate) worker_events: Vec<EventChannel>,
    pub(crate) poller: Mutex<PollerState>,
    /// Snapshot-published vQPN demux table: control replaces the Arc under
    /// the mutex; the poller clones it once per cycle.
    pub(crate) demux: Mutex<Arc<HashMap<DemuxKey, u32>>>,
    /// Control-plane notifications (EOF etc.) delivered by the poller.
    pub(crate) notices: Mutex<VecDeque<ResponseRecord>>,
    pub(crate) metrics: Metrics,
    pub(crate) load_meter: Mutex<LoadMeter>,
    pub(crate) cpu_load_bits: Arc<AtomicU64>,
    pub(crate) qp_count: AtomicU64,
    stop: AtomicBool,
    started: AtomicBool,
    workers_live: AtomicUsize,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl Daemon {
    pub(crate) fn new(node: NodeId, cfg: DaemonConfig, fabric: SharedFabric) -> Result<Daemon> {
        cfg.validate()?;
        let (cq, srq, ud_qp, pool_mr, mtu) = fabric.with(|f| -> verbs_sim::Result<_> {
            let cq = f.create_cq(node)?;
            let srq = f.create_srq(node)?;
            let ud_qp = f.create_qp(node, TransportMode::Ud, cq, None)?;
            let pool_mr = f.register_mr(node, cfg.pool_bytes)?;
            Ok((cq, srq, ud_qp, pool_mr, f.config().mtu))
        })?;

        let mut workers = Vec::new();
        let mut worker_events = Vec::new();
        let mut sources = Vec::new();
        for _ in 0..cfg.worker_count {
            let (pend_p, pend_c) = ring_create::<PendingOp>(cfg.pending_capacity)
                .map_err(|e| DaemonError::BadConfig(e.to_string()))?;
            let (fail_p, fail_c) = ring_create::<ResponseRecord>(cfg.pending_capacity)
                .map_err(|e| DaemonError::BadConfig(e.to_string()))?;
            workers.push(Mutex::new(WorkerState {
                lanes: Vec::new(),
                pending: pend_p,
                fails: fail_p,
                next_lane: 0,
            }));
            worker_events.push(EventChannel::new());
            sources.push(PendingSrc {
                ring: pend_c,
                fails: fail_c,
                local: VecDeque::new(),
                deferred: VecDeque::new(),
            });
        }

        let now = fabric.now();
        let d = Daemon {
            node,
            mtu,
            cq,
            srq,
            ud_qp,
            pool: Arc::new(Mutex::new(ArenaPool::new(pool_mr))),
            pool_mr,
            workers,
            worker_events,
            poller: Mutex::new(PollerState {
                apps: HashMap::new(),
                sources,
                qp_owner: HashMap::from([(ud_qp, 0usize)]),
                recv_slots: HashMap::new(),
                next_recv_id: 0,
                ud_posted: 0,
                data_seq: HashMap::new(),
            }),
            demux: Mutex::new(Arc::new(HashMap::new())),
            notices: Mutex::new(VecDeque::new()),
            metrics: Metrics::default(),
            load_meter: Mutex::new(LoadMeter::new(now)),
            cpu_load_bits: Arc::new(AtomicU64::new(0f64.to_bits())),
            qp_count: AtomicU64::new(1),
            stop: AtomicBool::new(false),
            started: AtomicBool::new(false),
            workers_live: AtomicUsize::new(0),
            threads: Mutex::new(Vec::new()),
            fabric,
            cfg,
        };
        // Stock the SRQ and the UD receive queue before any traffic.
        d.poller_poll();
        Ok(d)
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn config(&self) -> &DaemonConfig {
        &self.cfg
    }

    pub fn pool_region(&self) -> MemoryRegion {
        self.pool_mr
    }

    /// One drain pass of worker `i`: dequeues requests, applies the
    /// policy, batch-posts per QP. Returns requests processed.
    pub fn worker_drain(&self, i: usize) -> usize {
        let mut w = self.workers[i].lock().unwrap();
        worker::drain(self, &mut w)
    }

    /// One poller cycle: forwards worker responses, drains the CQ,
    /// refills receive queues. Returns responses delivered.
    pub fn poller_poll(&self) -> usize {
        let mut p = self.poller.lock().unwrap();
        poller::poll(self, &mut p)
    }

    pub fn metrics_snapshot(&self) -> MetricsSnapshot {
        self.metrics.snapshot()
    }

    pub fn unknown_vqpn_count(&self) -> u64 {
        self.metrics.unknown_vqpn.load(Ordering::Relaxed)
    }

    /// RC QPs created for this daemon's shards (excludes the UD QP).
    pub fn rc_qp_count(&self) -> u64 {
        self.qp_count.load(Ordering::Relaxed) - 1
    }

    pub fn load_stats(&self) -> LoadStats {
        LoadStats {
            cpu_load: f64::from_bits(self.cpu_load_bits.load(Ordering::Relaxed)),
            mem_used: self.pool.lock().unwrap().used(),
        }
    }

    pub(crate) fn record_busy(&self, busy_ns: f64) {
        let now = self.fabric.now();
        let mut m = self.load_meter.lock().unwrap();
        m.record(now, busy_ns);
        self.cpu_load_bits.store(m.load().to_bits(), Ordering::Relaxed);
    }

    /// `ts,node,qps_active,cache_hit_rate,msgs,bytes,mean_ns,cpu_load,mem_units`
    pub fn metrics_csv_line(&self) -> String {
        let s = self.metrics.snapshot();
        let (hit_rate, used) = self.fabric.with(|f| {
            (
                f.nic_hit_rate(self.node).unwrap_or(0.0),
                f.arena_used(self.node).unwrap_or(0),
            )
        });
        format!(
            "{:.1},{},{},{:.4},{},{},{:.1},{:.4},{}",
            self.fabric.now(),
            self.node,
            self.qp_count.load(Ordering::Relaxed),
            hit_rate,
            s.msgs,
            s.bytes,
            s.mean_ns(),
            f64::from_bits(self.cpu_load_bits.load(Ordering::Relaxed)),
            used,
        )
    }

    /// Host-side copy between registered regions (no simulated cost).
    pub(crate) fn host_copy(
        &self,
        src: MrId,
        src_off: u64,
        dst: MrId,
        dst_off: u64,
        len: u64,
    ) -> Result<()> {
        self.fabric.with(|f| -> verbs_sim::Result<()> {
            let data = f.read_app(src, src_off, len)?;
            f.write_app(dst, dst_off, &data)
        })?;
        Ok(())
    }

    pub(crate) fn publish_demux<R>(
        &self,
        edit: impl FnOnce(&mut HashMap<DemuxKey, u32>) -> R,
    ) -> R {
        let mut guard = self.demux.lock().unwrap();
        let mut map = (**guard).clone();
        let r = edit(&mut map);
        *guard = Arc::new(map);
        r
    }

    pub(crate) fn push_notice(&self, r: ResponseRecord) {
        self.notices.lock().unwrap().push_back(r);
    }

    pub(crate) fn stopping(&self) -> bool {
        self.stop.load(Ordering::Acquire)
    }

    pub fn threads_running(&self) -> usize {
        let joined = self.threads.lock().unwrap().iter().filter(|t| t.is_finished()).count();
        let total = self.threads.lock().unwrap().len();
        total - joined
    }

    /// Spawn the worker threads and the poller thread.
    pub fn launch(self: &Arc<Self>) -> Result<()> {
        if self.started.swap(true, Ordering::AcqRel) {
            return Err(DaemonError::BadConfig("daemon already launched".into()));
        }
        self.stop.store(false, Ordering::Release);
        let mut threads = self.threads.lock().unwrap();
        self.workers_live.store(self.cfg.worker_count, Ordering::Release);
        for i in 0..self.cfg.worker_count {
            let d = Arc::clone(self);
            threads.push(std::thread::spawn(move || {
                loop {
                    let n = d.worker_drain(i);
                    if n == 0 {
                        if d.stopping() {
                            break;
                        }
                        d.worker_events[i].wait(Duration::from_millis(1));
                    }
                }
                d.workers_live.fetch_sub(1, Ordering::AcqRel);
            }));
        }
        let d = Arc::clone(self);
        threads.push(std::thread::spawn(move || {
            let mut quiet = 0;
            loop {
                let n = d.poller_poll();
                if d.stopping() && d.workers_live.load(Ordering::Acquire) == 0 {
                    // Two consecutive empty cycles after the workers exit
                    // means every accepted request has been answered.
                    if n == 0 {
                        quiet += 1;
                        if quiet >= 2 {
                            break;
                        }
                    } else {
                        quiet = 0;
                    }
                }
                if n == 0 {
                    std::thread::sleep(Duration::from_micros(200));
                }
            }
        }));
        Ok(())
    }

    /// Stop the threads, draining in-flight requests first.
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::Release);
        for ev in &self.worker_events {
            ev.signal();
        }
        let threads: Vec<_> = self.threads.lock().unwrap().drain(..).collect();
        for t in threads {
            let _ = t.join();
        }
        self.started.store(false, Ordering::Release);
    }
}

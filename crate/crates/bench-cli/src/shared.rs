//! Shared-QP runners: the daemon-based mode, and the lock-sharing
//! baseline layered on top of it.
//!
//! Measured runs drive the daemons through their deterministic stepping
//! entry points (worker drains and poller polls in a fixed round-robin),
//! so identical scenarios produce identical clocks and byte-identical
//! CSV. Scenario `threads` sets the daemon worker count; in the locked
//! baseline the same workers model `q` application threads contending on
//! each shared QP, charged a fixed handoff penalty per contended
//! doorbell.

use std::sync::Arc;
use std::time::Duration;

use ipc_ring::{OpCode, RequestRecord, RespKind};
use raas_daemon::flags::{FLAG_RC, FLAG_READ, FLAG_REGION_ACK, FLAG_WRITE};
use raas_daemon::{AppEndpoint, Cluster, Daemon, DaemonConfig, PolicyConfig};
use verbs_sim::SimConfig;

use crate::error::{BenchError, Result};
use crate::naive::QP_MEM_POINTS;
use crate::report::RunStats;
use crate::scenario::{BenchScenario, Op};

const ADDR_SERVER: &str = "ipv4:10.2.0.2";
/// Sequence space for region acks, disjoint from operation sequences.
const ACK_SEQ: u64 = 1 << 62;

struct Rig {
    cluster: Cluster,
    da: Arc<Daemon>,
    db: Arc<Daemon>,
    clients: Vec<AppEndpoint>,
    servers: Vec<AppEndpoint>,
    pool_bytes: u64,
}

fn setup(sc: &BenchScenario, n: u64) -> Result<Rig> {
    let msg = sc.msg_size;
    // The pool must hold every connection's exposed READ source (server
    // side) or one in-flight landing extent per connection (client side),
    // plus the receive slots.
    let pool_bytes = (n * msg + (16 << 20)).max(32 << 20);
    let sim = SimConfig {
        cache_capacity: sc.cache_capacity,
        arena_bytes: pool_bytes + n * 4096 + (16 << 20),
        ..SimConfig::default()
    };
    let dcfg = DaemonConfig {
        worker_count: sc.threads,
        srq_depth: 64,
        srq_low_watermark: 16,
        pool_bytes,
        app_staging_bytes: 4096,
        policy: PolicyConfig { batching_window: sc.batching_window, ..PolicyConfig::default() },
        ..DaemonConfig::default()
    };
    let cluster = Cluster::new(sim);
    let a = cluster.add_node("client");
    let b = cluster.add_node("server");
    let da = cluster.start_daemon(a, &["ipv4:10.2.0.1"], dcfg.clone())?;
    let db = cluster.start_daemon(b, &[ADDR_SERVER], dcfg)?;
    cluster.listen(b, ADDR_SERVER)?;
    let addr: raas_daemon::Addr = ADDR_SERVER.parse().unwrap();

    let mut clients = Vec::with_capacity(n as usize);
    let mut servers = Vec::with_capacity(n as usize);
    for _ in 0..n {
        clients.push(cluster.connect(a, ADDR_SERVER, raas_daemon::Flags::DEFAULT)?);
        let ep_b = cluster.accept(b, addr, Duration::from_secs(1))?;
        if sc.op == Op::Read {
            cluster.expose(b, ep_b.fd, msg)?;
        }
        servers.push(ep_b);
    }
    Ok(Rig { cluster, da, db, clients, servers, pool_bytes })
}

fn pump(da: &Daemon, db: &Daemon) {
    loop {
        let mut moved = 0;
        for d in [da, db] {
            for i in 0..d.config().worker_count {
                moved += d.worker_drain(i);
            }
            moved += d.poller_poll();
        }
        if moved == 0 {
            break;
        }
    }
}

fn op_flags(op: Op) -> u32 {
    match op {
        Op::Read => FLAG_RC | FLAG_READ,
        Op::Write => FLAG_RC | FLAG_WRITE,
        Op::Send => 0,
    }
}

fn ack_record(fd: u32, region: u32, offset: u64, length: u64) -> RequestRecord {
    RequestRecord {
        op: OpCode::RecvReady,
        fd,
        region,
        offset,
        length,
        flags: FLAG_REGION_ACK,
        seq: ACK_SEQ,
    }
}

/// Drain one endpoint's responses. READ completions (when `ack_replies`)
/// and inbound Data both hand us a pool extent, which is released with a
/// region ack. Returns (completed ops, failed ops).
fn absorb(ep: &mut AppEndpoint, acks: &mut Vec<RequestRecord>, ack_replies: bool) -> (u64, u64) {
    let (mut done, mut failed) = (0u64, 0u64);
    while let Ok(r) = ep.resp.dequeue() {
        match r.kind {
            RespKind::Reply => {
                if r.seq >= ACK_SEQ {
                    continue; // confirmation of a region ack
                }
                if r.status != 0 {
                    failed += 1;
                    continue;
                }
                done += 1;
                if ack_replies && r.length > 0 {
                    acks.push(ack_record(ep.fd, r.region, r.offset, r.length));
                }
            }
            RespKind::Data => acks.push(ack_record(ep.fd, r.region, r.offset, r.length)),
            RespKind::Eof => {}
        }
    }
    (done, failed)
}

fn flush_acks(rig: &mut Rig, acks: &mut Vec<RequestRecord>) -> Result<()> {
    if acks.is_empty() {
        return Ok(());
    }
    for rec in acks.drain(..) {
        let ep = rig
            .clients
            .iter_mut()
            .chain(rig.servers.iter_mut())
            .find(|e| e.fd == rec.fd)
            .ok_or_else(|| BenchError::Runner("ack for unknown endpoint".into()))?;
        ep.req
            .enqueue(rec)
            .map_err(|_| BenchError::Runner("ack ring full".into()))?;
    }
    pump(&rig.da, &rig.db);
    Ok(())
}

/// How many connections land on each worker (fds and vQPNs are allocated
/// in lockstep, shard = vqpn % workers).
fn lane_spread(n: u64, workers: usize) -> Vec<usize> {
    let w = workers.max(1) as u64;
    (0..w).map(|k| ((n + w - 1 - k) / w) as usize).collect()
}

pub fn run_shared_point(sc: &BenchScenario, n: u64, locked_q: Option<usize>) -> Result<RunStats> {
    let msg = sc.msg_size;
    let ack_replies = sc.op == Op::Read;
    let mut rig = setup(sc, n)?;
    let fabric = rig.cluster.fabric();
    let flags = op_flags(sc.op);

    // SEND/WRITE payloads come from per-connection staging; fill offset 0
    // once (the 4 KiB staging caps those ops in measured runs).
    if sc.op != Op::Read {
        if msg > 4096 {
            return Err(BenchError::Config(
                "SEND/WRITE measured runs use the 4 KiB staging buffer; msg_size too large".into(),
            ));
        }
        let fill = vec![0x5au8; msg as usize];
        for ep in &rig.clients {
            fabric.with(|f| f.write_app(ep.staging.mr_id, 0, &fill))?;
        }
    }

    let t0 = fabric.now();
    let (mut replies, mut failures) = (0u64, 0u64);
    let mut acks: Vec<RequestRecord> = Vec::new();
    for round in 0..sc.ops_per_conn {
        for ep in rig.clients.iter_mut() {
            ep.req
                .enqueue(RequestRecord {
                    op: OpCode::Send,
                    fd: ep.fd,
                    region: ep.staging.mr_id.0,
                    offset: 0,
                    length: msg,
                    flags,
                    seq: round,
                })
                .map_err(|_| BenchError::Runner("request ring full".into()))?;
        }
        pump(&rig.da, &rig.db);
        for ep in rig.clients.iter_mut() {
            let (d, f) = absorb(ep, &mut acks, ack_replies);
            replies += d;
            failures += f;
        }
        for ep in rig.servers.iter_mut() {
            absorb(ep, &mut acks, false);
        }
        // Hand extents back before the next wave so the pools stay level.
        flush_acks(&mut rig, &mut acks)?;
    }
    pump(&rig.da, &rig.db);
    for ep in rig.clients.iter_mut() {
        let (d, f) = absorb(ep, &mut acks, ack_replies);
        replies += d;
        failures += f;
    }
    for ep in rig.servers.iter_mut() {
        absorb(ep, &mut acks, false);
    }
    flush_acks(&mut rig, &mut acks)?;

    let total_ops = n * sc.ops_per_conn;
    if failures > 0 || replies < total_ops {
        return Err(BenchError::Runner(format!(
            "completed {replies} of {total_ops} operations ({failures} failed)"
        )));
    }
    let mut elapsed = fabric.now() - t0;
    let mut cpu = fabric.now();

    // Lock-sharing model: every doorbell is one lock acquisition; with q
    // threads per QP, each handoff rotation contends q-1 times.
    let mut contended = 0u64;
    if let Some(q) = locked_q {
        if q > 1 {
            let batches_per_round: u64 = lane_spread(n, sc.threads)
                .iter()
                .map(|&l| (l as u64).div_ceil(sc.batching_window as u64))
                .sum();
            contended = batches_per_round * sc.ops_per_conn * (q as u64 - 1);
            let penalty = contended as f64 * sc.lock_penalty_ns;
            elapsed += penalty;
            cpu += penalty;
        }
    }

    let qp_total = rig.da.rc_qp_count() + rig.db.rc_qp_count() + 2;
    Ok(RunStats {
        ops: total_ops,
        bytes: total_ops * msg,
        elapsed_ns: elapsed,
        mem_points: 2.0 * rig.pool_bytes as f64
            + 2.0 * n as f64 * 4096.0
            + QP_MEM_POINTS * qp_total as f64,
        cpu_points: cpu,
        cache_hit_rate: fabric.with(|f| f.nic_hit_rate(rig.da.node()))?,
        contended_acquisitions: contended,
    })
}

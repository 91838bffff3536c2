//! Shared test harness: a two-node cluster with a daemon on each side and
//! request/response plumbing driven by deterministic stepping.
#![allow(dead_code)]

use std::sync::Arc;

use ipc_ring::{OpCode, RequestRecord, ResponseRecord};
use raas_daemon::flags::FLAG_REGION_ACK;
use raas_daemon::{AppEndpoint, Cluster, Daemon, DaemonConfig};
use verbs_sim::{NodeId, SharedFabric, SimConfig};

pub const ADDR_A: &str = "ipv4:10.0.0.1";
pub const ADDR_B: &str = "ipv4:10.0.0.2";

pub struct Net {
    pub cluster: Cluster,
    pub a: NodeId,
    pub b: NodeId,
    pub da: Arc<Daemon>,
    pub db: Arc<Daemon>,
}

pub fn net(cfg_a: DaemonConfig, cfg_b: DaemonConfig) -> Net {
    let cluster = Cluster::new(SimConfig::default());
    let a = cluster.add_node("a");
    let b = cluster.add_node("b");
    let da = cluster.start_daemon(a, &[ADDR_A], cfg_a).unwrap();
    let db = cluster.start_daemon(b, &[ADDR_B], cfg_b).unwrap();
    Net { cluster, a, b, da, db }
}

/// Stage a payload in the endpoint's buffer and enqueue a send request.
pub fn send_req(
    fab: &SharedFabric,
    ep: &mut AppEndpoint,
    payload: &[u8],
    staging_off: u64,
    flags: u32,
    seq: u64,
) {
    fab.with(|f| f.write_app(ep.staging.mr_id, staging_off, payload)).unwrap();
    ep.req
        .enqueue(RequestRecord {
            op: OpCode::Send,
            fd: ep.fd,
            region: ep.staging.mr_id.0,
            offset: staging_off,
            length: payload.len() as u64,
            flags,
            seq,
        })
        .unwrap();
}

/// Release a delivered region back to the daemon pool.
pub fn ack(ep: &mut AppEndpoint, data: &ResponseRecord, seq: u64) {
    ep.req
        .enqueue(RequestRecord {
            op: OpCode::RecvReady,
            fd: ep.fd,
            region: data.region,
            offset: data.offset,
            length: data.length,
            flags: FLAG_REGION_ACK,
            seq,
        })
        .unwrap();
}

/// Step every worker and poller round-robin until a full quiet round.
pub fn pump(daemons: &[&Daemon]) {
    loop {
        let mut n = 0;
        for d in daemons {
            for i in 0..d.config().worker_count {
                n += d.worker_drain(i);
            }
            n += d.poller_poll();
        }
        if n == 0 {
            break;
        }
    }
}

pub fn drain_resp(ep: &mut AppEndpoint) -> Vec<ResponseRecord> {
    let mut out = Vec::new();
    while let Ok(r) = ep.resp.dequeue() {
        out.push(r);
    }
    out
}

//! Baseline runner: one dedicated QP pair and private memory regions per
//! connection, single posts, round-robin issue order. Past the NIC's
//! context-cache capacity every access evicts, which is the scalability
//! cliff this baseline exists to exhibit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use verbs_sim::{Fabric, LocalBuf, QpId, RemoteBuf, SimConfig, TransportMode, WorkRequest};

use crate::error::Result;
use crate::report::RunStats;
use crate::scenario::{BenchScenario, Op};

/// Fixed per-QP context charge in memory points, mirroring the adapter
/// state a QP pins.
pub const QP_MEM_POINTS: f64 = 4096.0;

struct Conn {
    qp: QpId,
    landing: verbs_sim::MemoryRegion,
    remote_key: u32,
}

pub fn run_naive_point(sc: &BenchScenario, n: u64) -> Result<RunStats> {
    let msg = sc.msg_size;
    let cfg = SimConfig {
        cache_capacity: sc.cache_capacity,
        arena_bytes: (2 * n * msg + (32 << 20)).max(64 << 20),
        ..SimConfig::default()
    };
    let mut f = Fabric::new(cfg);
    let client = f.add_node("client");
    let server = f.add_node("server");
    let cq_c = f.create_cq(client)?;
    let cq_s = f.create_cq(server)?;

    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut conns = Vec::with_capacity(n as usize);
    let mut reg_bytes = 0u64;
    let mut qp_total = 0u64;
    let fill: Vec<u8> = (0..msg.min(4096)).map(|_| rng.gen()).collect();
    for _ in 0..n {
        let src = f.register_mr(server, msg)?;
        f.write_app(src.mr_id, 0, &fill)?;
        let landing = f.register_mr(client, msg)?;
        let qc = f.create_qp(client, TransportMode::Rc, cq_c, None)?;
        let qs = f.create_qp(server, TransportMode::Rc, cq_s, None)?;
        f.connect_qp(qc, qs)?;
        reg_bytes += 2 * msg;
        qp_total += 2;
        conns.push(Conn { qp: qc, landing, remote_key: src.remote_key });
    }

    if sc.op == Op::Send {
        // SEND needs a receiver loop; the baseline models one-sided traffic.
        return Err(crate::error::BenchError::Config(
            "NAIVE supports READ and WRITE ops".into(),
        ));
    }
    let t0 = f.now();
    let total_ops = n * sc.ops_per_conn;
    for i in 0..total_ops {
        let c = &conns[(i % n) as usize];
        let local = LocalBuf { mr_id: c.landing.mr_id, offset: 0, length: msg };
        let remote = RemoteBuf { remote_key: c.remote_key, offset: 0 };
        let wr = match sc.op {
            Op::Write => WorkRequest::write(i, local, remote),
            _ => WorkRequest::read(i, local, remote),
        };
        f.post_send(c.qp, wr)?;
        if i % 256 == 255 {
            f.poll_cq(cq_c, 256)?;
        }
    }
    f.poll_cq(cq_c, usize::MAX)?;
    let elapsed = f.now() - t0;

    Ok(RunStats {
        ops: total_ops,
        bytes: total_ops * msg,
        elapsed_ns: elapsed,
        mem_points: reg_bytes as f64 + QP_MEM_POINTS * qp_total as f64,
        cpu_points: f.now(),
        cache_hit_rate: f.nic_hit_rate(client)?,
        contended_acquisitions: 0,
    })
}

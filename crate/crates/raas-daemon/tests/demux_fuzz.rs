//! Randomized multiplexing stress: 100 virtual connections share a single
//! QP and 10^5 labeled messages are interleaved in random order. Every
//! message must land on exactly the fd whose connection sent it, in per-
//! connection order, with exactly one response per (fd, seq).

mod util;

use std::collections::HashMap;
use std::time::Duration;

use ipc_ring::RespKind;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use raas_daemon::{status, DaemonConfig, Flags};
use util::*;
use verbs_sim::MrId;

const VCS: usize = 100;
const ROUNDS: usize = 125;
const PER_ROUND: usize = 8;
const MSG: u64 = 32;

fn label(vc: u32, msg: u32) -> [u8; 32] {
    let mut b = [0u8; 32];
    b[0..4].copy_from_slice(&vc.to_le_bytes());
    b[4..8].copy_from_slice(&msg.to_le_bytes());
    let sum = vc.wrapping_mul(0x9e3779b9) ^ msg.wrapping_mul(0x85ebca6b);
    b[8..12].copy_from_slice(&sum.to_le_bytes());
    b
}

#[test]
fn no_cross_delivery_under_interleaving() {
    // Small per-connection staging: 100 endpoints per node must fit the
    // simulated host arena alongside the daemon pools.
    let cfg = DaemonConfig {
        worker_count: 1,
        qps_per_node: 1,
        app_staging_bytes: 4096,
        ..Default::default()
    };
    let net = net(cfg.clone(), cfg);
    let fab = net.cluster.fabric();
    net.cluster.listen(net.b, ADDR_B).unwrap();
    let addr: raas_daemon::Addr = ADDR_B.parse().unwrap();

    let mut senders = Vec::new();
    let mut receivers = Vec::new();
    for _ in 0..VCS {
        senders.push(net.cluster.connect(net.a, ADDR_B, Flags::DEFAULT).unwrap());
        receivers.push(net.cluster.accept(net.b, addr, Duration::from_secs(1)).unwrap());
    }
    let shared_qp = net.cluster.vc_info(net.a, senders[0].fd).unwrap().1;
    for ep in &senders {
        assert_eq!(net.cluster.vc_info(net.a, ep.fd).unwrap().1, shared_qp);
    }
    // Receiver fd -> index into `receivers`, for checking delivery targets.
    let fd_to_vc: HashMap<u32, u32> =
        receivers.iter().enumerate().map(|(i, ep)| (ep.fd, i as u32)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut sent = vec![0u32; VCS];
    let mut recvd = vec![0u32; VCS];
    let mut replies = vec![0u64; VCS];

    for _ in 0..ROUNDS {
        // Random interleaving of PER_ROUND messages from every connection.
        let mut order: Vec<usize> = (0..VCS).flat_map(|v| [v; PER_ROUND]).collect();
        order.shuffle(&mut rng);
        let mut slot = vec![0u64; VCS];
        for &v in &order {
            let payload = label(v as u32, sent[v]);
            send_req(&fab, &mut senders[v], &payload, slot[v] * MSG, 0, sent[v] as u64);
            sent[v] += 1;
            slot[v] += 1;
        }
        pump(&[&net.da, &net.db]);

        for (v, ep) in senders.iter_mut().enumerate() {
            for r in drain_resp(ep) {
                assert_eq!(r.kind, RespKind::Reply);
                assert_eq!(r.status, status::OK);
                assert_eq!(r.seq, replies[v], "one reply per seq, in order");
                replies[v] += 1;
            }
        }
        for ep in receivers.iter_mut() {
            let v = fd_to_vc[&ep.fd];
            let datas = drain_resp(ep);
            for d in &datas {
                assert_eq!(d.kind, RespKind::Data);
                let bytes = fab.with(|f| f.read_app(MrId(d.region), d.offset, d.length)).unwrap();
                assert_eq!(bytes, label(v, recvd[v as usize]), "fd {} got a foreign or reordered message", ep.fd);
                recvd[v as usize] += 1;
            }
            let to_ack: Vec<_> = datas.iter().map(|d| (d.region, d.offset, d.length)).collect();
            for (i, (region, offset, length)) in to_ack.into_iter().enumerate() {
                ep.req
                    .enqueue(ipc_ring::RequestRecord {
                        op: ipc_ring::OpCode::RecvReady,
                        fd: ep.fd,
                        region,
                        offset,
                        length,
                        flags: raas_daemon::flags::FLAG_REGION_ACK,
                        seq: i as u64,
                    })
                    .unwrap();
            }
        }
        pump(&[&net.da, &net.db]);
        for ep in receivers.iter_mut() {
            drain_resp(ep);
        }
    }

    let total = (VCS * ROUNDS * PER_ROUND) as u32;
    assert_eq!(sent.iter().sum::<u32>(), total);
    assert_eq!(recvd.iter().sum::<u32>(), total, "every message delivered");
    assert_eq!(replies.iter().sum::<u64>() as u32, total, "every send acknowledged once");
    assert_eq!(net.db.unknown_vqpn_count(), 0);
}

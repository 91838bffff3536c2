//! End-to-end acceptance gate: one test per criterion, each printing a
//! single PASS/FAIL line (run with `--nocapture` to see them on success).

use std::collections::HashMap;
use std::time::{Duration, Instant};

use bench_cli::report::MetricsReport;
use bench_cli::scenario::{BenchScenario, Mode};
use bench_cli::{run_raw_point, run_scenario};
use ipc_ring::{ring_create, EventChannel, OpCode, RequestRecord, RespKind, WaitOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use raas_daemon::flags::{FLAG_RC, FLAG_READ, FLAG_REGION_ACK, FLAG_SEND, FLAG_UD};
use raas_daemon::{
    select_path, send_path_copy_or_register, AppEndpoint, Cluster, CopyMode, Daemon,
    DaemonConfig, Flags, LoadStats, PolicyConfig,
};
use verbs_sim::{
    Fabric, LocalBuf, MrId, QpId, RemoteBuf, SimConfig, TransportMode, Verb, WorkRequest,
};

fn verdict(n: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "CRITERION {n} ({name}): {} -- {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------- 1

#[test]
fn criterion_01_transport_verb_legality() {
    let t0 = Instant::now();
    let mut f = Fabric::new(SimConfig::default());
    let n0 = f.add_node("initiator");
    let n1 = f.add_node("target");
    let cq0 = f.create_cq(n0).unwrap();
    let cq1 = f.create_cq(n1).unwrap();
    let src = f.register_mr(n0, 8192).unwrap();
    let dst = f.register_mr(n1, 8192).unwrap();
    let sink = f.register_mr(n1, 8192).unwrap();

    let mut mismatches = Vec::new();
    let mut pairs = 0;
    for mode in [TransportMode::Rc, TransportMode::Uc, TransportMode::Ud] {
        let qp = f.create_qp(n0, mode, cq0, None).unwrap();
        let tq = f.create_qp(n1, mode, cq1, None).unwrap();
        if mode.is_connected() {
            f.connect_qp(qp, tq).unwrap();
        }
        let local = LocalBuf { mr_id: src.mr_id, offset: 0, length: 64 };
        let remote = RemoteBuf { remote_key: dst.remote_key, offset: 0 };
        for verb in [Verb::Send, Verb::Write, Verb::Read, Verb::Recv] {
            pairs += 1;
            let got = match verb {
                Verb::Recv => f
                    .post_recv(qp, WorkRequest::recv(pairs, LocalBuf {
                        mr_id: src.mr_id,
                        offset: 0,
                        length: 4096,
                    }))
                    .is_ok(),
                Verb::Send => {
                    f.post_recv(tq, WorkRequest::recv(pairs, LocalBuf {
                        mr_id: sink.mr_id,
                        offset: 0,
                        length: 4096,
                    }))
                    .unwrap();
                    let mut wr = WorkRequest::send(pairs, local);
                    if mode == TransportMode::Ud {
                        wr.ud_dest = Some((n1, tq));
                    }
                    f.post_send(qp, wr).is_ok()
                }
                Verb::Write => f.post_send(qp, WorkRequest::write(pairs, local, remote)).is_ok(),
                Verb::Read => f.post_send(qp, WorkRequest::read(pairs, local, remote)).is_ok(),
            };
            if got != mode.supports(verb) {
                mismatches.push(format!("{mode:?}/{verb:?}: got {got}"));
            }
        }
    }
    // UD datagrams are additionally capped at the MTU.
    let ud = f.create_qp(n0, TransportMode::Ud, cq0, None).unwrap();
    let ud_t = f.create_qp(n1, TransportMode::Ud, cq1, None).unwrap();
    let mut big = WorkRequest::send(
        99,
        LocalBuf { mr_id: src.mr_id, offset: 0, length: 4097 },
    );
    big.ud_dest = Some((n1, ud_t));
    let capped = f.post_send(ud, big).is_err();
    if !capped {
        mismatches.push("UD SEND above MTU was accepted".into());
    }
    let elapsed = t0.elapsed();
    let ok = pairs == 12 && mismatches.is_empty() && elapsed < Duration::from_secs(1);
    verdict(
        1,
        "transport/verb legality matrix",
        ok,
        &format!("{pairs} pairs + MTU cap in {elapsed:?}; mismatches: {mismatches:?}"),
    );
}

// ---------------------------------------------------------------- 2

fn sweep(mode: Mode) -> MetricsReport {
    run_scenario(&BenchScenario { mode, ..BenchScenario::default() }).unwrap()
}

#[test]
fn criterion_02_scalability_cliff() {
    let t0 = Instant::now();
    let naive = sweep(Mode::Naive);
    let raas = sweep(Mode::Raas);
    let elapsed = t0.elapsed();

    let peak = naive
        .rows
        .iter()
        .filter(|r| r.connections <= 400)
        .map(|r| r.throughput)
        .fold(0.0f64, f64::max);
    let at_1000 = naive.row(1000).unwrap().throughput;
    let first_drop = naive
        .rows
        .iter()
        .find(|r| r.throughput < 0.90 * peak)
        .map(|r| r.connections);
    let (lo, hi) = raas.rows.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| {
        (l.min(r.throughput), h.max(r.throughput))
    });

    let cliff = at_1000 < 0.70 * peak;
    let onset = first_drop.is_some_and(|c| c.abs_diff(400) <= 100);
    let flat = hi / lo <= 1.05;
    let fast = elapsed < Duration::from_secs(120);
    verdict(
        2,
        "per-connection QP cache cliff",
        cliff && onset && flat && fast,
        &format!(
            "baseline@1000 = {:.3} of early peak (<0.70: {cliff}); first <90% drop at {:?} \
             (within one step of 400: {onset}); shared-mode max/min = {:.4} (<=1.05: {flat}); \
             both sweeps in {elapsed:?} (<120s: {fast})",
            at_1000 / peak,
            first_drop,
            hi / lo
        ),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_batching_beats_single_posts() {
    let sc = BenchScenario::default();
    assert!(sc.batching_window >= 4);
    let naive = run_raw_point(&BenchScenario { mode: Mode::Naive, ..sc.clone() }, 200).unwrap();
    let raas = run_raw_point(&BenchScenario { mode: Mode::Raas, ..sc }, 200).unwrap();
    verdict(
        3,
        "doorbell batching throughput win",
        raas.throughput() > naive.throughput(),
        &format!(
            "shared {:.3e} B/s vs per-connection {:.3e} B/s at 200 connections",
            raas.throughput(),
            naive.throughput()
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_lock_sharing_penalty() {
    let base = BenchScenario::default();
    assert_eq!(base.threads, 8);
    let n = 400;
    let raas = run_raw_point(&BenchScenario { mode: Mode::Raas, ..base.clone() }, n).unwrap();
    let locked = |q: usize, penalty: f64| {
        run_raw_point(
            &BenchScenario {
                mode: Mode::LockedSharing,
                q,
                lock_penalty_ns: penalty,
                ..base.clone()
            },
            n,
        )
        .unwrap()
    };
    let q3 = locked(3, base.lock_penalty_ns);
    let q6 = locked(6, base.lock_penalty_ns);
    let free = locked(6, 0.0);

    let ordered = raas.throughput() > q3.throughput() && q3.throughput() >= q6.throughput();
    let degenerate =
        (free.throughput() - raas.throughput()).abs() / raas.throughput() <= 0.02;
    let contended = q6.contended_acquisitions > 0;
    verdict(
        4,
        "lock-sharing baseline ordering",
        ordered && degenerate && contended,
        &format!(
            "throughput: daemon {:.3e} > q=3 {:.3e} >= q=6 {:.3e} ({ordered}); \
             zero-penalty within 2% ({degenerate}); q=6 contended acquisitions = {}",
            raas.throughput(),
            q3.throughput(),
            q6.throughput(),
            q6.contended_acquisitions
        ),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_resource_scaling() {
    let apps: Vec<u64> = (1..=10).collect();
    let sc = |mode| BenchScenario { mode, connections: apps.clone(), ..BenchScenario::default() };
    let naive = run_scenario(&sc(Mode::Naive)).unwrap();
    let raas = run_scenario(&sc(Mode::Raas)).unwrap();

    // Least-squares slope of units vs app count.
    let slope = |pick: fn(&bench_cli::report::ReportRow) -> f64, rep: &MetricsReport| {
        let m = rep.rows.len() as f64;
        let (sx, sy, sxy, sxx) = rep.rows.iter().fold((0.0, 0.0, 0.0, 0.0), |a, r| {
            let (x, y) = (r.connections as f64, pick(r));
            (a.0 + x, a.1 + y, a.2 + x * y, a.3 + x * x)
        });
        (m * sxy - sx * sy) / (m * sxx - sx * sx)
    };
    let mem_slope = slope(|r| r.mem_units, &naive);
    let cpu_slope = slope(|r| r.cpu_units, &naive);
    let naive_mem_10 = naive.row(10).unwrap().mem_units;
    let raas_mem_10 = raas.row(10).unwrap().mem_units;

    let linear = (mem_slope - 1.0).abs() <= 0.1 && (cpu_slope - 1.0).abs() <= 0.1;
    let shared_wins = raas_mem_10 <= 0.5 * naive_mem_10;
    verdict(
        5,
        "per-app resource scaling",
        linear && shared_wins,
        &format!(
            "baseline unit slopes mem {mem_slope:.3} / cpu {cpu_slope:.3} (1.0 +/- 0.1); \
             shared mem at 10 apps = {raas_mem_10:.3} units vs baseline {naive_mem_10:.3}"
        ),
    );
}

// ---------------------------------------------------------------- 6

const FUZZ_VCS: usize = 100;
const FUZZ_ROUNDS: usize = 125;
const FUZZ_PER_ROUND: usize = 8;
const FUZZ_MSG: u64 = 32;

fn fuzz_label(vc: u32, msg: u32) -> [u8; 32] {
    let mut b = [0u8; 32];
    b[0..4].copy_from_slice(&vc.to_le_bytes());
    b[4..8].copy_from_slice(&msg.to_le_bytes());
    let sum = vc.wrapping_mul(0x9e37_79b9) ^ msg.wrapping_mul(0x85eb_ca6b);
    b[8..12].copy_from_slice(&sum.to_le_bytes());
    b
}

fn pump(daemons: &[&Daemon]) {
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

#[test]
fn criterion_06_demux_isolation_fuzz() {
    let cfg = DaemonConfig {
        worker_count: 1,
        qps_per_node: 1,
        app_staging_bytes: 4096,
        ..Default::default()
    };
    let cluster = Cluster::new(SimConfig::default());
    let a = cluster.add_node("a");
    let b = cluster.add_node("b");
    let da = cluster.start_daemon(a, &["ipv4:10.9.0.1"], cfg.clone()).unwrap();
    let db = cluster.start_daemon(b, &["ipv4:10.9.0.2"], cfg).unwrap();
    let fab = cluster.fabric();
    cluster.listen(b, "ipv4:10.9.0.2").unwrap();
    let addr: raas_daemon::Addr = "ipv4:10.9.0.2".parse().unwrap();

    let mut senders: Vec<AppEndpoint> = Vec::new();
    let mut receivers: Vec<AppEndpoint> = Vec::new();
    for _ in 0..FUZZ_VCS {
        senders.push(cluster.connect(a, "ipv4:10.9.0.2", Flags::DEFAULT).unwrap());
        receivers.push(cluster.accept(b, addr, Duration::from_secs(1)).unwrap());
    }
    let shared_qp = cluster.vc_info(a, senders[0].fd).unwrap().1;
    let one_qp = senders.iter().all(|ep| cluster.vc_info(a, ep.fd).unwrap().1 == shared_qp);
    let fd_to_vc: HashMap<u32, u32> =
        receivers.iter().enumerate().map(|(i, ep)| (ep.fd, i as u32)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_97ed);
    let mut sent = vec![0u32; FUZZ_VCS];
    let mut recvd = vec![0u32; FUZZ_VCS];
    let mut replies = vec![0u64; FUZZ_VCS];
    let mut cross = 0u64;

    for _ in 0..FUZZ_ROUNDS {
        let mut order: Vec<usize> = (0..FUZZ_VCS).flat_map(|v| [v; FUZZ_PER_ROUND]).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut slot = vec![0u64; FUZZ_VCS];
        for &v in &order {
            let ep = &mut senders[v];
            let payload = fuzz_label(v as u32, sent[v]);
            fab.with(|f| f.write_app(ep.staging.mr_id, slot[v] * FUZZ_MSG, &payload)).unwrap();
            ep.req
                .enqueue(RequestRecord {
                    op: OpCode::Send,
                    fd: ep.fd,
                    region: ep.staging.mr_id.0,
                    offset: slot[v] * FUZZ_MSG,
                    length: FUZZ_MSG,
                    flags: 0,
                    seq: sent[v] as u64,
                })
                .unwrap();
            sent[v] += 1;
            slot[v] += 1;
        }
        pump(&[&da, &db]);

        for (v, ep) in senders.iter_mut().enumerate() {
            while let Ok(r) = ep.resp.dequeue() {
                if r.kind == RespKind::Reply && r.status == 0 && r.seq == replies[v] {
                    replies[v] += 1;
                } else {
                    cross += 1;
                }
            }
        }
        for ep in receivers.iter_mut() {
            let v = fd_to_vc[&ep.fd];
            let mut to_ack = Vec::new();
            while let Ok(d) = ep.resp.dequeue() {
                let bytes =
                    fab.with(|f| f.read_app(MrId(d.region), d.offset, d.length)).unwrap();
                if d.kind == RespKind::Data && bytes == fuzz_label(v, recvd[v as usize]) {
                    recvd[v as usize] += 1;
                } else {
                    cross += 1;
                }
                to_ack.push((d.region, d.offset, d.length));
            }
            for (i, (region, offset, length)) in to_ack.into_iter().enumerate() {
                ep.req
                    .enqueue(RequestRecord {
                        op: OpCode::RecvReady,
                        fd: ep.fd,
                        region,
                        offset,
                        length,
                        flags: FLAG_REGION_ACK,
                        seq: i as u64,
                    })
                    .unwrap();
            }
        }
        pump(&[&da, &db]);
        for ep in receivers.iter_mut() {
            while ep.resp.dequeue().is_ok() {}
        }
    }

    let total = (FUZZ_VCS * FUZZ_ROUNDS * FUZZ_PER_ROUND) as u32;
    let complete = sent.iter().sum::<u32>() == total
        && recvd.iter().sum::<u32>() == total
        && replies.iter().sum::<u64>() as u32 == total;
    let clean = cross == 0 && db.unknown_vqpn_count() == 0;
    verdict(
        6,
        "demultiplexing isolation fuzz",
        one_qp && complete && clean,
        &format!(
            "{total} messages over {FUZZ_VCS} virtual connections on one QP ({one_qp}); \
             misdelivered/reordered = {cross}; unknown-route drops = {}",
            db.unknown_vqpn_count()
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_ring_fifo_obstruction_wakeup() {
    // FIFO oracle: 10^6 values through a two-thread ring, exact order.
    const OPS: u64 = 1_000_000;
    let (mut tx, mut rx) = ring_create::<u64>(1024).unwrap();
    let producer = std::thread::spawn(move || {
        for i in 0..OPS {
            while tx.enqueue(i).is_err() {
                std::hint::spin_loop();
            }
        }
    });
    let mut fifo_ok = true;
    for expect in 0..OPS {
        let got = loop {
            if let Ok(v) = rx.dequeue() {
                break v;
            }
            std::hint::spin_loop();
        };
        fifo_ok &= got == expect;
    }
    producer.join().unwrap();

    // Obstruction freedom: with the peer suspended, each side completes
    // every operation in one bounded step (Full/Empty returns, no blocking).
    let (mut tx, mut rx) = ring_create::<u64>(8).unwrap();
    let mut filled = 0;
    while tx.enqueue(filled).is_ok() {
        filled += 1;
        assert!(filled <= 8, "enqueue never reported Full");
    }
    let mut drained = 0;
    while rx.dequeue().is_ok() {
        drained += 1;
    }
    let obstruction_ok = filled > 0 && drained == filled && rx.dequeue().is_err();

    // Lost-wakeup hunt: 10^5 randomized producer/consumer schedules over
    // the event channel. A consumer timeout means a signal was lost.
    const SCHEDULES: u64 = 100_000;
    let (mut tx, mut rx) = ring_create::<u64>(2).unwrap();
    let ev = EventChannel::new();
    let ev_p = ev.clone();
    let producer = std::thread::spawn(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(0x51ee9);
        for i in 0..SCHEDULES {
            while tx.enqueue(i).is_err() {
                std::thread::yield_now();
            }
            ev_p.signal();
            if rng.gen_bool(0.25) {
                std::thread::yield_now();
            }
        }
    });
    let mut lost = 0u64;
    for _ in 0..SCHEDULES {
        loop {
            if rx.dequeue().is_ok() {
                // Keep the signal count level with consumed items.
                let _ = ev.try_consume();
                break;
            }
            if ev.wait(Duration::from_secs(10)) == WaitOutcome::TimedOut {
                lost += 1;
                break;
            }
        }
    }
    producer.join().unwrap();

    verdict(
        7,
        "ring FIFO / obstruction / wakeup",
        fifo_ok && obstruction_ok && lost == 0,
        &format!(
            "{OPS} ops in exact FIFO order ({fifo_ok}); bounded progress under a suspended \
             peer ({obstruction_ok}); {SCHEDULES} wakeup schedules with {lost} lost"
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_nic_cache_lru_oracle() {
    const CAPACITY: usize = 50;
    const QPS: u32 = 200;
    const ACCESSES: usize = 10_000;
    let mut f = Fabric::new(SimConfig { cache_capacity: CAPACITY, ..SimConfig::default() });
    let node = f.add_node("n");
    let cq = f.create_cq(node).unwrap();
    let qps: Vec<QpId> = (0..QPS)
        .map(|_| f.create_qp(node, TransportMode::Rc, cq, None).unwrap())
        .collect();

    let hit_cost = SimConfig::default().hit_cost_ns;
    let mut rng = ChaCha8Rng::seed_from_u64(0x10ca_c4e);
    let mut lru: Vec<QpId> = Vec::new(); // front = most recent
    let mut mismatches = 0u64;
    for _ in 0..ACCESSES {
        let qp = qps[rng.gen_range(0..qps.len())];
        let expect_hit = match lru.iter().position(|&q| q == qp) {
            Some(i) => {
                let q = lru.remove(i);
                lru.insert(0, q);
                true
            }
            None => {
                lru.insert(0, qp);
                lru.truncate(CAPACITY);
                false
            }
        };
        let cost = f.nic_service(qp).unwrap();
        if (cost == hit_cost) != expect_hit {
            mismatches += 1;
        }
    }
    verdict(
        8,
        "NIC cache LRU oracle",
        mismatches == 0,
        &format!("{ACCESSES} random accesses over {QPS} QPs, {mismatches} disagreements"),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_deterministic_replay() {
    let mut ok = true;
    let mut detail = String::new();
    for mode in [Mode::Naive, Mode::Raas, Mode::LockedSharing] {
        let sc = BenchScenario {
            mode,
            q: if mode == Mode::LockedSharing { 3 } else { 1 },
            connections: vec![50, 100],
            ops_per_conn: 10,
            seed: 7,
            ..BenchScenario::default()
        };
        let a = run_scenario(&sc).unwrap().to_csv();
        let b = run_scenario(&sc).unwrap().to_csv();
        let same = a == b;
        ok &= same;
        detail.push_str(&format!("{} identical: {same}; ", mode.label()));
    }
    verdict(9, "same-seed byte-identical CSV", ok, detail.trim_end_matches("; "));
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_policy_contracts() {
    let p = PolicyConfig::default();
    let calm = LoadStats::default();
    let busy = LoadStats { cpu_load: 0.95, mem_used: 1 << 30 };
    let pick = |len, bits, remote: &LoadStats| select_path(len, Flags::new(bits), &calm, remote, &p).unwrap();

    // Explicit flags always win, regardless of size or load.
    let explicit = pick(8, FLAG_RC | FLAG_READ, &busy) == (TransportMode::Rc, Verb::Read)
        && pick(1 << 20, FLAG_RC | FLAG_SEND, &busy) == (TransportMode::Rc, Verb::Send)
        && pick(1 << 20, FLAG_UD, &calm) == (TransportMode::Ud, Verb::Send);

    // Pure function: same inputs, same answer.
    let pure = (0..4).all(|i| {
        let len = 1000 * (i + 1);
        pick(len, 0, &busy) == pick(len, 0, &busy) && pick(len, 0, &calm) == pick(len, 0, &calm)
    });

    // AUTO boundaries: the small-message threshold itself stays two-sided;
    // one past it goes one-sided.
    let threshold = pick(p.small_msg_threshold, 0, &calm) == (TransportMode::Rc, Verb::Send)
        && pick(p.small_msg_threshold + 1, 0, &calm) == (TransportMode::Rc, Verb::Write);

    // Copy-vs-register: strictly below the crossover copies, the boundary
    // itself registers.
    let crossover = send_path_copy_or_register(p.copy_register_crossover - 1, &p)
        == CopyMode::Memcpy
        && send_path_copy_or_register(p.copy_register_crossover, &p) == CopyMode::Memreg;

    verdict(
        10,
        "path-selection policy contracts",
        explicit && pure && threshold && crossover,
        &format!(
            "explicit flags win: {explicit}; purity: {pure}; small-message boundary: \
             {threshold}; copy/register boundary: {crossover}"
        ),
    );
}

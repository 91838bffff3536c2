//! Lifecycle tests with real worker/poller threads: every accepted
//! request is answered before shutdown completes.

mod util;

use std::time::{Duration, Instant};

use raas_daemon::{status, DaemonConfig, DaemonError, Flags};
use util::*;

#[test]
fn launch_runs_workers_plus_poller() {
    let cfg = DaemonConfig { worker_count: 4, ..Default::default() };
    let net = net(cfg.clone(), cfg);
    net.da.launch().unwrap();
    assert_eq!(net.da.threads_running(), 5);
    assert!(net.da.launch().is_err(), "second launch rejected");
    net.da.shutdown();
    assert_eq!(net.da.threads_running(), 0);
}

#[test]
fn shutdown_drains_queued_requests() {
    let net = net(DaemonConfig::default(), DaemonConfig::default());
    let fab = net.cluster.fabric();
    let mut ep = net.cluster.connect(net.a, ADDR_B, Flags::DEFAULT).unwrap();

    net.da.launch().unwrap();
    net.db.launch().unwrap();

    let total = 50u64;
    for i in 0..total {
        send_req(&fab, &mut ep, &[i as u8; 32], 32 * i, 0, i);
        ep.req_event.signal();
    }
    net.da.shutdown();
    net.db.shutdown();

    let deadline = Instant::now() + Duration::from_secs(5);
    let mut replies = Vec::new();
    while replies.len() < total as usize && Instant::now() < deadline {
        replies.extend(drain_resp(&mut ep));
        std::thread::sleep(Duration::from_millis(1));
    }
    assert_eq!(replies.len() as u64, total, "every accepted request answered");
    let mut seqs: Vec<u64> = replies.iter().map(|r| r.seq).collect();
    seqs.sort_unstable();
    assert_eq!(seqs, (0..total).collect::<Vec<_>>());
    assert!(replies.iter().all(|r| r.status == status::OK));
}

#[test]
fn one_daemon_per_node() {
    let net = net(DaemonConfig::default(), DaemonConfig::default());
    assert_eq!(
        net.cluster
            .start_daemon(net.a, &["ipv4:10.9.9.9"], DaemonConfig::default())
            .err(),
        Some(DaemonError::DaemonExists)
    );
}

//! End-to-end CLI: scenario run, sweep, and check evaluation through the
//! built binary.

use std::process::Command;

use bench_cli::report::MetricsReport;

const BIN: &str = env!("CARGO_BIN_EXE_bench-cli");

#[test]
fn run_scenario_file_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("small.scenario");
    std::fs::write(
        &scenario,
        "name = small\nmode = RAAS\nconnections = 10, 20\nops_per_conn = 5\n",
    )
    .unwrap();
    let out = dir.path().join("small.csv");
    let status = Command::new(BIN)
        .args(["run", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let rep = MetricsReport::from_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rep.rows.len(), 2);
    assert!(rep.row(10).unwrap().throughput > 0.0);
}

#[test]
fn bad_scenario_is_a_clean_error() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.scenario");
    std::fs::write(&scenario, "mode = RAAS\nconnections = 20, 10\n").unwrap();
    let output = Command::new(BIN)
        .args(["run", "--scenario"])
        .arg(&scenario)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("strictly increasing"));
}

#[test]
fn compare_gates_on_check_results() {
    let dir = tempfile::tempdir().unwrap();
    let fast = dir.path().join("FAST.csv");
    let slow = dir.path().join("SLOW.csv");
    let header = "connections,throughput_bytes_per_sim_sec,mean_latency_ns,mem_units,cpu_units,cache_hit_rate\n";
    std::fs::write(&fast, format!("{header}100,20.0,1.0,1.0,1.0,1.0\n")).unwrap();
    std::fs::write(&slow, format!("{header}100,10.0,1.0,1.0,1.0,1.0\n")).unwrap();

    let check = dir.path().join("ok.check");
    std::fs::write(&check, "dominates FAST SLOW at 100\n").unwrap();
    let output = Command::new(BIN)
        .arg("compare")
        .args([&fast, &slow])
        .arg("--check")
        .arg(&check)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("PASS"));

    let check = dir.path().join("bad.check");
    std::fs::write(&check, "dominates SLOW FAST at 100\n").unwrap();
    let output = Command::new(BIN)
        .arg("compare")
        .args([&fast, &slow])
        .arg("--check")
        .arg(&check)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stdout).starts_with("FAIL"));
}

#[test]
fn sweeps_with_the_same_seed_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let status = Command::new(BIN)
            .args(["sweep", "--mode", "locked", "--q", "3", "--max-conns", "200", "--out"])
            .arg(p)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

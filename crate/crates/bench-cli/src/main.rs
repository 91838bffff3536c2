use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bench_cli::check::run_checks;
use bench_cli::report::MetricsReport;
use bench_cli::run_scenario;
use bench_cli::scenario::{BenchScenario, Mode};

#[derive(Parser)]
#[command(name = "bench", about = "Connection-scaling benchmarks over the verbs simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and emit its CSV.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a default sweep (100..=max-conns, step 100) for one mode.
    Sweep {
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        /// Threads sharing each QP (locked mode only).
        #[arg(long, default_value_t = 1)]
        q: usize,
        #[arg(long, default_value_t = 1000)]
        max_conns: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a check file against CSVs (labeled by file stem).
    Compare {
        csv: Vec<PathBuf>,
        #[arg(long)]
        check: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn emit(report: &MetricsReport, out: Option<PathBuf>) -> std::io::Result<()> {
    let csv = report.to_csv();
    match out {
        Some(p) => std::fs::write(p, csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn real_main() -> Result<bool, Box<dyn std::error::Error>> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, out } => {
            let sc = BenchScenario::parse(&std::fs::read_to_string(scenario)?)?;
            emit(&run_scenario(&sc)?, out)?;
            Ok(true)
        }
        Cmd::Sweep { mode, q, max_conns, seed, out } => {
            let sc = BenchScenario {
                mode,
                q,
                seed,
                connections: (100..=max_conns).step_by(100).collect(),
                name: format!("sweep-{}", mode.label().to_ascii_lowercase()),
                ..BenchScenario::default()
            };
            emit(&run_scenario(&sc)?, out)?;
            Ok(true)
        }
        Cmd::Compare { csv, check } => {
            let mut reports = HashMap::new();
            for p in &csv {
                let label = p
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .ok_or("csv path has no usable file stem")?
                    .to_string();
                let text = std::fs::read_to_string(p)?;
                let rep = MetricsReport::from_csv(&text)
                    .ok_or_else(|| format!("{}: not a benchmark CSV", p.display()))?;
                reports.insert(label, rep);
            }
            let outcomes = run_checks(&std::fs::read_to_string(check)?, &reports)?;
            let mut all = true;
            for o in &outcomes {
                let tag = if o.passed { "PASS" } else { "FAIL" };
                println!("{tag} {} ({})", o.line, o.detail);
                all &= o.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

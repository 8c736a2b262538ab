//! `gnsim` — experiment driver for the dissemination simulator.
//!
//! Exit codes: 0 success, 1 runtime fault (the message names the failing
//! cell), 2 invalid scenario input (the message names the offending key).

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Parser, Subcommand};
use gnsim_core::loct::NeighborPolicy;
use gnsim_core::router::{CbfVariant, NonAreaAlg};
use gnsim_core::runner::{self, fmt_mean_ci, group_aggregates, RunnerError};
use gnsim_core::scenario::ScenarioError;
use gnsim_core::{ScenarioSpec, SetupProfile};

#[derive(Parser)]
#[command(name = "gnsim", version, about = "Multi-hop GeoBroadcast dissemination simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every cell of a scenario's experiment matrix.
    Run {
        /// Scenario file.
        #[arg(long)]
        spec: PathBuf,
        /// Override one scenario key, e.g. `--override denm.hop_limit=20`.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Cells to run concurrently (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write a per-event NDJSON log in each cell directory.
        #[arg(long)]
        events: bool,
        /// Output directory (default: the scenario's `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a scenario, apply overrides, and report the matrix it spans.
    Validate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List the forwarding setups this build knows.
    ListSetups,
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Run { spec, overrides, jobs, events, out } => run(spec, overrides, jobs, events, out),
        Cmd::Validate { spec, overrides } => validate(spec, overrides),
        Cmd::ListSetups => {
            list_setups();
            ExitCode::SUCCESS
        }
    }
}

/// Invalid scenario input: exit 2, message carries the key path.
fn config_fail(e: ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

/// A cell failed underway: exit 1, message carries the cell identifier.
fn runtime_fail(e: RunnerError) -> ExitCode {
    match e {
        RunnerError::Scenario(e) => config_fail(e),
        other => {
            eprintln!("error: {other}");
            ExitCode::FAILURE
        }
    }
}

fn load(spec: &PathBuf, overrides: &[String]) -> Result<ScenarioSpec, ScenarioError> {
    let mut s = ScenarioSpec::load(spec)?;
    for o in overrides {
        s.apply_override(o)?;
    }
    s.validate()?;
    Ok(s)
}

fn run(
    spec_path: PathBuf,
    overrides: Vec<String>,
    jobs: Option<usize>,
    events: bool,
    out: Option<PathBuf>,
) -> ExitCode {
    let spec = match load(&spec_path, &overrides) {
        Ok(s) => s,
        Err(e) => return config_fail(e),
    };
    let out = out.unwrap_or_else(|| spec.out_dir.clone());
    let events = events || spec.events;
    let jobs = jobs.unwrap_or_else(|| {
        std::thread::available_parallelism().map(usize::from).unwrap_or(1)
    });
    let total = spec.cells().len();
    eprintln!("{}: {total} cells, {jobs} at a time -> {}", spec.name, out.display());

    let done = AtomicUsize::new(0);
    let report = runner::run_matrix(&spec, &out, jobs, events, &|cell, m, took| {
        let i = done.fetch_add(1, Ordering::SeqCst) + 1;
        eprintln!(
            "[{i}/{total}] {}  pdr {}  tx/msg {}  ({:.1}s)",
            cell.id(),
            m.pdr_mean.map(|v| format!("{v:.3}")).unwrap_or_else(|| "---".into()),
            m.tx_per_message_mean.map(|v| format!("{v:.1}")).unwrap_or_else(|| "---".into()),
            took.as_secs_f64(),
        );
    });
    let report = match report {
        Ok(r) => r,
        Err(e) => return runtime_fail(e),
    };

    eprintln!();
    for (group, agg) in group_aggregates(&report.results) {
        eprintln!(
            "{group}: pdr {}  tx/msg {}  first-arrival {} s",
            fmt_mean_ci(agg.pdr),
            fmt_mean_ci(agg.tx_per_message),
            fmt_mean_ci(agg.first_arrival_median_s),
        );
    }
    eprintln!("aggregate: {}", report.aggregate_path.display());
    ExitCode::SUCCESS
}

fn validate(spec_path: PathBuf, overrides: Vec<String>) -> ExitCode {
    let spec = match load(&spec_path, &overrides) {
        Ok(s) => s,
        Err(e) => return config_fail(e),
    };
    let cells = spec.cells();
    println!("{}: ok", spec.name);
    println!(
        "  setups {:?}  seeds {:?}  cells {}",
        spec.setups,
        spec.seeds,
        cells.len()
    );
    if let (Some(first), Some(last)) = (cells.first(), cells.last()) {
        println!("  first {}  last {}", first.id(), last.id());
    }
    ExitCode::SUCCESS
}

fn list_setups() {
    for p in SetupProfile::all() {
        println!("{:<12} non-area: {:<28} area: {}", p.id, non_area_desc(p), area_desc(p.area));
    }
}

fn non_area_desc(p: &SetupProfile) -> String {
    match p.non_area {
        NonAreaAlg::Cbf(v) => format!("contention ({})", variant_word(v)),
        NonAreaAlg::Greedy(g) => {
            let policy = match g.policy {
                NeighborPolicy::Etsi => "stored neighbors",
                NeighborPolicy::FlagRefresh => "refreshed neighbors",
                NeighborPolicy::GreedyPlus => "fresh neighbors",
            };
            let cap = match g.max_hop_distance_m {
                Some(d) => format!(", {d:.0} m cap"),
                None => String::new(),
            };
            format!("greedy unicast ({policy}{cap})")
        }
    }
}

fn area_desc(v: CbfVariant) -> String {
    format!("contention ({})", variant_word(v))
}

fn variant_word(v: CbfVariant) -> &'static str {
    match v {
        CbfVariant::Etsi => "standard",
        CbfVariant::SFotPlus => "hardened",
    }
}

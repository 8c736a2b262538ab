//! Experiment driver: executes matrix cells (optionally in parallel), writes
//! the per-cell artifact set, and emits the top-level aggregate table.
//!
//! Each cell lands in `<out>/<cell-id>/` with `messages.csv`,
//! `summary.json`, `ecdf.csv`, `hops.csv`, and — when event logging is on —
//! `events.ndjson`. The aggregate CSV has one row per cell carrying that
//! cell's headline metrics plus the across-seed mean and 95% confidence
//! half-width of its group (same setup/density/class/hop-limit, all seeds).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::engine::World;
use crate::log::EventLog;
use crate::metrics::{aggregate, CellAggregate, MeanCi, RunMetrics};
use crate::scenario::{CellSpec, ScenarioError, ScenarioSpec};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("cell {cell}: {what}")]
    Cell { cell: String, what: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunnerError {
    /// The failing cell, for error reporting that names the matrix point.
    pub fn cell_id(&self) -> Option<&str> {
        match self {
            RunnerError::Cell { cell, .. } => Some(cell),
            _ => None,
        }
    }
}

fn in_cell(cell: &CellSpec, what: impl ToString) -> RunnerError {
    RunnerError::Cell { cell: cell.id(), what: what.to_string() }
}

/// Simulate one cell in memory, without touching the filesystem.
pub fn run_cell(spec: &ScenarioSpec, cell: &CellSpec) -> Result<RunMetrics, RunnerError> {
    let (cfg, traj) = spec.build_cell(cell).map_err(|e| in_cell(cell, e))?;
    Ok(World::new(cfg, traj, EventLog::disabled()).run())
}

/// Simulate one cell and write its artifact directory under `out_root`.
pub fn run_cell_to_dir(
    spec: &ScenarioSpec,
    cell: &CellSpec,
    out_root: &Path,
    events: bool,
) -> Result<RunMetrics, RunnerError> {
    let dir = out_root.join(cell.id());
    let io = |e: std::io::Error| in_cell(cell, e);
    std::fs::create_dir_all(&dir).map_err(io)?;
    let log = if events {
        EventLog::to_file(&dir.join("events.ndjson")).map_err(io)?
    } else {
        EventLog::disabled()
    };
    let (cfg, traj) = spec.build_cell(cell).map_err(|e| in_cell(cell, e))?;
    let metrics = World::new(cfg, traj, log).run();
    metrics.write_messages_csv(&dir.join("messages.csv")).map_err(io)?;
    metrics.write_summary_json(&dir.join("summary.json")).map_err(io)?;
    metrics.write_ecdf_csv(&dir.join("ecdf.csv")).map_err(io)?;
    metrics.write_hops_csv(&dir.join("hops.csv")).map_err(io)?;
    Ok(metrics)
}

pub struct MatrixReport {
    /// One entry per cell, in matrix order.
    pub results: Vec<(CellSpec, RunMetrics)>,
    pub aggregate_path: PathBuf,
}

/// Run every cell of the matrix, at most `jobs` at a time, writing artifact
/// directories and the aggregate CSV under `out_root`. `on_done` is invoked
/// from worker threads as cells finish (for progress reporting).
pub fn run_matrix(
    spec: &ScenarioSpec,
    out_root: &Path,
    jobs: usize,
    events: bool,
    on_done: &(dyn Fn(&CellSpec, &RunMetrics, std::time::Duration) + Sync),
) -> Result<MatrixReport, RunnerError> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs = jobs.max(1).min(cells.len().max(1));
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<RunMetrics, RunnerError>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() || failed.load(Ordering::SeqCst) {
                    break;
                }
                let started = Instant::now();
                let result = run_cell_to_dir(spec, &cells[i], out_root, events);
                match &result {
                    Ok(m) => on_done(&cells[i], m, started.elapsed()),
                    Err(_) => failed.store(true, Ordering::SeqCst),
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut results = Vec::with_capacity(cells.len());
    for (cell, slot) in cells.into_iter().zip(slots) {
        match slot.into_inner().unwrap() {
            Some(Ok(m)) => results.push((cell, m)),
            Some(Err(e)) => return Err(e),
            // only reachable when an earlier cell failed and workers bailed
            None => return Err(in_cell(&cell, "skipped after earlier failure")),
        }
    }

    let aggregate_path = out_root.join("aggregate.csv");
    write_aggregate_csv(&aggregate_path, &results)
        .map_err(|source| RunnerError::Io { path: aggregate_path.clone(), source })?;
    Ok(MatrixReport { results, aggregate_path })
}

/// One row per cell: the cell's own headline metrics followed by its group's
/// across-seed mean and 95% CI for each metric.
pub fn write_aggregate_csv(
    path: &Path,
    results: &[(CellSpec, RunMetrics)],
) -> std::io::Result<()> {
    let groups = group_aggregates(results);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "cell,group,seed,messages,pdr,first_arrival_median_s,tx_per_message,")?;
    write!(f, "delivered_any_fraction,mean_delivery_hops,final_cbr")?;
    for metric in AGG_METRICS {
        write!(f, ",{metric}_mean,{metric}_ci95")?;
    }
    writeln!(f)?;
    for (cell, m) in results {
        let group = cell.group();
        write!(
            f,
            "{},{},{},{},{},{},{},{},{},{}",
            cell.id(),
            group,
            cell.seed,
            m.messages,
            opt(m.pdr_mean),
            opt(m.first_arrival_median_s),
            opt(m.tx_per_message_mean),
            opt(m.delivered_any_fraction),
            opt(m.mean_delivery_hops),
            opt(m.final_cbr_mean),
        )?;
        let agg = &groups.iter().find(|(name, _)| *name == group).unwrap().1;
        for ci in [
            agg.pdr,
            agg.first_arrival_median_s,
            agg.tx_per_message,
            agg.delivered_any_fraction,
            agg.mean_delivery_hops,
            agg.final_cbr,
        ] {
            write!(f, ",{},{}", opt(ci.map(|c| c.mean)), opt(ci.map(|c| c.ci95)))?;
        }
        writeln!(f)?;
    }
    Ok(())
}

const AGG_METRICS: [&str; 6] = [
    "pdr",
    "first_arrival_median_s",
    "tx_per_message",
    "delivered_any_fraction",
    "mean_delivery_hops",
    "final_cbr",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Across-seed aggregates per group, for callers that want the numbers
/// rather than the CSV.
pub fn group_aggregates(results: &[(CellSpec, RunMetrics)]) -> Vec<(String, CellAggregate)> {
    let mut out: Vec<(String, CellAggregate)> = Vec::new();
    for (cell, _) in results {
        let g = cell.group();
        if out.iter().any(|(name, _)| *name == g) {
            continue;
        }
        let runs: Vec<&RunMetrics> =
            results.iter().filter(|(c, _)| c.group() == g).map(|(_, m)| m).collect();
        out.push((g, aggregate(&runs)));
    }
    out
}

/// Convenience for reports: `mean ± ci95` or `---` when absent.
pub fn fmt_mean_ci(v: Option<MeanCi>) -> String {
    match v {
        Some(c) => format!("{:.3} ± {:.3}", c.mean, c.ci95),
        None => "---".to_string(),
    }
}

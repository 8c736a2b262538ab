//! Scenario files: a flat `key = value` text format with include support,
//! experiment-matrix expansion, and per-cell construction of run inputs.
//!
//! A scenario describes one experiment family. List-valued keys (`setups`,
//! `seeds`, `densities`, `forward_tcs`, `hop_limits`) span the matrix; every
//! combination becomes one independent cell identified by a stable string
//! such as `s-fot-plus-d30-tc3-hl10-s2`. Later assignments override earlier
//! ones, so an `include = defaults.scn` line pulls in baseline values that
//! the rest of the file (and `--override` strings) can replace.

use std::path::{Path, PathBuf};

use crate::cbf::CbfParams;
use crate::dcc::DccParams;
use crate::engine::{RunConfig, PROBE_BYTES};
use crate::facilities::DenmConfig;
use crate::geo::{GeoArea, GeoPosition};
use crate::mac_phy::{ChannelModel, PhyParams, Rect};
use crate::mobility::{
    build_grid, build_highway, build_static_cluster, ingest_trace, TraceError, TrajectorySet,
};
use crate::router::{SetupProfile, TrafficClass};
use crate::time::SimTime;
use crate::NodeId;

const MAX_INCLUDE_DEPTH: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: expected `key = value`", path.display())]
    Syntax { path: PathBuf, line: usize },
    #[error("unknown key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value for `{key}`: {what}")]
    BadValue { key: String, what: String },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("include chain too deep at {}", path.display())]
    IncludeDepth { path: PathBuf },
    #[error("mobility trace: {0}")]
    Trace(#[from] TraceError),
}

impl ScenarioError {
    /// The offending key path, when the error is about one.
    pub fn key_path(&self) -> Option<&str> {
        match self {
            ScenarioError::UnknownKey { key }
            | ScenarioError::BadValue { key, .. }
            | ScenarioError::Missing { key } => Some(key),
            _ => None,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum MobilityKind {
    Highway,
    Grid,
    StaticCluster,
    Trace,
}

#[derive(Clone, Debug)]
pub struct MobilityBlock {
    pub kind: Option<MobilityKind>,
    /// Vehicles per km per lane (highway, when no `densities` axis is given).
    pub density: Option<f64>,
    pub blocks: usize,
    pub block_size_m: f64,
    pub vehicle_count: usize,
    pub pitch_m: f64,
    pub trace_file: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum PhyModelKind {
    UnitDisk,
    TwoRay,
    LogDistance,
}

#[derive(Clone, Debug)]
pub struct PhyBlock {
    pub model: PhyModelKind,
    pub range_m: f64,
    pub cs_range_m: f64,
    pub height_m: f64,
    pub exponent: f64,
    pub tx_power_dbm: Option<f64>,
    pub sinr_db: Option<f64>,
    pub obstacles_file: Option<PathBuf>,
}

impl PhyBlock {
    pub fn to_params(&self) -> PhyParams {
        let mut p = match self.model {
            PhyModelKind::UnitDisk => {
                let mut p = PhyParams::default();
                p.model = ChannelModel::UnitDisk {
                    data_range_m: self.range_m,
                    cs_range_m: self.cs_range_m,
                };
                p
            }
            PhyModelKind::TwoRay => {
                PhyParams::for_model(ChannelModel::TwoRay { height_m: self.height_m })
            }
            PhyModelKind::LogDistance => {
                PhyParams::for_model(ChannelModel::LogDistance { exponent: self.exponent })
            }
        };
        if let Some(v) = self.tx_power_dbm {
            p.tx_power_dbm = v;
        }
        if let Some(v) = self.sinr_db {
            p.sinr_threshold_db = v;
        }
        p
    }
}

/// Notification-source settings; `count = 0` disables message generation
/// (used by pure channel-load scenarios).
#[derive(Clone, Debug)]
pub struct DenmBlock {
    pub count: u32,
    pub rate_hz: f64,
    pub start_s: f64,
    pub size_bytes: u16,
    pub lifetime_s: f64,
    pub hop_limit: u8,
    pub forward_tc: TrafficClass,
    pub source: NodeId,
    pub area: Option<GeoArea>,
}

/// A fully resolved scenario. Construct with [`ScenarioSpec::load`], apply
/// overrides, then call [`validate`](ScenarioSpec::validate) before
/// expanding cells.
#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub name: String,
    pub out_dir: PathBuf,
    pub end_time: SimTime,
    pub events: bool,
    pub saturate: bool,
    pub probe_bytes: u16,
    pub setups: Vec<&'static str>,
    pub seeds: Vec<u64>,
    pub densities: Vec<f64>,
    pub forward_tcs: Vec<TrafficClass>,
    pub hop_limits: Vec<u8>,
    pub mobility: MobilityBlock,
    pub phy: PhyBlock,
    pub dcc: DccParams,
    pub cbf: CbfParams,
    pub denm: DenmBlock,
    /// Relative file values resolve against this (the scenario file's dir).
    base_dir: PathBuf,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            name: "scenario".into(),
            out_dir: "results".into(),
            end_time: SimTime(crate::time::secs(50)),
            events: false,
            saturate: false,
            probe_bytes: PROBE_BYTES,
            setups: SetupProfile::all().iter().map(|s| s.id).collect(),
            seeds: vec![1, 2, 3, 4, 5],
            densities: Vec::new(),
            forward_tcs: Vec::new(),
            hop_limits: Vec::new(),
            mobility: MobilityBlock {
                kind: None,
                density: None,
                blocks: 10,
                block_size_m: 400.0,
                vehicle_count: 1800,
                pitch_m: 50.0,
                trace_file: None,
            },
            phy: PhyBlock {
                model: PhyModelKind::UnitDisk,
                range_m: 1000.0,
                cs_range_m: 1500.0,
                height_m: 1.5,
                exponent: 2.75,
                tx_power_dbm: None,
                sinr_db: None,
                obstacles_file: None,
            },
            dcc: DccParams::default(),
            cbf: CbfParams::default(),
            denm: DenmBlock {
                count: 30,
                rate_hz: 1.0,
                start_s: 10.0,
                size_bytes: 301,
                lifetime_s: 10.0,
                hop_limit: 10,
                forward_tc: TrafficClass::Tc3,
                source: 0,
                area: None,
            },
            base_dir: ".".into(),
        }
    }
}

impl ScenarioSpec {
    /// Parse a scenario file (with includes) into a spec. Does not run the
    /// cross-field checks; call [`validate`](Self::validate) after applying
    /// any command-line overrides.
    pub fn load(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
        let mut spec = ScenarioSpec::default();
        if let Some(stem) = path.file_stem() {
            spec.name = stem.to_string_lossy().into_owned();
        }
        spec.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| ".".into());
        let mut entries = Vec::new();
        read_entries(path, 0, &mut entries)?;
        for (key, value) in entries {
            spec.set(&key, &value)?;
        }
        Ok(spec)
    }

    /// Apply one `key=value` override string (the CLI's `--override`).
    pub fn apply_override(&mut self, pair: &str) -> Result<(), ScenarioError> {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(ScenarioError::BadValue {
                key: pair.trim().to_string(),
                what: "expected key=value".into(),
            });
        };
        let key = key.trim();
        if key == "include" {
            return Err(ScenarioError::BadValue {
                key: key.into(),
                what: "includes are only allowed inside scenario files".into(),
            });
        }
        self.set(key, value.trim())
    }

    /// Assign one key. Unknown keys and un-parseable or out-of-range values
    /// are rejected with the key path.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ScenarioError> {
        if value.is_empty() {
            return Err(bad(key, "empty value"));
        }
        match key {
            "name" => self.name = value.to_string(),
            // outputs land relative to the invoker, not the scenario file
            "out_dir" => self.out_dir = PathBuf::from(value),
            "end_time_s" => self.end_time = SimTime(secs_ns(key, value, 1.0)?),
            "events" => self.events = bool_v(key, value)?,
            "saturate" => self.saturate = bool_v(key, value)?,
            "probe_bytes" => self.probe_bytes = int_v(key, value, 1, 2000)? as u16,
            "setups" => {
                let mut ids = Vec::new();
                for part in list(value) {
                    match SetupProfile::by_id(part) {
                        Some(p) => ids.push(p.id),
                        None => return Err(bad(key, format!("no such setup `{part}`"))),
                    }
                }
                self.setups = ids;
            }
            "seeds" => {
                self.seeds = list(value)
                    .map(|p| p.parse::<u64>().map_err(|_| bad(key, format!("`{p}` is not an integer"))))
                    .collect::<Result<_, _>>()?;
            }
            "densities" => {
                self.densities = list(value)
                    .map(|p| density_v(key, p))
                    .collect::<Result<_, _>>()?;
            }
            "forward_tcs" => {
                self.forward_tcs = list(value)
                    .map(|p| tc_v(key, p))
                    .collect::<Result<_, _>>()?;
            }
            "hop_limits" => {
                self.hop_limits = list(value)
                    .map(|p| int_v(key, p, 1, 255).map(|v| v as u8))
                    .collect::<Result<_, _>>()?;
            }
            "mobility.kind" => {
                self.mobility.kind = Some(match value {
                    "highway" => MobilityKind::Highway,
                    "grid" => MobilityKind::Grid,
                    "static_cluster" => MobilityKind::StaticCluster,
                    "trace" => MobilityKind::Trace,
                    other => return Err(bad(key, format!("unknown mobility `{other}`"))),
                });
            }
            "mobility.density" => self.mobility.density = Some(density_v(key, value)?),
            "mobility.blocks" => self.mobility.blocks = int_v(key, value, 1, 100)? as usize,
            "mobility.block_size_m" => self.mobility.block_size_m = f64_v(key, value, 10.0, 5000.0)?,
            "mobility.vehicle_count" => {
                self.mobility.vehicle_count = int_v(key, value, 1, 100_000)? as usize
            }
            "mobility.pitch_m" => self.mobility.pitch_m = f64_v(key, value, 0.1, 10_000.0)?,
            "mobility.trace_file" => self.mobility.trace_file = Some(self.resolve(value)),
            "phy.model" => {
                self.phy.model = match value {
                    "unit_disk" => PhyModelKind::UnitDisk,
                    "two_ray" => PhyModelKind::TwoRay,
                    "log_distance" => PhyModelKind::LogDistance,
                    other => return Err(bad(key, format!("unknown channel model `{other}`"))),
                };
            }
            "phy.range_m" => self.phy.range_m = f64_v(key, value, 1.0, 100_000.0)?,
            "phy.cs_range_m" => self.phy.cs_range_m = f64_v(key, value, 1.0, 100_000.0)?,
            "phy.height_m" => self.phy.height_m = f64_v(key, value, 0.1, 100.0)?,
            "phy.exponent" => self.phy.exponent = f64_v(key, value, 1.0, 8.0)?,
            "phy.tx_power_dbm" => self.phy.tx_power_dbm = Some(f64_v(key, value, -50.0, 50.0)?),
            "phy.sinr_db" => self.phy.sinr_db = Some(f64_v(key, value, 0.0, 60.0)?),
            "phy.obstacles_file" => self.phy.obstacles_file = Some(self.resolve(value)),
            "dcc.alpha" => self.dcc.alpha = f64_open(key, value)?,
            "dcc.beta" => self.dcc.beta = f64_v(key, value, 1e-9, 1.0)?,
            "dcc.target_cbr" => self.dcc.target_cbr = f64_open(key, value)?,
            "dcc.delta_min" => self.dcc.delta_min = f64_open(key, value)?,
            "dcc.delta_max" => self.dcc.delta_max = f64_open(key, value)?,
            "dcc.gap_min_ms" => self.dcc.gap_min = secs_ns(key, value, 0.001)?,
            "dcc.gap_max_ms" => self.dcc.gap_max = secs_ns(key, value, 0.001)?,
            "cbf.to_max_ms" => self.cbf.to_max = secs_ns(key, value, 0.001)?,
            "cbf.to_min_ms" => self.cbf.to_min = secs_ns(key, value, 0.001)?,
            "cbf.dist_max_m" => self.cbf.dist_max_m = f64_v(key, value, 1.0, 100_000.0)?,
            "denm.count" => self.denm.count = int_v(key, value, 0, 1_000_000)? as u32,
            "denm.rate_hz" => self.denm.rate_hz = f64_v(key, value, 0.001, 1000.0)?,
            "denm.start_s" => self.denm.start_s = f64_v(key, value, 0.0, 1e6)?,
            "denm.size_bytes" => self.denm.size_bytes = int_v(key, value, 1, 2000)? as u16,
            "denm.lifetime_s" => self.denm.lifetime_s = f64_v(key, value, 0.001, 1e6)?,
            "denm.hop_limit" => self.denm.hop_limit = int_v(key, value, 1, 255)? as u8,
            "denm.forward_tc" => self.denm.forward_tc = tc_v(key, value)?,
            "denm.source" => self.denm.source = int_v(key, value, 0, u32::MAX as i64)? as NodeId,
            "denm.area" => self.denm.area = Some(area_v(key, value)?),
            _ => return Err(ScenarioError::UnknownKey { key: key.to_string() }),
        }
        Ok(())
    }

    /// Cross-field checks. Everything a run depends on is verified here so
    /// that a validated spec can expand and build cells without surprises.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let missing = |key: &str| ScenarioError::Missing { key: key.into() };
        if self.setups.is_empty() {
            return Err(missing("setups"));
        }
        if self.seeds.is_empty() {
            return Err(missing("seeds"));
        }
        let kind = self.mobility.kind.ok_or_else(|| missing("mobility.kind"))?;
        match kind {
            MobilityKind::Highway => {
                if self.densities.is_empty() && self.mobility.density.is_none() {
                    return Err(missing("densities"));
                }
            }
            MobilityKind::Trace => {
                let f = self
                    .mobility
                    .trace_file
                    .as_ref()
                    .ok_or_else(|| missing("mobility.trace_file"))?;
                if !f.is_file() {
                    return Err(bad("mobility.trace_file", format!("{} not found", f.display())));
                }
            }
            MobilityKind::Grid | MobilityKind::StaticCluster => {}
        }
        if kind != MobilityKind::Highway && !self.densities.is_empty() {
            return Err(bad("densities", "only highway mobility has a density axis"));
        }
        if let Some(f) = &self.phy.obstacles_file {
            if !f.is_file() {
                return Err(bad("phy.obstacles_file", format!("{} not found", f.display())));
            }
        }
        if self.phy.cs_range_m < self.phy.range_m {
            return Err(bad("phy.cs_range_m", "below the decode range"));
        }
        if self.dcc.delta_max < self.dcc.delta_min {
            return Err(bad("dcc.delta_max", "below dcc.delta_min"));
        }
        if self.dcc.gap_max < self.dcc.gap_min {
            return Err(bad("dcc.gap_max_ms", "below dcc.gap_min_ms"));
        }
        if self.cbf.to_max <= self.cbf.to_min {
            return Err(bad("cbf.to_max_ms", "must exceed cbf.to_min_ms"));
        }
        if self.denm.count > 0 && self.denm.area.is_none() {
            return Err(missing("denm.area"));
        }
        Ok(())
    }

    /// Expand the experiment matrix. Axes that do not apply (density outside
    /// highway mobility, message axes when no messages are generated)
    /// collapse away rather than multiplying the cell count.
    pub fn cells(&self) -> Vec<CellSpec> {
        let densities: Vec<Option<f64>> = match self.mobility.kind {
            Some(MobilityKind::Highway) => {
                if self.densities.is_empty() {
                    vec![self.mobility.density]
                } else {
                    self.densities.iter().map(|&d| Some(d)).collect()
                }
            }
            _ => vec![None],
        };
        let denm_active = self.denm.count > 0;
        let tcs: Vec<TrafficClass> = if denm_active && !self.forward_tcs.is_empty() {
            self.forward_tcs.clone()
        } else {
            vec![self.denm.forward_tc]
        };
        let hls: Vec<u8> = if denm_active && !self.hop_limits.is_empty() {
            self.hop_limits.clone()
        } else {
            vec![self.denm.hop_limit]
        };
        let mut cells = Vec::new();
        for &setup in &self.setups {
            for &density in &densities {
                for &forward_tc in &tcs {
                    for &hop_limit in &hls {
                        for &seed in &self.seeds {
                            cells.push(CellSpec {
                                setup,
                                density,
                                forward_tc,
                                hop_limit,
                                seed,
                                denm_active,
                            });
                        }
                    }
                }
            }
        }
        cells
    }

    /// Build the simulation inputs for one cell.
    pub fn build_cell(&self, cell: &CellSpec) -> Result<(RunConfig, TrajectorySet), ScenarioError> {
        let kind = self
            .mobility
            .kind
            .ok_or_else(|| ScenarioError::Missing { key: "mobility.kind".into() })?;
        let mut traj = match kind {
            MobilityKind::Highway => {
                let d = cell
                    .density
                    .ok_or_else(|| ScenarioError::Missing { key: "densities".into() })?;
                build_highway(d, cell.seed)
            }
            MobilityKind::Grid => build_grid(
                self.mobility.blocks,
                self.mobility.block_size_m,
                self.mobility.vehicle_count,
                self.end_time.0,
                cell.seed,
            ),
            MobilityKind::StaticCluster => {
                build_static_cluster(self.mobility.vehicle_count, self.mobility.pitch_m)
            }
            MobilityKind::Trace => {
                let f = self
                    .mobility
                    .trace_file
                    .as_ref()
                    .ok_or_else(|| ScenarioError::Missing { key: "mobility.trace_file".into() })?;
                ingest_trace(f)?
            }
        };
        if let Some(f) = &self.phy.obstacles_file {
            traj.obstacles.extend(read_obstacles(f)?);
        }

        let mut profile = SetupProfile::by_id(cell.setup)
            .ok_or_else(|| bad("setups", format!("no such setup `{}`", cell.setup)))?;
        profile.forward_tc = cell.forward_tc;
        let mut cfg = RunConfig::new(profile, cell.seed, self.end_time);
        cfg.cbf = self.cbf;
        cfg.dcc = self.dcc;
        cfg.phy = self.phy.to_params();
        cfg.saturate = self.saturate;
        cfg.probe_bytes = self.probe_bytes;
        if self.denm.count > 0 {
            let area = self
                .denm
                .area
                .ok_or_else(|| ScenarioError::Missing { key: "denm.area".into() })?;
            if self.denm.source as usize >= traj.len() {
                return Err(bad(
                    "denm.source",
                    format!("node {} outside the {}-vehicle scenario", self.denm.source, traj.len()),
                ));
            }
            cfg.denm = Some(DenmConfig {
                source: self.denm.source,
                area,
                period: (1e9 / self.denm.rate_hz).round() as u64,
                size_bytes: self.denm.size_bytes,
                lifetime: (self.denm.lifetime_s * 1e9).round() as u64,
                hop_limit: cell.hop_limit,
                count: self.denm.count,
                start_at: SimTime((self.denm.start_s * 1e9).round() as u64),
                forward_tc: cell.forward_tc,
            });
        }
        Ok((cfg, traj))
    }

    fn resolve(&self, value: &str) -> PathBuf {
        let p = Path::new(value);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// One point of the experiment matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CellSpec {
    pub setup: &'static str,
    pub density: Option<f64>,
    pub forward_tc: TrafficClass,
    pub hop_limit: u8,
    pub seed: u64,
    pub denm_active: bool,
}

impl CellSpec {
    /// Cell identity minus the seed: the unit the across-seed aggregate
    /// groups by.
    pub fn group(&self) -> String {
        let mut s = self.setup.to_string();
        if let Some(d) = self.density {
            s.push_str(&format!("-d{}", fmt_num(d)));
        }
        if self.denm_active {
            s.push_str(&format!("-{}-hl{}", self.forward_tc.name(), self.hop_limit));
        }
        s
    }

    pub fn id(&self) -> String {
        format!("{}-s{}", self.group(), self.seed)
    }
}

fn bad(key: &str, what: impl Into<String>) -> ScenarioError {
    ScenarioError::BadValue { key: key.to_string(), what: what.into() }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|p| !p.is_empty())
}

fn f64_raw(key: &str, value: &str) -> Result<f64, ScenarioError> {
    value
        .parse::<f64>()
        .map_err(|_| bad(key, format!("`{value}` is not a number")))
}

fn f64_v(key: &str, value: &str, lo: f64, hi: f64) -> Result<f64, ScenarioError> {
    let v = f64_raw(key, value)?;
    if !v.is_finite() || v < lo || v > hi {
        return Err(bad(key, format!("{value} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

/// Strictly inside (0, 1) — controller coefficients and duty-cycle bounds.
fn f64_open(key: &str, value: &str) -> Result<f64, ScenarioError> {
    let v = f64_raw(key, value)?;
    if !(v > 0.0 && v < 1.0) {
        return Err(bad(key, format!("{value} outside (0, 1)")));
    }
    Ok(v)
}

fn int_v(key: &str, value: &str, lo: i64, hi: i64) -> Result<i64, ScenarioError> {
    let v = value
        .parse::<i64>()
        .map_err(|_| bad(key, format!("`{value}` is not an integer")))?;
    if v < lo || v > hi {
        return Err(bad(key, format!("{value} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

fn bool_v(key: &str, value: &str) -> Result<bool, ScenarioError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(bad(key, format!("`{value}` is not true/false"))),
    }
}

fn density_v(key: &str, value: &str) -> Result<f64, ScenarioError> {
    f64_v(key, value, 1.0, 100.0)
}

fn tc_v(key: &str, value: &str) -> Result<TrafficClass, ScenarioError> {
    TrafficClass::parse(value).ok_or_else(|| bad(key, format!("`{value}` is not tc0..tc3")))
}

/// Seconds (scaled by `unit`, e.g. 0.001 for millisecond keys) → ns.
fn secs_ns(key: &str, value: &str, unit: f64) -> Result<u64, ScenarioError> {
    let v = f64_v(key, value, 0.0, 1e9)?;
    if v <= 0.0 {
        return Err(bad(key, "must be positive"));
    }
    Ok((v * unit * 1e9).round() as u64)
}

/// `circle:cx,cy,r`, `rect:cx,cy,a,b[,azimuth_deg]`,
/// `ellipse:cx,cy,a,b[,azimuth_deg]` — all meters/degrees.
fn area_v(key: &str, value: &str) -> Result<GeoArea, ScenarioError> {
    let Some((shape, rest)) = value.split_once(':') else {
        return Err(bad(key, "expected shape:values, e.g. circle:3500,0,1000"));
    };
    let nums: Vec<f64> = rest
        .split(',')
        .map(|p| f64_raw(key, p.trim()))
        .collect::<Result<_, _>>()?;
    let center = |n: &[f64]| GeoPosition::new(n[0], n[1]);
    match (shape.trim(), nums.len()) {
        ("circle", 3) if nums[2] > 0.0 => Ok(GeoArea::circle(center(&nums), nums[2])),
        ("rect", 4 | 5) | ("ellipse", 4 | 5) if nums[2] > 0.0 && nums[3] > 0.0 => {
            let az = nums.get(4).copied().unwrap_or(0.0);
            Ok(if shape.trim() == "rect" {
                GeoArea::rectangle(center(&nums), nums[2], nums[3], az)
            } else {
                GeoArea::ellipse(center(&nums), nums[2], nums[3], az)
            })
        }
        _ => Err(bad(key, format!("`{value}` is not a valid area"))),
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Read a scenario file into `(key, value)` entries, splicing includes
/// in place so that later lines override earlier ones.
fn read_entries(
    path: &Path,
    depth: usize,
    out: &mut Vec<(String, String)>,
) -> Result<(), ScenarioError> {
    if depth >= MAX_INCLUDE_DEPTH {
        return Err(ScenarioError::IncludeDepth { path: path.to_path_buf() });
    }
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ScenarioError::Syntax { path: path.to_path_buf(), line: i + 1 });
        };
        let (key, value) = (key.trim(), value.trim());
        if key == "include" {
            read_entries(&dir.join(value), depth + 1, out)?;
        } else {
            out.push((key.to_string(), value.to_string()));
        }
    }
    Ok(())
}

/// Extra obstacle rectangles: CSV rows `min_x,min_y,max_x,max_y` in meters;
/// `#` comments and a header row are skipped.
fn read_obstacles(path: &Path) -> Result<Vec<Rect>, ScenarioError> {
    let key = "phy.obstacles_file";
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let mut rects = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Result<Vec<f64>, _> = line.split(',').map(|p| p.trim().parse::<f64>()).collect();
        match nums {
            Ok(n) if n.len() == 4 && n[0] < n[2] && n[1] < n[3] => {
                rects.push(Rect { min_x: n[0], min_y: n[1], max_x: n[2], max_y: n[3] });
            }
            // allow one header row
            Err(_) if i == 0 => continue,
            _ => {
                return Err(bad(key, format!("line {}: expected min_x,min_y,max_x,max_y", i + 1)))
            }
        }
    }
    Ok(rects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_scn(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    fn highway_body() -> &'static str {
        "mobility.kind = highway\n\
         densities = 10, 30, 50\n\
         denm.area = circle:3500,0,1000\n"
    }

    #[test]
    fn highway_matrix_expands_to_sixty_cells() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_scn(dir.path(), "base.scn", highway_body());
        let spec = ScenarioSpec::load(&p).unwrap();
        spec.validate().unwrap();
        let cells = spec.cells();
        assert_eq!(cells.len(), 4 * 3 * 5);
        let ids: std::collections::BTreeSet<String> = cells.iter().map(|c| c.id()).collect();
        assert_eq!(ids.len(), cells.len(), "cell ids must be unique");
        assert_eq!(cells[0].id(), "etsi-cbf-d10-tc3-hl10-s1");
        assert_eq!(cells[0].group(), "etsi-cbf-d10-tc3-hl10");
        assert_eq!(spec.name, "base");
    }

    #[test]
    fn includes_splice_in_file_order_and_later_keys_win() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("common")).unwrap();
        write_scn(
            &dir.path().join("common"),
            "defaults.scn",
            "dcc.alpha = 0.2\nseeds = 9\n",
        );
        let p = write_scn(
            dir.path(),
            "exp.scn",
            "# comment\ninclude = common/defaults.scn\ndcc.alpha = 0.05\n",
        );
        let spec = ScenarioSpec::load(&p).unwrap();
        assert_eq!(spec.dcc.alpha, 0.05);
        assert_eq!(spec.seeds, vec![9]);
    }

    #[test]
    fn include_cycles_are_cut_off() {
        let dir = tempfile::tempdir().unwrap();
        write_scn(dir.path(), "a.scn", "include = b.scn\n");
        write_scn(dir.path(), "b.scn", "include = a.scn\n");
        let err = ScenarioSpec::load(&dir.path().join("a.scn")).unwrap_err();
        assert!(matches!(err, ScenarioError::IncludeDepth { .. }), "{err}");
    }

    #[test]
    fn unknown_and_malformed_keys_carry_their_path() {
        let mut spec = ScenarioSpec::default();
        let err = spec.set("dcc.alhpa", "0.1").unwrap_err();
        assert_eq!(err.key_path(), Some("dcc.alhpa"));
        assert!(err.to_string().contains("dcc.alhpa"));

        let err = spec.set("seeds", "1, two").unwrap_err();
        assert_eq!(err.key_path(), Some("seeds"));

        let err = spec.set("densities", "200").unwrap_err();
        assert_eq!(err.key_path(), Some("densities"));

        let err = spec.apply_override("no_equals_sign").unwrap_err();
        assert!(matches!(err, ScenarioError::BadValue { .. }));
    }

    #[test]
    fn area_strings_parse_each_shape() {
        let c = area_v("denm.area", "circle:3500, 0, 1000").unwrap();
        assert_eq!(c, GeoArea::circle(GeoPosition::new(3500.0, 0.0), 1000.0));
        let r = area_v("denm.area", "rect:100,-50,200,20,30").unwrap();
        assert_eq!(r, GeoArea::rectangle(GeoPosition::new(100.0, -50.0), 200.0, 20.0, 30.0));
        let e = area_v("denm.area", "ellipse:0,0,120,40").unwrap();
        assert_eq!(e, GeoArea::ellipse(GeoPosition::new(0.0, 0.0), 120.0, 40.0, 0.0));
        assert!(area_v("denm.area", "square:0,0,5").is_err());
        assert!(area_v("denm.area", "circle:0,0,-5").is_err());
    }

    #[test]
    fn overrides_apply_after_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_scn(dir.path(), "base.scn", highway_body());
        let mut spec = ScenarioSpec::load(&p).unwrap();
        spec.apply_override("denm.hop_limit=20").unwrap();
        spec.apply_override("seeds = 1").unwrap();
        spec.validate().unwrap();
        let cells = spec.cells();
        assert_eq!(cells.len(), 4 * 3);
        assert!(cells.iter().all(|c| c.hop_limit == 20));
        assert!(cells[0].id().ends_with("-hl20-s1"));
    }

    #[test]
    fn message_axes_collapse_when_no_messages_are_generated() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_scn(
            dir.path(),
            "cluster.scn",
            "mobility.kind = static_cluster\n\
             mobility.vehicle_count = 200\n\
             saturate = true\n\
             denm.count = 0\n\
             setups = etsi-cbf\n\
             seeds = 1, 2\n",
        );
        let spec = ScenarioSpec::load(&p).unwrap();
        spec.validate().unwrap();
        let cells = spec.cells();
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].id(), "etsi-cbf-s1");
    }

    #[test]
    fn validation_requires_area_with_messages_and_kind_always() {
        let spec = ScenarioSpec::default();
        assert_eq!(spec.validate().unwrap_err().key_path(), Some("mobility.kind"));

        let dir = tempfile::tempdir().unwrap();
        let p = write_scn(dir.path(), "x.scn", "mobility.kind = highway\ndensities = 10\n");
        let spec = ScenarioSpec::load(&p).unwrap();
        assert_eq!(spec.validate().unwrap_err().key_path(), Some("denm.area"));

        let p = write_scn(dir.path(), "y.scn", "mobility.kind = trace\n");
        let spec = ScenarioSpec::load(&p).unwrap();
        assert_eq!(spec.validate().unwrap_err().key_path(), Some("mobility.trace_file"));
    }

    #[test]
    fn build_cell_wires_profile_density_and_notification() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_scn(dir.path(), "base.scn", highway_body());
        let mut spec = ScenarioSpec::load(&p).unwrap();
        spec.apply_override("forward_tcs=tc1").unwrap();
        spec.validate().unwrap();
        let cell = spec
            .cells()
            .into_iter()
            .find(|c| c.setup == "greedy-plus" && c.density == Some(10.0))
            .unwrap();
        let (cfg, traj) = spec.build_cell(&cell).unwrap();
        // 10 veh/km/lane over 5 km and 10 lanes
        assert_eq!(traj.len(), 500);
        assert_eq!(cfg.profile.id, "greedy-plus");
        assert_eq!(cfg.profile.forward_tc, TrafficClass::Tc1);
        let denm = cfg.denm.unwrap();
        assert_eq!(denm.forward_tc, TrafficClass::Tc1);
        assert_eq!(denm.period, 1_000_000_000);
        assert_eq!(denm.start_at, SimTime(crate::time::secs(10)));
        assert_eq!(denm.hop_limit, 10);
        assert_eq!(cfg.end_time, SimTime(crate::time::secs(50)));
    }

    #[test]
    fn obstacle_files_merge_into_the_world() {
        let dir = tempfile::tempdir().unwrap();
        let obs = write_scn(
            dir.path(),
            "walls.csv",
            "min_x,min_y,max_x,max_y\n10,20,30,40\n# note\n50,50,60,80\n",
        );
        let p = write_scn(
            dir.path(),
            "s.scn",
            &format!(
                "mobility.kind = static_cluster\nmobility.vehicle_count = 4\n\
                 denm.count = 0\nphy.obstacles_file = {}\nseeds = 1\n",
                obs.file_name().unwrap().to_str().unwrap()
            ),
        );
        let spec = ScenarioSpec::load(&p).unwrap();
        spec.validate().unwrap();
        let (_, traj) = spec.build_cell(&spec.cells()[0]).unwrap();
        assert_eq!(traj.obstacles.len(), 2);
        assert_eq!(traj.obstacles[0], Rect { min_x: 10.0, min_y: 20.0, max_x: 30.0, max_y: 40.0 });
    }
}

//! Vehicle position providers: synthetic highway, synthetic urban grid, and
//! external trace ingestion (CSV or FCD-style XML).

use std::path::Path;

use rand::Rng;

use crate::geo::GeoPosition;
use crate::mac_phy::Rect;
use crate::time::{Nanos, SimTime};
use crate::util::{derive_rng, DetHashMap};

/// Randomness stream key for mobility construction, outside the node-id space.
pub const STREAM_MOBILITY: u64 = 1 << 40;

pub const HIGHWAY_LENGTH_M: f64 = 5000.0;
pub const HIGHWAY_LANES_PER_DIR: usize = 5;
pub const LANE_WIDTH_M: f64 = 4.0;
/// Lane speed bands: lane i (0 = rightmost) draws from 26+2i .. 28+2i m/s.
pub const LANE_SPEED_BASE_MPS: f64 = 26.0;
pub const LANE_SPEED_STEP_MPS: f64 = 2.0;
/// The notification source is a stopped vehicle at the left end of the road
/// (think stationary-vehicle warning); it stays outside the destination area
/// for the whole run while traffic streams past it.
pub const SOURCE_SPEED_MPS: f64 = 0.0;

pub const GRID_STREET_WIDTH_M: f64 = 16.0;
pub const GRID_SPEED_MIN_MPS: f64 = 8.0;
pub const GRID_SPEED_MAX_MPS: f64 = 14.0;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub pos: GeoPosition,
    pub speed_mps: f64,
    pub heading_deg: f64,
}

enum Motion {
    /// Constant-speed travel along x with modular wrap (highway lane).
    Loop { y: f64, x0: f64, speed: f64, len: f64 },
    /// Piecewise-linear samples (urban walks, external traces).
    Samples {
        t: Vec<Nanos>,
        pos: Vec<GeoPosition>,
        speed: Vec<f64>,
        heading: Vec<f64>,
    },
}

pub struct TrajectorySet {
    motions: Vec<Motion>,
    pub obstacles: Vec<Rect>,
    pub min: GeoPosition,
    pub max: GeoPosition,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.motions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.motions.is_empty()
    }

    pub fn state_at(&self, vehicle: usize, t: SimTime) -> VehicleState {
        match &self.motions[vehicle] {
            Motion::Loop { y, x0, speed, len } => {
                let x = (x0 + speed * t.as_secs_f64()).rem_euclid(*len);
                VehicleState {
                    pos: GeoPosition::new(x, *y),
                    speed_mps: speed.abs(),
                    heading_deg: if *speed >= 0.0 { 0.0 } else { 180.0 },
                }
            }
            Motion::Samples { t: ts, pos, speed, heading } => {
                let n = ts.len();
                let now = t.nanos();
                if now <= ts[0] {
                    return VehicleState { pos: pos[0], speed_mps: speed[0], heading_deg: heading[0] };
                }
                if now >= ts[n - 1] {
                    return VehicleState {
                        pos: pos[n - 1],
                        speed_mps: speed[n - 1],
                        heading_deg: heading[n - 1],
                    };
                }
                let i = ts.partition_point(|&s| s <= now) - 1;
                let span = (ts[i + 1] - ts[i]) as f64;
                let f = (now - ts[i]) as f64 / span;
                VehicleState {
                    pos: GeoPosition::new(
                        pos[i].x + (pos[i + 1].x - pos[i].x) * f,
                        pos[i].y + (pos[i + 1].y - pos[i].y) * f,
                    ),
                    speed_mps: speed[i],
                    heading_deg: heading[i],
                }
            }
        }
    }

    fn finish_bounds(&mut self) {
        let (mut lo, mut hi) = (
            GeoPosition::new(f64::INFINITY, f64::INFINITY),
            GeoPosition::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        );
        let mut take = |p: GeoPosition| {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        };
        for m in &self.motions {
            match m {
                Motion::Loop { y, len, .. } => {
                    take(GeoPosition::new(0.0, *y));
                    take(GeoPosition::new(*len, *y));
                }
                Motion::Samples { pos, .. } => pos.iter().copied().for_each(&mut take),
            }
        }
        self.min = lo;
        self.max = hi;
    }
}

/// Build the highway world: `50 * density` vehicles on a 5 km, 2x5-lane road
/// with modular wrap-around. Vehicle 0 is the notification source: stopped at
/// the left end of the middle eastbound lane.
pub fn build_highway(density_veh_km_lane: f64, seed: u64) -> TrajectorySet {
    let mut rng = derive_rng(seed, STREAM_MOBILITY);
    let per_lane = (density_veh_km_lane * HIGHWAY_LENGTH_M / 1000.0).round() as usize;
    let mut motions = Vec::new();
    let source_lane = 2usize;
    let lane_y = |lane: usize, eastbound: bool| -> f64 {
        let off = LANE_WIDTH_M / 2.0 + lane as f64 * LANE_WIDTH_M;
        if eastbound {
            -off
        } else {
            off
        }
    };
    motions.push(Motion::Loop {
        y: lane_y(source_lane, true),
        x0: 0.0,
        speed: SOURCE_SPEED_MPS,
        len: HIGHWAY_LENGTH_M,
    });
    for eastbound in [true, false] {
        for lane in 0..HIGHWAY_LANES_PER_DIR {
            let band_lo = LANE_SPEED_BASE_MPS + LANE_SPEED_STEP_MPS * lane as f64;
            let band_hi = band_lo + LANE_SPEED_STEP_MPS;
            let mut want = per_lane;
            if eastbound && lane == source_lane {
                want = want.saturating_sub(1); // the source occupies this lane
            }
            for _ in 0..want {
                let x0 = rng.gen_range(0.0..HIGHWAY_LENGTH_M);
                let speed = rng.gen_range(band_lo..band_hi);
                motions.push(Motion::Loop {
                    y: lane_y(lane, eastbound),
                    x0,
                    speed: if eastbound { speed } else { -speed },
                    len: HIGHWAY_LENGTH_M,
                });
            }
        }
    }
    let mut set = TrajectorySet {
        motions,
        obstacles: Vec::new(),
        min: GeoPosition::default(),
        max: GeoPosition::default(),
    };
    set.finish_bounds();
    set
}

/// Build an urban grid of `blocks x blocks` square blocks separated by
/// streets. Vehicles perform random turn-at-intersection walks on the street
/// centerlines; block interiors become radio obstacles.
pub fn build_grid(
    blocks: usize,
    block_size_m: f64,
    vehicle_count: usize,
    duration: Nanos,
    seed: u64,
) -> TrajectorySet {
    let mut rng = derive_rng(seed, STREAM_MOBILITY);
    let pitch = block_size_m + GRID_STREET_WIDTH_M;
    let line = |i: usize| GRID_STREET_WIDTH_M / 2.0 + i as f64 * pitch;
    let crossings = blocks + 1;

    let mut obstacles = Vec::new();
    for i in 0..blocks {
        for j in 0..blocks {
            let min_x = GRID_STREET_WIDTH_M + i as f64 * pitch;
            let min_y = GRID_STREET_WIDTH_M + j as f64 * pitch;
            obstacles.push(Rect {
                min_x,
                min_y,
                max_x: min_x + block_size_m,
                max_y: min_y + block_size_m,
            });
        }
    }

    let mut motions = Vec::with_capacity(vehicle_count);
    for _ in 0..vehicle_count {
        let speed = rng.gen_range(GRID_SPEED_MIN_MPS..GRID_SPEED_MAX_MPS);
        let (mut ci, mut cj) = (rng.gen_range(0..crossings), rng.gen_range(0..crossings));
        // direction as a crossing-index step
        let dirs: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        let mut dir = dirs[rng.gen_range(0..4)];
        let mut t_ns: Nanos = 0;
        let mut ts = vec![0];
        let mut pos = vec![GeoPosition::new(line(ci), line(cj))];
        let mut speeds = vec![speed];
        let mut headings = vec![0.0];
        while t_ns < duration {
            // choose the next leg: keep course or turn, never reverse unless stuck
            let options: Vec<(i32, i32)> = dirs
                .iter()
                .copied()
                .filter(|d| *d != (-dir.0, -dir.1))
                .filter(|d| {
                    let ni = ci as i32 + d.0;
                    let nj = cj as i32 + d.1;
                    (0..crossings as i32).contains(&ni) && (0..crossings as i32).contains(&nj)
                })
                .collect();
            dir = if options.is_empty() {
                (-dir.0, -dir.1)
            } else {
                options[rng.gen_range(0..options.len())]
            };
            ci = (ci as i32 + dir.0) as usize;
            cj = (cj as i32 + dir.1) as usize;
            let next = GeoPosition::new(line(ci), line(cj));
            let prev = *pos.last().unwrap();
            let leg = crate::geo::planar_distance(prev, next);
            let heading = (next.y - prev.y).atan2(next.x - prev.x).to_degrees();
            *headings.last_mut().unwrap() = heading;
            t_ns += (leg / speed * 1e9).round() as Nanos;
            ts.push(t_ns);
            pos.push(next);
            speeds.push(speed);
            headings.push(heading);
        }
        motions.push(Motion::Samples { t: ts, pos, speed: speeds, heading: headings });
    }

    let mut set = TrajectorySet {
        motions,
        obstacles,
        min: GeoPosition::default(),
        max: GeoPosition::default(),
    };
    set.finish_bounds();
    set
}

/// A motionless lattice of nodes, `pitch_m` apart, row-major within a near
/// square. Used for congestion studies where every node senses every other.
pub fn build_static_cluster(count: usize, pitch_m: f64) -> TrajectorySet {
    let side = (count as f64).sqrt().ceil() as usize;
    let motions = (0..count)
        .map(|i| {
            let (row, col) = (i / side, i % side);
            Motion::Samples {
                t: vec![0],
                pos: vec![GeoPosition::new(col as f64 * pitch_m, row as f64 * pitch_m)],
                speed: vec![0.0],
                heading: vec![0.0],
            }
        })
        .collect();
    let mut set = TrajectorySet {
        motions,
        obstacles: Vec::new(),
        min: GeoPosition::default(),
        max: GeoPosition::default(),
    };
    set.finish_bounds();
    set
}

/// Motionless nodes at explicit positions (small hand-laid topologies).
pub fn from_static_points(points: &[GeoPosition]) -> TrajectorySet {
    let motions = points
        .iter()
        .map(|&p| Motion::Samples {
            t: vec![0],
            pos: vec![p],
            speed: vec![0.0],
            heading: vec![0.0],
        })
        .collect();
    let mut set = TrajectorySet {
        motions,
        obstacles: Vec::new(),
        min: GeoPosition::default(),
        max: GeoPosition::default(),
    };
    set.finish_bounds();
    set
}

#[derive(thiserror::Error, Debug)]
pub enum TraceError {
    #[error("failed to read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace contains no samples")]
    Empty,
    #[error("trace line {line}: {what}")]
    Malformed { line: usize, what: String },
    #[error("trace header missing column {0}")]
    MissingColumn(&'static str),
    #[error("vehicle {0}: timestamps not strictly increasing")]
    NonMonotonic(String),
    #[error("trace XML: {0}")]
    Xml(String),
}

struct RawSample {
    t_ns: Nanos,
    a: f64, // x or lon
    b: f64, // y or lat
    speed: f64,
    heading: f64,
}

/// Load an external trace. `.xml` files (or content starting with `<`) are
/// parsed as FCD-style XML, everything else as the documented CSV schema.
/// Geographic coordinates are projected onto a local tangent plane.
pub fn ingest_trace(path: &Path) -> Result<TrajectorySet, TraceError> {
    let text = std::fs::read_to_string(path)?;
    let is_xml = path.extension().map(|e| e == "xml").unwrap_or(false)
        || text.trim_start().starts_with('<');
    let (per_vehicle, geographic) =
        if is_xml { parse_fcd(&text)? } else { parse_csv(&text)? };
    if per_vehicle.is_empty() {
        return Err(TraceError::Empty);
    }

    // project lon/lat to meters around the first sample seen
    let project: Box<dyn Fn(f64, f64) -> GeoPosition> = if geographic {
        let first = per_vehicle
            .iter()
            .flat_map(|(_, v)| v.first())
            .min_by_key(|s| s.t_ns)
            .unwrap();
        let (lon0, lat0) = (first.a, first.b);
        let k = std::f64::consts::PI / 180.0 * 6_371_008.8;
        let cos0 = lat0.to_radians().cos();
        Box::new(move |lon, lat| {
            GeoPosition::new((lon - lon0) * k * cos0, (lat - lat0) * k)
        })
    } else {
        Box::new(|x, y| GeoPosition::new(x, y))
    };

    let mut motions = Vec::new();
    for (id, samples) in &per_vehicle {
        let mut ts = Vec::with_capacity(samples.len());
        let mut pos = Vec::with_capacity(samples.len());
        let mut speed = Vec::with_capacity(samples.len());
        let mut heading = Vec::with_capacity(samples.len());
        for s in samples {
            if ts.last().is_some_and(|&prev| s.t_ns <= prev) {
                return Err(TraceError::NonMonotonic(id.clone()));
            }
            ts.push(s.t_ns);
            pos.push(project(s.a, s.b));
            speed.push(s.speed);
            heading.push(s.heading);
        }
        motions.push(Motion::Samples { t: ts, pos, speed, heading });
    }

    let mut set = TrajectorySet {
        motions,
        obstacles: Vec::new(),
        min: GeoPosition::default(),
        max: GeoPosition::default(),
    };
    set.finish_bounds();
    Ok(set)
}

type PerVehicle = Vec<(String, Vec<RawSample>)>;

/// CSV schema: `time_s,vehicle_id,{x_m|lon},{y_m|lat},speed_mps,heading_deg`.
fn parse_csv(text: &str) -> Result<(PerVehicle, bool), TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| TraceError::Malformed { line: 1, what: e.to_string() })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let time_i = col("time_s").ok_or(TraceError::MissingColumn("time_s"))?;
    let id_i = col("vehicle_id").ok_or(TraceError::MissingColumn("vehicle_id"))?;
    let (a_i, b_i, geographic) = match (col("x_m"), col("y_m"), col("lon"), col("lat")) {
        (Some(x), Some(y), _, _) => (x, y, false),
        (_, _, Some(lon), Some(lat)) => (lon, lat, true),
        _ => return Err(TraceError::MissingColumn("x_m/y_m or lon/lat")),
    };
    let speed_i = col("speed_mps").ok_or(TraceError::MissingColumn("speed_mps"))?;
    let heading_i = col("heading_deg").ok_or(TraceError::MissingColumn("heading_deg"))?;

    let mut order: Vec<String> = Vec::new();
    let mut by_id: DetHashMap<String, Vec<RawSample>> = DetHashMap::default();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let rec = rec.map_err(|e| TraceError::Malformed { line, what: e.to_string() })?;
        let field = |i: usize| -> Result<&str, TraceError> {
            rec.get(i).ok_or(TraceError::Malformed { line, what: "missing field".into() })
        };
        let num = |i: usize| -> Result<f64, TraceError> {
            field(i)?.parse::<f64>().map_err(|e| TraceError::Malformed {
                line,
                what: format!("{}: {e}", headers.get(i).unwrap_or("?")),
            })
        };
        let t = num(time_i)?;
        if !t.is_finite() || t < 0.0 {
            return Err(TraceError::Malformed { line, what: "negative time".into() });
        }
        let id = field(id_i)?.to_string();
        let sample = RawSample {
            t_ns: (t * 1e9).round() as Nanos,
            a: num(a_i)?,
            b: num(b_i)?,
            speed: num(speed_i)?,
            heading: num(heading_i)?,
        };
        if !by_id.contains_key(&id) {
            order.push(id.clone());
        }
        by_id.entry(id).or_default().push(sample);
    }
    Ok((
        order
            .into_iter()
            .map(|id| {
                let samples = by_id.remove(&id).unwrap();
                (id, samples)
            })
            .collect(),
        geographic,
    ))
}

/// FCD-style XML: `<timestep time="..."><vehicle id x y speed angle/>`.
/// `angle` follows the floating-car convention (degrees clockwise from
/// north) and is converted to math headings.
fn parse_fcd(text: &str) -> Result<(PerVehicle, bool), TraceError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| TraceError::Xml(e.to_string()))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: DetHashMap<String, Vec<RawSample>> = DetHashMap::default();
    for step in doc.descendants().filter(|n| n.has_tag_name("timestep")) {
        let t: f64 = step
            .attribute("time")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| TraceError::Xml("timestep without numeric time".into()))?;
        for veh in step.children().filter(|n| n.has_tag_name("vehicle")) {
            let attr = |name: &str| -> Result<f64, TraceError> {
                veh.attribute(name)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| TraceError::Xml(format!("vehicle missing numeric {name}")))
            };
            let id = veh
                .attribute("id")
                .ok_or_else(|| TraceError::Xml("vehicle missing id".into()))?
                .to_string();
            let angle = attr("angle")?;
            let sample = RawSample {
                t_ns: (t * 1e9).round() as Nanos,
                a: attr("x")?,
                b: attr("y")?,
                speed: attr("speed")?,
                heading: 90.0 - angle,
            };
            if !by_id.contains_key(&id) {
                order.push(id.clone());
            }
            by_id.entry(id).or_default().push(sample);
        }
    }
    Ok((
        order
            .into_iter()
            .map(|id| {
                let samples = by_id.remove(&id).unwrap();
                (id, samples)
            })
            .collect(),
        false,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::haversine_m;
    use crate::time::secs;
    use std::io::Write;

    #[test]
    fn highway_counts_match_density() {
        assert_eq!(build_highway(10.0, 1).len(), 500);
        assert_eq!(build_highway(50.0, 1).len(), 2500);
        assert_eq!(build_highway(30.0, 7).len(), 1500);
    }

    #[test]
    fn highway_source_is_vehicle_zero() {
        let set = build_highway(10.0, 3);
        let s = set.state_at(0, SimTime::ZERO);
        assert_eq!(s.pos.x, 0.0);
        assert_eq!(s.pos.y, -10.0); // middle eastbound lane
        assert_eq!(s.speed_mps, SOURCE_SPEED_MPS);
        assert_eq!(s.heading_deg, 0.0);
        // parked: still at the left end much later
        let s = set.state_at(0, SimTime(secs(10)));
        assert_eq!(s.pos.x, 0.0);
    }

    #[test]
    fn highway_wraps_modularly() {
        let set = build_highway(10.0, 3);
        // any moving vehicle passes x=5000 eventually and wraps back into [0, 5000)
        let v0 = set.state_at(1, SimTime::ZERO);
        let v = set.state_at(1, SimTime(secs(170)));
        assert!(v.pos.x >= 0.0 && v.pos.x < 5000.0);
        let expect = (v0.pos.x + v0.speed_mps * 170.0).rem_euclid(5000.0);
        assert!((v.pos.x - expect).abs() < 1e-6);
    }

    #[test]
    fn highway_lane_bands_hold() {
        let set = build_highway(10.0, 11);
        for v in 1..set.len() {
            let s = set.state_at(v, SimTime::ZERO);
            let lane = ((s.pos.y.abs() - 2.0) / LANE_WIDTH_M).round() as usize;
            let lo = LANE_SPEED_BASE_MPS + LANE_SPEED_STEP_MPS * lane as f64;
            assert!(
                s.speed_mps >= lo && s.speed_mps <= lo + LANE_SPEED_STEP_MPS,
                "lane {lane} speed {}",
                s.speed_mps
            );
            let east = s.pos.y < 0.0;
            assert_eq!(s.heading_deg, if east { 0.0 } else { 180.0 });
        }
    }

    #[test]
    fn highway_same_seed_identical() {
        let a = build_highway(10.0, 5);
        let b = build_highway(10.0, 5);
        let c = build_highway(10.0, 6);
        let t = SimTime(secs(13));
        let mut any_diff = false;
        for v in 0..a.len() {
            assert_eq!(a.state_at(v, t), b.state_at(v, t));
            any_diff |= a.state_at(v, t) != c.state_at(v, t);
        }
        assert!(any_diff);
    }

    #[test]
    fn static_cluster_is_a_compact_lattice() {
        let set = build_static_cluster(200, 15.0);
        assert_eq!(set.len(), 200);
        // 15x14 lattice at 15 m pitch spans ~210x195 m: everyone in range
        let mut max_d = 0.0f64;
        for i in 0..200 {
            let a = set.state_at(i, SimTime::ZERO);
            assert_eq!(a.speed_mps, 0.0);
            // motionless over time
            assert_eq!(a.pos, set.state_at(i, SimTime(secs(30))).pos);
            let d = crate::geo::planar_distance(a.pos, set.state_at(0, SimTime::ZERO).pos);
            max_d = max_d.max(d);
        }
        assert!(max_d < 300.0, "{max_d}");
    }

    #[test]
    fn static_points_sit_where_placed() {
        let set = from_static_points(&[GeoPosition::new(0.0, 0.0), GeoPosition::new(800.0, 3.0)]);
        assert_eq!(set.len(), 2);
        let s = set.state_at(1, SimTime(secs(9)));
        assert_eq!(s.pos, GeoPosition::new(800.0, 3.0));
        assert_eq!(s.speed_mps, 0.0);
    }

    #[test]
    fn grid_emits_block_obstacles() {
        let set = build_grid(6, 400.0, 50, secs(30), 2);
        assert_eq!(set.obstacles.len(), 36);
        assert_eq!(set.len(), 50);
        let r = set.obstacles[0];
        assert_eq!(r.min_x, 16.0);
        assert_eq!(r.max_x, 416.0);
    }

    #[test]
    fn grid_vehicles_stay_on_street_centerlines() {
        let set = build_grid(4, 400.0, 30, secs(60), 9);
        let pitch = 416.0;
        let on_line = |c: f64| {
            let k = (c - 8.0) / pitch;
            (k - k.round()).abs() < 1e-6
        };
        for v in 0..set.len() {
            for s in 0..120 {
                let st = set.state_at(v, SimTime(secs(s) / 2));
                assert!(
                    on_line(st.pos.x) || on_line(st.pos.y),
                    "vehicle {v} off-street at {:?}",
                    st.pos
                );
            }
        }
    }

    #[test]
    fn grid_positions_are_continuous() {
        let set = build_grid(4, 400.0, 20, secs(60), 4);
        for v in 0..set.len() {
            let mut prev = set.state_at(v, SimTime::ZERO).pos;
            for ms in (100..60_000).step_by(100) {
                let cur = set.state_at(v, SimTime(crate::time::millis(ms))).pos;
                let jump = crate::geo::planar_distance(prev, cur);
                assert!(jump <= GRID_SPEED_MAX_MPS * 0.1 + 1e-6, "jump {jump}");
                prev = cur;
            }
        }
    }

    fn write_temp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_trace_interpolates() {
        let f = write_temp(
            "time_s,vehicle_id,x_m,y_m,speed_mps,heading_deg\n\
             0,a,0,0,10,0\n\
             10,a,100,0,10,0\n",
            ".csv",
        );
        let set = ingest_trace(f.path()).unwrap();
        assert_eq!(set.len(), 1);
        let s = set.state_at(0, SimTime(secs(5)));
        assert!((s.pos.x - 50.0).abs() < 1e-9);
        // clamped outside the sampled span
        assert_eq!(set.state_at(0, SimTime(secs(20))).pos.x, 100.0);
    }

    #[test]
    fn csv_trace_errors() {
        let f = write_temp("time_s,vehicle_id,x_m,y_m,speed_mps,heading_deg\n", ".csv");
        assert!(matches!(ingest_trace(f.path()), Err(TraceError::Empty)));

        let f = write_temp(
            "time_s,vehicle_id,x_m,y_m,speed_mps,heading_deg\n0,a,oops,0,1,0\n",
            ".csv",
        );
        match ingest_trace(f.path()) {
            Err(TraceError::Malformed { line, .. }) => assert_eq!(line, 2),
            Err(other) => panic!("{other:?}"),
            Ok(_) => panic!("malformed row accepted"),
        }

        let f = write_temp(
            "time_s,vehicle_id,x_m,y_m,speed_mps,heading_deg\n\
             5,a,0,0,1,0\n\
             5,a,1,0,1,0\n",
            ".csv",
        );
        assert!(matches!(ingest_trace(f.path()), Err(TraceError::NonMonotonic(_))));

        let f = write_temp("time_s,vehicle_id,speed_mps,heading_deg\n", ".csv");
        assert!(matches!(ingest_trace(f.path()), Err(TraceError::MissingColumn(_))));
    }

    #[test]
    fn geographic_trace_matches_haversine() {
        // a handful of points spread over ~5 km near Madrid
        let pts = [
            (-3.70, 40.40),
            (-3.66, 40.40),
            (-3.70, 40.44),
            (-3.67, 40.43),
            (-3.69, 40.41),
        ];
        let mut csv = String::from("time_s,vehicle_id,lon,lat,speed_mps,heading_deg\n");
        for (i, (lon, lat)) in pts.iter().enumerate() {
            csv.push_str(&format!("0,v{i},{lon},{lat},0,0\n"));
        }
        let f = write_temp(&csv, ".csv");
        let set = ingest_trace(f.path()).unwrap();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let planar = crate::geo::planar_distance(
                    set.state_at(i, SimTime::ZERO).pos,
                    set.state_at(j, SimTime::ZERO).pos,
                );
                let great = haversine_m(pts[i].1, pts[i].0, pts[j].1, pts[j].0);
                let rel = (planar - great).abs() / great;
                assert!(rel < 1e-3, "pair {i},{j}: {planar} vs {great} ({rel})");
            }
        }
    }

    #[test]
    fn fcd_trace_parses_and_converts_angles() {
        let f = write_temp(
            r#"<fcd-export>
                 <timestep time="0.0">
                   <vehicle id="veh0" x="0" y="0" speed="10" angle="90"/>
                   <vehicle id="veh1" x="50" y="5" speed="8" angle="0"/>
                 </timestep>
                 <timestep time="1.0">
                   <vehicle id="veh0" x="10" y="0" speed="10" angle="90"/>
                 </timestep>
               </fcd-export>"#,
            ".xml",
        );
        let set = ingest_trace(f.path()).unwrap();
        assert_eq!(set.len(), 2);
        let s = set.state_at(0, SimTime::ZERO);
        // FCD angle 90 = east = math heading 0
        assert_eq!(s.heading_deg, 0.0);
        let s = set.state_at(1, SimTime::ZERO);
        assert_eq!(s.heading_deg, 90.0);
        let s = set.state_at(0, SimTime(crate::time::millis(500)));
        assert!((s.pos.x - 5.0).abs() < 1e-9);
    }

    #[test]
    fn fcd_errors_surface() {
        let f = write_temp(r#"<fcd-export><timestep time="x"/></fcd-export>"#, ".xml");
        assert!(matches!(ingest_trace(f.path()), Err(TraceError::Xml(_))));
        let f = write_temp("<fcd-export></fcd-export>", ".xml");
        assert!(matches!(ingest_trace(f.path()), Err(TraceError::Empty)));
    }
}

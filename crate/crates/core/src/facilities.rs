//! Facilities layer: CAM triggering, GN beaconing, and the DENM source.

use crate::geo::{heading_delta_deg, planar_distance, GeoArea, GeoPosition};
use crate::router::{GnPacket, TrafficClass};
use crate::time::{millis, secs, Nanos, SimTime};
use crate::NodeId;

/// CAM trigger conditions are evaluated on this period.
pub const CAM_CHECK_PERIOD: Nanos = millis(100);
/// Lower bound on the inter-CAM gap.
pub const CAM_MIN_INTERVAL: Nanos = millis(100);
/// A CAM is always generated once this much time has passed.
pub const CAM_MAX_INTERVAL: Nanos = secs(1);
/// The full message (low-frequency container included) is sent at most this often.
pub const LONG_CAM_PERIOD: Nanos = millis(500);
pub const CAM_SHORT_BYTES: u16 = 85;
pub const CAM_LONG_BYTES: u16 = 285;
pub const CAM_POS_DELTA_M: f64 = 4.0;
pub const CAM_SPEED_DELTA_MPS: f64 = 0.5;
pub const CAM_HEADING_DELTA_DEG: f64 = 4.0;

pub const BEACON_PERIOD: Nanos = secs(3);
pub const BEACON_JITTER_MAX: Nanos = millis(750);
pub const BEACON_BYTES: u16 = 60;
/// Beacons are suppressed while CAMs keep the neighborhood informed.
pub const BEACON_CAM_SUPPRESS: Nanos = secs(1);

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CamDecision {
    pub size_bytes: u16,
    pub long: bool,
}

/// Kinematic CAM triggering with a rate floor supplied by congestion control:
/// the dynamics rule only fires once `dcc_min_interval` has elapsed, and the
/// one-second fallback applies regardless.
#[derive(Copy, Clone, Debug, Default)]
pub struct CamState {
    pub last_cam_at: Option<SimTime>,
    last_long_at: Option<SimTime>,
    ref_pos: GeoPosition,
    ref_speed: f64,
    ref_heading: f64,
}

impl CamState {
    pub fn check(
        &mut self,
        now: SimTime,
        pos: GeoPosition,
        speed_mps: f64,
        heading_deg: f64,
        dcc_min_interval: Nanos,
    ) -> Option<CamDecision> {
        let min_gap = dcc_min_interval.clamp(CAM_MIN_INTERVAL, CAM_MAX_INTERVAL);
        let generate = match self.last_cam_at {
            None => true,
            Some(prev) => {
                let elapsed = now - prev;
                let moved = planar_distance(self.ref_pos, pos) >= CAM_POS_DELTA_M
                    || (speed_mps - self.ref_speed).abs() >= CAM_SPEED_DELTA_MPS
                    || heading_delta_deg(self.ref_heading, heading_deg) >= CAM_HEADING_DELTA_DEG;
                elapsed >= CAM_MAX_INTERVAL || (elapsed >= min_gap && moved)
            }
        };
        if !generate {
            return None;
        }
        let long = match self.last_long_at {
            None => true,
            Some(prev) => now - prev >= LONG_CAM_PERIOD,
        };
        self.last_cam_at = Some(now);
        if long {
            self.last_long_at = Some(now);
        }
        self.ref_pos = pos;
        self.ref_speed = speed_mps;
        self.ref_heading = heading_deg;
        Some(CamDecision {
            size_bytes: if long { CAM_LONG_BYTES } else { CAM_SHORT_BYTES },
            long,
        })
    }
}

/// A beacon is due when no CAM has advertised our position recently and the
/// beacon period itself has elapsed.
pub fn beacon_due(
    now: SimTime,
    last_cam_at: Option<SimTime>,
    last_beacon_at: Option<SimTime>,
) -> bool {
    let cam_quiet = match last_cam_at {
        None => true,
        Some(t) => now - t >= BEACON_CAM_SUPPRESS,
    };
    let beacon_quiet = match last_beacon_at {
        None => true,
        Some(t) => now - t >= BEACON_PERIOD,
    };
    cam_quiet && beacon_quiet
}

/// Notification traffic configuration for one run.
#[derive(Clone, Debug)]
pub struct DenmConfig {
    pub source: NodeId,
    pub area: GeoArea,
    pub period: Nanos,
    pub size_bytes: u16,
    pub lifetime: Nanos,
    pub hop_limit: u8,
    pub count: u32,
    pub start_at: SimTime,
    /// Traffic class applied by forwarders; the source always sends TC0.
    pub forward_tc: TrafficClass,
}

/// Sequence state of the notification source.
#[derive(Copy, Clone, Debug, Default)]
pub struct DenmSource {
    next_seq: u16,
    pub emitted: u32,
}

impl DenmSource {
    /// Build the next notification, or `None` once the budget is spent.
    pub fn next(&mut self, cfg: &DenmConfig, now: SimTime, pos: GeoPosition) -> Option<GnPacket> {
        if self.emitted >= cfg.count {
            return None;
        }
        let seq = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        self.emitted += 1;
        Some(GnPacket {
            source: cfg.source,
            seq,
            source_pos: pos,
            sender_pos: pos,
            area: cfg.area,
            tc: TrafficClass::Tc0,
            hop_limit: cfg.hop_limit,
            initial_hop_limit: cfg.hop_limit,
            lifetime: cfg.lifetime,
            created_at: now,
            size_bytes: cfg.size_bytes,
        })
    }

    pub fn done(&self, cfg: &DenmConfig) -> bool {
        self.emitted >= cfg.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoArea;
    use crate::time::millis;

    fn p(x: f64) -> GeoPosition {
        GeoPosition::new(x, 0.0)
    }

    #[test]
    fn first_check_generates_a_long_cam() {
        let mut cam = CamState::default();
        let d = cam.check(SimTime::ZERO, p(0.0), 30.0, 0.0, 0).unwrap();
        assert!(d.long);
        assert_eq!(d.size_bytes, 285);
    }

    #[test]
    fn stationary_vehicle_falls_back_to_one_second() {
        let mut cam = CamState::default();
        cam.check(SimTime::ZERO, p(0.0), 0.0, 0.0, 0).unwrap();
        for ms in (100..1000).step_by(100) {
            assert_eq!(cam.check(SimTime(millis(ms)), p(0.0), 0.0, 0.0, 0), None);
        }
        let d = cam.check(SimTime(secs(1)), p(0.0), 0.0, 0.0, 0).unwrap();
        // 1 s since the long CAM, so the full message again
        assert!(d.long);
    }

    #[test]
    fn moving_vehicle_triggers_on_position_delta() {
        let mut cam = CamState::default();
        cam.check(SimTime::ZERO, p(0.0), 30.0, 0.0, 0).unwrap();
        // 30 m/s: 3 m after 100 ms -> below the 4 m threshold
        assert_eq!(cam.check(SimTime(millis(100)), p(3.0), 30.0, 0.0, 0), None);
        // 4.5 m after 150 ms -> trigger, short message (long one 150 ms old)
        let d = cam.check(SimTime(millis(150)), p(4.5), 30.0, 0.0, 0).unwrap();
        assert!(!d.long);
        assert_eq!(d.size_bytes, 85);
    }

    #[test]
    fn speed_and_heading_deltas_trigger() {
        let mut cam = CamState::default();
        cam.check(SimTime::ZERO, p(0.0), 30.0, 0.0, 0).unwrap();
        assert!(cam.check(SimTime(millis(100)), p(0.0), 30.5, 0.0, 0).is_some());
        assert!(cam.check(SimTime(millis(200)), p(0.0), 30.5, 4.0, 0).is_some());
        // just below both thresholds: nothing
        assert_eq!(cam.check(SimTime(millis(300)), p(0.0), 30.9, 7.9, 0), None);
    }

    #[test]
    fn long_cam_every_half_second() {
        let mut cam = CamState::default();
        cam.check(SimTime::ZERO, p(0.0), 30.0, 0.0, 0).unwrap();
        let d = cam.check(SimTime(millis(200)), p(8.0), 30.0, 0.0, 0).unwrap();
        assert!(!d.long);
        let d = cam.check(SimTime(millis(500)), p(16.0), 30.0, 0.0, 0).unwrap();
        assert!(d.long);
    }

    #[test]
    fn congestion_floor_delays_kinematic_trigger() {
        let mut cam = CamState::default();
        cam.check(SimTime::ZERO, p(0.0), 30.0, 0.0, 0).unwrap();
        let gap = millis(700);
        // big position delta, but the rate floor holds until 700 ms
        assert_eq!(cam.check(SimTime(millis(300)), p(9.0), 30.0, 0.0, gap), None);
        assert_eq!(cam.check(SimTime(millis(600)), p(18.0), 30.0, 0.0, gap), None);
        assert!(cam.check(SimTime(millis(700)), p(21.0), 30.0, 0.0, gap).is_some());
        // the floor never exceeds one second
        cam.last_cam_at = Some(SimTime(secs(2)));
        assert!(cam.check(SimTime(secs(3)), p(21.0), 30.0, 0.0, secs(5)).is_some());
    }

    #[test]
    fn beacon_suppressed_by_recent_cam() {
        let t = |s| SimTime(secs(s));
        assert!(!beacon_due(t(3), Some(SimTime(millis(2700))), None));
        assert!(beacon_due(t(3), Some(t(1)), None));
        assert!(beacon_due(t(3), None, None));
        // beacon period itself
        assert!(!beacon_due(t(3), Some(t(1)), Some(SimTime(millis(500)))));
        assert!(beacon_due(t(4), Some(t(1)), Some(t(1))));
    }

    #[test]
    fn denm_source_counts_and_sequences() {
        let cfg = DenmConfig {
            source: 0,
            area: GeoArea::circle(GeoPosition::new(3500.0, 0.0), 1000.0),
            period: secs(1),
            size_bytes: 301,
            lifetime: secs(10),
            hop_limit: 10,
            count: 30,
            start_at: SimTime(secs(10)),
            forward_tc: TrafficClass::Tc3,
        };
        let mut src = DenmSource::default();
        let mut seqs = Vec::new();
        let mut t = cfg.start_at;
        while let Some(pkt) = src.next(&cfg, t, p(0.0)) {
            assert_eq!(pkt.tc, TrafficClass::Tc0);
            assert_eq!(pkt.hop_limit, 10);
            assert_eq!(pkt.size_bytes, 301);
            assert_eq!(pkt.created_at, t);
            seqs.push(pkt.seq);
            t = t + cfg.period;
        }
        assert_eq!(seqs, (0..30).collect::<Vec<u16>>());
        assert!(src.done(&cfg));
        assert_eq!(src.next(&cfg, t, p(0.0)), None);
    }
}

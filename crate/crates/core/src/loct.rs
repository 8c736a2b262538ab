//! Per-node Location Table (LocT) and Duplicate Packet List (DPL).
//!
//! The LocT caches the last position report heard from every other vehicle.
//! Which entries count as usable "neighbors" depends on the policy of the
//! forwarding algorithm consuming the table; the table itself never
//! extrapolates positions and evaluates staleness lazily against the query
//! time.

use crate::geo::GeoPosition;
use crate::time::{millis, secs, Nanos, SimTime};
use crate::util::DetHashMap;
use crate::NodeId;

/// How a position report arrived.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum RxVia {
    Cam,
    Beacon,
    /// Sender position vector of a forwarded multi-hop packet.
    Forwarded,
}

/// Neighbor validity policy applied when reading the table.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum NeighborPolicy {
    /// Neighbor flag sticks for the whole entry lifetime.
    Etsi,
    /// Neighbor flag expires one beacon period plus maximum jitter after the
    /// last one-hop report (3.75 s).
    FlagRefresh,
    /// Neighbor flag expires 1 s after the last one-hop report.
    GreedyPlus,
}

#[derive(Copy, Clone, Debug)]
pub struct LocTEntry {
    pub node: NodeId,
    pub position: GeoPosition,
    pub speed_mps: f64,
    pub heading_deg: f64,
    pub last_update: SimTime,
    pub is_neighbor: bool,
    /// Time the neighbor flag was last asserted by a one-hop reception.
    pub neighbor_set_at: SimTime,
}

/// Entry retention: reports older than this are gone.
pub const ENTRY_LIFETIME: Nanos = secs(20);
/// Neighbor window for [`NeighborPolicy::FlagRefresh`].
pub const FLAG_REFRESH_WINDOW: Nanos = millis(3750);
/// Neighbor window for [`NeighborPolicy::GreedyPlus`].
pub const GREEDY_PLUS_WINDOW: Nanos = millis(1000);

#[derive(Default)]
pub struct LocationTable {
    entries: DetHashMap<NodeId, LocTEntry>,
}

impl LocationTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert or refresh the entry for `node` from a received position report.
    /// One-hop receptions (CAM, beacon) assert the neighbor flag; forwarded
    /// packets only refresh the position.
    pub fn upsert(
        &mut self,
        node: NodeId,
        position: GeoPosition,
        speed_mps: f64,
        heading_deg: f64,
        via: RxVia,
        now: SimTime,
    ) {
        let one_hop = matches!(via, RxVia::Cam | RxVia::Beacon);
        let e = self.entries.entry(node).or_insert(LocTEntry {
            node,
            position,
            speed_mps,
            heading_deg,
            last_update: now,
            is_neighbor: false,
            neighbor_set_at: SimTime::ZERO,
        });
        // A stale slot being rewritten behaves like a fresh entry.
        if now.since(e.last_update) > ENTRY_LIFETIME {
            e.is_neighbor = false;
            e.neighbor_set_at = SimTime::ZERO;
        }
        e.position = position;
        e.speed_mps = speed_mps;
        e.heading_deg = heading_deg;
        e.last_update = now;
        if one_hop {
            e.is_neighbor = true;
            e.neighbor_set_at = now;
        }
    }

    /// Look up a live entry; expired entries are invisible.
    pub fn get(&self, node: NodeId, now: SimTime) -> Option<&LocTEntry> {
        self.entries
            .get(&node)
            .filter(|e| now.since(e.last_update) <= ENTRY_LIFETIME)
    }

    /// All live entries passing the neighbor policy, in unspecified order.
    /// Callers must reduce with a total order (see greedy tie-breaking).
    pub fn neighbor_candidates<'a>(
        &'a self,
        policy: NeighborPolicy,
        now: SimTime,
    ) -> impl Iterator<Item = &'a LocTEntry> {
        self.entries.values().filter(move |e| {
            if now.since(e.last_update) > ENTRY_LIFETIME || !e.is_neighbor {
                return false;
            }
            let flag_age = now.since(e.neighbor_set_at);
            match policy {
                NeighborPolicy::Etsi => true,
                NeighborPolicy::FlagRefresh => flag_age <= FLAG_REFRESH_WINDOW,
                NeighborPolicy::GreedyPlus => flag_age <= GREEDY_PLUS_WINDOW,
            }
        })
    }

    /// Drop entries past the retention limit to bound memory.
    pub fn purge(&mut self, now: SimTime) {
        self.entries
            .retain(|_, e| now.since(e.last_update) <= ENTRY_LIFETIME);
    }

    pub fn len_live(&self, now: SimTime) -> usize {
        self.entries
            .values()
            .filter(|e| now.since(e.last_update) <= ENTRY_LIFETIME)
            .count()
    }
}

/// Per-source sequence numbers remembered by the DPL.
pub const DPL_CAPACITY: usize = 32;

/// Duplicate packet list: a fixed-size ring of recent sequence numbers per
/// source. Detects both duplicates and forwarding loops.
#[derive(Default)]
pub struct Dpl {
    per_source: DetHashMap<NodeId, Ring>,
}

struct Ring {
    seqs: [u16; DPL_CAPACITY],
    len: usize,
    head: usize,
}

impl Default for Ring {
    fn default() -> Self {
        Ring { seqs: [0; DPL_CAPACITY], len: 0, head: 0 }
    }
}

impl Ring {
    fn contains(&self, seq: u16) -> bool {
        self.seqs[..self.len].contains(&seq)
    }

    fn push(&mut self, seq: u16) {
        if self.len < DPL_CAPACITY {
            self.seqs[self.len] = seq;
            self.len += 1;
        } else {
            self.seqs[self.head] = seq;
            self.head = (self.head + 1) % DPL_CAPACITY;
        }
    }
}

impl Dpl {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns true when `(source, seq)` was already recorded; otherwise
    /// records it (evicting the oldest of the 32 remembered entries) and
    /// returns false.
    pub fn check_and_record(&mut self, source: NodeId, seq: u16) -> bool {
        let ring = self.per_source.entry(source).or_default();
        if ring.contains(seq) {
            true
        } else {
            ring.push(seq);
            false
        }
    }

    /// Read-only duplicate test.
    pub fn contains(&self, source: NodeId, seq: u16) -> bool {
        self.per_source.get(&source).is_some_and(|r| r.contains(seq))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::VecDeque;

    fn t(s: f64) -> SimTime {
        SimTime(crate::time::secs_f64(s))
    }

    fn p(x: f64) -> GeoPosition {
        GeoPosition::new(x, 0.0)
    }

    #[test]
    fn one_hop_sets_neighbor_forwarded_does_not() {
        let mut lt = LocationTable::new();
        lt.upsert(1, p(10.0), 30.0, 0.0, RxVia::Forwarded, t(1.0));
        assert!(!lt.get(1, t(1.0)).unwrap().is_neighbor);
        lt.upsert(1, p(12.0), 30.0, 0.0, RxVia::Cam, t(2.0));
        let e = lt.get(1, t(2.0)).unwrap();
        assert!(e.is_neighbor);
        assert_eq!(e.neighbor_set_at, t(2.0));
        // forwarded refresh keeps the flag and its timestamp
        lt.upsert(1, p(15.0), 30.0, 0.0, RxVia::Forwarded, t(3.0));
        let e = lt.get(1, t(3.0)).unwrap();
        assert!(e.is_neighbor);
        assert_eq!(e.neighbor_set_at, t(2.0));
        assert_eq!(e.position.x, 15.0);
    }

    #[test]
    fn entries_expire_after_20s() {
        let mut lt = LocationTable::new();
        lt.upsert(1, p(0.0), 0.0, 0.0, RxVia::Cam, t(0.0));
        assert!(lt.get(1, t(20.0)).is_some());
        assert!(lt.get(1, t(20.001)).is_none());
        assert_eq!(lt.neighbor_candidates(NeighborPolicy::Etsi, t(21.0)).count(), 0);
        lt.purge(t(21.0));
        assert_eq!(lt.len_live(t(21.0)), 0);
    }

    #[test]
    fn stale_slot_rewrite_resets_neighbor_flag() {
        let mut lt = LocationTable::new();
        lt.upsert(1, p(0.0), 0.0, 0.0, RxVia::Cam, t(0.0));
        // 25 s later only a forwarded packet arrives: the old neighbor flag
        // must not resurrect
        lt.upsert(1, p(5.0), 0.0, 0.0, RxVia::Forwarded, t(25.0));
        let e = lt.get(1, t(25.0)).unwrap();
        assert!(!e.is_neighbor);
    }

    #[test]
    fn policy_windows() {
        let mut lt = LocationTable::new();
        lt.upsert(1, p(0.0), 0.0, 0.0, RxVia::Cam, t(0.0));
        let counts = |at: SimTime| {
            (
                lt.neighbor_candidates(NeighborPolicy::Etsi, at).count(),
                lt.neighbor_candidates(NeighborPolicy::FlagRefresh, at).count(),
                lt.neighbor_candidates(NeighborPolicy::GreedyPlus, at).count(),
            )
        };
        assert_eq!(counts(t(0.5)), (1, 1, 1));
        assert_eq!(counts(t(1.0)), (1, 1, 1));
        assert_eq!(counts(t(1.001)), (1, 1, 0));
        assert_eq!(counts(t(3.75)), (1, 1, 0));
        assert_eq!(counts(t(3.751)), (1, 0, 0));
        assert_eq!(counts(t(20.0)), (1, 0, 0));
        assert_eq!(counts(t(20.001)), (0, 0, 0));
    }

    #[test]
    fn dpl_detects_duplicates_and_evicts_fifo() {
        let mut dpl = Dpl::new();
        assert!(!dpl.check_and_record(7, 1));
        assert!(dpl.check_and_record(7, 1));
        // fill beyond capacity: seq 1 must be evicted after 32 newer entries
        for s in 2..=33 {
            assert!(!dpl.check_and_record(7, s));
        }
        assert!(!dpl.contains(7, 1));
        assert!(dpl.contains(7, 33));
        // per-source isolation
        assert!(!dpl.check_and_record(8, 33));
    }

    proptest! {
        /// Behavioral oracle: the ring equals a capacity-32 FIFO set.
        #[test]
        fn dpl_matches_deque_model(ops in proptest::collection::vec((0u8..3, 0u16..48), 0..300)) {
            let mut dpl = Dpl::new();
            let mut model: DetHashMap<NodeId, VecDeque<u16>> = DetHashMap::default();
            for (src_sel, seq) in ops {
                let src = src_sel as NodeId;
                let q = model.entry(src).or_default();
                let expect_dup = q.contains(&seq);
                prop_assert_eq!(dpl.check_and_record(src, seq), expect_dup);
                if !expect_dup {
                    if q.len() == DPL_CAPACITY {
                        q.pop_front();
                    }
                    q.push_back(seq);
                }
            }
        }

        /// Candidate sets are nested: greedy_plus within flag_refresh within etsi.
        #[test]
        fn policies_nest(updates in proptest::collection::vec((0u32..8, 0u8..2, 0.0..30.0f64), 0..60), query in 0.0..40.0f64) {
            let mut lt = LocationTable::new();
            let mut sorted = updates;
            sorted.sort_by(|a, b| a.2.total_cmp(&b.2));
            for (node, via_sel, at) in sorted {
                let via = if via_sel == 0 { RxVia::Cam } else { RxVia::Forwarded };
                lt.upsert(node, p(at), 0.0, 0.0, via, t(at));
            }
            let now = t(query);
            let ids = |pol| {
                let mut v: Vec<NodeId> = lt.neighbor_candidates(pol, now).map(|e| e.node).collect();
                v.sort_unstable();
                v
            };
            let gp = ids(NeighborPolicy::GreedyPlus);
            let fr = ids(NeighborPolicy::FlagRefresh);
            let et = ids(NeighborPolicy::Etsi);
            prop_assert!(gp.iter().all(|n| fr.contains(n)), "{gp:?} not within {fr:?}");
            prop_assert!(fr.iter().all(|n| et.contains(n)), "{fr:?} not within {et:?}");
        }

        /// No entry ever reports an age above the retention limit.
        #[test]
        fn no_overage_entry_visible(gap in 0.0..60.0f64) {
            let mut lt = LocationTable::new();
            lt.upsert(1, p(0.0), 0.0, 0.0, RxVia::Cam, t(0.0));
            let now = t(gap);
            if let Some(e) = lt.get(1, now) {
                prop_assert!(now.since(e.last_update) <= ENTRY_LIFETIME);
            }
        }
    }
}

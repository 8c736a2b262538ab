//! Greedy unicast forwarding toward the destination area.
//!
//! The sender alone picks the next hop: the LocT entry with the largest
//! progress toward the area center. The table can be arbitrarily stale, and
//! the chosen "neighbor" may be long gone; that failure mode is the point of
//! comparing this algorithm against contention-based forwarding. When no
//! entry makes progress the packet is broadcast exactly once as a dead-end
//! fallback.

use crate::geo::{planar_distance, progress_toward, GeoPosition};
use crate::loct::{Dpl, LocTEntry};
use crate::router::{DropReason, GnPacket, GreedyProfile};
use crate::NodeId;

/// Next-hop decision.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum NextHop {
    /// Unicast to this node, with link-layer acknowledgements and retries.
    Unicast(NodeId),
    /// No candidate makes progress: single broadcast fallback.
    Broadcast,
}

/// Pick the next hop from policy-filtered LocT candidates.
///
/// A candidate is usable when it makes strictly positive progress from `my_pos`
/// toward the area center and, if the profile carries a range limit, its
/// last known position lies within that limit. Ties on progress break toward
/// the smaller node id, which makes the reduction independent of iteration
/// order.
pub fn select_next_hop<'a>(
    my_pos: GeoPosition,
    center: GeoPosition,
    candidates: impl Iterator<Item = &'a LocTEntry>,
    profile: &GreedyProfile,
) -> NextHop {
    let mut best: Option<(f64, NodeId)> = None;
    for e in candidates {
        let prog = progress_toward(my_pos, e.position, center);
        if prog <= 0.0 {
            continue;
        }
        if let Some(limit) = profile.max_hop_distance_m {
            if planar_distance(my_pos, e.position) > limit {
                continue;
            }
        }
        let better = match best {
            None => true,
            Some((bp, bid)) => prog > bp || (prog == bp && e.node < bid),
        };
        if better {
            best = Some((prog, e.node));
        }
    }
    match best {
        Some((_, id)) => NextHop::Unicast(id),
        None => NextHop::Broadcast,
    }
}

/// Receive-side screening before a greedy forward is attempted.
///
/// Returns the drop reason when the packet must not be forwarded: previously
/// seen per the DPL (which records first sightings as a side effect), or a
/// broadcast frame whose sender already sits inside the destination area
/// while unicast inhibition is active.
pub fn screen_rx(
    dpl: &mut Dpl,
    pkt: &GnPacket,
    was_broadcast: bool,
    profile: &GreedyProfile,
) -> Option<DropReason> {
    if dpl.check_and_record(pkt.source, pkt.seq) {
        return Some(DropReason::Duplicate);
    }
    if was_broadcast && profile.unicast_inhibition && pkt.inside_area(pkt.sender_pos) {
        return Some(DropReason::Inhibited);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoArea;
    use crate::loct::NeighborPolicy;
    use crate::router::TrafficClass;
    use crate::time::{secs, SimTime};
    use proptest::prelude::*;

    fn entry(node: NodeId, x: f64, y: f64) -> LocTEntry {
        LocTEntry {
            node,
            position: GeoPosition::new(x, y),
            speed_mps: 30.0,
            heading_deg: 0.0,
            last_update: SimTime::ZERO,
            is_neighbor: true,
            neighbor_set_at: SimTime::ZERO,
        }
    }

    fn profile(limit: Option<f64>, inhibition: bool) -> GreedyProfile {
        GreedyProfile {
            policy: NeighborPolicy::Etsi,
            max_hop_distance_m: limit,
            unicast_inhibition: inhibition,
        }
    }

    const CENTER: GeoPosition = GeoPosition { x: 3500.0, y: 0.0 };

    #[test]
    fn picks_max_progress() {
        let me = GeoPosition::new(0.0, 0.0);
        let cands = [entry(1, 400.0, 0.0), entry(2, 900.0, 0.0), entry(3, 700.0, 0.0)];
        let hop = select_next_hop(me, CENTER, cands.iter(), &profile(None, false));
        assert_eq!(hop, NextHop::Unicast(2));
    }

    #[test]
    fn ignores_candidates_without_progress() {
        let me = GeoPosition::new(1000.0, 0.0);
        // both behind me relative to the center
        let cands = [entry(1, 400.0, 0.0), entry(2, 800.0, 0.0)];
        let hop = select_next_hop(me, CENTER, cands.iter(), &profile(None, false));
        assert_eq!(hop, NextHop::Broadcast);
    }

    #[test]
    fn range_limit_excludes_far_entries() {
        let me = GeoPosition::new(0.0, 0.0);
        // node 2 would win on progress but sits beyond the 1000 m cap
        let cands = [entry(1, 900.0, 0.0), entry(2, 1400.0, 0.0)];
        let with_cap = select_next_hop(me, CENTER, cands.iter(), &profile(Some(1000.0), false));
        assert_eq!(with_cap, NextHop::Unicast(1));
        let without = select_next_hop(me, CENTER, cands.iter(), &profile(None, false));
        assert_eq!(without, NextHop::Unicast(2));
        // exactly at the limit is allowed
        let cands = [entry(3, 1000.0, 0.0)];
        let at = select_next_hop(me, CENTER, cands.iter(), &profile(Some(1000.0), false));
        assert_eq!(at, NextHop::Unicast(3));
    }

    #[test]
    fn ties_break_toward_smaller_id() {
        let me = GeoPosition::new(0.0, 0.0);
        let cands = [entry(9, 800.0, 0.0), entry(4, 800.0, 0.0), entry(7, 800.0, 0.0)];
        let hop = select_next_hop(me, CENTER, cands.iter(), &profile(None, false));
        assert_eq!(hop, NextHop::Unicast(4));
    }

    fn pkt(sender_x: f64) -> GnPacket {
        GnPacket {
            source: 1,
            seq: 9,
            source_pos: GeoPosition::new(0.0, 0.0),
            sender_pos: GeoPosition::new(sender_x, 0.0),
            area: GeoArea::rectangle(CENTER, 1000.0, 25.0, 0.0),
            tc: TrafficClass::Tc3,
            hop_limit: 10,
            initial_hop_limit: 10,
            lifetime: secs(10),
            created_at: SimTime::ZERO,
            size_bytes: 301,
        }
    }

    #[test]
    fn screening_drops_duplicates_via_dpl() {
        let mut dpl = Dpl::new();
        let p = pkt(100.0);
        assert_eq!(screen_rx(&mut dpl, &p, false, &profile(None, false)), None);
        assert_eq!(
            screen_rx(&mut dpl, &p, false, &profile(None, false)),
            Some(DropReason::Duplicate)
        );
    }

    #[test]
    fn inhibition_blocks_broadcasts_from_inside_the_area() {
        let inside = pkt(3000.0);
        let outside = pkt(2000.0);
        // active inhibition: broadcast from inside dropped, unicast untouched
        let mut dpl = Dpl::new();
        assert_eq!(
            screen_rx(&mut dpl, &inside, true, &profile(None, true)),
            Some(DropReason::Inhibited)
        );
        let mut dpl = Dpl::new();
        assert_eq!(screen_rx(&mut dpl, &inside, false, &profile(None, true)), None);
        let mut dpl = Dpl::new();
        assert_eq!(screen_rx(&mut dpl, &outside, true, &profile(None, true)), None);
        // plain greedy forwards broadcasts from inside the area
        let mut dpl = Dpl::new();
        assert_eq!(screen_rx(&mut dpl, &inside, true, &profile(None, false)), None);
    }

    proptest! {
        /// The chosen hop always strictly reduces distance to the center and
        /// respects the range limit.
        #[test]
        fn selection_invariants(
            xs in proptest::collection::vec((-2000.0..3000.0f64, -200.0..200.0f64), 0..20),
            my_x in -500.0..1500.0f64,
            cap in proptest::option::of(500.0..1500.0f64),
        ) {
            let me = GeoPosition::new(my_x, 0.0);
            let cands: Vec<LocTEntry> = xs
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| entry(i as NodeId, x, y))
                .collect();
            let prof = profile(cap, false);
            match select_next_hop(me, CENTER, cands.iter(), &prof) {
                NextHop::Unicast(id) => {
                    let e = cands.iter().find(|c| c.node == id).unwrap();
                    prop_assert!(planar_distance(e.position, CENTER) < planar_distance(me, CENTER));
                    if let Some(limit) = cap {
                        prop_assert!(planar_distance(me, e.position) <= limit);
                    }
                }
                NextHop::Broadcast => {
                    for c in &cands {
                        let ok = progress_toward(me, c.position, CENTER) <= 0.0
                            || cap.is_some_and(|l| planar_distance(me, c.position) > l);
                        prop_assert!(ok, "candidate {} should have been chosen", c.node);
                    }
                }
            }
        }
    }
}

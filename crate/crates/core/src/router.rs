//! GeoBroadcast packet type, forwarding setups, and router bookkeeping.
//!
//! The per-node routing decision itself (deliver, hand to the area or
//! non-area algorithm, drop) lives with the node wiring in [`crate::engine`];
//! this module holds everything those decisions are made of.

use crate::geo::{contains, GeoArea, GeoPosition};
use crate::loct::NeighborPolicy;
use crate::time::{Nanos, SimTime};
use crate::util::DetHashSet;
use crate::NodeId;

/// DCC traffic class; lower index is higher priority.
#[derive(Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Debug, serde::Serialize)]
pub enum TrafficClass {
    Tc0,
    Tc1,
    Tc2,
    Tc3,
}

pub const TRAFFIC_CLASSES: [TrafficClass; 4] =
    [TrafficClass::Tc0, TrafficClass::Tc1, TrafficClass::Tc2, TrafficClass::Tc3];

impl TrafficClass {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn parse(s: &str) -> Option<TrafficClass> {
        match s.to_ascii_lowercase().as_str() {
            "tc0" => Some(TrafficClass::Tc0),
            "tc1" => Some(TrafficClass::Tc1),
            "tc2" => Some(TrafficClass::Tc2),
            "tc3" => Some(TrafficClass::Tc3),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrafficClass::Tc0 => "tc0",
            TrafficClass::Tc1 => "tc1",
            TrafficClass::Tc2 => "tc2",
            TrafficClass::Tc3 => "tc3",
        }
    }
}

/// Message identity: source id and 16-bit sequence number packed together.
pub type MessageKey = u64;

pub fn message_key(source: NodeId, seq: u16) -> MessageKey {
    ((source as u64) << 16) | seq as u64
}

/// GeoBroadcast network packet as carried inside a frame.
///
/// `sender_pos` is rewritten by every forwarder at the time it builds its
/// copy; `source_pos` stays fixed at the origin. The 16-bit sequence number
/// wraps and is unique per source until it does.
#[derive(Copy, Clone, PartialEq, Debug)]
pub struct GnPacket {
    pub source: NodeId,
    pub seq: u16,
    pub source_pos: GeoPosition,
    pub sender_pos: GeoPosition,
    pub area: GeoArea,
    pub tc: TrafficClass,
    pub hop_limit: u8,
    pub initial_hop_limit: u8,
    pub lifetime: Nanos,
    pub created_at: SimTime,
    pub size_bytes: u16,
}

impl GnPacket {
    pub fn key(&self) -> MessageKey {
        message_key(self.source, self.seq)
    }

    pub fn expired(&self, now: SimTime) -> bool {
        now.since(self.created_at) > self.lifetime
    }

    /// Hops already traversed by this copy; 0 for the source's own frame.
    pub fn hops_traversed(&self) -> u32 {
        (self.initial_hop_limit - self.hop_limit) as u32
    }

    /// Build the copy a forwarder at `my_pos` would transmit: hop limit
    /// decremented, sender position rewritten, traffic class set to the
    /// setup's forwarding class. `None` when the hop budget is exhausted
    /// (copies with hop limit zero are never put on the air).
    pub fn forward_copy(
        &self,
        my_pos: GeoPosition,
        forward_tc: TrafficClass,
    ) -> Option<GnPacket> {
        if self.hop_limit <= 1 {
            return None;
        }
        let mut c = *self;
        c.hop_limit -= 1;
        c.sender_pos = my_pos;
        c.tc = forward_tc;
        Some(c)
    }

    pub fn inside_area(&self, p: GeoPosition) -> bool {
        contains(&self.area, p)
    }
}

/// Reasons a packet stops moving at a node, as written to the event log.
#[derive(Copy, Clone, PartialEq, Eq, Debug, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Duplicate,
    Inhibited,
    Ttl,
    Expired,
    ExpiredInQueue,
    QueueReplaced,
    ArqExhausted,
    NoProgress,
    Cancelled,
}

impl DropReason {
    pub fn name(&self) -> &'static str {
        match self {
            DropReason::Duplicate => "duplicate",
            DropReason::Inhibited => "inhibited",
            DropReason::Ttl => "ttl",
            DropReason::Expired => "expired",
            DropReason::ExpiredInQueue => "expired_in_queue",
            DropReason::QueueReplaced => "queue_replaced",
            DropReason::ArqExhausted => "arq_exhausted",
            DropReason::NoProgress => "no_progress",
            DropReason::Cancelled => "cancelled",
        }
    }
}

/// Contention variant used by CBF-style forwarding.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum CbfVariant {
    /// Plain standard behavior: buffer doubles as duplicate store, any copy
    /// cancels, forwarding is unconditional on expiry.
    Etsi,
    /// Slotted timer, DPD, progress checks on buffering and cancellation,
    /// DCC-aware expiry, source self-buffer.
    SFotPlus,
}

/// Next-hop selection used outside the destination area.
#[derive(Copy, Clone, Debug)]
pub enum NonAreaAlg {
    Cbf(CbfVariant),
    Greedy(GreedyProfile),
}

/// Greedy unicast parameters.
#[derive(Copy, Clone, Debug)]
pub struct GreedyProfile {
    pub policy: NeighborPolicy,
    /// Upper bound on the LocT distance of a unicast target, if any.
    pub max_hop_distance_m: Option<f64>,
    /// Never greedy-forward broadcast frames whose sender is inside the area.
    pub unicast_inhibition: bool,
}

/// A complete forwarding setup: one non-area algorithm, one area algorithm,
/// and the traffic class stamped on forwarded copies.
#[derive(Copy, Clone, Debug)]
pub struct SetupProfile {
    pub id: &'static str,
    pub non_area: NonAreaAlg,
    pub area: CbfVariant,
    pub forward_tc: TrafficClass,
}

impl SetupProfile {
    pub fn by_id(id: &str) -> Option<SetupProfile> {
        SETUPS.iter().find(|s| s.id == id).copied()
    }

    pub fn all() -> &'static [SetupProfile] {
        &SETUPS
    }
}

static SETUPS: [SetupProfile; 4] = [
    SetupProfile {
        id: "etsi-cbf",
        non_area: NonAreaAlg::Cbf(CbfVariant::Etsi),
        area: CbfVariant::Etsi,
        forward_tc: TrafficClass::Tc3,
    },
    SetupProfile {
        id: "greedy-cbf",
        non_area: NonAreaAlg::Greedy(GreedyProfile {
            policy: NeighborPolicy::Etsi,
            max_hop_distance_m: None,
            unicast_inhibition: false,
        }),
        area: CbfVariant::Etsi,
        forward_tc: TrafficClass::Tc3,
    },
    SetupProfile {
        id: "s-fot-plus",
        non_area: NonAreaAlg::Cbf(CbfVariant::SFotPlus),
        area: CbfVariant::SFotPlus,
        forward_tc: TrafficClass::Tc3,
    },
    SetupProfile {
        id: "greedy-plus",
        non_area: NonAreaAlg::Greedy(GreedyProfile {
            policy: NeighborPolicy::GreedyPlus,
            max_hop_distance_m: Some(1000.0),
            unicast_inhibition: true,
        }),
        area: CbfVariant::SFotPlus,
        forward_tc: TrafficClass::Tc3,
    },
];

/// Deliver-once bookkeeping, independent of the DPL: a node hands a given
/// message to its facilities layer at most once no matter how many copies
/// arrive or how the DPL evicts.
#[derive(Default)]
pub struct DeliveredSet {
    seen: DetHashSet<MessageKey>,
}

impl DeliveredSet {
    /// True exactly once per message key.
    pub fn first_delivery(&mut self, key: MessageKey) -> bool {
        self.seen.insert(key)
    }

    pub fn contains(&self, key: MessageKey) -> bool {
        self.seen.contains(&key)
    }
}

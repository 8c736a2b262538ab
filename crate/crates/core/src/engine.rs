//! Deterministic discrete-event kernel: the world, its event queue, and the
//! handlers wiring facilities, routing, congestion control, and the channel
//! together.
//!
//! One world is strictly single-threaded. All randomness flows from the run
//! seed through per-node keyed streams, events tie-break on insertion order,
//! and every map iterates in a process-independent order, so identical
//! (scenario, seed) pairs produce byte-identical logs and metrics.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cbf::{CbfBuffer, CbfExpiryAction, CbfMode, CbfParams, CbfRxOutcome};
use crate::dcc::{DccParams, DccState, GateOutcome, CBR_WINDOW};
use crate::facilities::{
    beacon_due, CamState, DenmConfig, DenmSource, BEACON_BYTES, BEACON_JITTER_MAX, BEACON_PERIOD,
    CAM_CHECK_PERIOD, CAM_LONG_BYTES,
};
use crate::geo::{planar_distance, GeoPosition};
use crate::greedy::{screen_rx, select_next_hop, NextHop};
use crate::loct::{Dpl, LocationTable, RxVia};
use crate::log::{EventLog, EventRecord};
use crate::mac_phy::{
    airtime, dbm_from_mw, link_quality, mw_from_dbm, obstacle_cut, obstacle_loss_db, rx_power_dbm,
    BusyTracker, ChannelModel, Frame, FrameDest, FramePayload, LinkQuality, MacPhase, MacState,
    PendingTx, PhyParams, Rect, ACK_BYTES, ACK_TIMEOUT, AIFS, CW_MAX, RETRY_LIMIT, SIFS, SLOT,
};
use crate::metrics::{MetricsCollector, RunMetrics};
use crate::mobility::{TrajectorySet, VehicleState};
use crate::router::{
    CbfVariant, DeliveredSet, DropReason, GnPacket, GreedyProfile, MessageKey, NonAreaAlg,
    SetupProfile, TrafficClass,
};
use crate::time::{Nanos, SimTime};
use crate::util::{derive_rng, DetHashSet};
use crate::NodeId;

/// Payload size of the keep-the-channel-full probe frames.
pub const PROBE_BYTES: u16 = 301;
/// Location tables are purged every this many position-refresh ticks.
const PURGE_EVERY_TICKS: u64 = 50;

/// Everything a single run needs besides the trajectories.
#[derive(Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub end_time: SimTime,
    pub profile: SetupProfile,
    pub denm: Option<DenmConfig>,
    pub cbf: CbfParams,
    pub dcc: DccParams,
    pub phy: PhyParams,
    /// Keep every node transmitting as fast as its gate allows.
    pub saturate: bool,
    pub probe_bytes: u16,
}

impl RunConfig {
    pub fn new(profile: SetupProfile, seed: u64, end_time: SimTime) -> Self {
        RunConfig {
            seed,
            end_time,
            profile,
            denm: None,
            cbf: CbfParams::default(),
            dcc: DccParams::default(),
            phy: PhyParams::default(),
            saturate: false,
            probe_bytes: PROBE_BYTES,
        }
    }
}

#[derive(Copy, Clone, Debug)]
enum EventKind {
    PosRefresh,
    DccWindow,
    CamCheck { node: NodeId },
    BeaconCheck { node: NodeId },
    DenmGen,
    ProbeKick { node: NodeId },
    GateOpen { node: NodeId },
    CbfExpiry { node: NodeId, key: MessageKey },
    MacAccess { node: NodeId },
    TxEnd { uid: u64 },
    AckTimeout { node: NodeId, uid: u64 },
    AckTx { node: NodeId, frame: Frame },
}

struct Event {
    at: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Per-receiver link state of one transmission, computed once when the frame
/// goes on air (node positions are frozen between channel ticks anyway) and
/// shared with every overlapping frame for interference resolution.
enum LinkMap {
    /// Unit disk: quality class per node.
    Disk(Vec<LinkQuality>),
    /// Power models: raw received power per node in dBm, including levels
    /// below carrier sense (they still add interference).
    Power(Vec<f64>),
}

impl LinkMap {
    fn build(phy: &PhyParams, obstacles: &[Rect], tx: GeoPosition, nodes: &[Node]) -> Self {
        match phy.model {
            ChannelModel::UnitDisk { .. } => LinkMap::Disk(
                nodes.iter().map(|r| link_quality(phy, obstacles, tx, r.cached.pos)).collect(),
            ),
            _ => LinkMap::Power(
                nodes
                    .iter()
                    .map(|r| {
                        let d = planar_distance(tx, r.cached.pos);
                        let shadow = obstacle_loss_db(obstacle_cut(obstacles, tx, r.cached.pos));
                        rx_power_dbm(phy, d, shadow)
                    })
                    .collect(),
            ),
        }
    }

    fn quality(&self, phy: &PhyParams, node: usize) -> LinkQuality {
        match self {
            LinkMap::Disk(q) => q[node],
            LinkMap::Power(p) => {
                let rx_dbm = p[node];
                if rx_dbm >= phy.noise_floor_dbm + phy.sinr_threshold_db {
                    LinkQuality::Decodable(rx_dbm)
                } else if rx_dbm >= phy.cs_threshold_dbm {
                    LinkQuality::SenseOnly
                } else {
                    LinkQuality::None
                }
            }
        }
    }
}

/// A transmission currently on the air. `overlaps` collects every other
/// transmission (node and link map) that shared airtime with this one; it
/// drives interference and half-duplex resolution when the frame ends.
struct ActiveTx {
    frame: Frame,
    end: SimTime,
    links: Rc<LinkMap>,
    overlaps: Vec<(NodeId, Rc<LinkMap>)>,
}

/// Per-node protocol state. Index in `World::nodes` equals the node id.
pub struct Node {
    pub id: NodeId,
    /// Channel-loop position, refreshed every 100 ms; protocol decisions use
    /// exact trajectory evaluation instead.
    pub cached: VehicleState,
    pub loct: LocationTable,
    pub dpl: Dpl,
    pub cbf: CbfBuffer,
    pub dcc: DccState<Frame>,
    pub busy: BusyTracker,
    pub mac: MacState,
    pub cam: CamState,
    pub last_beacon_at: Option<SimTime>,
    pub delivered: DeliveredSet,
    fallback_done: DetHashSet<MessageKey>,
    denm: DenmSource,
    rng: ChaCha8Rng,
}

pub struct Ctx {
    pub cfg: RunConfig,
    pub traj: TrajectorySet,
    pub now: SimTime,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    next_uid: u64,
    active: Vec<ActiveTx>,
    refresh_ticks: u64,
    pub log: EventLog,
    pub metrics: MetricsCollector,
}

impl Ctx {
    /// Insert an event. Scheduling into the past is a fatal ordering error.
    fn schedule(&mut self, at: SimTime, kind: EventKind) {
        assert!(at >= self.now, "{kind:?} scheduled in the past: {at:?} < {:?}", self.now);
        self.seq += 1;
        self.queue.push(Reverse(Event { at, seq: self.seq, kind }));
    }

    fn fresh_uid(&mut self) -> u64 {
        self.next_uid += 1;
        self.next_uid
    }

    fn exact(&self, node: NodeId, now: SimTime) -> VehicleState {
        self.traj.state_at(node as usize, now)
    }
}

pub struct World {
    pub nodes: Vec<Node>,
    pub ctx: Ctx,
}

impl World {
    pub fn new(cfg: RunConfig, traj: TrajectorySet, log: EventLog) -> World {
        let n = traj.len();
        if let Some(d) = &cfg.denm {
            assert!((d.source as usize) < n, "notification source id out of range");
        }
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            nodes.push(Node {
                id: i as NodeId,
                cached: traj.state_at(i, SimTime::ZERO),
                loct: LocationTable::new(),
                dpl: Dpl::new(),
                cbf: CbfBuffer::new(),
                dcc: DccState::new(&cfg.dcc),
                busy: BusyTracker::default(),
                mac: MacState::default(),
                cam: CamState::default(),
                last_beacon_at: None,
                delivered: DeliveredSet::default(),
                fallback_done: DetHashSet::default(),
                denm: DenmSource::default(),
                rng: derive_rng(cfg.seed, i as u64),
            });
        }
        let mut ctx = Ctx {
            cfg,
            traj,
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            seq: 0,
            next_uid: 0,
            active: Vec::new(),
            refresh_ticks: 0,
            log,
            metrics: MetricsCollector::new(),
        };
        ctx.schedule(SimTime::ZERO, EventKind::PosRefresh);
        ctx.schedule(SimTime(CBR_WINDOW), EventKind::DccWindow);
        for node in &mut nodes {
            let phase = node.rng.gen_range(0..CAM_CHECK_PERIOD);
            ctx.schedule(SimTime(phase), EventKind::CamCheck { node: node.id });
            let jitter = node.rng.gen_range(0..=BEACON_JITTER_MAX);
            ctx.schedule(SimTime(BEACON_PERIOD + jitter), EventKind::BeaconCheck { node: node.id });
            if ctx.cfg.saturate {
                let kick = node.rng.gen_range(0..CAM_CHECK_PERIOD);
                ctx.schedule(SimTime(kick), EventKind::ProbeKick { node: node.id });
            }
        }
        if let Some(d) = &ctx.cfg.denm {
            if d.count > 0 {
                let at = d.start_at;
                ctx.schedule(at, EventKind::DenmGen);
            }
        }
        World { nodes, ctx }
    }

    /// Drive the world to its end time and return the run's metrics.
    /// Consumes the collector: call once per world.
    pub fn run(&mut self) -> RunMetrics {
        while let Some(Reverse(ev)) = self.ctx.queue.pop() {
            if ev.at > self.ctx.cfg.end_time {
                break;
            }
            self.ctx.now = ev.at;
            dispatch(&mut self.nodes, &mut self.ctx, ev.kind);
        }
        let final_cbr: Vec<f64> = self.nodes.iter().map(|n| n.dcc.cbr_smoothed).collect();
        self.ctx.metrics.set_final_cbr(final_cbr);
        let _ = self.ctx.log.flush();
        std::mem::take(&mut self.ctx.metrics).finalize()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }
}

fn dispatch(nodes: &mut [Node], ctx: &mut Ctx, kind: EventKind) {
    match kind {
        EventKind::PosRefresh => on_pos_refresh(nodes, ctx),
        EventKind::DccWindow => on_dcc_window(nodes, ctx),
        EventKind::CamCheck { node } => on_cam_check(nodes, ctx, node),
        EventKind::BeaconCheck { node } => on_beacon_check(nodes, ctx, node),
        EventKind::DenmGen => on_denm_gen(nodes, ctx),
        EventKind::ProbeKick { node } => submit_probe(nodes, ctx, node),
        EventKind::GateOpen { node } => on_gate_open(nodes, ctx, node),
        EventKind::CbfExpiry { node, key } => on_cbf_expiry(nodes, ctx, node, key),
        EventKind::MacAccess { node } => on_mac_access(nodes, ctx, node),
        EventKind::TxEnd { uid } => on_tx_end(nodes, ctx, uid),
        EventKind::AckTimeout { node, uid } => on_ack_timeout(nodes, ctx, node, uid),
        EventKind::AckTx { node, frame } => on_ack_tx(nodes, ctx, node, frame),
    }
}

fn on_pos_refresh(nodes: &mut [Node], ctx: &mut Ctx) {
    let now = ctx.now;
    ctx.refresh_ticks += 1;
    let purge = ctx.refresh_ticks % PURGE_EVERY_TICKS == 0;
    for (i, node) in nodes.iter_mut().enumerate() {
        node.cached = ctx.traj.state_at(i, now);
        if purge {
            node.loct.purge(now);
        }
    }
    if now + CBR_WINDOW <= ctx.cfg.end_time {
        ctx.schedule(now + CBR_WINDOW, EventKind::PosRefresh);
    }
}

fn on_dcc_window(nodes: &mut [Node], ctx: &mut Ctx) {
    let now = ctx.now;
    let mut sum = 0.0;
    for node in nodes.iter_mut() {
        let busy = node.busy.measure(now);
        let (smoothed, _) = node.dcc.on_window(busy, &ctx.cfg.dcc);
        sum += smoothed;
    }
    if !nodes.is_empty() {
        ctx.metrics.push_cbr_sample(now, sum / nodes.len() as f64);
    }
    if now + CBR_WINDOW <= ctx.cfg.end_time {
        ctx.schedule(now + CBR_WINDOW, EventKind::DccWindow);
    }
}

fn on_cam_check(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId) {
    let now = ctx.now;
    let state = ctx.exact(id, now);
    let node = &mut nodes[id as usize];
    // congestion control stretches the minimum CAM interval
    let floor = node.dcc.gap_for(airtime(CAM_LONG_BYTES), &ctx.cfg.dcc);
    let decision = node.cam.check(now, state.pos, state.speed_mps, state.heading_deg, floor);
    if let Some(d) = decision {
        let frame = Frame {
            uid: ctx.fresh_uid(),
            tx_node: id,
            tx_pos: state.pos,
            dest: FrameDest::Broadcast,
            size_bytes: d.size_bytes,
            payload: FramePayload::Cam {
                speed_mps: state.speed_mps,
                heading_deg: state.heading_deg,
                long: d.long,
            },
        };
        submit_gate(nodes, ctx, id, frame, TrafficClass::Tc2);
    }
    ctx.schedule(now + CAM_CHECK_PERIOD, EventKind::CamCheck { node: id });
}

fn on_beacon_check(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId) {
    let now = ctx.now;
    let node = &mut nodes[id as usize];
    let due = beacon_due(now, node.cam.last_cam_at, node.last_beacon_at);
    if due {
        node.last_beacon_at = Some(now);
    }
    let jitter = node.rng.gen_range(0..=BEACON_JITTER_MAX);
    if due {
        let state = ctx.exact(id, now);
        let frame = Frame {
            uid: ctx.fresh_uid(),
            tx_node: id,
            tx_pos: state.pos,
            dest: FrameDest::Broadcast,
            size_bytes: BEACON_BYTES,
            payload: FramePayload::Beacon {
                speed_mps: state.speed_mps,
                heading_deg: state.heading_deg,
            },
        };
        submit_gate(nodes, ctx, id, frame, TrafficClass::Tc2);
    }
    ctx.schedule(now + BEACON_PERIOD + jitter, EventKind::BeaconCheck { node: id });
}

fn on_denm_gen(nodes: &mut [Node], ctx: &mut Ctx) {
    let now = ctx.now;
    let Some(cfg) = ctx.cfg.denm.clone() else { return };
    let id = cfg.source;
    let state = ctx.exact(id, now);
    let Some(pkt) = nodes[id as usize].denm.next(&cfg, now, state.pos) else {
        return;
    };
    // intended-recipient snapshot at creation, from exact positions; the
    // source is not its own recipient
    let mut snapshot = Vec::new();
    for j in 0..nodes.len() {
        if j as NodeId != pkt.source && pkt.inside_area(ctx.traj.state_at(j, now).pos) {
            snapshot.push(j as NodeId);
        }
    }
    ctx.metrics.register_message(pkt.key(), pkt.source, pkt.seq, now, pkt.source_pos, snapshot);
    if ctx.log.enabled() {
        ctx.log.record(&EventRecord {
            t: now.nanos(),
            node: id,
            kind: "gen",
            src: Some(pkt.source),
            seq: Some(pkt.seq),
            x: state.pos.x,
            y: state.pos.y,
            hops: None,
            reason: None,
        });
    }
    originate(nodes, ctx, id, pkt, state.pos);
    if !nodes[id as usize].denm.done(&cfg) {
        ctx.schedule(now + cfg.period, EventKind::DenmGen);
    }
}

/// Source-side first transmission of a fresh notification.
fn originate(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId, pkt: GnPacket, pos: GeoPosition) {
    let now = ctx.now;
    // the source never treats echoes of its own message as new
    nodes[id as usize].dpl.check_and_record(pkt.source, pkt.seq);
    let arm_self = |nodes: &mut [Node], ctx: &mut Ctx| {
        let node = &mut nodes[id as usize];
        let expiry = node.cbf.arm_source_self(&pkt, now, &ctx.cfg.cbf);
        schedule_cbf_event(node, ctx, id, pkt.key(), expiry);
    };
    if pkt.inside_area(pos) {
        // already inside the destination area: area dissemination directly
        let frame = data_frame(ctx, id, pos, FrameDest::Broadcast, pkt);
        submit_gate(nodes, ctx, id, frame, pkt.tc);
        if ctx.cfg.profile.area == CbfVariant::SFotPlus {
            arm_self(nodes, ctx);
        }
        return;
    }
    match ctx.cfg.profile.non_area {
        NonAreaAlg::Cbf(variant) => {
            let frame = data_frame(ctx, id, pos, FrameDest::Broadcast, pkt);
            submit_gate(nodes, ctx, id, frame, pkt.tc);
            if variant == CbfVariant::SFotPlus {
                arm_self(nodes, ctx);
            }
        }
        NonAreaAlg::Greedy(profile) => {
            let node = &mut nodes[id as usize];
            let hop = select_next_hop(
                pos,
                pkt.area.center,
                node.loct.neighbor_candidates(profile.policy, now),
                &profile,
            );
            let dest = match hop {
                NextHop::Unicast(next) => FrameDest::Unicast(next),
                NextHop::Broadcast => {
                    node.fallback_done.insert(pkt.key());
                    FrameDest::Broadcast
                }
            };
            let frame = data_frame(ctx, id, pos, dest, pkt);
            submit_gate(nodes, ctx, id, frame, pkt.tc);
        }
    }
}

fn data_frame(ctx: &mut Ctx, id: NodeId, pos: GeoPosition, dest: FrameDest, pkt: GnPacket) -> Frame {
    Frame {
        uid: ctx.fresh_uid(),
        tx_node: id,
        tx_pos: pos,
        dest,
        size_bytes: pkt.size_bytes,
        payload: FramePayload::Data(pkt),
    }
}

fn submit_probe(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId) {
    let frame = Frame {
        uid: ctx.fresh_uid(),
        tx_node: id,
        tx_pos: nodes[id as usize].cached.pos,
        dest: FrameDest::Broadcast,
        size_bytes: ctx.cfg.probe_bytes,
        payload: FramePayload::Beacon { speed_mps: 0.0, heading_deg: 0.0 },
    };
    submit_gate(nodes, ctx, id, frame, TrafficClass::Tc2);
}

/// Offer a frame to the node's rate gate; on pass, hand it to the MAC.
fn submit_gate(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId, frame: Frame, tc: TrafficClass) {
    let now = ctx.now;
    let air = frame.airtime();
    let node = &mut nodes[id as usize];
    // While the radio still owns a frame the gate holds everything upstream
    // in the class slots, where a newer frame can still supersede a stale one.
    let outcome = if node.mac.current.is_some() {
        node.dcc.enqueue(frame, tc, air, now)
    } else {
        node.dcc.submit(frame, tc, air, now, &ctx.cfg.dcc)
    };
    match outcome {
        GateOutcome::Pass => {
            ctx.metrics.observe_gap(node.dcc.last_gap);
            mac_accept(node, ctx, id, frame);
        }
        GateOutcome::Queued => ensure_gate_event(node, ctx, id),
        GateOutcome::Replaced(old) => {
            drop_frame(ctx, id, &old, DropReason::QueueReplaced);
            ensure_gate_event(node, ctx, id);
        }
    }
}

fn ensure_gate_event(node: &mut Node, ctx: &mut Ctx, id: NodeId) {
    // the opening may already lie in the past when the radio was the bottleneck
    let at = node.dcc.gate_open_at().max(ctx.now);
    if node.dcc.gate_event_at != Some(at) {
        node.dcc.gate_event_at = Some(at);
        ctx.schedule(at, EventKind::GateOpen { node: id });
    }
}

fn on_gate_open(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId) {
    let now = ctx.now;
    let node = &mut nodes[id as usize];
    if node.dcc.gate_event_at != Some(now) {
        return; // superseded
    }
    node.dcc.gate_event_at = None;
    if node.mac.current.is_some() {
        return; // radio busy; completion re-arms the gate
    }
    if !node.dcc.is_open(now) {
        ensure_gate_event(node, ctx, id);
        return;
    }
    // serve exactly one frame per opening, discarding dead ones
    while let Some((frame, _tc, _enqueued_at)) = node.dcc.pop_queued() {
        if let FramePayload::Data(pkt) = frame.payload {
            if pkt.expired(now) {
                drop_frame(ctx, id, &frame, DropReason::ExpiredInQueue);
                continue;
            }
        }
        node.dcc.mark_pass(frame.airtime(), now, &ctx.cfg.dcc);
        ctx.metrics.observe_gap(node.dcc.last_gap);
        mac_accept(node, ctx, id, frame);
        break;
    }
    if node.dcc.has_queued() {
        ensure_gate_event(node, ctx, id);
    }
}

/// Hand a gate-passed frame to the MAC and begin channel access.
fn mac_accept(node: &mut Node, ctx: &mut Ctx, id: NodeId, frame: Frame) {
    debug_assert!(node.mac.current.is_none());
    node.mac.current = Some(PendingTx { frame, attempt: 1 });
    start_contention(node, ctx, id, false);
}

/// Begin channel access for the current head-of-line frame.
fn start_contention(node: &mut Node, ctx: &mut Ctx, id: NodeId, force_backoff: bool) {
    let now = ctx.now;
    let busy_now = node.busy.busy_at(now);
    // while busy, aim past the end of the sensed run
    let base = if busy_now { node.busy.idle_since() } else { now };
    let slots = if busy_now || force_backoff { node.rng.gen_range(0..=CW_MAX) } else { 0 };
    let target = base + AIFS + slots as Nanos * SLOT;
    node.mac.phase = MacPhase::Contending { window_base: base };
    node.mac.access_event_at = Some(target);
    ctx.schedule(target, EventKind::MacAccess { node: id });
}

fn on_mac_access(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId) {
    let now = ctx.now;
    let node = &mut nodes[id as usize];
    if node.mac.access_event_at != Some(now) {
        return; // superseded by a redraw
    }
    node.mac.access_event_at = None;
    let MacPhase::Contending { window_base } = node.mac.phase else {
        return;
    };
    // any busy run intruding into the wait window forces a redraw
    let interrupted = node.busy.busy_at(now) || node.busy.idle_since() > window_base;
    if interrupted {
        start_contention(node, ctx, id, true);
        return;
    }
    let Some(p) = node.mac.current else { return };
    begin_tx(nodes, ctx, id, p.frame, true);
}

/// Put a frame on the air: record the active transmission, mark every node
/// that senses it busy, and schedule its end.
fn begin_tx(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId, frame: Frame, own_frame: bool) {
    let now = ctx.now;
    let end = now + frame.airtime();
    let tx_pos = frame.tx_pos;
    let links = Rc::new(LinkMap::build(&ctx.cfg.phy, &ctx.traj.obstacles, tx_pos, nodes));
    let mut overlaps = Vec::new();
    for a in &mut ctx.active {
        a.overlaps.push((id, Rc::clone(&links)));
        overlaps.push((a.frame.tx_node, Rc::clone(&a.links)));
    }
    for r in nodes.iter_mut() {
        if r.id == id {
            r.busy.add(now, end); // own transmissions count toward CBR
            continue;
        }
        if links.quality(&ctx.cfg.phy, r.id as usize) != LinkQuality::None {
            r.busy.add(now, end);
        }
    }
    ctx.active.push(ActiveTx { frame, end, links, overlaps });
    if own_frame {
        nodes[id as usize].mac.phase = MacPhase::Transmitting { until: end };
    }
    ctx.schedule(end, EventKind::TxEnd { uid: frame.uid });
    if let FramePayload::Data(pkt) = frame.payload {
        ctx.metrics.record_tx(pkt.key(), id, planar_distance(pkt.source_pos, tx_pos));
    }
    if ctx.log.enabled() {
        let (src, seq, hops) = match frame.payload {
            FramePayload::Data(p) => (Some(p.source), Some(p.seq), Some(p.hops_traversed() as u8)),
            _ => (None, None, None),
        };
        let kind = match (frame.payload, frame.dest) {
            (FramePayload::Ack { .. }, _) => "ack",
            (FramePayload::Data(_), FrameDest::Unicast(_)) => "tx_unicast",
            (FramePayload::Data(_), _) => "tx",
            (FramePayload::Cam { .. }, _) => "cam",
            (FramePayload::Beacon { .. }, _) => "beacon",
        };
        ctx.log.record(&EventRecord {
            t: now.nanos(),
            node: id,
            kind,
            src,
            seq,
            x: tx_pos.x,
            y: tx_pos.y,
            hops,
            reason: None,
        });
    }
}

fn on_tx_end(nodes: &mut [Node], ctx: &mut Ctx, uid: u64) {
    let now = ctx.now;
    let Some(idx) = ctx.active.iter().position(|a| a.frame.uid == uid) else {
        return;
    };
    let tx = ctx.active.swap_remove(idx);
    debug_assert_eq!(tx.end, now);
    let frame = tx.frame;
    let sender = frame.tx_node;
    let is_ack = matches!(frame.payload, FramePayload::Ack { .. });

    // sender-side MAC transition (acks run outside the MAC state machine)
    if !is_ack {
        let node = &mut nodes[sender as usize];
        if node.mac.current.map(|p| p.frame.uid) == Some(uid) {
            match frame.dest {
                FrameDest::Unicast(_) => {
                    node.mac.phase = MacPhase::AwaitingAck { uid };
                    ctx.schedule(now + ACK_TIMEOUT, EventKind::AckTimeout { node: sender, uid });
                }
                FrameDest::Broadcast => complete_current(node, ctx, sender),
            }
        }
    }

    // receiver-side resolution
    for r_idx in 0..nodes.len() {
        if r_idx == sender as usize {
            continue;
        }
        let r_id = r_idx as NodeId;
        let r_pos = nodes[r_idx].cached.pos;
        // half-duplex: a node transmitting during any part of the frame
        // cannot receive it
        if tx.overlaps.iter().any(|(n, _)| *n == r_id) {
            continue;
        }
        let q = tx.links.quality(&ctx.cfg.phy, r_idx);
        let LinkQuality::Decodable(rx_dbm) = q else { continue };
        let collided = match ctx.cfg.phy.model {
            // under unit disk any decodable overlapping transmission destroys
            ChannelModel::UnitDisk { .. } => tx.overlaps.iter().any(|(_, l)| {
                matches!(l.quality(&ctx.cfg.phy, r_idx), LinkQuality::Decodable(_))
            }),
            _ => {
                let mut power_mw = mw_from_dbm(ctx.cfg.phy.noise_floor_dbm);
                for (_, l) in &tx.overlaps {
                    let LinkMap::Power(p) = l.as_ref() else { unreachable!() };
                    power_mw += mw_from_dbm(p[r_idx]);
                }
                rx_dbm - dbm_from_mw(power_mw) < ctx.cfg.phy.sinr_threshold_db
            }
        };
        if collided {
            ctx.metrics.record_drop("collision");
            if frame.is_data() && ctx.log.enabled() {
                if let FramePayload::Data(p) = frame.payload {
                    ctx.log.record(&EventRecord {
                        t: now.nanos(),
                        node: r_id,
                        kind: "lost",
                        src: Some(p.source),
                        seq: Some(p.seq),
                        x: r_pos.x,
                        y: r_pos.y,
                        hops: None,
                        reason: Some("collision"),
                    });
                }
            }
            continue;
        }
        handle_rx(nodes, ctx, r_id, frame);
    }

    // saturating traffic keeps the pipeline primed with the next probe
    if ctx.cfg.saturate && !is_ack {
        submit_probe(nodes, ctx, sender);
    }
}

/// Frame decoded at `id`: MAC-level dedup, acknowledgement, and handoff to
/// the network layer.
fn handle_rx(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId, frame: Frame) {
    let now = ctx.now;
    let node = &mut nodes[id as usize];
    let addressed_here = frame.dest == FrameDest::Unicast(id);

    let duplicate_rx = node.mac.last_rx_uid.get(&frame.tx_node) == Some(&frame.uid);
    node.mac.last_rx_uid.insert(frame.tx_node, frame.uid);
    if addressed_here && !matches!(frame.payload, FramePayload::Ack { .. }) {
        // acknowledge every decoded copy, retransmissions included
        let ack = Frame {
            uid: ctx.fresh_uid(),
            tx_node: id,
            tx_pos: node.cached.pos,
            dest: FrameDest::Unicast(frame.tx_node),
            size_bytes: ACK_BYTES,
            payload: FramePayload::Ack { acked_uid: frame.uid },
        };
        ctx.schedule(now + SIFS, EventKind::AckTx { node: id, frame: ack });
    }
    if duplicate_rx {
        return;
    }

    match frame.payload {
        FramePayload::Cam { speed_mps, heading_deg, .. } => {
            node.loct.upsert(frame.tx_node, frame.tx_pos, speed_mps, heading_deg, RxVia::Cam, now);
        }
        FramePayload::Beacon { speed_mps, heading_deg } => {
            node.loct
                .upsert(frame.tx_node, frame.tx_pos, speed_mps, heading_deg, RxVia::Beacon, now);
        }
        FramePayload::Ack { acked_uid } => {
            if addressed_here && node.mac.phase == (MacPhase::AwaitingAck { uid: acked_uid }) {
                complete_current(node, ctx, id);
            }
        }
        FramePayload::Data(pkt) => {
            if let FrameDest::Unicast(d) = frame.dest {
                if d != id {
                    return; // filtered at the MAC, not decoded upward
                }
            }
            // position refresh from the forwarded header (no neighbor claim)
            node.loct.upsert(frame.tx_node, frame.tx_pos, 0.0, 0.0, RxVia::Forwarded, now);
            process_data(nodes, ctx, id, pkt, frame.dest == FrameDest::Broadcast);
        }
    }
}

/// Network-layer handling of a decoded packet copy.
fn process_data(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId, pkt: GnPacket, was_broadcast: bool) {
    let now = ctx.now;
    let pos = ctx.exact(id, now).pos;
    let key = pkt.key();

    if pkt.expired(now) {
        drop_packet(ctx, id, &pkt, pos, DropReason::Expired);
        return;
    }

    if id != pkt.source
        && pkt.inside_area(pos)
        && nodes[id as usize].delivered.first_delivery(key)
    {
        ctx.metrics.record_delivery(key, id, now, pkt.hops_traversed());
        if ctx.log.enabled() {
            ctx.log.record(&EventRecord {
                t: now.nanos(),
                node: id,
                kind: "deliver",
                src: Some(pkt.source),
                seq: Some(pkt.seq),
                x: pos.x,
                y: pos.y,
                hops: Some(pkt.hops_traversed() as u8),
                reason: None,
            });
        }
    }

    if pkt.inside_area(pos) {
        let variant = ctx.cfg.profile.area;
        cbf_rx(nodes, ctx, id, pkt, CbfMode::Area, variant, pos);
    } else {
        match ctx.cfg.profile.non_area {
            NonAreaAlg::Cbf(variant) => cbf_rx(nodes, ctx, id, pkt, CbfMode::NonArea, variant, pos),
            NonAreaAlg::Greedy(profile) => {
                greedy_rx(nodes, ctx, id, pkt, profile, pos, was_broadcast)
            }
        }
    }
}

fn cbf_rx(
    nodes: &mut [Node],
    ctx: &mut Ctx,
    id: NodeId,
    pkt: GnPacket,
    mode: CbfMode,
    variant: CbfVariant,
    pos: GeoPosition,
) {
    let now = ctx.now;
    let node = &mut nodes[id as usize];
    let ttnt = node.dcc.time_to_next_tx(now);
    let outcome =
        node.cbf.handle_gbc(&mut node.dpl, variant, mode, &pkt, pos, now, ttnt, &ctx.cfg.cbf);
    match outcome {
        CbfRxOutcome::Buffered { expiry } | CbfRxOutcome::TimerUpdated { expiry } => {
            schedule_cbf_event(node, ctx, id, pkt.key(), expiry);
        }
        CbfRxOutcome::Cancelled => drop_packet(ctx, id, &pkt, pos, DropReason::Cancelled),
        CbfRxOutcome::Duplicate => drop_packet(ctx, id, &pkt, pos, DropReason::Duplicate),
        CbfRxOutcome::NoProgress => drop_packet(ctx, id, &pkt, pos, DropReason::NoProgress),
        CbfRxOutcome::TimerKept => {}
    }
}

fn schedule_cbf_event(node: &mut Node, ctx: &mut Ctx, id: NodeId, key: MessageKey, expiry: SimTime) {
    if let Some(e) = node.cbf.get_mut(key) {
        if e.scheduled == Some(expiry) {
            return; // an event for this instant is already in flight
        }
        e.scheduled = Some(expiry);
    }
    ctx.schedule(expiry, EventKind::CbfExpiry { node: id, key });
}

fn on_cbf_expiry(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId, key: MessageKey) {
    let now = ctx.now;
    let node = &mut nodes[id as usize];
    let Some(entry) = node.cbf.get_mut(key) else { return };
    if entry.scheduled == Some(now) {
        entry.scheduled = None;
    }
    let variant = match entry.mode {
        CbfMode::Area => ctx.cfg.profile.area,
        CbfMode::NonArea => match ctx.cfg.profile.non_area {
            NonAreaAlg::Cbf(v) => v,
            // greedy setups only buffer via the hardened source self-buffer
            NonAreaAlg::Greedy(_) => CbfVariant::SFotPlus,
        },
    };
    let ttnt = node.dcc.time_to_next_tx(now);
    match node.cbf.on_timer_expiry(key, variant, now, ttnt) {
        CbfExpiryAction::Nothing => {}
        CbfExpiryAction::Rearm(at) => schedule_cbf_event(node, ctx, id, key, at),
        CbfExpiryAction::Transmit(pkt, is_self) => {
            let pos = ctx.exact(id, now).pos;
            if pkt.expired(now) {
                drop_packet(ctx, id, &pkt, pos, DropReason::Expired);
                return;
            }
            let to_send = if is_self {
                // retransmitted verbatim, from the current position
                let mut c = pkt;
                c.sender_pos = pos;
                Some(c)
            } else {
                pkt.forward_copy(pos, ctx.cfg.profile.forward_tc)
            };
            match to_send {
                None => drop_packet(ctx, id, &pkt, pos, DropReason::Ttl),
                Some(c) => {
                    let frame = data_frame(ctx, id, pos, FrameDest::Broadcast, c);
                    submit_gate(nodes, ctx, id, frame, c.tc);
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn greedy_rx(
    nodes: &mut [Node],
    ctx: &mut Ctx,
    id: NodeId,
    pkt: GnPacket,
    profile: GreedyProfile,
    pos: GeoPosition,
    was_broadcast: bool,
) {
    let now = ctx.now;
    let node = &mut nodes[id as usize];
    if let Some(reason) = screen_rx(&mut node.dpl, &pkt, was_broadcast, &profile) {
        drop_packet(ctx, id, &pkt, pos, reason);
        return;
    }
    let Some(fwd) = pkt.forward_copy(pos, ctx.cfg.profile.forward_tc) else {
        drop_packet(ctx, id, &pkt, pos, DropReason::Ttl);
        return;
    };
    let hop = select_next_hop(
        pos,
        pkt.area.center,
        node.loct.neighbor_candidates(profile.policy, now),
        &profile,
    );
    let dest = match hop {
        NextHop::Unicast(next) => FrameDest::Unicast(next),
        NextHop::Broadcast => {
            // the dead-end fallback fires once per message per node
            if !node.fallback_done.insert(fwd.key()) {
                drop_packet(ctx, id, &pkt, pos, DropReason::NoProgress);
                return;
            }
            FrameDest::Broadcast
        }
    };
    let frame = data_frame(ctx, id, pos, dest, fwd);
    submit_gate(nodes, ctx, id, frame, fwd.tc);
}

fn on_ack_tx(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId, frame: Frame) {
    // the radio cannot start the ack while already sending something; the
    // data sender will retry
    if ctx.active.iter().any(|a| a.frame.tx_node == id) {
        return;
    }
    begin_tx(nodes, ctx, id, frame, false);
}

fn on_ack_timeout(nodes: &mut [Node], ctx: &mut Ctx, id: NodeId, uid: u64) {
    let node = &mut nodes[id as usize];
    if node.mac.phase != (MacPhase::AwaitingAck { uid }) {
        return;
    }
    let Some(p) = node.mac.current.as_mut() else { return };
    p.attempt += 1;
    if p.attempt > 1 + RETRY_LIMIT {
        let frame = p.frame;
        if let FramePayload::Data(pkt) = frame.payload {
            let pos = node.cached.pos;
            drop_packet(ctx, id, &pkt, pos, DropReason::ArqExhausted);
        }
        complete_current(node, ctx, id);
    } else {
        start_contention(node, ctx, id, true);
    }
}

/// Current frame is finished (acknowledged, exhausted, or broadcast done):
/// the radio is free again, so let the gate serve whatever waited upstream.
fn complete_current(node: &mut Node, ctx: &mut Ctx, id: NodeId) {
    node.mac.current = None;
    node.mac.phase = MacPhase::Idle;
    if node.dcc.has_queued() {
        ensure_gate_event(node, ctx, id);
    }
}

fn drop_frame(ctx: &mut Ctx, id: NodeId, frame: &Frame, reason: DropReason) {
    if let FramePayload::Data(pkt) = frame.payload {
        drop_packet(ctx, id, &pkt, frame.tx_pos, reason);
    }
}

fn drop_packet(ctx: &mut Ctx, id: NodeId, pkt: &GnPacket, pos: GeoPosition, reason: DropReason) {
    ctx.metrics.record_drop(reason.name());
    if ctx.log.enabled() {
        ctx.log.record(&EventRecord {
            t: ctx.now.nanos(),
            node: id,
            kind: "drop",
            src: Some(pkt.source),
            seq: Some(pkt.seq),
            x: pos.x,
            y: pos.y,
            hops: None,
            reason: Some(reason.name()),
        });
    }
}

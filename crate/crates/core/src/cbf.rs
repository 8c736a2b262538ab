//! Contention-based forwarding: timers, packet buffer, and the two variants.
//!
//! Plain CBF arms a timer inversely proportional to a distance metric and
//! cancels on overheard copies. The hardened variant layers on top of it:
//!
//! * a slotted timer that keeps candidates beyond the nominal contention
//!   range from ever beating candidates inside it,
//! * duplicate detection through the DPL,
//! * progress checks on buffering and on cancellation (only a strictly
//!   better-placed forwarder cancels; anyone else merely re-times),
//! * DCC-aware arming and expiry (a buffered packet never leaves before the
//!   node's gate lets it out, and waiting in the buffer keeps it cancellable),
//! * a source self-buffer that retransmits once if nobody echoes the message.

use crate::geo::{planar_distance, progress_toward, GeoPosition};
use crate::router::{CbfVariant, GnPacket, MessageKey};
use crate::loct::Dpl;
use crate::time::{millis, millis_f64, Nanos, SimTime};
use crate::util::DetHashMap;

/// Timer endpoints and contention range.
#[derive(Copy, Clone, Debug)]
pub struct CbfParams {
    pub to_max: Nanos,
    pub to_min: Nanos,
    pub dist_max_m: f64,
}

impl Default for CbfParams {
    fn default() -> Self {
        CbfParams { to_max: millis(100), to_min: millis(1), dist_max_m: 1000.0 }
    }
}

/// Classic CBF timeout: `to_max` next to the sender, falling linearly to
/// `to_min` at `dist_max` and clamped there beyond it.
pub fn cbf_timer(params: &CbfParams, metric_m: f64) -> Nanos {
    let d = metric_m.max(0.0).min(params.dist_max_m);
    let to_max = params.to_max as f64;
    let to_min = params.to_min as f64;
    let t = to_max - (to_max - to_min) * d / params.dist_max_m;
    t.round() as Nanos
}

/// Slotted CBF timeout: candidates in slot `k` (metric in
/// `[k*dist_max, (k+1)*dist_max)`) contend within `(k*to_max, (k+1)*to_max]`,
/// so a whole slot always drains before the next one starts.
pub fn scbf_timer(params: &CbfParams, metric_m: f64) -> (Nanos, u32) {
    let m = metric_m.max(0.0);
    let slot = (m / params.dist_max_m).floor() as u32;
    let within = m - slot as f64 * params.dist_max_m;
    (cbf_timer(params, within) + slot as u64 * params.to_max, slot)
}

/// Which geometry the contention runs in.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum CbfMode {
    /// Toward the area: metric is progress toward the area center, relevance
    /// requires strictly positive progress.
    NonArea,
    /// Inside the area: metric is distance from the transmitting sender,
    /// every receiver is relevant.
    Area,
}

fn metric_m(mode: CbfMode, pkt: &GnPacket, my_pos: GeoPosition) -> f64 {
    match mode {
        CbfMode::NonArea => progress_toward(pkt.sender_pos, my_pos, pkt.area.center),
        CbfMode::Area => planar_distance(pkt.sender_pos, my_pos),
    }
}

#[derive(Clone, Debug)]
pub struct CbfEntry {
    /// The received copy this node would forward (hop limit not yet spent).
    pub packet: GnPacket,
    /// Sender the current timer was computed against.
    pub armed_sender: GeoPosition,
    pub mode: CbfMode,
    pub expiry: SimTime,
    /// Expiry instant an engine timer event is outstanding for.
    pub scheduled: Option<SimTime>,
    /// Source self-buffer entry (cancel on any copy, retransmit verbatim).
    pub is_source_self: bool,
}

/// Packet buffer keyed by message identity.
#[derive(Default)]
pub struct CbfBuffer {
    entries: DetHashMap<MessageKey, CbfEntry>,
}

/// What a reception did to the buffer.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum CbfRxOutcome {
    /// Newly buffered, contend at `expiry`.
    Buffered { expiry: SimTime },
    /// Entry removed because the copy proves further forwarding is covered.
    Cancelled,
    /// Entry kept, timer recomputed from the new copy's sender.
    TimerUpdated { expiry: SimTime },
    /// Entry kept, recomputed timer would have fired earlier and was ignored.
    TimerKept,
    /// Seen before and not buffered: silently dropped (hardened variant).
    Duplicate,
    /// Relevance failed: the receiver is no better placed than the sender.
    NoProgress,
}

/// What to do when a contention timer fires.
#[derive(Copy, Clone, Debug)]
pub enum CbfExpiryAction {
    /// Forward the buffered packet now (entry removed).
    Transmit(GnPacket, bool),
    /// Gate still closed: stay buffered and fire again at the new expiry.
    Rearm(SimTime),
    /// No live entry behind this timer event.
    Nothing,
}

impl CbfBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: MessageKey) -> Option<&CbfEntry> {
        self.entries.get(&key)
    }

    pub fn get_mut(&mut self, key: MessageKey) -> Option<&mut CbfEntry> {
        self.entries.get_mut(&key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Process a received copy.
    ///
    /// `time_to_next_tx` is the node's DCC view at reception time and only
    /// matters for the hardened variant, which never arms a timer shorter
    /// than the wait for its own gate.
    #[allow(clippy::too_many_arguments)]
    pub fn handle_gbc(
        &mut self,
        dpl: &mut Dpl,
        variant: CbfVariant,
        mode: CbfMode,
        pkt: &GnPacket,
        my_pos: GeoPosition,
        now: SimTime,
        time_to_next_tx: Nanos,
        params: &CbfParams,
    ) -> CbfRxOutcome {
        let key = pkt.key();
        match variant {
            CbfVariant::Etsi => {
                if self.entries.remove(&key).is_some() {
                    return CbfRxOutcome::Cancelled;
                }
                let m = metric_m(mode, pkt, my_pos);
                if mode == CbfMode::NonArea && m <= 0.0 {
                    return CbfRxOutcome::NoProgress;
                }
                let expiry = now + cbf_timer(params, m);
                self.entries.insert(key, CbfEntry {
                    packet: *pkt,
                    armed_sender: pkt.sender_pos,
                    mode,
                    expiry,
                    scheduled: None,
                    is_source_self: false,
                });
                CbfRxOutcome::Buffered { expiry }
            }
            CbfVariant::SFotPlus => {
                let dup = dpl.check_and_record(pkt.source, pkt.seq);
                if let Some(e) = self.entries.get_mut(&key) {
                    // Source self-buffer: any echo proves somebody carries the
                    // message on, so the planned retransmission is dropped.
                    if e.is_source_self {
                        self.entries.remove(&key);
                        return CbfRxOutcome::Cancelled;
                    }
                    let better = match mode {
                        CbfMode::NonArea => {
                            planar_distance(pkt.sender_pos, pkt.area.center)
                                < planar_distance(my_pos, pkt.area.center)
                        }
                        CbfMode::Area => {
                            planar_distance(pkt.sender_pos, my_pos)
                                >= planar_distance(e.armed_sender, my_pos)
                        }
                    };
                    if better {
                        self.entries.remove(&key);
                        return CbfRxOutcome::Cancelled;
                    }
                    // Re-time against the new sender, never earlier than the
                    // already-armed expiry.
                    let m = metric_m(mode, pkt, my_pos);
                    let (t, _slot) = scbf_timer(params, m);
                    let candidate = now + t.max(time_to_next_tx);
                    if candidate > e.expiry {
                        e.expiry = candidate;
                        e.armed_sender = pkt.sender_pos;
                        CbfRxOutcome::TimerUpdated { expiry: candidate }
                    } else {
                        CbfRxOutcome::TimerKept
                    }
                } else if dup {
                    CbfRxOutcome::Duplicate
                } else {
                    let m = metric_m(mode, pkt, my_pos);
                    if mode == CbfMode::NonArea && m <= 0.0 {
                        return CbfRxOutcome::NoProgress;
                    }
                    let (t, _slot) = scbf_timer(params, m);
                    let expiry = now + t.max(time_to_next_tx);
                    self.entries.insert(key, CbfEntry {
                        packet: *pkt,
                        armed_sender: pkt.sender_pos,
                        mode,
                        expiry,
                        scheduled: None,
                        is_source_self: false,
                    });
                    CbfRxOutcome::Buffered { expiry }
                }
            }
        }
    }

    /// Arm the source self-buffer right after the source's initial
    /// transmission: if no forwarder echoes the message within `to_max`, it
    /// is sent once more.
    pub fn arm_source_self(&mut self, pkt: &GnPacket, now: SimTime, params: &CbfParams) -> SimTime {
        let expiry = now + params.to_max;
        self.entries.insert(pkt.key(), CbfEntry {
            packet: *pkt,
            armed_sender: pkt.sender_pos,
            mode: CbfMode::NonArea,
            expiry,
            scheduled: None,
            is_source_self: true,
        });
        expiry
    }

    /// Resolve a fired timer. The engine passes the node's current DCC view;
    /// under the hardened variant a closed gate re-arms instead of releasing.
    pub fn on_timer_expiry(
        &mut self,
        key: MessageKey,
        variant: CbfVariant,
        now: SimTime,
        time_to_next_tx: Nanos,
    ) -> CbfExpiryAction {
        let Some(e) = self.entries.get_mut(&key) else {
            return CbfExpiryAction::Nothing;
        };
        if e.expiry > now {
            // A later copy pushed the timer while this event was in flight.
            return CbfExpiryAction::Rearm(e.expiry);
        }
        let dcc_aware = variant == CbfVariant::SFotPlus;
        if dcc_aware && time_to_next_tx > 0 {
            let expiry = now + time_to_next_tx;
            e.expiry = expiry;
            return CbfExpiryAction::Rearm(expiry);
        }
        let e = self.entries.remove(&key).unwrap();
        CbfExpiryAction::Transmit(e.packet, e.is_source_self)
    }

    /// Remove an entry outright (packet lifetime ran out while buffered).
    pub fn remove(&mut self, key: MessageKey) -> Option<CbfEntry> {
        self.entries.remove(&key)
    }
}

/// Convenience for tests and bindings: timer in milliseconds.
pub fn cbf_timer_ms(d_m: f64) -> f64 {
    cbf_timer(&CbfParams::default(), d_m) as f64 / millis_f64(1.0) as f64
}

/// Convenience for tests and bindings: slotted timer in milliseconds.
pub fn scbf_timer_ms(d_m: f64) -> (f64, u32) {
    let (t, slot) = scbf_timer(&CbfParams::default(), d_m);
    (t as f64 / millis_f64(1.0) as f64, slot)
}

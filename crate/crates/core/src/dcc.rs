//! Adaptive decentralized congestion control.
//!
//! A linear controller tracks channel busy ratio (CBR) toward a target: the
//! node's duty-cycle share `delta` is updated every 200 ms from the mean of
//! the last two 100 ms CBR windows, and every transmission closes a gate for
//! `airtime * (1/delta - 1)`, clamped between 25 ms and 1 s. One packet per
//! traffic class can wait for the gate; a newer packet of the same class
//! replaces the waiting one. When the gate opens the lowest-numbered
//! non-empty class is served first.

use crate::router::{TrafficClass, TRAFFIC_CLASSES};
use crate::time::{millis, Nanos, SimTime};

#[derive(Copy, Clone, Debug)]
pub struct DccParams {
    pub alpha: f64,
    pub beta: f64,
    pub target_cbr: f64,
    pub delta_min: f64,
    pub delta_max: f64,
    pub gap_min: Nanos,
    pub gap_max: Nanos,
}

impl Default for DccParams {
    fn default() -> Self {
        DccParams {
            alpha: 0.1,
            beta: 1.0 / 150.0,
            target_cbr: 0.68,
            delta_min: 0.0006,
            delta_max: 0.03,
            gap_min: millis(25),
            gap_max: millis(1000),
        }
    }
}

/// CBR measurement window length.
pub const CBR_WINDOW: Nanos = millis(100);
/// Duty-cycle update period: every second CBR window.
pub const DUTY_UPDATE_PERIOD: Nanos = millis(200);

struct Queued<T> {
    item: T,
    airtime: Nanos,
    enqueued_at: SimTime,
}

/// Result of offering a frame to the gatekeeper.
pub enum GateOutcome<T> {
    /// Gate was open: transmit now (gate re-closed behind it).
    Pass,
    /// Gate closed: parked in the class queue.
    Queued,
    /// Gate closed and the class slot was taken: the older frame is returned.
    Replaced(T),
}

/// Per-node DCC state. `T` is whatever the caller queues (the engine queues
/// frames; tests queue markers).
pub struct DccState<T> {
    pub delta: f64,
    gate_open_at: SimTime,
    /// Gap applied at the most recent gate pass.
    pub last_gap: Nanos,
    last_windows: [f64; 2],
    windows_seen: u64,
    pub cbr_smoothed: f64,
    queues: [Option<Queued<T>>; 4],
    /// Expiry instant of the outstanding gate-open event, if any.
    pub gate_event_at: Option<SimTime>,
}

impl<T> DccState<T> {
    pub fn new(params: &DccParams) -> Self {
        DccState {
            delta: params.delta_max,
            gate_open_at: SimTime::ZERO,
            last_gap: 0,
            last_windows: [0.0; 2],
            windows_seen: 0,
            cbr_smoothed: 0.0,
            queues: [None, None, None, None],
            gate_event_at: None,
        }
    }

    /// Record one CBR window; returns `(smoothed, duty_updated)`. The duty
    /// cycle is recomputed on every second window (200 ms cadence).
    pub fn on_window(&mut self, busy: Nanos, params: &DccParams) -> (f64, bool) {
        let cbr = (busy as f64 / CBR_WINDOW as f64).min(1.0);
        self.last_windows[(self.windows_seen % 2) as usize] = cbr;
        self.windows_seen += 1;
        self.cbr_smoothed = if self.windows_seen >= 2 {
            (self.last_windows[0] + self.last_windows[1]) / 2.0
        } else {
            cbr
        };
        let update = self.windows_seen % 2 == 0;
        if update {
            self.delta = ((1.0 - params.alpha) * self.delta
                + params.beta * (params.target_cbr - self.cbr_smoothed))
                .clamp(params.delta_min, params.delta_max);
        }
        (self.cbr_smoothed, update)
    }

    /// Gap the gate closes for after sending a frame of this airtime.
    pub fn gap_for(&self, airtime: Nanos, params: &DccParams) -> Nanos {
        let raw = airtime as f64 * (1.0 / self.delta - 1.0);
        (raw.round() as Nanos).clamp(params.gap_min, params.gap_max)
    }

    pub fn is_open(&self, now: SimTime) -> bool {
        now >= self.gate_open_at
    }

    /// Wait until the gate next opens; zero when already open.
    pub fn time_to_next_tx(&self, now: SimTime) -> Nanos {
        self.gate_open_at.since(now)
    }

    pub fn gate_open_at(&self) -> SimTime {
        self.gate_open_at
    }

    /// Account a transmission passing the gate: closes it for the gap.
    pub fn mark_pass(&mut self, airtime: Nanos, now: SimTime, params: &DccParams) {
        let gap = self.gap_for(airtime, params);
        self.last_gap = gap;
        self.gate_open_at = now + gap;
    }

    /// Offer a frame. On `Pass` the caller transmits immediately
    /// (`mark_pass` has been applied); otherwise the frame waits in its
    /// class slot.
    pub fn submit(
        &mut self,
        item: T,
        tc: TrafficClass,
        airtime: Nanos,
        now: SimTime,
        params: &DccParams,
    ) -> GateOutcome<T> {
        if self.is_open(now) {
            self.mark_pass(airtime, now, params);
            return GateOutcome::Pass;
        }
        self.enqueue(item, tc, airtime, now)
    }

    /// Queue a frame in its class slot regardless of the gate (used while
    /// the radio is still busy with an earlier frame, so the newest-wins
    /// replacement keeps working instead of piling frames up downstream).
    pub fn enqueue(
        &mut self,
        item: T,
        tc: TrafficClass,
        airtime: Nanos,
        now: SimTime,
    ) -> GateOutcome<T> {
        let slot = &mut self.queues[tc.index()];
        let old = slot.replace(Queued { item, airtime, enqueued_at: now });
        match old {
            Some(q) => GateOutcome::Replaced(q.item),
            None => GateOutcome::Queued,
        }
    }

    /// Pop the highest-priority queued frame without touching the gate.
    /// The caller decides whether it still transmits (and then `mark_pass`es)
    /// or was dead on arrival.
    pub fn pop_queued(&mut self) -> Option<(T, TrafficClass, SimTime)> {
        for tc in TRAFFIC_CLASSES {
            if let Some(q) = self.queues[tc.index()].take() {
                return Some((q.item, tc, q.enqueued_at));
            }
        }
        None
    }

    /// Airtime of the head frame in `tc`'s slot, if occupied.
    pub fn queued_airtime(&self, tc: TrafficClass) -> Option<Nanos> {
        self.queues[tc.index()].as_ref().map(|q| q.airtime)
    }

    pub fn has_queued(&self) -> bool {
        self.queues.iter().any(|q| q.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{micros, millis_f64};

    const P: DccParams = DccParams {
        alpha: 0.1,
        beta: 1.0 / 150.0,
        target_cbr: 0.68,
        delta_min: 0.0006,
        delta_max: 0.03,
        gap_min: millis(25),
        gap_max: millis(1000),
    };

    #[test]
    fn smoothed_cbr_is_mean_of_last_two_windows() {
        let mut d: DccState<u32> = DccState::new(&P);
        let (s, up) = d.on_window(millis(50), &P);
        assert_eq!(s, 0.5);
        assert!(!up);
        let (s, up) = d.on_window(millis(70), &P);
        assert!((s - 0.6).abs() < 1e-12);
        assert!(up);
        let (s, _) = d.on_window(millis(10), &P);
        assert!((s - 0.4).abs() < 1e-12, "windows 0.7 and 0.1 -> {s}");
    }

    #[test]
    fn duty_cycle_converges_to_max_on_idle_channel() {
        let mut d: DccState<u32> = DccState::new(&P);
        d.delta = 0.001;
        for _ in 0..200 {
            d.on_window(0, &P);
        }
        assert_eq!(d.delta, P.delta_max);
    }

    #[test]
    fn duty_cycle_converges_to_min_on_saturated_channel() {
        let mut d: DccState<u32> = DccState::new(&P);
        for _ in 0..200 {
            d.on_window(CBR_WINDOW, &P);
        }
        assert_eq!(d.delta, P.delta_min);
    }

    #[test]
    fn duty_cycle_fixed_point_matches_closed_form() {
        // holding CBR at c, delta converges to beta*(target-c)/alpha
        let c = 0.6;
        let mut d: DccState<u32> = DccState::new(&P);
        d.delta = 0.001;
        for _ in 0..2000 {
            d.on_window((c * CBR_WINDOW as f64) as Nanos, &P);
        }
        let expect = P.beta * (P.target_cbr - c) / P.alpha;
        assert!((d.delta - expect).abs() < 1e-9, "{} vs {expect}", d.delta);
    }

    #[test]
    fn gap_clamps() {
        let mut d: DccState<u32> = DccState::new(&P);
        d.delta = 0.03;
        // 0.5 ms * (1/0.03 - 1) = 16.17 ms, below the floor
        assert_eq!(d.gap_for(micros(500), &P), millis(25));
        d.delta = 0.0006;
        // 0.5 ms * (1/0.0006 - 1) = 832.83 ms, inside the clamp band
        assert_eq!(d.gap_for(micros(500), &P), millis_f64(832.833333));
        // a 700-us frame at delta_min exceeds one second: clamped
        assert_eq!(d.gap_for(micros(700), &P), millis(1000));
    }

    #[test]
    fn gate_pass_and_queueing() {
        let mut d: DccState<&'static str> = DccState::new(&P);
        d.delta = 0.0006;
        let t0 = SimTime(0);
        assert!(matches!(d.submit("a", TrafficClass::Tc3, micros(441), t0, &P), GateOutcome::Pass));
        assert!(!d.is_open(t0 + millis(100)));
        let expected_gap = d.gap_for(micros(441), &P);
        assert_eq!(d.last_gap, expected_gap);
        assert_eq!(d.time_to_next_tx(t0 + millis(100)), expected_gap - millis(100));
        // queued while closed; same class replaced by newer
        let t1 = t0 + millis(200);
        assert!(matches!(d.submit("b", TrafficClass::Tc3, micros(441), t1, &P), GateOutcome::Queued));
        match d.submit("c", TrafficClass::Tc3, micros(441), t1 + 1, &P) {
            GateOutcome::Replaced(old) => assert_eq!(old, "b"),
            _ => panic!("expected replacement"),
        }
        // priority order on dequeue
        assert!(matches!(d.submit("cam", TrafficClass::Tc2, micros(420), t1 + 2, &P), GateOutcome::Queued));
        assert!(matches!(d.submit("alert", TrafficClass::Tc0, micros(441), t1 + 3, &P), GateOutcome::Queued));
        let (i1, tc1, _) = d.pop_queued().unwrap();
        assert_eq!((i1, tc1), ("alert", TrafficClass::Tc0));
        let (i2, tc2, _) = d.pop_queued().unwrap();
        assert_eq!((i2, tc2), ("cam", TrafficClass::Tc2));
        let (i3, tc3, _) = d.pop_queued().unwrap();
        assert_eq!((i3, tc3), ("c", TrafficClass::Tc3));
        assert!(d.pop_queued().is_none());
        assert!(!d.has_queued());
    }

    #[test]
    fn dequeue_priority_never_inverts() {
        // randomized-ish schedule: whatever sits queued, pops come out in
        // strictly non-decreasing class order between consecutive passes
        let mut d: DccState<u8> = DccState::new(&P);
        d.delta = 0.0006;
        let t0 = SimTime(0);
        d.submit(0, TrafficClass::Tc0, micros(400), t0, &P); // opens -> passes
        for (i, tc) in [TrafficClass::Tc3, TrafficClass::Tc1, TrafficClass::Tc2].iter().enumerate() {
            d.submit(i as u8 + 1, *tc, micros(400), t0 + 1 + i as u64, &P);
        }
        let mut order = Vec::new();
        while let Some((_, tc, _)) = d.pop_queued() {
            order.push(tc);
        }
        let mut sorted = order.clone();
        sorted.sort();
        assert_eq!(order, sorted);
    }
}

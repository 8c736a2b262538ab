//! Per-run measurement: delivery ratio, first-arrival delay, transmissions
//! per message, loss-location ECDF, hop distribution, and congestion
//! observables, plus CSV/JSON writers and multi-seed aggregation.

use std::io::Write;
use std::path::Path;

use crate::geo::GeoPosition;
use crate::router::MessageKey;
use crate::time::{Nanos, SimTime};
use crate::util::{ci95_half_width, mean, median, DetHashMap};
use crate::NodeId;

/// Running bookkeeping for one disseminated message.
pub struct MessageStats {
    pub key: MessageKey,
    pub source: NodeId,
    pub seq: u16,
    pub created_at: SimTime,
    pub source_pos: GeoPosition,
    /// Nodes inside the destination area at creation time.
    pub area_snapshot: Vec<NodeId>,
    /// First facilities handoff per in-area node: time and hops traversed.
    pub receptions: DetHashMap<NodeId, (SimTime, u32)>,
    /// Data-frame transmissions carrying this message, retries included.
    pub transmissions: u64,
    /// Farthest transmitter-from-source distance seen for this message.
    pub max_forward_distance_m: f64,
}

impl MessageStats {
    /// Delivered receivers among the creation-time snapshot over snapshot
    /// size; `None` when the snapshot was empty.
    pub fn pdr(&self) -> Option<f64> {
        if self.area_snapshot.is_empty() {
            return None;
        }
        let hit = self
            .area_snapshot
            .iter()
            .filter(|n| self.receptions.contains_key(n))
            .count();
        Some(hit as f64 / self.area_snapshot.len() as f64)
    }

    /// Earliest in-area reception delay, if any.
    pub fn first_arrival(&self) -> Option<Nanos> {
        self.receptions
            .values()
            .map(|(t, _)| t.since(self.created_at))
            .min()
    }
}

/// Flattened per-message row for CSV output.
#[derive(serde::Serialize)]
pub struct PerMessage {
    pub source: NodeId,
    pub seq: u16,
    pub created_s: f64,
    pub area_population: usize,
    pub delivered_in_snapshot: usize,
    pub delivered_total: usize,
    pub pdr: Option<f64>,
    pub first_arrival_s: Option<f64>,
    pub tx_count: u64,
    pub max_forward_distance_m: f64,
    pub mean_delivery_hops: Option<f64>,
}

/// Everything a finished run reports.
#[derive(serde::Serialize)]
pub struct RunMetrics {
    pub per_message: Vec<PerMessage>,
    pub messages: usize,
    /// Messages excluded from PDR because nobody was in the area at creation.
    pub empty_snapshot_messages: usize,
    pub pdr_mean: Option<f64>,
    pub first_arrival_median_s: Option<f64>,
    pub first_arrival_mean_s: Option<f64>,
    pub tx_per_message_mean: Option<f64>,
    /// Fraction of messages that reached at least one in-area node.
    pub delivered_any_fraction: Option<f64>,
    /// (max forwarder distance, cumulative fraction) over undelivered messages.
    pub loss_ecdf: Vec<(f64, f64)>,
    pub hop_histogram: Vec<(u32, u64)>,
    pub mean_delivery_hops: Option<f64>,
    pub total_data_tx: u64,
    pub drops: Vec<(String, u64)>,
    /// Mean smoothed CBR across nodes, one sample per measurement window.
    pub cbr_series: Vec<(f64, f64)>,
    pub final_cbr_mean: Option<f64>,
    pub final_cbr_min: Option<f64>,
    pub final_cbr_max: Option<f64>,
    /// Observed bounds on the inter-transmission gap the rate gate enforced.
    pub gate_gap_min_s: Option<f64>,
    pub gate_gap_max_s: Option<f64>,
}

#[derive(Default)]
pub struct MetricsCollector {
    messages: Vec<MessageStats>,
    index: DetHashMap<MessageKey, usize>,
    node_tx: DetHashMap<NodeId, u64>,
    drops: DetHashMap<&'static str, u64>,
    cbr_series: Vec<(f64, f64)>,
    final_cbr: Vec<f64>,
    gap_min: Option<Nanos>,
    gap_max: Option<Nanos>,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_message(
        &mut self,
        key: MessageKey,
        source: NodeId,
        seq: u16,
        created_at: SimTime,
        source_pos: GeoPosition,
        area_snapshot: Vec<NodeId>,
    ) {
        let idx = self.messages.len();
        self.messages.push(MessageStats {
            key,
            source,
            seq,
            created_at,
            source_pos,
            area_snapshot,
            receptions: DetHashMap::default(),
            transmissions: 0,
            max_forward_distance_m: 0.0,
        });
        self.index.insert(key, idx);
    }

    /// Count a data-frame transmission carrying `key` from a transmitter at
    /// `dist_from_source_m`.
    pub fn record_tx(&mut self, key: MessageKey, node: NodeId, dist_from_source_m: f64) {
        if let Some(&i) = self.index.get(&key) {
            let m = &mut self.messages[i];
            m.transmissions += 1;
            if dist_from_source_m > m.max_forward_distance_m {
                m.max_forward_distance_m = dist_from_source_m;
            }
            *self.node_tx.entry(node).or_insert(0) += 1;
        }
    }

    /// First facilities handoff at an in-area node; later copies ignored.
    pub fn record_delivery(&mut self, key: MessageKey, node: NodeId, now: SimTime, hops: u32) {
        if let Some(&i) = self.index.get(&key) {
            self.messages[i].receptions.entry(node).or_insert((now, hops));
        }
    }

    pub fn record_drop(&mut self, reason: &'static str) {
        *self.drops.entry(reason).or_insert(0) += 1;
    }

    pub fn push_cbr_sample(&mut self, now: SimTime, mean_cbr: f64) {
        self.cbr_series.push((now.as_secs_f64(), mean_cbr));
    }

    pub fn set_final_cbr(&mut self, per_node: Vec<f64>) {
        self.final_cbr = per_node;
    }

    /// Track the envelope of enforced inter-transmission gaps.
    pub fn observe_gap(&mut self, gap: Nanos) {
        self.gap_min = Some(self.gap_min.map_or(gap, |g| g.min(gap)));
        self.gap_max = Some(self.gap_max.map_or(gap, |g| g.max(gap)));
    }

    pub fn message(&self, key: MessageKey) -> Option<&MessageStats> {
        self.index.get(&key).map(|&i| &self.messages[i])
    }

    /// Frame-accounting conservation: per-node counts vs per-message counts.
    pub fn tx_accounting_balanced(&self) -> bool {
        let by_node: u64 = self.node_tx.values().sum();
        let by_msg: u64 = self.messages.iter().map(|m| m.transmissions).sum();
        by_node == by_msg
    }

    pub fn finalize(self) -> RunMetrics {
        let mut per_message = Vec::with_capacity(self.messages.len());
        let mut pdrs = Vec::new();
        let mut arrivals = Vec::new();
        let mut txs = Vec::new();
        let mut any_delivered = Vec::new();
        let mut loss_dists = Vec::new();
        let mut hop_counts: DetHashMap<u32, u64> = DetHashMap::default();
        let mut all_hops = Vec::new();
        let mut empty_snapshot = 0usize;

        for m in &self.messages {
            let pdr = m.pdr();
            match pdr {
                Some(v) => pdrs.push(v),
                None => empty_snapshot += 1,
            }
            let first = m.first_arrival().map(|ns| ns as f64 / 1e9);
            if let Some(s) = first {
                arrivals.push(s);
            }
            txs.push(m.transmissions as f64);
            let delivered = !m.receptions.is_empty();
            any_delivered.push(if delivered { 1.0 } else { 0.0 });
            if !delivered {
                loss_dists.push(m.max_forward_distance_m);
            }
            let mut hops_here = Vec::new();
            for &(_, h) in m.receptions.values() {
                *hop_counts.entry(h).or_insert(0) += 1;
                hops_here.push(h as f64);
                all_hops.push(h as f64);
            }
            let in_snapshot = m
                .area_snapshot
                .iter()
                .filter(|n| m.receptions.contains_key(n))
                .count();
            per_message.push(PerMessage {
                source: m.source,
                seq: m.seq,
                created_s: m.created_at.as_secs_f64(),
                area_population: m.area_snapshot.len(),
                delivered_in_snapshot: in_snapshot,
                delivered_total: m.receptions.len(),
                pdr,
                first_arrival_s: first,
                tx_count: m.transmissions,
                max_forward_distance_m: m.max_forward_distance_m,
                mean_delivery_hops: mean(&hops_here),
            });
        }

        loss_dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n_loss = loss_dists.len();
        let loss_ecdf = loss_dists
            .iter()
            .enumerate()
            .map(|(i, &d)| (d, (i + 1) as f64 / n_loss as f64))
            .collect();

        let mut hop_histogram: Vec<(u32, u64)> = hop_counts.into_iter().collect();
        hop_histogram.sort_unstable();

        let mut drops: Vec<(String, u64)> =
            self.drops.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        drops.sort();

        RunMetrics {
            messages: per_message.len(),
            empty_snapshot_messages: empty_snapshot,
            pdr_mean: mean(&pdrs),
            first_arrival_median_s: median(&arrivals),
            first_arrival_mean_s: mean(&arrivals),
            tx_per_message_mean: mean(&txs),
            delivered_any_fraction: mean(&any_delivered),
            loss_ecdf,
            hop_histogram,
            mean_delivery_hops: mean(&all_hops),
            total_data_tx: self.messages.iter().map(|m| m.transmissions).sum(),
            drops,
            cbr_series: self.cbr_series,
            final_cbr_mean: mean(&self.final_cbr),
            final_cbr_min: self
                .final_cbr
                .iter()
                .copied()
                .min_by(|a, b| a.partial_cmp(b).unwrap()),
            final_cbr_max: self
                .final_cbr
                .iter()
                .copied()
                .max_by(|a, b| a.partial_cmp(b).unwrap()),
            gate_gap_min_s: self.gap_min.map(|g| g as f64 / 1e9),
            gate_gap_max_s: self.gap_max.map(|g| g as f64 / 1e9),
            per_message,
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.6}"),
        None => "---".to_string(),
    }
}

impl RunMetrics {
    /// One row per message. Undelivered first arrivals render as `---`.
    pub fn write_messages_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "source,seq,created_s,area_population,delivered_in_snapshot,delivered_total,\
             pdr,first_arrival_s,tx_count,max_forward_distance_m,mean_delivery_hops"
        )?;
        for m in &self.per_message {
            writeln!(
                f,
                "{},{},{:.3},{},{},{},{},{},{},{:.1},{}",
                m.source,
                m.seq,
                m.created_s,
                m.area_population,
                m.delivered_in_snapshot,
                m.delivered_total,
                fmt_opt(m.pdr),
                fmt_opt(m.first_arrival_s),
                m.tx_count,
                m.max_forward_distance_m,
                fmt_opt(m.mean_delivery_hops),
            )?;
        }
        Ok(())
    }

    pub fn write_summary_json(&self, path: &Path) -> std::io::Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self).map_err(std::io::Error::other)
    }

    /// `distance_m,cum_fraction` over messages that never reached the area.
    pub fn write_ecdf_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "distance_m,cum_fraction")?;
        for (d, p) in &self.loss_ecdf {
            writeln!(f, "{d:.1},{p:.6}")?;
        }
        Ok(())
    }

    pub fn write_hops_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "hops,deliveries")?;
        for (h, c) in &self.hop_histogram {
            writeln!(f, "{h},{c}")?;
        }
        Ok(())
    }

    /// ECDF value at `distance_m` (fraction of lost messages that stalled at
    /// or before that distance); `None` when nothing was lost.
    pub fn loss_ecdf_at(&self, distance_m: f64) -> Option<f64> {
        if self.loss_ecdf.is_empty() {
            return None;
        }
        let mut v = 0.0;
        for &(d, p) in &self.loss_ecdf {
            if d <= distance_m {
                v = p;
            } else {
                break;
            }
        }
        Some(v)
    }
}

/// Mean and 95% confidence half-width of one metric across seeds.
#[derive(Copy, Clone, Debug, serde::Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

pub fn mean_ci(samples: &[f64]) -> Option<MeanCi> {
    Some(MeanCi {
        mean: mean(samples)?,
        ci95: ci95_half_width(samples),
        n: samples.len(),
    })
}

/// Across-seed aggregate of the headline metrics of one experiment cell.
#[derive(serde::Serialize)]
pub struct CellAggregate {
    pub pdr: Option<MeanCi>,
    pub first_arrival_median_s: Option<MeanCi>,
    pub tx_per_message: Option<MeanCi>,
    pub delivered_any_fraction: Option<MeanCi>,
    pub mean_delivery_hops: Option<MeanCi>,
    pub final_cbr: Option<MeanCi>,
}

pub fn aggregate(runs: &[&RunMetrics]) -> CellAggregate {
    let collect = |f: &dyn Fn(&RunMetrics) -> Option<f64>| -> Vec<f64> {
        runs.iter().filter_map(|r| f(r)).collect()
    };
    CellAggregate {
        pdr: mean_ci(&collect(&|r| r.pdr_mean)),
        first_arrival_median_s: mean_ci(&collect(&|r| r.first_arrival_median_s)),
        tx_per_message: mean_ci(&collect(&|r| r.tx_per_message_mean)),
        delivered_any_fraction: mean_ci(&collect(&|r| r.delivered_any_fraction)),
        mean_delivery_hops: mean_ci(&collect(&|r| r.mean_delivery_hops)),
        final_cbr: mean_ci(&collect(&|r| r.final_cbr_mean)),
    }
}

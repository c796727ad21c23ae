//! QoS and safety metrics over the packet ledger and mobility logs.
//!
//! Broadcast delivery is accounted per (packet, intended receiver) pair,
//! where the intended receivers are the nodes in the sender's range when
//! the frame went on air.

use std::collections::BTreeMap;

use crate::radio::{NodeId, Outcome, PacketKind};
use crate::time::SimTime;

/// One (packet, receiver) outcome, packed to keep long runs small.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair {
    node: u32,
    pub outcome: Outcome,
}

const RSU_BIT: u32 = 1 << 31;

impl Pair {
    pub fn new(receiver: NodeId, outcome: Outcome) -> Self {
        let node = match receiver {
            NodeId::Rsu(i) => i | RSU_BIT,
            NodeId::Vehicle(i) => i,
        };
        Pair { node, outcome }
    }

    pub fn receiver(&self) -> NodeId {
        if self.node & RSU_BIT != 0 {
            NodeId::Rsu(self.node & !RSU_BIT)
        } else {
            NodeId::Vehicle(self.node)
        }
    }
}

/// Identifies the blockage episode a warning belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WarningTag {
    pub rsu: u32,
    pub episode: u32,
    pub blocked: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PacketRecord {
    pub seq: u64,
    pub kind: PacketKind,
    pub size: u32,
    pub src: NodeId,
    pub created_at: SimTime,
    pub tx_start: Option<SimTime>,
    /// Delivered pairs complete at this instant.
    pub tx_end: Option<SimTime>,
    pub warning: Option<WarningTag>,
    pub pairs: Vec<Pair>,
}

impl PacketRecord {
    pub fn delivered_at(&self, pair: &Pair) -> Option<SimTime> {
        (pair.outcome == Outcome::Delivered).then_some(self.tx_end).flatten()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PacketLedger {
    pub records: Vec<PacketRecord>,
    /// Vehicle ids are `0..vehicle_count`.
    pub vehicle_count: u32,
    /// RSU-to-TCU reports carried over the wired link.
    pub wired_reports: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PairTotals {
    pub sent_frames: u64,
    pub intended: u64,
    pub delivered: u64,
    pub collision: u64,
    pub random_loss: u64,
    pub pending: u64,
    pub dropped_bytes: u64,
    pub delivered_bytes: u64,
}

impl PairTotals {
    pub fn dropped(&self) -> u64 {
        self.collision + self.random_loss
    }

    pub fn is_conserved(&self) -> bool {
        self.intended == self.delivered + self.dropped() + self.pending
    }
}

impl PacketLedger {
    fn records_of(&self, kind: Option<PacketKind>) -> impl Iterator<Item = &PacketRecord> {
        self.records.iter().filter(move |r| kind.map_or(true, |k| r.kind == k))
    }

    /// Pair counts over all radio frames, or over one kind.
    pub fn totals(&self, kind: Option<PacketKind>) -> PairTotals {
        let mut t = PairTotals::default();
        for r in self.records_of(kind) {
            if r.tx_start.is_some() {
                t.sent_frames += 1;
            }
            for p in &r.pairs {
                t.intended += 1;
                match p.outcome {
                    Outcome::Delivered => {
                        t.delivered += 1;
                        t.delivered_bytes += u64::from(r.size);
                    }
                    Outcome::Collision => {
                        t.collision += 1;
                        t.dropped_bytes += u64::from(r.size);
                    }
                    Outcome::RandomLoss => {
                        t.random_loss += 1;
                        t.dropped_bytes += u64::from(r.size);
                    }
                    Outcome::Pending => t.pending += 1,
                }
            }
        }
        t
    }
}

pub fn pdr(ledger: &PacketLedger, kind: Option<PacketKind>) -> Option<f64> {
    let t = ledger.totals(kind);
    let denom = t.intended - t.pending;
    (denom > 0).then(|| 100.0 * t.delivered as f64 / denom as f64)
}

/// Mean of `delivered_at - created_at` over delivered pairs, in ms.
pub fn mean_e2e_delay(ledger: &PacketLedger, kind: Option<PacketKind>) -> Option<f64> {
    let (mut sum_ns, mut n) = (0u128, 0u64);
    for r in ledger.records_of(kind) {
        for p in &r.pairs {
            if let Some(at) = r.delivered_at(p) {
                sum_ns += u128::from((at - r.created_at).as_nanos());
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum_ns as f64 / n as f64 / 1e6)
}

/// Delivered payload bits per second of simulated time.
pub fn throughput(ledger: &PacketLedger, kind: Option<PacketKind>, duration: f64) -> f64 {
    ledger.totals(kind).delivered_bytes as f64 * 8.0 / duration
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PacketLoss {
    pub count: u64,
    pub bytes: u64,
    pub collision: u64,
    pub random_loss: u64,
}

pub fn packet_loss(ledger: &PacketLedger, kind: Option<PacketKind>) -> PacketLoss {
    let t = ledger.totals(kind);
    PacketLoss {
        count: t.dropped(),
        bytes: t.dropped_bytes,
        collision: t.collision,
        random_loss: t.random_loss,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayStats {
    pub mean: f64,
    pub p95: f64,
    pub max: f64,
    pub samples: usize,
}

/// Nearest-rank summary of a sample set, in the sample's unit.
pub fn summarize(samples: &mut [f64]) -> Option<DelayStats> {
    if samples.is_empty() {
        return None;
    }
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    Some(DelayStats {
        mean: samples.iter().sum::<f64>() / n as f64,
        p95: samples[rank - 1],
        max: samples[n - 1],
        samples: n,
    })
}

/// Per (episode, vehicle): first delivered blocked warning minus the
/// episode's first warning issue time, in ms.
pub fn warning_propagation(ledger: &PacketLedger) -> Option<DelayStats> {
    let mut first_issue: BTreeMap<(u32, u32), SimTime> = BTreeMap::new();
    let mut first_rx: BTreeMap<(u32, u32, u32), SimTime> = BTreeMap::new();
    for r in ledger.records_of(Some(PacketKind::Warning)) {
        let Some(tag) = r.warning.filter(|w| w.blocked) else {
            continue;
        };
        let key = (tag.rsu, tag.episode);
        let issue = first_issue.entry(key).or_insert(r.created_at);
        *issue = (*issue).min(r.created_at);
        for p in &r.pairs {
            if let (NodeId::Vehicle(v), Some(at)) = (p.receiver(), r.delivered_at(p)) {
                let rx = first_rx.entry((tag.rsu, tag.episode, v)).or_insert(at);
                *rx = (*rx).min(at);
            }
        }
    }
    let mut delays: Vec<f64> = first_rx
        .iter()
        .map(|((rsu, ep, _), at)| (*at - first_issue[&(*rsu, *ep)]).as_millis_f64())
        .collect();
    summarize(&mut delays)
}

/// Delivered-pair counts per vehicle id, zeros included.
pub fn per_vehicle_rx(ledger: &PacketLedger) -> Vec<u64> {
    let mut counts = vec![0u64; ledger.vehicle_count as usize];
    for r in &ledger.records {
        for p in &r.pairs {
            if let (NodeId::Vehicle(v), Outcome::Delivered) = (p.receiver(), p.outcome) {
                if let Some(c) = counts.get_mut(v as usize) {
                    *c += 1;
                }
            }
        }
    }
    counts
}

/// One violation per vehicle trip: stationary in the box longer than the
/// dwell limit, or crossing the stop line while holding an active warning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BoxViolations {
    pub stationary: u64,
    pub warned_entry: u64,
}

impl BoxViolations {
    pub fn total(&self) -> u64 {
        self.stationary + self.warned_entry
    }
}

/// Mobility-side results, computed by the engine during the run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MobilityStats {
    pub blind_count: u64,
    pub box_violations: BoxViolations,
    pub completed_trips: u64,
    pub mean_travel_time_s: Option<f64>,
    pub green_crossings: u64,
    pub green_phases: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KindMetrics {
    pub pdr_percent: Option<f64>,
    pub mean_e2e_delay_ms: Option<f64>,
    pub throughput_bps: f64,
    pub loss: PacketLoss,
    pub totals: PairTotals,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub pdr_percent: Option<f64>,
    pub mean_e2e_delay_ms: Option<f64>,
    pub throughput_bps: f64,
    pub loss: PacketLoss,
    pub totals: PairTotals,
    pub per_kind: BTreeMap<PacketKind, KindMetrics>,
    pub blind_vehicle_count: u64,
    pub warning_prop_delay: Option<DelayStats>,
    pub per_vehicle_rx: Vec<u64>,
    pub box_violations: BoxViolations,
    pub mean_travel_time_s: Option<f64>,
    pub completed_trips: u64,
    pub green_crossings: u64,
    pub green_crossings_per_phase: Option<f64>,
    pub wired_reports: u64,
}

fn kind_metrics(ledger: &PacketLedger, kind: Option<PacketKind>, duration: f64) -> KindMetrics {
    KindMetrics {
        pdr_percent: pdr(ledger, kind),
        mean_e2e_delay_ms: mean_e2e_delay(ledger, kind),
        throughput_bps: throughput(ledger, kind, duration),
        loss: packet_loss(ledger, kind),
        totals: ledger.totals(kind),
    }
}

pub fn compute_metrics(ledger: &PacketLedger, mobility: &MobilityStats, duration: f64) -> MetricsReport {
    let all = kind_metrics(ledger, None, duration);
    let per_kind = PacketKind::RADIO
        .iter()
        .map(|k| (*k, kind_metrics(ledger, Some(*k), duration)))
        .collect();
    MetricsReport {
        pdr_percent: all.pdr_percent,
        mean_e2e_delay_ms: all.mean_e2e_delay_ms,
        throughput_bps: all.throughput_bps,
        loss: all.loss,
        totals: all.totals,
        per_kind,
        blind_vehicle_count: mobility.blind_count,
        warning_prop_delay: warning_propagation(ledger),
        per_vehicle_rx: per_vehicle_rx(ledger),
        box_violations: mobility.box_violations,
        mean_travel_time_s: mobility.mean_travel_time_s,
        completed_trips: mobility.completed_trips,
        green_crossings: mobility.green_crossings,
        green_crossings_per_phase: (mobility.green_phases > 0)
            .then(|| mobility.green_crossings as f64 / mobility.green_phases as f64),
        wired_reports: ledger.wired_reports,
    }
}

//! Shared broadcast channel.
//!
//! Unit-disk propagation with zero propagation delay, unacknowledged
//! broadcast CSMA/CA with a fixed contention window, and per-receiver
//! outcomes with no capture: any overlap at a receiver destroys every frame
//! involved.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::config::SimConfig;
use crate::geometry::Point;
use crate::protocol::Payload;
use crate::time::SimTime;

/// Default MAC header plus FCS, in bytes.
pub const MAC_HEADER_BYTES: u32 = 36;
/// Default PHY preamble and header duration, in seconds.
pub const PHY_OVERHEAD_SECS: f64 = 40e-6;

/// A radio or wired endpoint. RSUs order before vehicles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Rsu(u32),
    Vehicle(u32),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Rsu(i) => write!(f, "rsu{i}"),
            NodeId::Vehicle(i) => write!(f, "veh{i}"),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |digits: &str| digits.parse::<u32>().map_err(|e| format!("`{s}`: {e}"));
        if let Some(rest) = s.strip_prefix("rsu") {
            parse(rest).map(NodeId::Rsu)
        } else if let Some(rest) = s.strip_prefix("veh") {
            parse(rest).map(NodeId::Vehicle)
        } else {
            Err(format!("unknown node `{s}`"))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PacketKind {
    Beacon,
    Warning,
    Report,
}

impl PacketKind {
    pub const RADIO: [PacketKind; 2] = [PacketKind::Beacon, PacketKind::Warning];
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PacketKind::Beacon => "beacon",
            PacketKind::Warning => "warning",
            PacketKind::Report => "report",
        })
    }
}

impl FromStr for PacketKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "beacon" => Ok(PacketKind::Beacon),
            "warning" => Ok(PacketKind::Warning),
            "report" => Ok(PacketKind::Report),
            other => Err(format!("unknown packet kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub seq: u64,
    pub kind: PacketKind,
    pub size: u32,
    pub src: NodeId,
    pub created_at: SimTime,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub packet: Packet,
    pub sender_pos: Point,
    pub sender_range: f64,
    pub t_start: SimTime,
    pub t_end: SimTime,
    pub attempt: u32,
    /// Intended receivers and their positions, fixed at `t_start`.
    pub receivers: Vec<(NodeId, Point)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    Delivered,
    Collision,
    RandomLoss,
    /// Frame still on air when the run ended.
    Pending,
}

impl Outcome {
    pub fn code(self) -> char {
        match self {
            Outcome::Delivered => 'D',
            Outcome::Collision => 'C',
            Outcome::RandomLoss => 'L',
            Outcome::Pending => 'P',
        }
    }

    pub fn from_code(c: char) -> Option<Outcome> {
        match c {
            'D' => Some(Outcome::Delivered),
            'C' => Some(Outcome::Collision),
            'L' => Some(Outcome::RandomLoss),
            'P' => Some(Outcome::Pending),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeliveryOutcome {
    pub seq: u64,
    pub receiver: NodeId,
    pub outcome: Outcome,
    pub delivered_at: Option<SimTime>,
}

/// Frame duration with the default 802.11p-like overheads, in seconds.
pub fn airtime(size: u32, data_rate: f64) -> f64 {
    airtime_with(size, data_rate, MAC_HEADER_BYTES, PHY_OVERHEAD_SECS)
}

pub fn airtime_with(size: u32, data_rate: f64, mac_header_bytes: u32, phy_overhead: f64) -> f64 {
    phy_overhead + f64::from(size + mac_header_bytes) * 8.0 / data_rate
}

/// Boundary-inclusive unit-disk test.
pub fn in_range(a: Point, b: Point, range: f64) -> bool {
    a.distance(b) <= range
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacParams {
    pub slot: SimTime,
    pub contention_window: u32,
    pub data_rate: f64,
    pub mac_header_bytes: u32,
    pub phy_overhead: f64,
    pub p_loss: f64,
    pub vehicle_range: f64,
    pub rsu_range: f64,
}

impl MacParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        MacParams {
            slot: SimTime::from_secs(cfg.slot_time),
            contention_window: cfg.contention_window,
            data_rate: cfg.data_rate,
            mac_header_bytes: cfg.mac_header_bytes,
            phy_overhead: cfg.phy_overhead,
            p_loss: cfg.p_loss,
            vehicle_range: cfg.vehicle_range,
            rsu_range: cfg.sensor_range,
        }
    }

    pub fn airtime(&self, size: u32) -> SimTime {
        SimTime::from_secs(airtime_with(size, self.data_rate, self.mac_header_bytes, self.phy_overhead))
    }

    pub fn range_of(&self, node: NodeId) -> f64 {
        match node {
            NodeId::Rsu(_) => self.rsu_range,
            NodeId::Vehicle(_) => self.vehicle_range,
        }
    }
}

/// Start time of a frame from a node that becomes ready at `ready_at`, given
/// every busy interval `[start, end)` the node will hear.
///
/// An idle channel means immediate transmission. Otherwise the node waits
/// for idle, draws a backoff in `[0, cw)` slots, and freezes the countdown
/// whenever the channel turns busy again. A transmission that starts at the
/// very instant a countdown expires is not heard in time to stop it.
pub fn csma_access<R: Rng>(
    ready_at: SimTime,
    busy: &[(SimTime, SimTime)],
    slot: SimTime,
    contention_window: u32,
    rng: &mut R,
) -> SimTime {
    let busy_until = |t: SimTime, inclusive: bool| {
        busy.iter()
            .filter(|(s, e)| (if inclusive { *s <= t } else { *s < t }) && t < *e)
            .map(|(_, e)| *e)
            .max()
    };
    // First idle instant at or after `t`; a frame starting exactly at `t`
    // keeps the node waiting.
    let settle = |mut t: SimTime| {
        while let Some(end) = busy_until(t, true) {
            t = end;
        }
        t
    };
    let Some(end) = busy_until(ready_at, false) else {
        return ready_at;
    };
    let mut t = settle(end);
    let mut remaining = u64::from(rng.gen_range(0..contention_window));
    loop {
        let expiry = SimTime::from_nanos(t.as_nanos() + remaining * slot.as_nanos());
        match busy.iter().map(|(s, _)| *s).filter(|s| *s > t && *s < expiry).min() {
            None => return expiry,
            Some(busy_start) => {
                remaining -= (busy_start - t).as_nanos() / slot.as_nanos();
                t = settle(busy_start);
            }
        }
    }
}

/// Work the engine must schedule on behalf of the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MacAction {
    StartTx { node: NodeId, at: SimTime },
    EndTx { node: NodeId, seq: u64, at: SimTime },
    BackoffEnd { node: NodeId, generation: u64, at: SimTime },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum MacState {
    Idle,
    /// A `StartTx` is scheduled for now.
    StartPending,
    /// Waiting for idle before drawing a backoff.
    Deferring,
    Counting { remaining: u64, since: SimTime },
    /// Countdown interrupted by a busy channel.
    Frozen { remaining: u64 },
    Transmitting,
}

#[derive(Debug)]
struct NodeMac {
    queue: VecDeque<Packet>,
    state: MacState,
    generation: u64,
}

impl NodeMac {
    fn new() -> Self {
        NodeMac {
            queue: VecDeque::new(),
            state: MacState::Idle,
            generation: 0,
        }
    }
}

/// Positions of every node currently on the network.
pub trait NodeView {
    fn position(&self, node: NodeId) -> Option<Point>;
    /// All on-network nodes, in ascending id order.
    fn nodes(&self) -> Vec<(NodeId, Point)>;
}

/// Event-driven implementation of the MAC for every node on one channel.
#[derive(Debug)]
pub struct Channel {
    params: MacParams,
    macs: BTreeMap<NodeId, NodeMac>,
    waiting: BTreeSet<NodeId>,
    counting: BTreeSet<NodeId>,
    /// Frames on air.
    active: Vec<Transmission>,
    /// Ended frames that may still overlap a frame on air.
    recent: Vec<Transmission>,
}

impl Channel {
    pub fn new(params: MacParams) -> Self {
        Channel {
            params,
            macs: BTreeMap::new(),
            waiting: BTreeSet::new(),
            counting: BTreeSet::new(),
            active: Vec::new(),
            recent: Vec::new(),
        }
    }

    pub fn params(&self) -> &MacParams {
        &self.params
    }

    pub fn active(&self) -> &[Transmission] {
        &self.active
    }

    /// Whether `pos` hears a frame on air at `now`. A frame starting exactly
    /// at `now` counts only when `include_starting` is set.
    pub fn is_busy_at(&self, pos: Point, now: SimTime, include_starting: bool) -> bool {
        self.active.iter().any(|tx| {
            (tx.t_start < now || (include_starting && tx.t_start == now))
                && now < tx.t_end
                && in_range(tx.sender_pos, pos, tx.sender_range)
        })
    }

    fn sense_and_go(&mut self, node: NodeId, pos: Option<Point>, now: SimTime) -> Vec<MacAction> {
        let busy = pos.map_or(false, |p| self.is_busy_at(p, now, false));
        let mac = self.macs.get_mut(&node).expect("node registered");
        if busy {
            mac.state = MacState::Deferring;
            self.waiting.insert(node);
            Vec::new()
        } else {
            mac.state = MacState::StartPending;
            vec![MacAction::StartTx { node, at: now }]
        }
    }

    /// Queues a frame; starts channel access if the node was idle.
    pub fn enqueue(&mut self, packet: Packet, now: SimTime, view: &dyn NodeView) -> Vec<MacAction> {
        let node = packet.src;
        let mac = self.macs.entry(node).or_insert_with(NodeMac::new);
        mac.queue.push_back(packet);
        if mac.state != MacState::Idle {
            return Vec::new();
        }
        self.sense_and_go(node, view.position(node), now)
    }

    /// Puts the head-of-line frame on air. Counting nodes that hear it freeze.
    pub fn start_tx(&mut self, node: NodeId, now: SimTime, view: &dyn NodeView) -> Vec<MacAction> {
        let Some(mac) = self.macs.get_mut(&node) else {
            return Vec::new();
        };
        if mac.state != MacState::StartPending {
            return Vec::new();
        }
        let (Some(packet), Some(sender_pos)) = (mac.queue.front().cloned(), view.position(node)) else {
            mac.queue.clear();
            mac.state = MacState::Idle;
            return Vec::new();
        };
        mac.state = MacState::Transmitting;
        let sender_range = self.params.range_of(node);
        let receivers = view
            .nodes()
            .into_iter()
            .filter(|(id, p)| *id != node && in_range(sender_pos, *p, sender_range))
            .collect();
        let t_end = now + self.params.airtime(packet.size);
        let seq = packet.seq;
        self.active.push(Transmission {
            packet,
            sender_pos,
            sender_range,
            t_start: now,
            t_end,
            attempt: 1,
            receivers,
        });

        let slot = self.params.slot.as_nanos();
        let hearing: Vec<NodeId> = self
            .counting
            .iter()
            .copied()
            .filter(|n| *n != node && view.position(*n).map_or(false, |p| in_range(sender_pos, p, sender_range)))
            .collect();
        for other in hearing {
            let mac = self.macs.get_mut(&other).expect("counting node registered");
            if let MacState::Counting { remaining, since } = mac.state {
                let expiry = since.as_nanos() + remaining * slot;
                if expiry > now.as_nanos() {
                    let elapsed = (now - since).as_nanos() / slot;
                    mac.state = MacState::Frozen { remaining: remaining - elapsed };
                    mac.generation += 1;
                    self.counting.remove(&other);
                    self.waiting.insert(other);
                }
            }
        }
        vec![MacAction::EndTx { node, seq, at: t_end }]
    }

    /// Takes the frame off the air. Returns the finished transmission, the
    /// transmissions that overlapped it, and follow-up MAC work.
    pub fn end_tx<R: Rng>(
        &mut self,
        node: NodeId,
        now: SimTime,
        view: &dyn NodeView,
        backoff_rng: &mut R,
    ) -> Option<(Transmission, Vec<Transmission>, Vec<MacAction>)> {
        let idx = self.active.iter().position(|tx| tx.packet.src == node && tx.t_end == now)?;
        let tx = self.active.remove(idx);
        let overlapping: Vec<Transmission> = self
            .active
            .iter()
            .chain(self.recent.iter())
            .filter(|o| o.t_start < tx.t_end && o.t_end > tx.t_start)
            .cloned()
            .collect();
        self.recent.push(tx.clone());
        let horizon = self.active.iter().map(|t| t.t_start).min().unwrap_or(now);
        self.recent.retain(|t| t.t_end > horizon);

        let mut actions = Vec::new();
        if let Some(mac) = self.macs.get_mut(&node) {
            mac.queue.pop_front();
            mac.state = MacState::Idle;
            if !mac.queue.is_empty() {
                actions.extend(self.sense_and_go(node, view.position(node), now));
            }
        }

        let waiting: Vec<NodeId> = self.waiting.iter().copied().collect();
        for other in waiting {
            let Some(pos) = view.position(other) else { continue };
            if self.is_busy_at(pos, now, true) {
                continue;
            }
            let mac = self.macs.get_mut(&other).expect("waiting node registered");
            let remaining = match mac.state {
                MacState::Deferring => u64::from(backoff_rng.gen_range(0..self.params.contention_window)),
                MacState::Frozen { remaining } => remaining,
                _ => continue,
            };
            self.waiting.remove(&other);
            if remaining == 0 {
                mac.state = MacState::StartPending;
                actions.push(MacAction::StartTx { node: other, at: now });
            } else {
                mac.generation += 1;
                mac.state = MacState::Counting { remaining, since: now };
                self.counting.insert(other);
                actions.push(MacAction::BackoffEnd {
                    node: other,
                    generation: mac.generation,
                    at: SimTime::from_nanos(now.as_nanos() + remaining * self.params.slot.as_nanos()),
                });
            }
        }
        Some((tx, overlapping, actions))
    }

    pub fn backoff_end(&mut self, node: NodeId, generation: u64, now: SimTime) -> Vec<MacAction> {
        let Some(mac) = self.macs.get_mut(&node) else {
            return Vec::new();
        };
        match mac.state {
            MacState::Counting { .. } if mac.generation == generation => {
                mac.state = MacState::StartPending;
                self.counting.remove(&node);
                vec![MacAction::StartTx { node, at: now }]
            }
            _ => Vec::new(),
        }
    }

    /// Drops queued frames of a node leaving the network. A frame already
    /// on air finishes. Returns the sequence numbers discarded.
    pub fn detach(&mut self, node: NodeId) -> Vec<u64> {
        let Some(mac) = self.macs.get_mut(&node) else {
            return Vec::new();
        };
        if mac.state == MacState::Transmitting {
            let dropped = mac.queue.iter().skip(1).map(|p| p.seq).collect();
            mac.queue.truncate(1);
            return dropped;
        }
        let dropped = mac.queue.drain(..).map(|p| p.seq).collect();
        mac.state = MacState::Idle;
        mac.generation += 1;
        self.waiting.remove(&node);
        self.counting.remove(&node);
        dropped
    }

    /// Frames still on air, for end-of-run accounting.
    pub fn in_flight(&self) -> &[Transmission] {
        &self.active
    }
}

/// Per-receiver outcomes for a finished frame.
///
/// A receiver loses the frame when any other overlapping frame's sender
/// reaches it, including its own transmission. Survivors are then subject
/// to independent random loss.
pub fn resolve_deliveries<R: Rng>(
    tx: &Transmission,
    overlapping: &[Transmission],
    p_loss: f64,
    loss_rng: &mut R,
) -> Vec<DeliveryOutcome> {
    tx.receivers
        .iter()
        .map(|(receiver, pos)| {
            let collided = overlapping.iter().any(|o| {
                o.packet.seq != tx.packet.seq
                    && (o.packet.src == *receiver || in_range(o.sender_pos, *pos, o.sender_range))
            });
            let outcome = if collided {
                Outcome::Collision
            } else if p_loss > 0.0 && loss_rng.gen_bool(p_loss) {
                Outcome::RandomLoss
            } else {
                Outcome::Delivered
            };
            DeliveryOutcome {
                seq: tx.packet.seq,
                receiver: *receiver,
                outcome,
                delivered_at: (outcome == Outcome::Delivered).then_some(tx.t_end),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::BeaconPayload;
    use crate::geometry::Direction;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;
    use rand::Rng;
    use rand::rngs::mock::StepRng;

    const US: u64 = 1_000;
    const MS: u64 = 1_000_000;

    struct Static(Vec<(NodeId, Point)>);

    impl NodeView for Static {
        fn position(&self, node: NodeId) -> Option<Point> {
            self.0.iter().find(|(n, _)| *n == node).map(|(_, p)| *p)
        }
        fn nodes(&self) -> Vec<(NodeId, Point)> {
            let mut v = self.0.clone();
            v.sort_by_key(|(n, _)| *n);
            v
        }
    }

    fn packet(seq: u64, src: NodeId, size: u32, at: SimTime) -> Packet {
        Packet {
            seq,
            kind: PacketKind::Beacon,
            size,
            src,
            created_at: at,
            payload: Payload::Beacon(BeaconPayload {
                vehicle: 0,
                position: Point::default(),
                speed: 0.0,
                approach: Direction::N,
            }),
        }
    }

    fn params() -> MacParams {
        MacParams::from_config(&SimConfig::default())
    }

    fn t(ns: u64) -> SimTime {
        SimTime::from_nanos(ns)
    }

    #[test]
    fn airtime_examples() {
        assert!((airtime(512, 6e6) - 770.666_666e-6).abs() < 1e-9);
        assert!((airtime(256, 6e6) - 429.333_333e-6).abs() < 1e-9);
        assert_eq!(params().airtime(512).as_nanos(), 770_667);
        assert_eq!(params().airtime(256).as_nanos(), 429_333);
        assert!(airtime(512, 12e6) < airtime(512, 6e6));
    }

    #[test]
    fn range_is_boundary_inclusive() {
        let a = Point::new(0.0, 0.0);
        assert!(in_range(a, a, 200.0));
        assert!(in_range(a, Point::new(200.0, 0.0), 200.0));
        assert!(!in_range(a, Point::new(200.01, 0.0), 200.0));
    }

    #[test]
    fn csma_idle_channel_sends_at_once() {
        let mut rng = stream(1, Stream::Backoff);
        assert_eq!(csma_access(t(500 * MS), &[], t(13 * US), 16, &mut rng), t(500 * MS));
    }

    #[test]
    fn csma_defers_then_zero_backoff() {
        // StepRng yielding 0 makes gen_range(0..16) draw 0.
        let mut rng = StepRng::new(0, 0);
        let busy = [(t(200 * MS), t(1000 * MS))];
        assert_eq!(csma_access(t(500 * MS), &busy, t(13 * US), 16, &mut rng), t(1000 * MS));
    }

    #[test]
    fn csma_freezes_and_resumes_countdown() {
        // Busy until 1 ms, then again 10 us into the countdown.
        let busy = [(t(0), t(MS)), (t(MS + 10 * US), t(2 * MS))];
        let slot = t(13 * US);
        let mut rng = stream(5, Stream::Backoff);
        let k = {
            let mut probe = stream(5, Stream::Backoff);
            probe.gen_range(0..16u32) as u64
        };
        let start = csma_access(t(US), &busy, slot, 16, &mut rng);
        let expected = if k == 0 { MS } else { 2 * MS + k * 13 * US };
        assert_eq!(start, t(expected));
    }

    #[test]
    fn deliveries_uncontended() {
        let sender = NodeId::Rsu(0);
        let tx = Transmission {
            packet: packet(1, sender, 256, t(0)),
            sender_pos: Point::new(0.0, 0.0),
            sender_range: 75.0,
            t_start: t(0),
            t_end: t(429_333),
            attempt: 1,
            receivers: vec![(NodeId::Vehicle(0), Point::new(30.0, 0.0))],
        };
        let out = resolve_deliveries(&tx, &[], 0.0, &mut stream(1, Stream::Loss));
        assert_eq!(
            out,
            vec![DeliveryOutcome {
                seq: 1,
                receiver: NodeId::Vehicle(0),
                outcome: Outcome::Delivered,
                delivered_at: Some(t(429_333)),
            }]
        );
    }

    #[test]
    fn random_loss_applies_to_survivors_only() {
        let tx = Transmission {
            packet: packet(1, NodeId::Vehicle(1), 512, t(0)),
            sender_pos: Point::new(0.0, 0.0),
            sender_range: 200.0,
            t_start: t(0),
            t_end: t(770_667),
            attempt: 1,
            receivers: vec![(NodeId::Vehicle(0), Point::new(30.0, 0.0))],
        };
        let out = resolve_deliveries(&tx, &[], 1.0, &mut stream(1, Stream::Loss));
        assert_eq!(out[0].outcome, Outcome::RandomLoss);
        assert_eq!(out[0].delivered_at, None);
    }

    /// Runs a list of (ready time, node, packet size) through the channel
    /// with a minimal event loop and returns every finished transmission
    /// with its outcomes.
    fn drive(
        view: &Static,
        ready: &[(SimTime, NodeId, u32)],
        seed: u64,
    ) -> Vec<(Transmission, Vec<DeliveryOutcome>)> {
        let mut ch = Channel::new(params());
        let mut rng = stream(seed, Stream::Backoff);
        let mut loss = stream(seed, Stream::Loss);
        // (time, order, action)
        let mut pending: Vec<(SimTime, u64, Option<MacAction>, Option<(NodeId, u32, u64)>)> = Vec::new();
        let mut order = 0;
        for (i, (at, node, size)) in ready.iter().enumerate() {
            pending.push((*at, order, None, Some((*node, *size, i as u64))));
            order += 1;
        }
        let mut done = Vec::new();
        while !pending.is_empty() {
            pending.sort_by_key(|(at, o, _, _)| (*at, *o));
            let (now, _, action, ready) = pending.remove(0);
            let follow = match (action, ready) {
                (None, Some((node, size, seq))) => ch.enqueue(packet(seq, node, size, now), now, view),
                (Some(MacAction::StartTx { node, .. }), _) => ch.start_tx(node, now, view),
                (Some(MacAction::EndTx { node, .. }), _) => {
                    let (tx, overlap, follow) = ch.end_tx(node, now, view, &mut rng).unwrap();
                    let out = resolve_deliveries(&tx, &overlap, 0.0, &mut loss);
                    done.push((tx, out));
                    follow
                }
                (Some(MacAction::BackoffEnd { node, generation, .. }), _) => ch.backoff_end(node, generation, now),
                _ => unreachable!(),
            };
            for a in follow {
                let at = match a {
                    MacAction::StartTx { at, .. } | MacAction::EndTx { at, .. } | MacAction::BackoffEnd { at, .. } => at,
                };
                pending.push((at, order, Some(a), None));
                order += 1;
            }
        }
        done
    }

    #[test]
    fn overlapping_frames_collide_at_common_receiver() {
        let a = NodeId::Vehicle(0);
        let c = NodeId::Vehicle(2);
        let b = NodeId::Vehicle(1);
        let view = Static(vec![
            (a, Point::new(0.0, 0.0)),
            (b, Point::new(150.0, 0.0)),
            (c, Point::new(300.0, 0.0)),
        ]);
        // A and C cannot hear each other (300 m > 200 m): hidden terminals.
        let done = drive(&view, &[(t(0), a, 512), (t(100 * US), c, 256)], 1);
        assert_eq!(done.len(), 2);
        for (tx, outs) in &done {
            assert_eq!(tx.receivers.len(), 1);
            assert_eq!(outs[0].receiver, b);
            assert_eq!(outs[0].outcome, Outcome::Collision);
        }
        let c_tx = &done.iter().find(|(tx, _)| tx.packet.src == c).unwrap().0;
        assert_eq!(c_tx.t_start, t(100 * US), "hidden sender passed carrier sense");
    }

    #[test]
    fn carrier_sense_serializes_neighbours() {
        let a = NodeId::Vehicle(0);
        let b = NodeId::Vehicle(1);
        let view = Static(vec![(a, Point::new(0.0, 0.0)), (b, Point::new(50.0, 0.0))]);
        let done = drive(&view, &[(t(0), a, 512), (t(100 * US), b, 512)], 3);
        assert_eq!(done.len(), 2);
        let (first, second) = (&done[0].0, &done[1].0);
        assert!(second.t_start >= first.t_end);
        assert!(done.iter().all(|(_, outs)| outs.iter().all(|o| o.outcome == Outcome::Delivered)));
    }

    #[test]
    fn simultaneous_contenders_smaller_draw_wins() {
        let blocker = NodeId::Rsu(0);
        let a = NodeId::Vehicle(0);
        let b = NodeId::Vehicle(1);
        let view = Static(vec![
            (blocker, Point::new(0.0, 0.0)),
            (a, Point::new(10.0, 0.0)),
            (b, Point::new(20.0, 0.0)),
        ]);
        for seed in 0..40 {
            let done = drive(&view, &[(t(0), blocker, 512), (t(US), a, 512), (t(US), b, 512)], seed);
            let start = |n| done.iter().find(|(tx, _)| tx.packet.src == n).unwrap().0.t_start;
            let (sa, sb) = (start(a), start(b));
            if sa == sb {
                // Equal draws: both transmit and collide at each other.
                continue;
            }
            let (first, second) = if sa < sb { (sa, sb) } else { (sb, sa) };
            let first_end = first + params().airtime(512);
            assert!(second >= first_end, "loser deferred behind the winner");
        }
    }

    #[test]
    fn channel_matches_closed_form_for_single_contender() {
        // One contender against scripted traffic from a node it always hears.
        for seed in 0..50u64 {
            let blocker = NodeId::Rsu(0);
            let node = NodeId::Vehicle(0);
            let view = Static(vec![(blocker, Point::new(0.0, 0.0)), (node, Point::new(10.0, 0.0))]);
            let air = params().airtime(512).as_nanos();
            let blocker_ready = [0, air + 20 * US, 2 * air + 150 * US];
            let mut ready: Vec<_> = blocker_ready.iter().map(|r| (t(*r), blocker, 512)).collect();
            ready.push((t(300 * US), node, 512));
            let done = drive(&view, &ready, seed);
            let busy: Vec<_> = done
                .iter()
                .filter(|(tx, _)| tx.packet.src == blocker)
                .map(|(tx, _)| (tx.t_start, tx.t_end))
                .collect();
            let actual = done.iter().find(|(tx, _)| tx.packet.src == node).unwrap().0.t_start;
            // The blocker never defers to the contender in this script unless
            // the contender is on air; only compare when the blocker was never delayed.
            let blocker_on_time = busy.iter().zip(blocker_ready).all(|((s, _), r)| s.as_nanos() == r);
            if !blocker_on_time {
                continue;
            }
            let expected = csma_access(t(300 * US), &busy, params().slot, 16, &mut stream(seed, Stream::Backoff));
            assert_eq!(actual, expected, "seed {seed}");
        }
    }

    proptest! {
        #[test]
        fn airtime_is_monotone(size in 1u32..4000, rate in 1000.0f64..5e7) {
            prop_assert!(airtime(size + 1, rate) > airtime(size, rate));
            prop_assert!(airtime(size, rate * 2.0) < airtime(size, rate));
        }

        #[test]
        fn every_intended_pair_gets_one_outcome(
            xs in proptest::collection::vec(0.0f64..600.0, 2..8),
            offsets in proptest::collection::vec(0u64..3_000_000, 2..8),
            seed in 0u64..1000,
        ) {
            let n = xs.len().min(offsets.len());
            let nodes: Vec<_> = (0..n).map(|i| (NodeId::Vehicle(i as u32), Point::new(xs[i], 0.0))).collect();
            let view = Static(nodes.clone());
            let ready: Vec<_> = (0..n).map(|i| (t(offsets[i]), nodes[i].0, 512)).collect();
            let done = drive(&view, &ready, seed);
            prop_assert_eq!(done.len(), n);
            for (tx, outs) in &done {
                prop_assert_eq!(tx.receivers.len(), outs.len());
                let ids: BTreeSet<_> = outs.iter().map(|o| o.receiver).collect();
                prop_assert_eq!(ids.len(), outs.len());
                prop_assert!(!ids.contains(&tx.packet.src));
            }
            // Collision symmetry: two overlapping frames that both reach a
            // common receiver both fail there.
            for (a, oa) in &done {
                for (b, ob) in &done {
                    if a.packet.seq >= b.packet.seq || !(a.t_start < b.t_end && b.t_start < a.t_end) { continue; }
                    for o in oa {
                        if let Some(p) = ob.iter().find(|p| p.receiver == o.receiver) {
                            prop_assert_eq!(o.outcome, Outcome::Collision);
                            prop_assert_eq!(p.outcome, Outcome::Collision);
                        }
                    }
                }
            }
        }

        #[test]
        fn single_transmitter_always_delivers(x in 0.0f64..199.0, size in 1u32..2000) {
            let a = NodeId::Vehicle(0);
            let b = NodeId::Vehicle(1);
            let view = Static(vec![(a, Point::new(0.0, 0.0)), (b, Point::new(x, 0.0))]);
            let done = drive(&view, &[(t(0), a, size)], 1);
            prop_assert_eq!(done[0].1[0].outcome, Outcome::Delivered);
        }
    }
}

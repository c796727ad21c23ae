//! OBU, RSU and TCU state machines.
//!
//! Vehicles beacon their state. Each RSU watches the yellow box and the exit
//! lane downstream of its approach; once a blockage has persisted for the
//! confirmation time it broadcasts approach-scoped "do not enter" warnings
//! and sends one clear warning when the box frees up. RSUs report approach
//! counts to the TCU over a wired link, and the TCU runs the signal phases.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::{Mode, SignalMode, SimConfig};
use crate::geometry::{Axis, Direction, Point, RoadNetwork};
use crate::mobility::{SignalState, VehicleState};
use crate::radio::{in_range, Packet};
use crate::time::SimTime;

#[derive(Clone, Debug, PartialEq)]
pub struct BeaconPayload {
    pub vehicle: u32,
    pub position: Point,
    pub speed: f64,
    pub approach: Direction,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WarningPayload {
    pub intersection: u32,
    /// Issuing RSU and its blockage-episode counter.
    pub rsu: u32,
    pub episode: u32,
    pub blocked: bool,
    pub affected_approach: Direction,
    pub issued_at: SimTime,
    pub expiry: SimTime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportPayload {
    pub rsu: u32,
    pub approach: Direction,
    pub detected_count: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Beacon(BeaconPayload),
    Warning(WarningPayload),
    Report(ReportPayload),
}

/// Time-derived protocol parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolParams {
    pub mode: Mode,
    pub beacon_period: SimTime,
    pub warning_repeat: SimTime,
    pub confirm: SimTime,
    pub warning_expiry: SimTime,
    pub report_period: SimTime,
    pub sensor_range: f64,
    pub stationary_speed: f64,
    pub vehicle_length: f64,
    pub min_gap: f64,
}

impl ProtocolParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        ProtocolParams {
            mode: cfg.mode,
            beacon_period: SimTime::from_secs(cfg.beacon_period),
            warning_repeat: SimTime::from_secs(cfg.warning_repeat_period),
            confirm: SimTime::from_secs(cfg.confirm_time),
            warning_expiry: SimTime::from_secs(cfg.warning_expiry),
            report_period: SimTime::from_secs(cfg.report_period),
            sensor_range: cfg.sensor_range,
            stationary_speed: cfg.stationary_speed,
            vehicle_length: cfg.vehicle_length,
            min_gap: cfg.min_gap,
        }
    }
}

// ---------------------------------------------------------------------------
// OBU

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObuState {
    pub next_beacon_at: SimTime,
    pub last_beacon_at: Option<SimTime>,
    pub rx_count: u64,
    /// Last beacon time heard from each neighbour.
    pub neighbors: BTreeMap<u32, SimTime>,
}

impl ObuState {
    /// `jitter` is the vehicle's beacon phase offset in `[0, period)`.
    pub fn new(spawn_time: SimTime, jitter: SimTime) -> Self {
        ObuState {
            next_beacon_at: spawn_time + jitter,
            ..ObuState::default()
        }
    }
}

/// Emits a beacon once per period on the vehicle's jittered schedule.
pub fn obu_tick(obu: &mut ObuState, veh: &VehicleState, position: Point, t: SimTime, period: SimTime) -> Option<Payload> {
    if veh.has_exited() || t < obu.next_beacon_at {
        return None;
    }
    if let Some(last) = obu.last_beacon_at {
        if t - last < period {
            return None;
        }
    }
    obu.last_beacon_at = Some(t);
    while obu.next_beacon_at <= t {
        obu.next_beacon_at = obu.next_beacon_at + period;
    }
    Some(Payload::Beacon(BeaconPayload {
        vehicle: veh.id,
        position,
        speed: veh.v,
        approach: veh.approach,
    }))
}

/// Applies a delivered packet to the vehicle's protocol state.
///
/// `stop_line_s` is the stop line of the vehicle's route, used to remember
/// whether a warning caught the vehicle before it was committed.
pub fn obu_receive(
    veh: &mut VehicleState,
    obu: &mut ObuState,
    pkt: &Packet,
    t: SimTime,
    mode: Mode,
    stop_line_s: f64,
) {
    obu.rx_count += 1;
    match &pkt.payload {
        Payload::Beacon(b) => {
            obu.neighbors.insert(b.vehicle, t);
        }
        Payload::Warning(w) if mode == Mode::Protocol && w.affected_approach == veh.approach => {
            if w.blocked {
                if t < w.expiry {
                    if !veh.warning_active {
                        veh.warned_behind_line = veh.s <= stop_line_s;
                    }
                    veh.warning_active = true;
                    veh.warning_received_at = Some(veh.warning_received_at.map_or(t, |prev| prev.min(t)));
                    veh.warning_expires_at = Some(veh.warning_expires_at.map_or(w.expiry, |prev| prev.max(w.expiry)));
                }
            } else {
                clear_warning(veh);
            }
        }
        _ => {}
    }
}

fn clear_warning(veh: &mut VehicleState) {
    veh.warning_active = false;
    veh.warning_received_at = None;
    veh.warning_expires_at = None;
    veh.warned_behind_line = false;
}

/// Drops a warning whose expiry has passed.
pub fn expire_warning(veh: &mut VehicleState, t: SimTime) {
    if veh.warning_active && veh.warning_expires_at.map_or(true, |e| t >= e) {
        clear_warning(veh);
    }
}

// ---------------------------------------------------------------------------
// RSU

/// What an RSU's sensor sees of one vehicle or obstacle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensedObject {
    /// `None` for non-networked obstacles such as a stalled vehicle.
    pub vehicle: Option<u32>,
    pub approach: Direction,
    pub s: f64,
    pub v: f64,
    pub length: f64,
    pub position: Point,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RsuState {
    pub id: u32,
    pub approach: Direction,
    pub position: Point,
    pub detected: BTreeSet<u32>,
    /// Detected vehicles on this RSU's approach lane.
    pub queue_count: u32,
    pub box_blocked_since: Option<SimTime>,
    pub episode: u32,
    pub next_warning_at: Option<SimTime>,
    pub clear_pending: bool,
    pub last_warning_at: Option<SimTime>,
    pub last_report_at: Option<SimTime>,
    pub next_report_at: SimTime,
}

impl RsuState {
    pub fn new(id: u32, approach: Direction, position: Point, report_period: SimTime) -> Self {
        RsuState {
            id,
            approach,
            position,
            detected: BTreeSet::new(),
            queue_count: 0,
            box_blocked_since: None,
            episode: 0,
            next_warning_at: None,
            clear_pending: false,
            last_warning_at: None,
            last_report_at: None,
            next_report_at: report_period,
        }
    }

    pub fn is_blocked(&self) -> bool {
        self.box_blocked_since.is_some()
    }
}

/// The blockage predicate: a stationary object overlapping the box, or a
/// stationary queue on the downstream exit lane leaving less than one
/// vehicle length plus the minimum gap beyond the box.
pub fn box_blocked(rsu: &RsuState, objects: &[SensedObject], net: &RoadNetwork, params: &ProtocolParams) -> bool {
    let visible = |o: &&SensedObject| in_range(rsu.position, o.position, params.sensor_range);
    let stationary = |o: &&SensedObject| o.v < params.stationary_speed;
    let in_box = objects
        .iter()
        .filter(visible)
        .filter(stationary)
        .any(|o| net.route(o.approach).footprint_in_box(o.s, o.length));
    if in_box {
        return true;
    }
    let route = net.route(rsu.approach);
    let free = objects
        .iter()
        .filter(visible)
        .filter(stationary)
        .filter(|o| o.approach == rsu.approach && o.s > route.box_end_s)
        .map(|o| o.s - o.length - route.box_end_s)
        .fold(f64::INFINITY, f64::min);
    free < params.vehicle_length + params.min_gap
}

pub fn rsu_sense(
    rsu: &RsuState,
    objects: &[SensedObject],
    net: &RoadNetwork,
    params: &ProtocolParams,
    t: SimTime,
) -> RsuState {
    let mut next = rsu.clone();
    next.detected = objects
        .iter()
        .filter(|o| in_range(rsu.position, o.position, params.sensor_range))
        .filter_map(|o| o.vehicle)
        .collect();
    let line = net.route(rsu.approach).stop_line_s;
    next.queue_count = objects
        .iter()
        .filter(|o| o.vehicle.is_some() && o.approach == rsu.approach && o.s <= line)
        .filter(|o| in_range(rsu.position, o.position, params.sensor_range))
        .count() as u32;

    let blocked = box_blocked(rsu, objects, net, params);
    match (rsu.box_blocked_since, blocked) {
        (None, true) => {
            next.box_blocked_since = Some(t);
            next.episode += 1;
            next.next_warning_at = Some(t + params.confirm);
        }
        (Some(_), false) => {
            next.box_blocked_since = None;
            next.next_warning_at = None;
            next.clear_pending = true;
        }
        _ => {}
    }
    next
}

#[derive(Clone, Debug, PartialEq)]
pub enum RsuEmission {
    /// Radio broadcast to the RSU's approach.
    Warning(WarningPayload),
    /// Wired report to the TCU.
    Report(ReportPayload),
}

/// Emits warnings and reports due at `t`. Warnings are suppressed in
/// baseline runs.
pub fn rsu_tick(rsu: &RsuState, t: SimTime, params: &ProtocolParams) -> (RsuState, Vec<RsuEmission>) {
    let mut next = rsu.clone();
    let mut out = Vec::new();
    let warn = |blocked: bool| WarningPayload {
        intersection: 0,
        rsu: rsu.id,
        episode: rsu.episode,
        blocked,
        affected_approach: rsu.approach,
        issued_at: t,
        expiry: t + params.warning_expiry,
    };
    if next.clear_pending {
        next.clear_pending = false;
        if params.mode == Mode::Protocol {
            out.push(RsuEmission::Warning(warn(false)));
            next.last_warning_at = Some(t);
        }
    }
    if let Some(due) = next.next_warning_at {
        if t >= due {
            if params.mode == Mode::Protocol {
                out.push(RsuEmission::Warning(warn(true)));
                next.last_warning_at = Some(t);
            }
            let mut due = due;
            while due <= t {
                due = due + params.warning_repeat;
            }
            next.next_warning_at = Some(due);
        }
    }
    if t >= next.next_report_at {
        out.push(RsuEmission::Report(ReportPayload {
            rsu: rsu.id,
            approach: rsu.approach,
            detected_count: rsu.queue_count,
        }));
        next.last_report_at = Some(t);
        while next.next_report_at <= t {
            next.next_report_at = next.next_report_at + params.report_period;
        }
    }
    (next, out)
}

// ---------------------------------------------------------------------------
// TCU

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Green,
    Yellow,
    AllRed,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Green => "green",
            Stage::Yellow => "yellow",
            Stage::AllRed => "all_red",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalPhase {
    /// Axis holding (or last holding) right of way.
    pub active: Axis,
    pub stage: Stage,
    pub stage_started_at: SimTime,
    pub stage_duration: SimTime,
}

impl SignalPhase {
    pub fn signal_for(&self, approach: Direction) -> SignalState {
        if approach.axis() != self.active {
            return SignalState::Red;
        }
        match self.stage {
            Stage::Green => SignalState::Green,
            Stage::Yellow => SignalState::Yellow,
            Stage::AllRed => SignalState::Red,
        }
    }

    pub fn signals(&self) -> [SignalState; 4] {
        Direction::ALL.map(|d| self.signal_for(d))
    }

    fn ends_at(&self) -> SimTime {
        self.stage_started_at + self.stage_duration
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignalTiming {
    pub mode: SignalMode,
    pub green: SimTime,
    pub green_max: SimTime,
    pub extension: SimTime,
    pub yellow: SimTime,
    pub all_red: SimTime,
}

impl SignalTiming {
    pub fn from_config(cfg: &SimConfig) -> Self {
        SignalTiming {
            mode: cfg.signal_mode,
            green: SimTime::from_secs(cfg.green_time),
            green_max: SimTime::from_secs(cfg.green_max),
            extension: SimTime::from_secs(cfg.green_extension),
            yellow: SimTime::from_secs(cfg.yellow_time),
            all_red: SimTime::from_secs(cfg.all_red_time),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TcuState {
    pub phase: SignalPhase,
    /// Latest reported queue per approach, indexed by [`Direction::index`].
    pub queue_estimates: [u32; 4],
    pub mode: SignalMode,
}

impl TcuState {
    /// North-south green from time zero.
    pub fn new(timing: &SignalTiming) -> Self {
        TcuState {
            phase: SignalPhase {
                active: Axis::NorthSouth,
                stage: Stage::Green,
                stage_started_at: SimTime::ZERO,
                stage_duration: timing.green,
            },
            queue_estimates: [0; 4],
            mode: timing.mode,
        }
    }

    fn axis_queue(&self, axis: Axis) -> u32 {
        Direction::ALL
            .iter()
            .filter(|d| d.axis() == axis)
            .map(|d| self.queue_estimates[d.index()])
            .sum()
    }
}

/// Advances the signal controller to `t` after folding in any arrived reports.
pub fn tcu_tick(
    tcu: &TcuState,
    t: SimTime,
    reports: &[ReportPayload],
    timing: &SignalTiming,
) -> (TcuState, [SignalState; 4]) {
    let mut next = tcu.clone();
    for r in reports {
        next.queue_estimates[r.approach.index()] = r.detected_count;
    }
    loop {
        let phase = next.phase;
        let end = phase.ends_at();
        if t < end {
            break;
        }
        next.phase = match phase.stage {
            Stage::Green => {
                let elapsed = end - phase.stage_started_at;
                let extend = next.mode == SignalMode::Adaptive
                    && elapsed < timing.green_max
                    && next.axis_queue(phase.active) > next.axis_queue(phase.active.other());
                if extend {
                    let room = timing.green_max - elapsed;
                    SignalPhase {
                        stage_duration: phase.stage_duration + timing.extension.min(room),
                        ..phase
                    }
                } else {
                    SignalPhase {
                        stage: Stage::Yellow,
                        stage_started_at: end,
                        stage_duration: timing.yellow,
                        ..phase
                    }
                }
            }
            Stage::Yellow => SignalPhase {
                stage: Stage::AllRed,
                stage_started_at: end,
                stage_duration: timing.all_red,
                ..phase
            },
            Stage::AllRed => SignalPhase {
                active: phase.active.other(),
                stage: Stage::Green,
                stage_started_at: end,
                stage_duration: timing.green,
            },
        };
    }
    let signals = next.phase.signals();
    (next, signals)
}

// ---------------------------------------------------------------------------
// Blind vehicles

/// A maximal interval during which one RSU deemed the box blocked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockageEpisode {
    pub rsu: u32,
    pub approach: Direction,
    pub episode: u32,
    pub start: SimTime,
    /// `None` while still open at the end of the run.
    pub end: Option<SimTime>,
}

impl BlockageEpisode {
    pub fn contains(&self, t: SimTime) -> bool {
        self.start <= t && self.end.map_or(true, |e| t < e)
    }
}

/// A front bumper crossing into the decision zone ahead of a stop line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZoneEntry {
    pub vehicle: u32,
    pub approach: Direction,
    pub at: SimTime,
    pub warning_active: bool,
}

/// A vehicle is blind when it enters the decision zone of a blocked
/// approach without an active warning.
pub fn classify_blind(entry: &ZoneEntry, episodes: &[BlockageEpisode]) -> bool {
    !entry.warning_active
        && episodes
            .iter()
            .any(|ep| ep.approach == entry.approach && ep.contains(entry.at))
}

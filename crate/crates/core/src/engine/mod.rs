//! Event-driven run orchestration.
//!
//! Mobility and protocol ticks run on a fixed grid; radio events fall in
//! continuous time between grid points. Every event carries an ordinal so
//! that simultaneous events are processed in a fixed order.

mod queue;

pub use queue::{EventQueue, Ordinal};

use std::collections::VecDeque;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::config::{Mode, SimConfig};
use crate::error::EngineError;
use crate::geometry::{build_cross_network, Axis, Direction, Point, RoadNetwork};
use crate::metrics::{compute_metrics, BoxViolations, MetricsReport, MobilityStats, PacketLedger, PacketRecord, Pair, WarningTag};
use crate::mobility::{
    safe_speed, spawn_fleet, step_vehicle, stop_target, CrossingRecord, KinematicParams, SignalState, VehicleMode,
    VehicleState,
};
use crate::protocol::{
    classify_blind, expire_warning, obu_receive, obu_tick, rsu_sense, rsu_tick, tcu_tick, BlockageEpisode, ObuState,
    Payload, ProtocolParams, ReportPayload, RsuEmission, RsuState, SensedObject, SignalTiming, Stage, TcuState,
    ZoneEntry,
};
use crate::radio::{resolve_deliveries, Channel, MacAction, MacParams, NodeId, NodeView, Outcome, Packet, PacketKind};
use crate::rng::{stream, Stream, StreamRng};
use crate::time::SimTime;

/// A vehicle placed by hand rather than by the spawner.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedVehicle {
    pub approach: Direction,
    /// Front-bumper position along the route.
    pub s: f64,
    /// Zero keeps the vehicle parked.
    pub v_desired: f64,
    /// First beacon time in seconds; `None` silences the vehicle.
    pub beacon_offset: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Fleet {
    /// `num_vehicles` spawned from the config, recycled at route ends.
    Random,
    Fixed(Vec<FixedVehicle>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: SimConfig,
    pub fleet: Fleet,
    /// Approaches that carry an RSU, in RSU id order.
    pub rsus: Vec<Direction>,
    pub trace: bool,
}

impl Scenario {
    pub fn new(config: SimConfig) -> Self {
        Scenario {
            config,
            fleet: Fleet::Random,
            rsus: Direction::ALL.to_vec(),
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseChange {
    pub at: SimTime,
    pub active: Axis,
    pub stage: Stage,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub config: SimConfig,
    pub seed: u64,
    pub metrics: MetricsReport,
    pub ledger: PacketLedger,
    pub mobility: MobilityStats,
    pub phase_log: Vec<PhaseChange>,
    pub crossings: Vec<CrossingRecord>,
    pub episodes: Vec<BlockageEpisode>,
    pub zone_entries: Vec<ZoneEntry>,
    /// Populated when the scenario asks for a trace.
    pub trace: Vec<String>,
    pub wall_time: Duration,
}

pub fn run(cfg: &SimConfig) -> Result<SimResult, EngineError> {
    run_scenario(&Scenario::new(cfg.clone()))
}

pub fn run_scenario(scenario: &Scenario) -> Result<SimResult, EngineError> {
    let started = Instant::now();
    let mut sim = Sim::new(scenario)?;
    sim.run()?;
    let mut result = sim.finish();
    result.wall_time = started.elapsed();
    Ok(result)
}

#[derive(Debug)]
enum Event {
    BlockageInject,
    BlockageClear,
    MobilityTick(u64),
    ProtocolTick,
    WiredDelivery(ReportPayload),
    BeaconDue(u32),
    FrameReady(NodeId, Payload),
    TxStart(NodeId),
    TxEnd(NodeId),
    BackoffEnd(NodeId, u64),
}

const RANK_BLOCKAGE: u64 = 0;
const RANK_MOBILITY: u64 = 1;
const RANK_PROTOCOL: u64 = 2;
const RANK_WIRED: u64 = 3;

/// Node positions as of the last mobility tick.
struct Positions {
    rsus: Vec<Point>,
    vehicles: Vec<Option<Point>>,
}

impl NodeView for Positions {
    fn position(&self, node: NodeId) -> Option<Point> {
        match node {
            NodeId::Rsu(i) => self.rsus.get(i as usize).copied(),
            NodeId::Vehicle(i) => self.vehicles.get(i as usize).copied().flatten(),
        }
    }

    fn nodes(&self) -> Vec<(NodeId, Point)> {
        let rsus = self.rsus.iter().enumerate().map(|(i, p)| (NodeId::Rsu(i as u32), *p));
        let vehicles = self
            .vehicles
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (NodeId::Vehicle(i as u32), p)));
        rsus.chain(vehicles).collect()
    }
}

/// A stalled non-networked vehicle on an exit lane.
#[derive(Clone, Copy, Debug)]
struct Phantom {
    approach: Direction,
    front: f64,
    length: f64,
}

/// Per-vehicle bookkeeping that the protocol state does not carry.
#[derive(Clone, Debug, Default)]
struct Trip {
    on_network: bool,
    box_stop_since: Option<SimTime>,
    violated: bool,
}

struct Sim {
    cfg: SimConfig,
    net: RoadNetwork,
    kin: KinematicParams,
    proto: ProtocolParams,
    timing: SignalTiming,
    recycle: bool,
    duration: SimTime,
    dt: SimTime,
    queue: EventQueue<Event>,
    vehicles: Vec<VehicleState>,
    obus: Vec<ObuState>,
    trips: Vec<Trip>,
    off_network: VecDeque<u32>,
    positions: Positions,
    rsus: Vec<RsuState>,
    rsu_stagger: SimTime,
    tcu: TcuState,
    signals: [SignalState; 4],
    inbox: Vec<ReportPayload>,
    channel: Channel,
    backoff_rng: StreamRng,
    loss_rng: StreamRng,
    recycle_rng: StreamRng,
    phantom: Option<Phantom>,
    ledger: PacketLedger,
    next_seq: u64,
    phase_log: Vec<PhaseChange>,
    crossings: Vec<CrossingRecord>,
    episodes: Vec<BlockageEpisode>,
    zone_entries: Vec<ZoneEntry>,
    travel_times: Vec<SimTime>,
    violations: BoxViolations,
    trace: Option<Vec<String>>,
}

fn fault(at: SimTime, what: String) -> EngineError {
    EngineError::RuntimeFault { at, what }
}

impl Sim {
    fn new(scenario: &Scenario) -> Result<Self, EngineError> {
        let cfg = scenario.config.clone();
        let net = build_cross_network(&cfg)?;
        let kin = KinematicParams::from_config(&cfg);
        let proto = ProtocolParams::from_config(&cfg);
        let timing = SignalTiming::from_config(&cfg);
        let mac = MacParams::from_config(&cfg);
        let period = proto.beacon_period;

        let mut spawn_rng = stream(cfg.seed, Stream::Spawn);
        let mut jitter_rng = stream(cfg.seed, Stream::Jitter);
        let (vehicles, beacon_starts, recycle) = match &scenario.fleet {
            Fleet::Random => {
                let fleet = spawn_fleet(&cfg, &net, &mut spawn_rng)?;
                let starts: Vec<Option<SimTime>> = fleet
                    .iter()
                    .map(|_| Some(SimTime::from_nanos(jitter_rng.gen_range(0..period.as_nanos().max(1)))))
                    .collect();
                (fleet, starts, true)
            }
            Fleet::Fixed(list) => {
                let fleet = list
                    .iter()
                    .enumerate()
                    .map(|(i, f)| VehicleState {
                        id: i as u32,
                        approach: f.approach,
                        s: f.s,
                        v: f.v_desired,
                        v_desired: f.v_desired,
                        length: cfg.vehicle_length,
                        mode: if f.v_desired > 0.0 { VehicleMode::Cruising } else { VehicleMode::Stopped },
                        warning_active: false,
                        warning_received_at: None,
                        warning_expires_at: None,
                        warned_behind_line: false,
                        spawn_time: SimTime::ZERO,
                        exit_time: None,
                        entered_box_at: None,
                    })
                    .collect();
                let starts: Vec<Option<SimTime>> = list.iter().map(|f| f.beacon_offset.map(SimTime::from_secs)).collect();
                (fleet, starts, false)
            }
        };

        let obus = beacon_starts
            .iter()
            .map(|start: &Option<SimTime>| ObuState::new(SimTime::ZERO, start.unwrap_or(SimTime::ZERO)))
            .collect();
        let positions = Positions {
            rsus: scenario.rsus.iter().map(|d| net.rsu_position(*d)).collect(),
            vehicles: vehicles.iter().map(|v| Some(net.route(v.approach).point_at(v.s))).collect(),
        };
        let rsus = scenario
            .rsus
            .iter()
            .enumerate()
            .map(|(i, d)| RsuState::new(i as u32, *d, net.rsu_position(*d), proto.report_period))
            .collect();
        let tcu = TcuState::new(&timing);
        let signals = tcu.phase.signals();
        let phase_log = vec![PhaseChange {
            at: SimTime::ZERO,
            active: tcu.phase.active,
            stage: tcu.phase.stage,
        }];

        let mut sim = Sim {
            duration: SimTime::from_secs(cfg.duration),
            dt: SimTime::from_secs(cfg.mobility_dt),
            rsu_stagger: SimTime::from_secs(cfg.rsu_stagger),
            trips: vec![Trip { on_network: true, ..Trip::default() }; vehicles.len()],
            ledger: PacketLedger {
                records: Vec::new(),
                vehicle_count: vehicles.len() as u32,
                wired_reports: 0,
            },
            vehicles,
            obus,
            off_network: VecDeque::new(),
            positions,
            rsus,
            tcu,
            signals,
            inbox: Vec::new(),
            channel: Channel::new(mac),
            backoff_rng: stream(cfg.seed, Stream::Backoff),
            loss_rng: stream(cfg.seed, Stream::Loss),
            recycle_rng: stream(cfg.seed, Stream::Recycle),
            phantom: None,
            next_seq: 0,
            phase_log,
            crossings: Vec::new(),
            episodes: Vec::new(),
            zone_entries: Vec::new(),
            travel_times: Vec::new(),
            violations: BoxViolations::default(),
            trace: scenario.trace.then(Vec::new),
            queue: EventQueue::new(),
            cfg,
            net,
            kin,
            proto,
            timing,
            recycle,
        };

        for (i, start) in beacon_starts.iter().enumerate() {
            if let Some(at) = start {
                sim.schedule(*at, Some(NodeId::Vehicle(i as u32)), 0, Event::BeaconDue(i as u32))?;
            }
        }
        if sim.cfg.blockage_approach.is_some() {
            sim.schedule(SimTime::from_secs(sim.cfg.blockage_start), None, RANK_BLOCKAGE, Event::BlockageInject)?;
            sim.schedule(SimTime::from_secs(sim.cfg.blockage_end), None, RANK_BLOCKAGE, Event::BlockageClear)?;
        }
        sim.schedule(sim.dt, None, RANK_MOBILITY, Event::MobilityTick(1))?;
        Ok(sim)
    }

    /// Events at or after the end of the run are dropped.
    fn schedule(&mut self, at: SimTime, node: Option<NodeId>, rank: u64, event: Event) -> Result<(), EngineError> {
        if at >= self.duration {
            return Ok(());
        }
        self.queue.schedule(at, node, rank, event)
    }

    fn log(&mut self, at: SimTime, kind: &str, node: Option<NodeId>, seq: Option<u64>, detail: impl FnOnce() -> String) {
        if let Some(trace) = self.trace.as_mut() {
            let node = node.map_or_else(|| "-".to_string(), |n| n.to_string());
            let seq = seq.map_or_else(|| "-".to_string(), |s| s.to_string());
            let detail = detail();
            let line = if detail.is_empty() {
                format!("{} {kind} {node} {seq}", at.as_nanos())
            } else {
                format!("{} {kind} {node} {seq} {detail}", at.as_nanos())
            };
            trace.push(line);
        }
    }

    fn run(&mut self) -> Result<(), EngineError> {
        let mut last = SimTime::ZERO;
        while let Some((at, _, event)) = self.queue.next_event() {
            if at < last {
                return Err(EngineError::CausalityViolation { at, now: last });
            }
            if at > self.duration {
                return Err(fault(at, "event past the end of the run".into()));
            }
            last = at;
            self.dispatch(at, event)?;
        }
        Ok(())
    }

    fn dispatch(&mut self, now: SimTime, event: Event) -> Result<(), EngineError> {
        match event {
            Event::BlockageInject => {
                let approach = self.cfg.blockage_approach.expect("scheduled only with a blockage approach");
                let route = self.net.route(approach);
                let length = self.cfg.vehicle_length;
                self.phantom = Some(Phantom {
                    approach,
                    front: route.box_end_s + self.cfg.blockage_gap + length,
                    length,
                });
                self.log(now, "blockage_inject", None, None, || format!("approach={approach}"));
            }
            Event::BlockageClear => {
                self.phantom = None;
                self.log(now, "blockage_clear", None, None, String::new);
            }
            Event::MobilityTick(k) => {
                self.log(now, "mobility_tick", None, None, String::new);
                self.mobility_tick(now)?;
                self.schedule(now, None, RANK_PROTOCOL, Event::ProtocolTick)?;
                let next = SimTime::from_nanos((k + 1) * self.dt.as_nanos());
                self.schedule(next, None, RANK_MOBILITY, Event::MobilityTick(k + 1))?;
            }
            Event::ProtocolTick => {
                self.log(now, "protocol_tick", None, None, String::new);
                self.protocol_tick(now)?;
            }
            Event::WiredDelivery(report) => {
                self.ledger.wired_reports += 1;
                self.log(now, "wired_delivery", Some(NodeId::Rsu(report.rsu)), None, || {
                    format!("approach={} count={}", report.approach, report.detected_count)
                });
                self.inbox.push(report);
            }
            Event::BeaconDue(id) => self.beacon_due(now, id)?,
            Event::FrameReady(src, payload) => self.frame_ready(now, src, payload)?,
            Event::TxStart(node) => {
                let actions = self.channel.start_tx(node, now, &self.positions);
                if let Some(tx) = self.channel.active().last().filter(|tx| tx.packet.src == node && tx.t_start == now) {
                    let (seq, end, receivers) = (tx.packet.seq, tx.t_end, tx.receivers.len());
                    if let Some(rec) = self.ledger.records.get_mut(seq as usize) {
                        rec.tx_start = Some(now);
                    }
                    self.log(now, "tx_start", Some(node), Some(seq), || {
                        format!("end={} receivers={receivers}", end.as_nanos())
                    });
                }
                self.apply_mac(actions)?;
            }
            Event::TxEnd(node) => self.tx_end(now, node)?,
            Event::BackoffEnd(node, generation) => {
                let actions = self.channel.backoff_end(node, generation, now);
                self.apply_mac(actions)?;
            }
        }
        Ok(())
    }

    fn apply_mac(&mut self, actions: Vec<MacAction>) -> Result<(), EngineError> {
        for action in actions {
            match action {
                MacAction::StartTx { node, at } => self.schedule(at, Some(node), 0, Event::TxStart(node))?,
                MacAction::EndTx { node, seq, at } => self.schedule(at, Some(node), seq, Event::TxEnd(node))?,
                MacAction::BackoffEnd { node, generation, at } => {
                    self.schedule(at, Some(node), 0, Event::BackoffEnd(node, generation))?
                }
            }
        }
        Ok(())
    }

    fn beacon_due(&mut self, now: SimTime, id: u32) -> Result<(), EngineError> {
        let i = id as usize;
        let period = self.proto.beacon_period;
        if self.trips[i].on_network {
            let pos = self.positions.vehicles[i].expect("on-network vehicle has a position");
            if let Some(payload) = obu_tick(&mut self.obus[i], &self.vehicles[i], pos, now, period) {
                self.frame_ready(now, NodeId::Vehicle(id), payload)?;
            }
        }
        let obu = &mut self.obus[i];
        while obu.next_beacon_at <= now {
            obu.next_beacon_at = obu.next_beacon_at + period;
        }
        let next = obu.next_beacon_at;
        self.schedule(next, Some(NodeId::Vehicle(id)), 0, Event::BeaconDue(id))
    }

    fn frame_ready(&mut self, now: SimTime, src: NodeId, payload: Payload) -> Result<(), EngineError> {
        let (kind, size, warning) = match &payload {
            Payload::Beacon(_) => (PacketKind::Beacon, self.cfg.normal_packet_bytes, None),
            Payload::Warning(w) => (
                PacketKind::Warning,
                self.cfg.warning_packet_bytes,
                Some(WarningTag {
                    rsu: w.rsu,
                    episode: w.episode,
                    blocked: w.blocked,
                }),
            ),
            Payload::Report(_) => return Err(fault(now, "report offered to the radio".into())),
        };
        let seq = self.next_seq;
        self.next_seq += 1;
        self.ledger.records.push(PacketRecord {
            seq,
            kind,
            size,
            src,
            created_at: now,
            tx_start: None,
            tx_end: None,
            warning,
            pairs: Vec::new(),
        });
        self.log(now, "frame_ready", Some(src), Some(seq), || {
            let mut d = format!("kind={kind} size={size}");
            if let Some(w) = warning {
                d.push_str(&format!(" episode={} blocked={}", w.episode, w.blocked));
            }
            d
        });
        let packet = Packet {
            seq,
            kind,
            size,
            src,
            created_at: now,
            payload,
        };
        let actions = self.channel.enqueue(packet, now, &self.positions);
        self.apply_mac(actions)
    }

    fn tx_end(&mut self, now: SimTime, node: NodeId) -> Result<(), EngineError> {
        let Some((tx, overlapping, actions)) = self.channel.end_tx(node, now, &self.positions, &mut self.backoff_rng)
        else {
            return Err(fault(now, format!("no frame on air from {node}")));
        };
        let outcomes = resolve_deliveries(&tx, &overlapping, self.cfg.p_loss, &mut self.loss_rng);
        let seq = tx.packet.seq;
        self.log(now, "tx_end", Some(node), Some(seq), String::new);
        if let Some(rec) = self.ledger.records.get_mut(seq as usize) {
            rec.tx_end = Some(now);
            rec.pairs = outcomes.iter().map(|o| Pair::new(o.receiver, o.outcome)).collect();
        }
        for o in &outcomes {
            self.log(now, "rx", Some(o.receiver), Some(seq), || format!("outcome={}", o.outcome.code()));
            if o.outcome != Outcome::Delivered {
                continue;
            }
            if let NodeId::Vehicle(v) = o.receiver {
                let i = v as usize;
                if !self.trips[i].on_network {
                    continue;
                }
                let veh = &mut self.vehicles[i];
                let was_active = veh.warning_active;
                let stop_line = self.net.route(veh.approach).stop_line_s;
                obu_receive(veh, &mut self.obus[i], &tx.packet, now, self.cfg.mode, stop_line);
                if veh.warning_active != was_active {
                    let state = if veh.warning_active { "on" } else { "off" };
                    self.log(now, "warning", Some(o.receiver), Some(seq), || format!("state={state}"));
                }
            }
        }
        self.apply_mac(actions)
    }

    fn mobility_tick(&mut self, now: SimTime) -> Result<(), EngineError> {
        for veh in self.vehicles.iter_mut() {
            expire_warning(veh, now);
        }
        if self.recycle {
            self.readmit(now);
        }
        let dt = self.cfg.mobility_dt;
        let dz = self.cfg.decision_zone;
        let eps = 1e-9;
        for d in Direction::ALL {
            let route = *self.net.route(d);
            let mut order: Vec<usize> = (0..self.vehicles.len())
                .filter(|&i| self.trips[i].on_network && self.vehicles[i].approach == d)
                .collect();
            order.sort_by(|&a, &b| self.vehicles[b].s.total_cmp(&self.vehicles[a].s).then(a.cmp(&b)));
            let phantom_rear = self.phantom.filter(|p| p.approach == d).map(|p| p.front - p.length);
            let signal = self.signals[d.index()];
            let mut lead: Option<f64> = None;
            for &i in &order {
                let old = self.vehicles[i].clone();
                let mut lead_rear = lead;
                if let Some(rear) = phantom_rear.filter(|r| old.s <= *r) {
                    lead_rear = Some(lead_rear.map_or(rear, |l: f64| l.min(rear)));
                }
                let warned = self.cfg.mode == Mode::Protocol && old.warning_active;
                let stop = stop_target(&old, signal, warned, &route, &self.kin);
                let mut new = step_vehicle(&old, lead_rear, stop, dt, &self.kin, &route);

                if new.v < -eps || new.v > new.v_desired + eps || !new.v.is_finite() {
                    return Err(fault(now, format!("vehicle {} speed {} outside [0, {}]", new.id, new.v, new.v_desired)));
                }
                if let Some(rear) = lead_rear {
                    if new.s > rear + eps {
                        return Err(fault(now, format!("vehicle {} overlaps the vehicle ahead", new.id)));
                    }
                }
                let line = route.stop_line_s;
                if old.s <= line && new.s > line {
                    self.crossings.push(CrossingRecord {
                        vehicle: new.id,
                        approach: d,
                        at: now,
                        signal,
                    });
                    if old.warning_active && !self.trips[i].violated {
                        self.trips[i].violated = true;
                        self.violations.warned_entry += 1;
                    }
                }
                if old.s <= route.box_start_s && new.s > route.box_start_s && old.warning_active && old.warned_behind_line {
                    return Err(fault(now, format!("vehicle {} entered the box under an active warning", new.id)));
                }
                if old.s < line - dz && new.s >= line - dz {
                    self.zone_entries.push(ZoneEntry {
                        vehicle: new.id,
                        approach: d,
                        at: now,
                        warning_active: old.warning_active,
                    });
                }
                if route.footprint_in_box(new.s, new.length) {
                    new.entered_box_at = old.entered_box_at.or(Some(now));
                } else {
                    new.entered_box_at = None;
                }
                let trip = &mut self.trips[i];
                if new.entered_box_at.is_some() && new.v < self.kin.stationary_speed {
                    let since = *trip.box_stop_since.get_or_insert(now);
                    if (now - since).as_secs() > self.cfg.box_dwell_limit + eps && !trip.violated {
                        trip.violated = true;
                        self.violations.stationary += 1;
                    }
                } else {
                    trip.box_stop_since = None;
                }

                lead = Some(new.rear());
                if new.s >= route.length && self.recycle {
                    new.mode = VehicleMode::Exited;
                    new.exit_time = Some(now);
                    self.travel_times.push(now - new.spawn_time);
                    self.trips[i].on_network = false;
                    self.positions.vehicles[i] = None;
                    self.off_network.push_back(i as u32);
                    let dropped = self.channel.detach(NodeId::Vehicle(i as u32));
                    self.vehicles[i] = new;
                    self.log(now, "exit", Some(NodeId::Vehicle(i as u32)), None, || format!("dropped={}", dropped.len()));
                    continue;
                }
                self.positions.vehicles[i] = Some(route.point_at(new.s.min(route.length)));
                self.vehicles[i] = new;
            }
        }
        Ok(())
    }

    /// Puts waiting vehicles back at the tail of a random approach with room.
    fn readmit(&mut self, now: SimTime) {
        let pitch_room = self.cfg.vehicle_length;
        let mut still_waiting = VecDeque::new();
        while let Some(id) = self.off_network.pop_front() {
            let tails: Vec<(Direction, Option<f64>)> = Direction::ALL
                .iter()
                .map(|d| {
                    let tail = (0..self.vehicles.len())
                        .filter(|&j| self.trips[j].on_network && self.vehicles[j].approach == *d)
                        .map(|j| self.vehicles[j].rear())
                        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.min(r))));
                    (*d, tail)
                })
                .filter(|(_, tail)| tail.map_or(true, |r| r - self.kin.min_gap >= pitch_room))
                .collect();
            if tails.is_empty() {
                still_waiting.push_back(id);
                continue;
            }
            let (d, tail) = tails[self.recycle_rng.gen_range(0..tails.len())];
            let i = id as usize;
            let veh = &mut self.vehicles[i];
            let s = pitch_room;
            let gap = tail.map_or(f64::INFINITY, |r| r - self.kin.min_gap - s);
            veh.approach = d;
            veh.s = s;
            veh.v = safe_speed(gap, veh.v_desired, self.kin.reaction_time);
            veh.mode = VehicleMode::Cruising;
            veh.warning_active = false;
            veh.warning_received_at = None;
            veh.warning_expires_at = None;
            veh.warned_behind_line = false;
            veh.spawn_time = now;
            veh.exit_time = None;
            veh.entered_box_at = None;
            self.trips[i] = Trip { on_network: true, ..Trip::default() };
            self.positions.vehicles[i] = Some(self.net.route(d).point_at(s));
            self.log(now, "enter", Some(NodeId::Vehicle(id)), None, || format!("approach={d}"));
        }
        self.off_network = still_waiting;
    }

    fn sensed_objects(&self) -> Vec<SensedObject> {
        let mut objects: Vec<SensedObject> = self
            .vehicles
            .iter()
            .zip(&self.trips)
            .filter(|(_, t)| t.on_network)
            .map(|(v, _)| SensedObject {
                vehicle: Some(v.id),
                approach: v.approach,
                s: v.s,
                v: v.v,
                length: v.length,
                position: self.net.route(v.approach).point_at(v.s),
            })
            .collect();
        if let Some(p) = self.phantom {
            objects.push(SensedObject {
                vehicle: None,
                approach: p.approach,
                s: p.front,
                v: 0.0,
                length: p.length,
                position: self.net.route(p.approach).point_at(p.front),
            });
        }
        objects
    }

    fn protocol_tick(&mut self, now: SimTime) -> Result<(), EngineError> {
        let objects = self.sensed_objects();
        for i in 0..self.rsus.len() {
            let before = self.rsus[i].clone();
            let sensed = rsu_sense(&before, &objects, &self.net, &self.proto, now);
            let node = Some(NodeId::Rsu(before.id));
            match (before.is_blocked(), sensed.is_blocked()) {
                (false, true) => {
                    self.episodes.push(BlockageEpisode {
                        rsu: sensed.id,
                        approach: sensed.approach,
                        episode: sensed.episode,
                        start: now,
                        end: None,
                    });
                    let ep = sensed.episode;
                    self.log(now, "block_onset", node, None, || format!("episode={ep}"));
                }
                (true, false) => {
                    if let Some(ep) = self
                        .episodes
                        .iter_mut()
                        .rev()
                        .find(|e| e.rsu == before.id && e.end.is_none())
                    {
                        ep.end = Some(now);
                    }
                    let ep = before.episode;
                    self.log(now, "block_clear", node, None, || format!("episode={ep}"));
                }
                _ => {}
            }
            let (next, emissions) = rsu_tick(&sensed, now, &self.proto);
            self.rsus[i] = next;
            let ready = SimTime::from_nanos(now.as_nanos() + i as u64 * self.rsu_stagger.as_nanos());
            for e in emissions {
                match e {
                    RsuEmission::Warning(mut w) => {
                        w.issued_at = ready;
                        w.expiry = ready + self.proto.warning_expiry;
                        self.schedule(ready, node, 0, Event::FrameReady(NodeId::Rsu(w.rsu), Payload::Warning(w)))?;
                    }
                    RsuEmission::Report(r) => {
                        let at = now + SimTime::from_secs(self.cfg.wired_latency);
                        self.schedule(at, None, RANK_WIRED, Event::WiredDelivery(r))?;
                    }
                }
            }
        }

        let reports = std::mem::take(&mut self.inbox);
        let (tcu, signals) = tcu_tick(&self.tcu, now, &reports, &self.timing);
        if tcu.phase.stage != self.tcu.phase.stage || tcu.phase.active != self.tcu.phase.active {
            let change = PhaseChange {
                at: tcu.phase.stage_started_at,
                active: tcu.phase.active,
                stage: tcu.phase.stage,
            };
            self.phase_log.push(change);
            let axis = match change.active {
                Axis::NorthSouth => "NS",
                Axis::EastWest => "EW",
            };
            self.log(now, "phase", None, None, || format!("axis={axis} stage={}", change.stage));
        }
        let ns = signals[Direction::N.index()] == SignalState::Green || signals[Direction::S.index()] == SignalState::Green;
        let ew = signals[Direction::E.index()] == SignalState::Green || signals[Direction::W.index()] == SignalState::Green;
        if ns && ew {
            return Err(fault(now, "both axes green".into()));
        }
        self.tcu = tcu;
        self.signals = signals;

        for veh in self.vehicles.iter_mut() {
            expire_warning(veh, now);
        }
        Ok(())
    }

    fn finish(mut self) -> SimResult {
        let end = self.duration;
        for tx in self.channel.in_flight() {
            if let Some(rec) = self.ledger.records.get_mut(tx.packet.seq as usize) {
                rec.pairs = tx.receivers.iter().map(|(n, _)| Pair::new(*n, Outcome::Pending)).collect();
            }
        }
        let pending: usize = self.channel.in_flight().iter().map(|tx| tx.receivers.len()).sum();
        self.log(end, "sim_end", None, None, || format!("pending={pending}"));

        let blind = self
            .zone_entries
            .iter()
            .filter(|z| classify_blind(z, &self.episodes))
            .count() as u64;
        let trips = self.travel_times.len() as u64;
        let mean_travel = (trips > 0).then(|| {
            let total: u128 = self.travel_times.iter().map(|t| u128::from(t.as_nanos())).sum();
            total as f64 / trips as f64 / 1e9
        });
        let green_phases = self.phase_log.iter().filter(|p| p.stage == Stage::Green).count() as u64;
        let mobility = MobilityStats {
            blind_count: blind,
            box_violations: self.violations,
            completed_trips: trips,
            mean_travel_time_s: mean_travel,
            green_crossings: self.crossings.iter().filter(|c| c.signal == SignalState::Green).count() as u64,
            green_phases,
        };
        let metrics = compute_metrics(&self.ledger, &mobility, self.cfg.duration);
        SimResult {
            seed: self.cfg.seed,
            config: self.cfg,
            metrics,
            ledger: self.ledger,
            mobility,
            phase_log: self.phase_log,
            crossings: self.crossings,
            episodes: self.episodes,
            zone_entries: self.zone_entries,
            trace: self.trace.unwrap_or_default(),
            wall_time: Duration::ZERO,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize, duration: f64) -> SimConfig {
        let mut c = SimConfig::default();
        c.num_vehicles = n;
        c.duration = duration;
        c
    }

    #[test]
    fn empty_run() {
        let r = run(&small(0, 10.0)).unwrap();
        assert_eq!(r.metrics.totals.sent_frames, 0);
        assert_eq!(r.metrics.pdr_percent, None);
        assert_eq!(r.metrics.mean_e2e_delay_ms, None);
        assert_eq!(r.metrics.throughput_bps, 0.0);
        assert_eq!(r.metrics.loss.count, 0);
        assert_eq!(r.metrics.blind_vehicle_count, 0);
    }

    #[test]
    fn same_seed_same_result() {
        let c = small(40, 20.0);
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a.ledger, b.ledger);
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.phase_log, b.phase_log);
        assert_eq!(a.config, c);
    }

    #[test]
    fn seed_changes_beacon_schedule() {
        let a = run(&small(10, 5.0)).unwrap();
        let mut c = small(10, 5.0);
        c.seed = 2;
        let b = run(&c).unwrap();
        let firsts = |r: &SimResult| r.ledger.records.iter().map(|p| p.created_at).collect::<Vec<_>>();
        assert_ne!(firsts(&a), firsts(&b));
    }

    #[test]
    fn trace_times_are_monotone_and_closed() {
        let mut sc = Scenario::new(small(20, 8.0));
        sc.trace = true;
        let r = run_scenario(&sc).unwrap();
        let times: Vec<u64> = r.trace.iter().map(|l| l.split(' ').next().unwrap().parse().unwrap()).collect();
        assert!(times.windows(2).all(|w| w[0] <= w[1]));
        assert!(times.iter().all(|t| *t <= 8_000_000_000));
    }

    #[test]
    fn fixed_cycle_shows_in_the_phase_log() {
        let r = run(&small(0, 71.0)).unwrap();
        let secs: Vec<f64> = r.phase_log.iter().map(|p| p.at.as_secs()).collect();
        assert_eq!(secs, vec![0.0, 30.0, 33.0, 35.0, 65.0, 68.0, 70.0]);
    }

    #[test]
    fn overlapping_vehicles_are_a_runtime_fault() {
        let mut sc = Scenario::new(small(0, 2.0));
        let parked = |s| FixedVehicle { approach: Direction::E, s, v_desired: 0.0, beacon_offset: None };
        sc.fleet = Fleet::Fixed(vec![parked(100.0), parked(98.0)]);
        let err = run_scenario(&sc).unwrap_err();
        assert!(matches!(err, EngineError::RuntimeFault { .. }), "{err}");
    }

    #[test]
    fn conservation_holds_in_a_busy_run() {
        let r = run(&small(100, 15.0)).unwrap();
        assert!(r.metrics.totals.is_conserved());
        for km in r.metrics.per_kind.values() {
            assert!(km.totals.is_conserved());
        }
        assert!(r.metrics.totals.sent_frames > 0);
    }
}

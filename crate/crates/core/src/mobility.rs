//! Vehicle kinematics: fleet spawning, a safe-speed car-following rule, and
//! signal- and warning-gated stopping before the yellow box.

use rand::Rng;

use crate::config::SimConfig;
use crate::error::SpawnOverflow;
use crate::geometry::{Direction, RoadNetwork, Route};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VehicleMode {
    Cruising,
    Braking,
    Stopped,
    Crossing,
    Exited,
}

/// What a signal head shows to one approach.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignalState {
    Green,
    Yellow,
    Red,
}

impl std::fmt::Display for SignalState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SignalState::Green => "green",
            SignalState::Yellow => "yellow",
            SignalState::Red => "red",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub id: u32,
    /// Route the vehicle is on; the lane follows from `s`.
    pub approach: Direction,
    /// Front-bumper arc length along the route.
    pub s: f64,
    pub v: f64,
    pub v_desired: f64,
    pub length: f64,
    pub mode: VehicleMode,
    pub warning_active: bool,
    pub warning_received_at: Option<SimTime>,
    pub warning_expires_at: Option<SimTime>,
    /// Set when the active warning arrived while the front bumper was still
    /// behind the stop line.
    pub warned_behind_line: bool,
    pub spawn_time: SimTime,
    pub exit_time: Option<SimTime>,
    pub entered_box_at: Option<SimTime>,
}

impl VehicleState {
    pub fn rear(&self) -> f64 {
        self.s - self.length
    }

    pub fn has_exited(&self) -> bool {
        self.mode == VehicleMode::Exited
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KinematicParams {
    pub reaction_time: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub min_gap: f64,
    pub stationary_speed: f64,
}

impl KinematicParams {
    pub fn from_config(cfg: &SimConfig) -> Self {
        KinematicParams {
            reaction_time: cfg.reaction_time,
            max_accel: cfg.max_accel,
            max_decel: cfg.max_decel,
            min_gap: cfg.min_gap,
            stationary_speed: cfg.stationary_speed,
        }
    }
}

/// Number of vehicles one approach lane holds at minimum spacing.
pub fn approach_capacity(cfg: &SimConfig, net: &RoadNetwork) -> usize {
    let pitch = cfg.vehicle_length + cfg.min_gap;
    Direction::ALL
        .iter()
        .map(|d| (net.route(*d).stop_line_s / pitch).floor() as usize)
        .min()
        .unwrap_or(0)
}

/// Places the fleet round-robin over the four approaches, packed back from
/// the stop lines at one vehicle length plus the minimum gap.
pub fn spawn_fleet<R: Rng>(
    cfg: &SimConfig,
    net: &RoadNetwork,
    rng: &mut R,
) -> Result<Vec<VehicleState>, SpawnOverflow> {
    let per_lane = approach_capacity(cfg, net);
    if cfg.num_vehicles > per_lane * 4 {
        return Err(SpawnOverflow {
            requested: cfg.num_vehicles,
            capacity: per_lane * 4,
        });
    }
    let pitch = cfg.vehicle_length + cfg.min_gap;
    let fleet = (0..cfg.num_vehicles)
        .map(|i| {
            let approach = Direction::ALL[i % 4];
            let slot = (i / 4) as f64;
            let v_desired = rng.gen_range(cfg.speed_min..=cfg.speed_max);
            VehicleState {
                id: i as u32,
                approach,
                s: net.route(approach).stop_line_s - cfg.min_gap - slot * pitch,
                v: v_desired,
                v_desired,
                length: cfg.vehicle_length,
                mode: VehicleMode::Cruising,
                warning_active: false,
                warning_received_at: None,
                warning_expires_at: None,
                warned_behind_line: false,
                spawn_time: SimTime::ZERO,
                exit_time: None,
                entered_box_at: None,
            }
        })
        .collect();
    Ok(fleet)
}

/// Largest speed from which the gap still closes in no less than one
/// reaction time: `min(cap, gap / tau)`.
pub fn safe_speed(gap: f64, v_cap: f64, reaction_time: f64) -> f64 {
    if gap <= 0.0 {
        return 0.0;
    }
    v_cap.min(gap / reaction_time)
}

/// Stop-line position the vehicle must not pass, if any.
///
/// `warning_active` must already account for the run mode; the caller passes
/// `false` in baseline runs. Under yellow a vehicle that can no longer stop
/// at `max_decel` proceeds.
pub fn stop_target(
    veh: &VehicleState,
    signal: SignalState,
    warning_active: bool,
    route: &Route,
    params: &KinematicParams,
) -> Option<f64> {
    let line = route.stop_line_s;
    if veh.s > line {
        return None;
    }
    if warning_active {
        return Some(line);
    }
    match signal {
        SignalState::Green => None,
        SignalState::Red => Some(line),
        SignalState::Yellow => {
            let braking_distance = veh.v * veh.v / (2.0 * params.max_decel);
            (braking_distance <= line - veh.s).then_some(line)
        }
    }
}

/// Advances one vehicle by `dt`.
///
/// `lead_rear` is the rear bumper of the nearest obstacle ahead on the same
/// route, already at its updated position. The front bumper never passes
/// `lead_rear - min_gap` or `stop`.
pub fn step_vehicle(
    veh: &VehicleState,
    lead_rear: Option<f64>,
    stop: Option<f64>,
    dt: f64,
    params: &KinematicParams,
    route: &Route,
) -> VehicleState {
    let mut target = veh.v_desired;
    let mut limit = f64::INFINITY;
    if let Some(rear) = lead_rear {
        let bound = rear - params.min_gap;
        target = target.min(safe_speed(bound - veh.s, veh.v_desired, params.reaction_time));
        limit = limit.min(bound);
    }
    if let Some(line) = stop {
        target = target.min(safe_speed(line - veh.s, veh.v_desired, params.reaction_time));
        limit = limit.min(line);
    }
    let mut v = target
        .clamp(veh.v - params.max_decel * dt, veh.v + params.max_accel * dt)
        .clamp(0.0, veh.v_desired);
    let mut s = veh.s + v * dt;
    if s > limit {
        if limit > veh.s {
            v = (limit - veh.s) / dt;
            s = limit;
        } else {
            v = 0.0;
            s = veh.s;
        }
    }

    let mut next = veh.clone();
    next.mode = if route.footprint_in_box(s, veh.length) {
        VehicleMode::Crossing
    } else if v < params.stationary_speed {
        VehicleMode::Stopped
    } else if v < veh.v {
        VehicleMode::Braking
    } else {
        VehicleMode::Cruising
    };
    next.s = s;
    next.v = v;
    next
}

/// One front-bumper passage over a stop line.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossingRecord {
    pub vehicle: u32,
    pub approach: Direction,
    pub at: SimTime,
    pub signal: SignalState,
}

pub fn count_green_crossings(crossings: &[CrossingRecord]) -> usize {
    crossings.iter().filter(|c| c.signal == SignalState::Green).count()
}

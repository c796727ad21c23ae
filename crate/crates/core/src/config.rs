//! Simulation parameters, their validation, and the flat `key = value` file
//! format used for configs and config echoes.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::geometry::Direction;

/// DSRC carrier frequency. Recorded as metadata only; no PHY is simulated.
pub const DSRC_CARRIER_GHZ: f64 = 5.9;
/// DSRC licensed bandwidth. Metadata only.
pub const DSRC_BANDWIDTH_MHZ: f64 = 75.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Yellow-box warnings are broadcast and honoured.
    Protocol,
    /// Warnings disabled; vehicles only obey the signal heads.
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SignalMode {
    Fixed,
    Adaptive,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Protocol => "protocol",
            Mode::Baseline => "baseline",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "protocol" => Ok(Mode::Protocol),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("expected protocol|baseline, got `{other}`")),
        }
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalMode::Fixed => "fixed",
            SignalMode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for SignalMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(SignalMode::Fixed),
            "adaptive" => Ok(SignalMode::Adaptive),
            other => Err(format!("expected fixed|adaptive, got `{other}`")),
        }
    }
}

/// Value codec for one config field.
trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render_value(&self) -> String;
}

macro_rules! from_str_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse::<$t>().map_err(|e| format!("`{s}`: {e}"))
            }
            fn render_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

from_str_value!(usize, u32, u64, f64, Mode, SignalMode);

impl ConfigValue for Option<Direction> {
    fn parse_value(s: &str) -> Result<Self, String> {
        if s == "none" {
            Ok(None)
        } else {
            s.parse::<Direction>().map(Some)
        }
    }
    fn render_value(&self) -> String {
        match self {
            None => "none".to_string(),
            Some(d) => d.to_string(),
        }
    }
}

macro_rules! sim_config {
    ($( $(#[$doc:meta])* $name:ident : $ty:ty = $default:expr ),* $(,)?) => {
        /// Every parameter of a run. Field names double as config-file keys.
        #[derive(Clone, Debug, PartialEq)]
        pub struct SimConfig {
            $( $(#[$doc])* pub $name: $ty, )*
        }

        impl Default for SimConfig {
            fn default() -> Self {
                SimConfig { $( $name: $default, )* }
            }
        }

        impl SimConfig {
            /// Config-file keys in declaration order.
            pub const FIELD_NAMES: &'static [&'static str] = &[$( stringify!($name), )*];

            /// Sets one field from its textual form.
            pub fn set_field(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
                match key {
                    $( stringify!($name) => {
                        self.$name = <$ty as ConfigValue>::parse_value(value)
                            .map_err(|reason| ConfigError::BadValue { key: key.to_string(), reason })?;
                        Ok(())
                    } )*
                    _ => Err(ConfigError::UnknownKey(key.to_string())),
                }
            }

            /// Renders the config in the file format accepted by [`parse_config`].
            pub fn render(&self) -> String {
                let mut out = String::new();
                $( out.push_str(&format!("{} = {}\n", stringify!($name), self.$name.render_value())); )*
                out
            }
        }
    };
}

sim_config! {
    /// Number of vehicles on the network.
    num_vehicles: usize = 200,
    speed_min: f64 = 5.0,
    speed_max: f64 = 20.0,
    scenario_width: f64 = 800.0,
    scenario_height: f64 = 800.0,
    vehicle_length: f64 = 4.5,
    /// Reference figure for green-phase crossings; reported, never enforced.
    green_crossing_target: usize = 175,
    /// Distance between opposing stop lines, measured across the box.
    signal_spacing: f64 = 50.0,
    normal_packet_bytes: u32 = 512,
    warning_packet_bytes: u32 = 256,
    /// Seconds of simulated time.
    duration: f64 = 300.0,
    /// RSU sensing and radio range.
    sensor_range: f64 = 75.0,
    vehicle_range: f64 = 200.0,
    /// Channel bit rate in bits/s.
    data_rate: f64 = 6_000_000.0,
    beacon_period: f64 = 0.5,
    warning_repeat_period: f64 = 0.1,
    mobility_dt: f64 = 0.1,
    seed: u64 = 1,
    mode: Mode = Mode::Protocol,

    lane_width: f64 = 3.5,
    /// Gap between a stop line and the near edge of the yellow box.
    stop_setback: f64 = 1.0,
    reaction_time: f64 = 1.0,
    max_accel: f64 = 2.5,
    max_decel: f64 = 4.5,
    min_gap: f64 = 2.0,
    /// Speed below which a vehicle counts as stationary.
    stationary_speed: f64 = 0.5,

    slot_time: f64 = 13e-6,
    contention_window: u32 = 16,
    mac_header_bytes: u32 = 36,
    phy_overhead: f64 = 40e-6,
    p_loss: f64 = 0.0,
    /// Offset between RSU frame emissions within one protocol tick, per RSU index.
    rsu_stagger: f64 = 0.002,

    wired_latency: f64 = 0.001,
    report_period: f64 = 1.0,
    confirm_time: f64 = 1.0,
    warning_expiry: f64 = 1.0,

    signal_mode: SignalMode = SignalMode::Fixed,
    green_time: f64 = 30.0,
    green_max: f64 = 60.0,
    green_extension: f64 = 5.0,
    yellow_time: f64 = 3.0,
    all_red_time: f64 = 2.0,

    /// Length of the decision zone upstream of the stop line.
    decision_zone: f64 = 50.0,
    /// In-box dwell beyond which a stationary vehicle is a box violation.
    box_dwell_limit: f64 = 2.0,

    /// Approach whose downstream exit lane receives a stalled vehicle, or `none`.
    blockage_approach: Option<Direction> = None,
    blockage_start: f64 = 60.0,
    blockage_end: f64 = 120.0,
    /// Distance from the far box edge to the stalled vehicle's rear bumper.
    blockage_gap: f64 = 2.0,
}

impl SimConfig {
    /// Enables the standard blockage experiment: a stalled vehicle on the
    /// exit lane downstream of the north approach for t in [60, 120) s.
    pub fn with_standard_blockage(mut self) -> Self {
        self.blockage_approach = Some(Direction::N);
        self.blockage_start = 60.0;
        self.blockage_end = 120.0;
        self
    }
}

/// Checks every invariant and reports all violations, not just the first.
pub fn validate_config(raw: SimConfig) -> Result<SimConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut bad = |field: &str, reason: &str| {
        errors.push(ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.to_string(),
        })
    };
    let c = &raw;

    let positive = [
        ("speed_min", c.speed_min),
        ("speed_max", c.speed_max),
        ("scenario_width", c.scenario_width),
        ("scenario_height", c.scenario_height),
        ("vehicle_length", c.vehicle_length),
        ("signal_spacing", c.signal_spacing),
        ("duration", c.duration),
        ("sensor_range", c.sensor_range),
        ("vehicle_range", c.vehicle_range),
        ("beacon_period", c.beacon_period),
        ("warning_repeat_period", c.warning_repeat_period),
        ("mobility_dt", c.mobility_dt),
        ("lane_width", c.lane_width),
        ("stop_setback", c.stop_setback),
        ("reaction_time", c.reaction_time),
        ("max_accel", c.max_accel),
        ("max_decel", c.max_decel),
        ("min_gap", c.min_gap),
        ("stationary_speed", c.stationary_speed),
        ("slot_time", c.slot_time),
        ("phy_overhead", c.phy_overhead),
        ("wired_latency", c.wired_latency),
        ("report_period", c.report_period),
        ("confirm_time", c.confirm_time),
        ("warning_expiry", c.warning_expiry),
        ("green_time", c.green_time),
        ("green_max", c.green_max),
        ("green_extension", c.green_extension),
        ("yellow_time", c.yellow_time),
        ("all_red_time", c.all_red_time),
        ("decision_zone", c.decision_zone),
        ("box_dwell_limit", c.box_dwell_limit),
        ("blockage_gap", c.blockage_gap),
    ];
    for (name, value) in positive {
        if !(value.is_finite() && value > 0.0) {
            bad(name, "must be finite and strictly positive");
        }
    }
    for (name, value) in [("rsu_stagger", c.rsu_stagger), ("blockage_start", c.blockage_start)] {
        if !(value.is_finite() && value >= 0.0) {
            bad(name, "must be finite and non-negative");
        }
    }
    for (name, bytes) in [
        ("normal_packet_bytes", c.normal_packet_bytes),
        ("warning_packet_bytes", c.warning_packet_bytes),
    ] {
        if bytes == 0 {
            bad(name, "must be strictly positive");
        }
    }
    if c.speed_min > c.speed_max {
        bad("speed_min", "speed_min must not exceed speed_max");
    }
    if c.mobility_dt > c.beacon_period {
        bad("mobility_dt", "must not exceed beacon_period");
    }
    if c.mobility_dt > c.warning_repeat_period {
        bad("mobility_dt", "must not exceed warning_repeat_period");
    }
    if c.mobility_dt > c.reaction_time {
        bad("mobility_dt", "must not exceed reaction_time");
    }
    if !(c.data_rate.is_finite() && c.data_rate >= 1000.0) {
        bad("data_rate", "must be at least 1000 bit/s");
    }
    if !(0.0..=1.0).contains(&c.p_loss) {
        bad("p_loss", "must lie in [0, 1]");
    }
    if c.contention_window == 0 {
        bad("contention_window", "must be at least 1 slot");
    }
    if c.green_max < c.green_time {
        bad("green_max", "must be at least green_time");
    }
    if c.blockage_end <= c.blockage_start {
        bad("blockage_end", "must be after blockage_start");
    }

    if errors.is_empty() {
        Ok(raw)
    } else {
        Err(errors)
    }
}

/// Parses the line-oriented config format: `key = value`, `#` comments,
/// blank lines ignored. Missing keys keep their defaults. The result is
/// validated before it is returned.
pub fn parse_config(text: &str) -> Result<SimConfig, Vec<ConfigError>> {
    let mut cfg = SimConfig::default();
    let mut errors = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError::Parse {
                line: line_no,
                reason: "expected `key = value`".to_string(),
            });
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) && SimConfig::FIELD_NAMES.contains(&key) {
            errors.push(ConfigError::Parse {
                line: line_no,
                reason: format!("duplicate key `{key}`"),
            });
            continue;
        }
        match cfg.set_field(key, value) {
            Ok(()) => {}
            Err(ConfigError::BadValue { reason, .. }) => errors.push(ConfigError::Parse {
                line: line_no,
                reason: format!("{key}: {reason}"),
            }),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    validate_config(cfg)
}

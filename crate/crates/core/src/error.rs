use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid config field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("signal spacing {spacing} m does not fit a {width} x {height} m scenario")]
    SpacingTooLarge { spacing: f64, width: f64, height: f64 },
    #[error("arc length {s} outside lane of length {length}")]
    OutOfLane { s: f64, length: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("fleet of {requested} vehicles exceeds approach capacity of {capacity}")]
pub struct SpawnOverflow {
    pub requested: usize,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Spawn(#[from] SpawnOverflow),
    #[error("event scheduled at {at} but clock is already at {now}")]
    CausalityViolation { at: SimTime, now: SimTime },
    #[error("invariant violated at t={at}: {what}")]
    RuntimeFault { at: SimTime, what: String },
}

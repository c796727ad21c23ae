//! Discrete-event simulator for intersection congestion control over a
//! vehicular network.

pub mod config;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod mobility;
pub mod protocol;
pub mod radio;
pub mod report;
pub mod rng;
pub mod sweep;
pub mod time;

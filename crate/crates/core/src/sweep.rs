//! Parameter sweeps: cross products of config overrides times seeds.

use crate::config::{validate_config, SimConfig};
use crate::error::ConfigError;

/// Named axes available without listing values.
pub const PRESET_AXES: &[(&str, &[&str])] = &[
    ("data_rate", &["1.5e6", "3e6", "6e6", "12e6"]),
    ("normal_packet_bytes", &["128", "256", "512", "1024"]),
    ("num_vehicles", &["50", "100", "150", "200"]),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepAxis {
    pub key: String,
    pub values: Vec<String>,
}

impl SweepAxis {
    /// Parses `key=v1,v2,...`, or a bare preset name.
    pub fn parse(spec: &str) -> Result<Self, ConfigError> {
        let (key, values) = match spec.split_once('=') {
            Some((k, v)) => (k.trim(), v.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>()),
            None => {
                let key = spec.trim();
                let preset = PRESET_AXES
                    .iter()
                    .find(|(name, _)| *name == key)
                    .ok_or_else(|| ConfigError::BadValue {
                        key: key.to_string(),
                        reason: "no preset values; use key=v1,v2,...".into(),
                    })?;
                (key, preset.1.iter().map(|s| s.to_string()).collect())
            }
        };
        if !SimConfig::FIELD_NAMES.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        if values.is_empty() || values.iter().any(String::is_empty) {
            return Err(ConfigError::BadValue {
                key: key.to_string(),
                reason: "empty value list".into(),
            });
        }
        Ok(SweepAxis {
            key: key.to_string(),
            values,
        })
    }
}

/// Every (point, seed) config in run order: the first axis varies slowest
/// and seeds fastest. Seeds are `base.seed + index`, shared by all points.
pub fn expand(base: &SimConfig, axes: &[SweepAxis], seeds: u64) -> Result<Vec<SimConfig>, Vec<ConfigError>> {
    let mut points = vec![base.clone()];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.values.len());
        for p in &points {
            for v in &axis.values {
                let mut c = p.clone();
                c.set_field(&axis.key, v).map_err(|e| vec![e])?;
                next.push(c);
            }
        }
        points = next;
    }
    let mut out = Vec::with_capacity(points.len() * seeds as usize);
    for p in points {
        for i in 0..seeds.max(1) {
            let mut c = p.clone();
            c.seed = base.seed + i;
            out.push(validate_config(c)?);
        }
    }
    Ok(out)
}

//! Output files: metrics rows, run summaries, ledger dumps and traces.
//!
//! A ledger dump (`packets.csv`) carries everything needed to rebuild the
//! metrics row: the config echo and the mobility-side results sit in `#`
//! header lines, followed by one CSV row per radio frame.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::config::{parse_config, SimConfig};
use crate::engine::SimResult;
use crate::metrics::{compute_metrics, BoxViolations, MetricsReport, MobilityStats, PacketLedger, PacketRecord, Pair, WarningTag};
use crate::radio::{NodeId, Outcome, PacketKind};
use crate::time::SimTime;

pub const METRICS_HEADER: &str = "run_id,seed,mode,num_vehicles,data_rate,packet_bytes,pdr_pct,e2e_delay_ms,\
throughput_bps,loss_count,loss_bytes,blind_count,warn_delay_mean_ms,warn_delay_p95_ms,box_violations,\
travel_time_s,green_crossings";

const DUMP_MAGIC: &str = "# vanet-sim packet ledger v1";
const DUMP_COLUMNS: &str = "seq,kind,size,src,created_ns,tx_start_ns,tx_end_ns,rsu,episode,blocked,outcomes";

fn opt(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(String::new, |x| format!("{x:.decimals$}"))
}

/// One `metrics.csv` data row, without the trailing newline. Absent
/// metrics are empty fields.
pub fn metrics_row(run_id: usize, cfg: &SimConfig, m: &MetricsReport) -> String {
    let warn = m.warning_prop_delay;
    [
        run_id.to_string(),
        cfg.seed.to_string(),
        cfg.mode.to_string(),
        cfg.num_vehicles.to_string(),
        cfg.data_rate.to_string(),
        cfg.normal_packet_bytes.to_string(),
        opt(m.pdr_percent, 4),
        opt(m.mean_e2e_delay_ms, 6),
        format!("{:.3}", m.throughput_bps),
        m.loss.count.to_string(),
        m.loss.bytes.to_string(),
        m.blind_vehicle_count.to_string(),
        opt(warn.map(|w| w.mean), 6),
        opt(warn.map(|w| w.p95), 6),
        m.box_violations.total().to_string(),
        opt(m.mean_travel_time_s, 3),
        m.green_crossings.to_string(),
    ]
    .join(",")
}

pub fn metrics_csv(rows: &[String]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(r);
        out.push('\n');
    }
    out
}

fn show(v: Option<f64>, unit: &str) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.3}{unit}"))
}

/// Human-readable digest of one run.
pub fn summary(run_id: usize, r: &SimResult) -> String {
    let m = &r.metrics;
    let c = &r.config;
    let mut s = String::new();
    let _ = writeln!(s, "run {run_id}: seed {} mode {} vehicles {} data_rate {} packet {} B", c.seed, c.mode, c.num_vehicles, c.data_rate, c.normal_packet_bytes);
    let _ = writeln!(s, "  pdr              {}", show(m.pdr_percent, " %"));
    let _ = writeln!(s, "  e2e delay        {}", show(m.mean_e2e_delay_ms, " ms"));
    let _ = writeln!(s, "  throughput       {:.1} b/s", m.throughput_bps);
    let _ = writeln!(
        s,
        "  loss             {} pairs, {} B (collision {}, random {})",
        m.loss.count, m.loss.bytes, m.loss.collision, m.loss.random_loss
    );
    let _ = writeln!(
        s,
        "  pairs            intended {} delivered {} pending {} frames {}",
        m.totals.intended, m.totals.delivered, m.totals.pending, m.totals.sent_frames
    );
    for (kind, k) in &m.per_kind {
        let _ = writeln!(
            s,
            "  {kind:<16} pdr {} delay {} throughput {:.1} b/s loss {} ({} B)",
            show(k.pdr_percent, " %"),
            show(k.mean_e2e_delay_ms, " ms"),
            k.throughput_bps,
            k.loss.count,
            k.loss.bytes
        );
    }
    let _ = writeln!(s, "  blind vehicles   {}", m.blind_vehicle_count);
    match m.warning_prop_delay {
        Some(w) => {
            let _ = writeln!(s, "  warning delay    mean {:.3} ms p95 {:.3} ms max {:.3} ms ({} samples)", w.mean, w.p95, w.max, w.samples);
        }
        None => {
            let _ = writeln!(s, "  warning delay    n/a");
        }
    }
    let _ = writeln!(
        s,
        "  box violations   {} (stationary {}, warned entry {})",
        m.box_violations.total(),
        m.box_violations.stationary,
        m.box_violations.warned_entry
    );
    let _ = writeln!(s, "  travel time      {} over {} trips", show(m.mean_travel_time_s, " s"), m.completed_trips);
    let _ = writeln!(
        s,
        "  green crossings  {} ({} per green phase)",
        m.green_crossings,
        show(m.green_crossings_per_phase, "")
    );
    let rx = &m.per_vehicle_rx;
    if !rx.is_empty() {
        let min = rx.iter().min().copied().unwrap_or(0);
        let max = rx.iter().max().copied().unwrap_or(0);
        let mean = rx.iter().sum::<u64>() as f64 / rx.len() as f64;
        let _ = writeln!(s, "  rx per vehicle   min {min} mean {mean:.1} max {max}");
    }
    let _ = writeln!(s, "  wired reports    {}", m.wired_reports);
    let _ = writeln!(s, "  wall time        {:.3} s", r.wall_time.as_secs_f64());
    s
}

fn ns(t: Option<SimTime>) -> String {
    t.map_or_else(String::new, |t| t.as_nanos().to_string())
}

/// Full ledger dump. Stable across runs with the same config and seed.
pub fn dump_ledger(run_id: usize, r: &SimResult) -> String {
    let mob = &r.mobility;
    let mut s = String::new();
    let _ = writeln!(s, "{DUMP_MAGIC}");
    let _ = writeln!(s, "# run_id={run_id}");
    for line in r.config.render().lines() {
        let _ = writeln!(s, "# config {line}");
    }
    let _ = writeln!(s, "# vehicle_count={}", r.ledger.vehicle_count);
    let _ = writeln!(s, "# wired_reports={}", r.ledger.wired_reports);
    let _ = writeln!(s, "# blind_count={}", mob.blind_count);
    let _ = writeln!(s, "# box_stationary={}", mob.box_violations.stationary);
    let _ = writeln!(s, "# box_warned_entry={}", mob.box_violations.warned_entry);
    let _ = writeln!(s, "# completed_trips={}", mob.completed_trips);
    let _ = writeln!(s, "# mean_travel_time_s={}", mob.mean_travel_time_s.map_or_else(String::new, |v| v.to_string()));
    let _ = writeln!(s, "# green_crossings={}", mob.green_crossings);
    let _ = writeln!(s, "# green_phases={}", mob.green_phases);
    let _ = writeln!(s, "{DUMP_COLUMNS}");
    for rec in &r.ledger.records {
        let (rsu, episode, blocked) = rec.warning.map_or((String::new(), String::new(), String::new()), |w| {
            (w.rsu.to_string(), w.episode.to_string(), u8::from(w.blocked).to_string())
        });
        let outcomes: Vec<String> = rec
            .pairs
            .iter()
            .map(|p| format!("{}={}", p.receiver(), p.outcome.code()))
            .collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            rec.seq,
            rec.kind,
            rec.size,
            rec.src,
            rec.created_at.as_nanos(),
            ns(rec.tx_start),
            ns(rec.tx_end),
            rsu,
            episode,
            blocked,
            outcomes.join(" ")
        );
    }
    s
}

/// A run rebuilt from its ledger dump.
#[derive(Clone, Debug, PartialEq)]
pub struct DumpedRun {
    pub run_id: usize,
    pub config: SimConfig,
    pub ledger: PacketLedger,
    pub mobility: MobilityStats,
}

impl DumpedRun {
    pub fn metrics(&self) -> MetricsReport {
        compute_metrics(&self.ledger, &self.mobility, self.config.duration)
    }

    pub fn metrics_row(&self) -> String {
        metrics_row(self.run_id, &self.config, &self.metrics())
    }
}

fn parse_num<T: std::str::FromStr>(field: &str, what: &str, line: usize) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    field.parse().map_err(|e| format!("line {line}: bad {what} `{field}`: {e}"))
}

fn parse_opt_time(field: &str, what: &str, line: usize) -> Result<Option<SimTime>, String> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_num::<u64>(field, what, line).map(|n| Some(SimTime::from_nanos(n)))
    }
}

pub fn parse_ledger_dump(text: &str) -> Result<DumpedRun, String> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == DUMP_MAGIC => {}
        _ => return Err("not a packet ledger dump".into()),
    }
    let mut config_text = String::new();
    let mut meta = std::collections::BTreeMap::new();
    let mut records = Vec::new();
    let mut in_body = false;
    for (n, line) in lines {
        if !in_body {
            if line == DUMP_COLUMNS {
                in_body = true;
                continue;
            }
            let Some(rest) = line.strip_prefix("# ") else {
                return Err(format!("line {n}: unexpected header line"));
            };
            if let Some(cfg_line) = rest.strip_prefix("config ") {
                config_text.push_str(cfg_line);
                config_text.push('\n');
            } else if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            } else {
                return Err(format!("line {n}: malformed header"));
            }
            continue;
        }
        let fields: Vec<&str> = line.splitn(11, ',').collect();
        if fields.len() != 11 {
            return Err(format!("line {n}: expected 11 fields, found {}", fields.len()));
        }
        let kind: PacketKind = fields[1].parse().map_err(|e| format!("line {n}: {e}"))?;
        let src: NodeId = fields[3].parse().map_err(|e| format!("line {n}: {e}"))?;
        let warning = if fields[7].is_empty() {
            None
        } else {
            Some(WarningTag {
                rsu: parse_num(fields[7], "rsu", n)?,
                episode: parse_num(fields[8], "episode", n)?,
                blocked: parse_num::<u8>(fields[9], "blocked flag", n)? != 0,
            })
        };
        let mut pairs = Vec::new();
        for item in fields[10].split(' ').filter(|s| !s.is_empty()) {
            let (node, code) = item.split_once('=').ok_or_else(|| format!("line {n}: bad outcome `{item}`"))?;
            let node: NodeId = node.parse().map_err(|e| format!("line {n}: {e}"))?;
            let outcome = code
                .chars()
                .next()
                .and_then(Outcome::from_code)
                .filter(|_| code.len() == 1)
                .ok_or_else(|| format!("line {n}: bad outcome code `{code}`"))?;
            pairs.push(Pair::new(node, outcome));
        }
        records.push(PacketRecord {
            seq: parse_num(fields[0], "seq", n)?,
            kind,
            size: parse_num(fields[2], "size", n)?,
            src,
            created_at: SimTime::from_nanos(parse_num(fields[4], "created_ns", n)?),
            tx_start: parse_opt_time(fields[5], "tx_start_ns", n)?,
            tx_end: parse_opt_time(fields[6], "tx_end_ns", n)?,
            warning,
            pairs,
        });
    }
    if !in_body {
        return Err("missing column header".into());
    }
    let config = parse_config(&config_text).map_err(|errs| {
        let msgs: Vec<String> = errs.iter().map(ToString::to_string).collect();
        format!("config echo: {}", msgs.join("; "))
    })?;
    let get = |k: &str| meta.get(k).cloned().ok_or_else(|| format!("missing header `{k}`"));
    let int = |k: &str| -> Result<u64, String> { get(k)?.parse().map_err(|e| format!("header `{k}`: {e}")) };
    let travel = get("mean_travel_time_s")?;
    let mobility = MobilityStats {
        blind_count: int("blind_count")?,
        box_violations: BoxViolations {
            stationary: int("box_stationary")?,
            warned_entry: int("box_warned_entry")?,
        },
        completed_trips: int("completed_trips")?,
        mean_travel_time_s: if travel.is_empty() {
            None
        } else {
            Some(travel.parse().map_err(|e| format!("header `mean_travel_time_s`: {e}"))?)
        },
        green_crossings: int("green_crossings")?,
        green_phases: int("green_phases")?,
    };
    Ok(DumpedRun {
        run_id: int("run_id")? as usize,
        config,
        ledger: PacketLedger {
            records,
            vehicle_count: int("vehicle_count")? as u32,
            wired_reports: int("wired_reports")?,
        },
        mobility,
    })
}

/// Hex SHA-256 of a text artifact.
pub fn digest(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

pub fn events_trace(r: &SimResult) -> String {
    let mut s = r.trace.join("\n");
    if !s.is_empty() {
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;

    fn small() -> SimConfig {
        let mut c = SimConfig::default().with_standard_blockage();
        c.num_vehicles = 30;
        c.duration = 70.0;
        c.blockage_start = 5.0;
        c.blockage_end = 40.0;
        c
    }

    #[test]
    fn header_has_seventeen_columns() {
        assert_eq!(METRICS_HEADER.split(',').count(), 17);
    }

    #[test]
    fn one_row_per_run_with_fixed_schema() {
        let c = small();
        let r = run(&c).unwrap();
        let row = metrics_row(1, &c, &r.metrics);
        assert_eq!(row.split(',').count(), 17);
        let csv = metrics_csv(&[row]);
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn absent_pdr_is_an_empty_field() {
        let mut c = SimConfig::default();
        c.num_vehicles = 0;
        c.duration = 5.0;
        let r = run(&c).unwrap();
        let row = metrics_row(1, &c, &r.metrics);
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[6], "");
        assert_eq!(fields[7], "");
        assert_eq!(fields[12], "");
    }

    #[test]
    fn dump_round_trips_to_the_same_row() {
        let c = small();
        let r = run(&c).unwrap();
        let dump = dump_ledger(4, &r);
        let back = parse_ledger_dump(&dump).unwrap();
        assert_eq!(back.ledger, r.ledger);
        assert_eq!(back.mobility, r.mobility);
        assert_eq!(back.config, r.config);
        assert_eq!(back.metrics_row(), metrics_row(4, &c, &r.metrics));
        assert_eq!(dump_ledger(4, &r), dump);
    }

    #[test]
    fn malformed_dumps_are_rejected() {
        assert!(parse_ledger_dump("").is_err());
        assert!(parse_ledger_dump("seq,kind\n").is_err());
        let r = run(&small()).unwrap();
        let dump = dump_ledger(1, &r).replace("=D", "=X");
        assert!(parse_ledger_dump(&dump).is_err());
    }

    #[test]
    fn digest_is_hex_sha256() {
        assert_eq!(
            digest("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}

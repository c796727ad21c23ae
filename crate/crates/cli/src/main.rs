use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use vanet_core::config::{parse_config, Mode};
use vanet_core::engine::{run_scenario, Scenario};
use vanet_core::report::{dump_ledger, events_trace, metrics_csv, metrics_row, parse_ledger_dump, summary};
use vanet_core::sweep::{expand, SweepAxis};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "vanet-sim", version, about = "Intersection congestion-control simulator for vehicular networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TraceKind {
    Packets,
    Events,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Protocol,
    Baseline,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration, or a sweep over it.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed; also the base seed for --seeds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// `key=v1,v2,...`, or a preset axis name. Repeat for a cross product.
        #[arg(long)]
        sweep: Vec<String>,
        /// Runs per sweep point, seeded base, base+1, ...
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long, value_enum, value_delimiter = ',')]
        trace: Vec<TraceKind>,
    },
    /// Rebuild the metrics row from a packets.csv ledger dump.
    Recompute {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        match self {
            Failure::Config(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(EXIT_CONFIG)
            }
            Failure::Runtime(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("writing {}: {e}", path.display())))
}

fn artifact(out: &Path, stem: &str, ext: &str, run_id: usize, multi: bool) -> PathBuf {
    if multi {
        out.join(format!("{stem}_{run_id}.{ext}"))
    } else {
        out.join(format!("{stem}.{ext}"))
    }
}

fn run(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    mode: Option<ModeArg>,
    sweep: &[String],
    seeds: u64,
    trace: &[TraceKind],
) -> Result<(), Failure> {
    let text = fs::read_to_string(config).map_err(|e| Failure::Config(format!("reading {}: {e}", config.display())))?;
    let join = |errs: Vec<vanet_core::error::ConfigError>| {
        Failure::Config(errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n       "))
    };
    let mut base = parse_config(&text).map_err(join)?;
    if let Some(s) = seed {
        base.seed = s;
    }
    if let Some(m) = mode {
        base.mode = match m {
            ModeArg::Protocol => Mode::Protocol,
            ModeArg::Baseline => Mode::Baseline,
        };
    }
    if seeds == 0 {
        return Err(Failure::Config("--seeds must be at least 1".into()));
    }
    let axes = sweep
        .iter()
        .map(|s| SweepAxis::parse(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| join(vec![e]))?;
    let configs = expand(&base, &axes, seeds).map_err(join)?;

    let want_packets = trace.contains(&TraceKind::Packets);
    let want_events = trace.contains(&TraceKind::Events);
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("creating {}: {e}", out.display())))?;
    let multi = configs.len() > 1;
    let mut rows = Vec::with_capacity(configs.len());
    let mut summaries = String::new();
    for (i, cfg) in configs.into_iter().enumerate() {
        let run_id = i + 1;
        let mut scenario = Scenario::new(cfg);
        scenario.trace = want_events;
        let result = run_scenario(&scenario).map_err(|e| Failure::Runtime(format!("run {run_id}: {e}")))?;
        rows.push(metrics_row(run_id, &result.config, &result.metrics));
        summaries.push_str(&summary(run_id, &result));
        if want_packets {
            write(&artifact(out, "packets", "csv", run_id, multi), &dump_ledger(run_id, &result))?;
        }
        if want_events {
            write(&artifact(out, "events", "trace", run_id, multi), &events_trace(&result))?;
        }
        eprintln!("run {run_id} done in {:.2} s", result.wall_time.as_secs_f64());
    }
    write(&out.join("metrics.csv"), &metrics_csv(&rows))?;
    write(&out.join("summary.txt"), &summaries)
}

fn recompute(ledger: &Path, out: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(ledger).map_err(|e| Failure::Runtime(format!("reading {}: {e}", ledger.display())))?;
    let dumped = parse_ledger_dump(&text).map_err(|e| Failure::Config(format!("{}: {e}", ledger.display())))?;
    fs::create_dir_all(out).map_err(|e| Failure::Runtime(format!("creating {}: {e}", out.display())))?;
    write(&out.join("metrics.csv"), &metrics_csv(&[dumped.metrics_row()]))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run {
            config,
            seed,
            out,
            mode,
            sweep,
            seeds,
            trace,
        } => run(config, *seed, out, *mode, sweep, *seeds, trace),
        Command::Recompute { ledger, out } => recompute(ledger, out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

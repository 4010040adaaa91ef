mod serve;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use wallspace_core::sim::{replay, report_from_log, run_scenario, ScenarioConfig};
use wallspace_core::spatial::RoomSpec;

#[derive(Parser)]
#[command(name = "wallspace", version, about = "Multi-user display wall hub and experiment simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the hub for real pads, trackers and displays.
    Serve(ServeArgs),
    /// Run a scenario headless and write events.jsonl, report.json and report.csv.
    Sim {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-run an event log and check it reproduces the recorded final state.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Recompute the metrics report from an event log.
    Report {
        #[arg(long)]
        log: PathBuf,
        /// Write report.json and report.csv here instead of printing JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    Free,
    Exp1,
    Exp2Prepopulated,
    Exp2Voice,
}

#[derive(clap::Args)]
pub struct ServeArgs {
    /// Floor footprint as WIDTHxDEPTH in meters.
    #[arg(long, default_value = "12x10", value_parser = parse_room)]
    pub room: RoomSpec,
    #[arg(long, default_value = "corpus")]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    pub host: String,
    /// Address phones should use to reach this machine; encoded in the QR codes.
    #[arg(long)]
    pub public_url: Option<String>,
    #[arg(long, value_enum, default_value = "free")]
    pub experiment: ExperimentArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Append the session's event log here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Built web clients, with `display/` and `pad/` subdirectories.
    #[arg(long)]
    pub web: Option<PathBuf>,
}

fn parse_room(s: &str) -> Result<RoomSpec, String> {
    let (w, d) = s.split_once(['x', 'X']).ok_or("expected WIDTHxDEPTH, e.g. 12x10")?;
    let w: f64 = w.trim().parse().map_err(|_| format!("bad width {w:?}"))?;
    let d: f64 = d.trim().parse().map_err(|_| format!("bad depth {d:?}"))?;
    let room = RoomSpec::with_size(w, d);
    room.validate().map_err(|e| e.to_string())?;
    Ok(room)
}

fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(ScenarioConfig::from_json(&text)?.resolve_paths(base))
}

fn sim(scenario: &Path, seed: Option<u64>, out: &Path) -> Result<bool> {
    let mut cfg = load_scenario(scenario)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let run = run_scenario(&cfg)?;
    run.write_to(out).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "{:?} at {:.1} s simulated, {} log lines, {} pad errors -> {}",
        run.status,
        run.ended_at as f64 / 1000.0,
        run.log.len(),
        run.errors.len(),
        out.display()
    );
    for (agent, e) in &run.errors {
        tracing::debug!(agent, code = ?e.code, "{}", e.message);
    }
    Ok(run.completed())
}

fn read_log(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Serve(args) => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(serve::serve(args))?;
            Ok(true)
        }
        Command::Sim { scenario, seed, out } => sim(&scenario, seed, &out),
        Command::Replay { log } => {
            let outcome = replay(&read_log(&log)?)?;
            println!(
                "replayed {} frames and {} events: final state matches (revision {}, {:?})",
                outcome.frames, outcome.events, outcome.state.revision, outcome.status
            );
            Ok(true)
        }
        Command::Report { log, out } => {
            let report = report_from_log(&read_log(&log)?)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("report.json"), report.to_json())?;
                    std::fs::write(dir.join("report.csv"), report.to_csv())?;
                }
                None => println!("{}", report.to_json()),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

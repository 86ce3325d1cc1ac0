use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mosaic_cli::{apply_weights, load_scenario, load_script, write_json, write_jsonl};
use mosaic_core::events::MissionEvent;
use mosaic_core::kpi::KpiReport;
use mosaic_core::registry::JournalEntry;
use mosaic_server::{serve, SessionConfig, SessionHandle, WS_PATH};
use mosaic_sim::{run_headless, Mission, Scenario, ScriptEntry};

#[derive(Parser)]
#[command(
    name = "mosaic-sim",
    about = "Run multi-robot missions headless or as a live operator session"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mission.
    Run(Box<RunArgs>),
    /// Print the built-in field scenario as JSON.
    Scenario {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file, or `default` for the built-in field scenario.
    scenario: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mission length in simulated seconds; defaults to the scenario's.
    #[arg(long)]
    duration: Option<f64>,
    /// Run as fast as possible without a console (the default).
    #[arg(long, conflicts_with = "serve")]
    headless: bool,
    /// Serve the operator protocol on this address.
    #[arg(long, value_name = "ADDR")]
    serve: Option<SocketAddr>,
    /// Operator script to inject at its recorded times.
    #[arg(long, value_name = "OPS_JSONL")]
    replay: Option<PathBuf>,
    /// Write the accepted operator commands as a script.
    #[arg(long, value_name = "OPS_JSONL")]
    record: Option<PathBuf>,
    /// Per-robot weight overrides (TOML).
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Event log output.
    #[arg(long, default_value = "mission.jsonl")]
    log: PathBuf,
    /// KPI report output (JSON).
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    /// Registry journal output.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Simulated seconds per wall-clock second when serving.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    /// Wait for a console `start` command instead of running at once.
    #[arg(long)]
    wait: bool,
}

struct Output {
    log: Vec<MissionEvent>,
    applied: Vec<ScriptEntry>,
    journal: Vec<JournalEntry>,
    report: Option<KpiReport>,
    end_reason: String,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Scenario { out } => {
            let json = Scenario::field_default().to_json();
            match out {
                Some(path) => std::fs::write(&path, json + "\n")
                    .with_context(|| format!("writing {}", path.display())),
                None => {
                    println!("{json}");
                    Ok(())
                }
            }
        }
        Command::Run(args) => run(*args),
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(path) = &args.weights {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        apply_weights(&mut scenario, &text)?;
    }
    if let Some(d) = args.duration {
        scenario.duration = d;
    }
    let script = match &args.replay {
        Some(path) => load_script(path)?,
        None => Vec::new(),
    };
    let out = match args.serve {
        Some(addr) => serve_live(scenario, &args, addr, script)?,
        None => {
            let result = run_headless(scenario, args.seed, None, &script)?;
            Output {
                applied: result.applied,
                log: result.log,
                journal: result.journal,
                report: Some(result.report),
                end_reason: result.end_reason,
            }
        }
    };
    write_jsonl(&args.log, &out.log)?;
    if let Some(path) = &args.journal {
        write_jsonl(path, &out.journal)?;
    }
    if let Some(path) = &args.record {
        write_jsonl(path, &out.applied)?;
    }
    eprintln!(
        "mission ended ({}), {} events",
        out.end_reason,
        out.log.len()
    );
    if let Some(report) = &out.report {
        write_json(&args.report, report)?;
        println!("{}", report.to_table());
    }
    Ok(())
}

fn serve_live(
    scenario: Scenario,
    args: &RunArgs,
    addr: SocketAddr,
    script: Vec<ScriptEntry>,
) -> Result<Output> {
    let runtime = tokio::runtime::Runtime::new()?;
    let seed = args.seed;
    let config = SessionConfig {
        speed: args.speed,
        autostart: !args.wait,
        script,
        ..SessionConfig::default()
    };
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        eprintln!("serving ws://{}{WS_PATH}", listener.local_addr()?);
        let mission = Mission::new(scenario, seed)?;
        let session = SessionHandle::spawn(mission, seed, config);
        let server = tokio::spawn(serve(listener, session.clone()));
        let outcome = session.finished().await;
        // let consoles receive the final frames
        tokio::time::sleep(Duration::from_millis(250)).await;
        server.abort();
        Ok(Output {
            log: outcome.log.clone(),
            applied: outcome.applied.clone(),
            journal: outcome.journal.clone(),
            report: outcome.report.clone(),
            end_reason: outcome.end_reason.clone(),
        })
    })
}

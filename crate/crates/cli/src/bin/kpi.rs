use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use mosaic_cli::load_scenario;
use mosaic_core::events::read_jsonl;
use mosaic_core::kpi::KpiReport;

#[derive(Parser)]
#[command(name = "kpi", about = "Compute mission KPIs from an event log")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report KPIs for one mission log.
    Report {
        log: PathBuf,
        /// Scenario the log came from (for the ground-truth target list), or `default`.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

fn main() -> Result<()> {
    let Command::Report {
        log,
        scenario,
        format,
    } = Cli::parse().command;
    let scenario = load_scenario(&scenario)?;
    let file = File::open(&log).with_context(|| format!("opening {}", log.display()))?;
    let events =
        read_jsonl(BufReader::new(file)).with_context(|| format!("reading {}", log.display()))?;
    let report = KpiReport::from_log(&events, &scenario.target_refs())?;
    match format {
        Format::Table => println!("{}", report.to_table()),
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

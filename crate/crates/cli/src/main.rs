use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use panel_trend::ingest::{Measure, Schema};
use panel_trend::panel::{EvalRule, Region};

mod output;
mod run;

#[derive(Parser)]
#[command(name = "panel-trend", version, about = "Trend exponents and growth ratios for unbalanced count panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the trend exponent and ratio series, or rolling-window dynamics.
    Estimate(EstimateArgs),
    /// Draw a synthetic panel from a TOML spec.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum CaseArg {
    /// ln(count + 1)
    #[value(name = "1")]
    One,
    /// ln((count + 1) / density)
    #[value(name = "2")]
    Two,
    /// Feed already holds transformed values.
    #[value(name = "raw")]
    Raw,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
pub enum ModelArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
pub enum WindowBandwidthArg {
    /// Reuse the full-sample bandwidth in every window.
    Fixed,
    /// Cross-validate inside each window.
    Cv,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HArg {
    Auto,
    Fixed(f64),
}

fn parse_h(s: &str) -> Result<HArg, String> {
    if s == "auto" {
        return Ok(HArg::Auto);
    }
    s.parse::<f64>()
        .map(HArg::Fixed)
        .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
}

fn parse_date(s: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("expected YYYY-MM-DD, got `{s}`"))
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Case/death feed.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    feed: Option<PathBuf>,
    #[arg(long, default_value = "canonical", value_parser = |s: &str| s.parse::<Schema>())]
    schema: Schema,
    /// Population density table (`country_code,density`).
    #[arg(long)]
    density: Option<PathBuf>,
    /// Generate the panel from a synthetic spec instead of reading a feed.
    #[arg(long)]
    synthetic: Option<PathBuf>,
    #[arg(long, default_value = "EU", value_parser = |s: &str| s.parse::<Region>())]
    region: Region,
    #[arg(long, default_value = "infection", value_parser = |s: &str| s.parse::<Measure>())]
    measure: Measure,
    #[arg(long = "case", value_enum, default_value = "1")]
    case: CaseArg,
    #[arg(long, value_enum, default_value = "1")]
    model: ModelArg,
    /// `auto` for cross-validation, or a bandwidth in (0, 1].
    #[arg(long, default_value = "auto", value_parser = parse_h)]
    h: HArg,
    /// `quarter`, `logn`, `explicit:K` or `tail:K`.
    #[arg(long, default_value = "quarter", value_parser = |s: &str| s.parse::<EvalRule>())]
    c_rule: EvalRule,
    /// Days dropped from the start of the region (30, or 40 with --rolling).
    #[arg(long)]
    trim: Option<usize>,
    #[arg(long, default_value_t = 20.0)]
    death_threshold: f64,
    /// Last day used (YYYY-MM-DD); defaults to the last date in the feed.
    #[arg(long, value_parser = parse_date)]
    cutoff: Option<NaiveDate>,
    /// Rolling-window estimates instead of a single full-sample fit.
    #[arg(long)]
    rolling: bool,
    #[arg(long, default_value_t = 30)]
    window: usize,
    /// Evaluation rule inside each rolling window.
    #[arg(long, default_value = "tail:5", value_parser = |s: &str| s.parse::<EvalRule>())]
    window_c_rule: EvalRule,
    #[arg(long, value_enum, default_value = "fixed")]
    window_bandwidth: WindowBandwidthArg,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed of a synthetic spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Reference unit for loading ratios (defaults to the largest final-day count).
    #[arg(long)]
    reference: Option<String>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// TOML synthetic spec.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => run::estimate(&args),
        Command::Simulate(args) => run::simulate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dap_core::scenario::Profile;

const AFTER_HELP: &str = "\
Configuration is layered: built-in defaults, then --config, then DAP_*
environment variables, then --set. An environment variable maps to a key by
dropping the DAP_ prefix, lowercasing and reading `__` as `.`, so
DAP_MAC__CAP_SLOTS=12 sets mac.cap_slots. Run `dap-planner keys` for the list.

Exit codes: 0 success, 1 error, 2 usage error, 3 plan left meters
unconnected, 4 radio budget infeasible, 5 validation gap above threshold.";

#[derive(Debug, Parser)]
#[command(name = "dap-planner", version, about = "DAP placement planning for smart-meter mesh networks", after_help = AFTER_HELP)]
pub struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for layout generation and simulation; recorded in every output.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out: PathBuf,
    /// Worker threads (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Do not print summaries to stdout.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario and the configuration it was made with.
    Generate(GenerateArgs),
    /// Place DAPs and write the solution and report files.
    Plan(PlanArgs),
    /// Simulate a solution and compare on-time delivery with the analysis.
    Validate(ValidateArgs),
    /// Compare the heuristic with exhaustive search on small instances.
    Exact(ExactArgs),
    /// Rewrite the report files of an existing solution.
    Report(ReportArgs),
    /// List configuration keys.
    Keys,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Rural,
    Suburban,
    Urban,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Profile {
        match p {
            ProfileArg::Rural => Profile::Rural,
            ProfileArg::Suburban => Profile::Suburban,
            ProfileArg::Urban => Profile::Urban,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "suburban")]
    pub profile: ProfileArg,
    /// Number of smart meters.
    #[arg(long)]
    pub sms: usize,
    /// Number of candidate poles (default: same as --sms).
    #[arg(long)]
    pub poles: Option<usize>,
    /// Square area in km² (default: meters over the profile's density).
    #[arg(long)]
    pub area: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    /// Node file (`id,kind,x,y,height,indoor`).
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// Run the constraint checker on the result; violations are an error.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// Solution to simulate; planned afresh when omitted.
    #[arg(long, value_name = "FILE")]
    pub solution: Option<PathBuf>,
    /// Also write every simulated packet to des_samples.csv.
    #[arg(long)]
    pub samples: bool,
    /// Lower every analytic reliability by this amount before comparing.
    #[arg(long, hide = true, value_name = "DELTA")]
    pub corrupt_analytic: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    /// Node file; when omitted, synthetic instances are generated.
    #[arg(long, value_name = "FILE", conflicts_with = "sweep")]
    pub scenario: Option<PathBuf>,
    /// Number of synthetic instances, seeded from --seed upwards.
    #[arg(long, default_value_t = 1)]
    pub sweep: u64,
    #[arg(long, value_enum, default_value = "rural")]
    pub profile: ProfileArg,
    #[arg(long, default_value_t = 30)]
    pub sms: usize,
    #[arg(long, default_value_t = 12)]
    pub poles: usize,
    /// Square area in km² (default: meters over the profile's density).
    #[arg(long)]
    pub area: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub solution: PathBuf,
}

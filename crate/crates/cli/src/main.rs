use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Area, timing, energy and close-page simulation for 2D and M3D DRAM banks.
#[derive(Parser, Debug)]
#[command(name = "m3dram", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Global {
    /// TOML run configuration
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Config override as a dotted key, e.g. `--set tech.vdd=1.1` (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Reference table to calibrate against instead of the bundled one
    #[arg(long, global = true, value_name = "PATH")]
    pub reference: Option<PathBuf>,

    /// Fitted constants written by `calibrate`
    #[arg(long, global = true, value_name = "PATH")]
    pub calibration: Option<PathBuf>,

    /// Background power in watts
    #[arg(long, global = true)]
    pub p_background: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Geometry, timing and energy parameters per organization
    Params(ParamsArgs),
    /// Fit circuit, tCAS and energy constants to the reference table
    Calibrate(CalibrateArgs),
    /// Die area and latency for every configured organization
    Sweep(SweepArgs),
    /// Replay a trace on one or more organizations
    Simulate(SimulateArgs),
    /// Write a synthetic trace
    GenTrace(GenTraceArgs),
    /// Check a command log against the timing rules
    ValidateLog(ValidateArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Source {
    /// Reference values when the table has a complete row, model otherwise
    #[default]
    Auto,
    Reference,
    Model,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Uniform,
    Stream,
    Conflict,
    Mixed,
}

#[derive(Args, Debug)]
pub struct ParamsArgs {
    /// Organization name (repeatable); defaults to the configured set or the
    /// three reference organizations
    #[arg(long = "org")]
    pub orgs: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Leave this organization out of the fit and report its predictions
    #[arg(long, value_name = "ORG")]
    pub hold_out: Option<String>,
    /// Where to write the fitted constants (JSON); stdout otherwise
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Organization the die area is normalized to
    #[arg(long, default_value = "ddr4-512")]
    pub baseline: String,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TraceSpec {
    /// Synthetic trace kind
    #[arg(long, value_enum, default_value_t = Kind::Uniform)]
    pub kind: Kind,
    /// Number of requests
    #[arg(short = 'n', long, default_value_t = 100_000)]
    pub requests: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Mean gap between requests in cycles
    #[arg(long)]
    pub mean_interarrival: Option<f64>,
    /// Read share of `mixed` traces
    #[arg(long)]
    pub read_fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Trace file (gzip accepted); a synthetic trace is generated otherwise
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub generator: TraceSpec,
    /// Organization name (repeatable); defaults to the configured set or the
    /// three reference organizations
    #[arg(long = "org")]
    pub orgs: Vec<String>,
    /// Where timing and energy values come from
    #[arg(long, value_enum, default_value_t = Source::Auto)]
    pub params: Source,
    /// Directory to write one `<org>.csv` command log per organization
    #[arg(long, value_name = "DIR")]
    pub dump_commands: Option<PathBuf>,
    /// Disable periodic refresh
    #[arg(long)]
    pub no_refresh: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenTraceArgs {
    #[command(flatten)]
    pub generator: TraceSpec,
    /// Organization whose address map the trace targets
    #[arg(long, default_value = "ddr4-512")]
    pub org: String,
    /// Output path; a `.gz` name is compressed. Stdout otherwise
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Command log in `cycle,command,bank,row` form
    pub log: PathBuf,
    /// Organization whose timings the log is checked against
    #[arg(long, default_value = "ddr4-512")]
    pub org: String,
    #[arg(long, value_enum, default_value_t = Source::Auto)]
    pub params: Source,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

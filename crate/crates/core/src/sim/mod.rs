//! Trace-driven close-page controller simulation.

mod address;
mod controller;
mod log;
mod validator;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::energy::{PowerBreakdown, ROWS_REFRESHED_PER_REF};

pub use address::{decode_address, AddressMap, DecodedAddress, LINE_BYTES};
pub use controller::{run_simulation, BankPhase, Controller, SimTimings, CYCLE_PS};
pub use log::{read_command_log, write_command_log};
pub use validator::{validate_log, ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommandKind {
    Ref,
    Act,
    Rd,
    Wr,
    Pre,
}

impl CommandKind {
    pub fn mnemonic(self) -> &'static str {
        match self {
            CommandKind::Ref => "REF",
            CommandKind::Act => "ACT",
            CommandKind::Rd => "RD",
            CommandKind::Wr => "WR",
            CommandKind::Pre => "PRE",
        }
    }
}

impl fmt::Display for CommandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// One issued command. REF targets every bank and carries no bank or row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub time_ps: u64,
    pub kind: CommandKind,
    pub bank: Option<u32>,
    pub row: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub refresh: bool,
    pub rows_per_refresh: u32,
    /// Minimum simulated time in seconds; the run lasts at least until the
    /// last request completes.
    pub duration: f64,
    pub record_commands: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { refresh: true, rows_per_refresh: ROWS_REFRESHED_PER_REF, duration: 0.0, record_commands: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub n_reads: u64,
    pub n_writes: u64,
    pub n_activates: u64,
    pub n_precharges: u64,
    pub n_refreshes: u64,
    pub sum_latency_ps: u128,
    pub avg_access_latency_ns: f64,
    pub throughput_bits_per_s: f64,
    pub wall_time_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub org: String,
    pub stats: SimStats,
    pub power: PowerBreakdown,
    /// J·s/bit; absent when nothing was accessed.
    pub edp: Option<f64>,
    pub edp_pj_ns: Option<f64>,
    #[serde(skip)]
    pub commands: Option<Vec<Command>>,
}

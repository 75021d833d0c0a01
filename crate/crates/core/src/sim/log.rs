//! Command log as CSV: `cycle,command,bank,row`.
//!
//! `cycle` is the issue time in 1 GHz controller cycles, written with three
//! decimals so it stays exact at picosecond resolution. REF leaves bank and
//! row empty.

use std::io::{Read, Write};

use super::{Command, CommandKind};
use crate::error::{Error, Result};

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

pub fn write_command_log<W: Write>(out: W, commands: &[Command]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cycle", "command", "bank", "row"]).map_err(csv_err)?;
    let opt = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in commands {
        w.write_record([
            format!("{}.{:03}", c.time_ps / 1000, c.time_ps % 1000),
            c.kind.mnemonic().to_string(),
            opt(c.bank),
            opt(c.row),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a log written by [`write_command_log`] back into commands.
pub fn read_command_log<R: Read>(input: R) -> Result<Vec<Command>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err)?;
        let bad = |reason: String| Error::TraceParse { line, reason };
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", rec.len())));
        }
        let time: f64 = rec[0].parse().map_err(|_| bad(format!("bad cycle `{}`", &rec[0])))?;
        let kind = match &rec[1] {
            "REF" => CommandKind::Ref,
            "ACT" => CommandKind::Act,
            "RD" => CommandKind::Rd,
            "WR" => CommandKind::Wr,
            "PRE" => CommandKind::Pre,
            other => return Err(bad(format!("unknown command `{other}`"))),
        };
        let opt = |s: &str| -> Result<Option<u32>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(format!("bad number `{s}`")))
            }
        };
        out.push(Command { time_ps: (time * 1000.0).round() as u64, kind, bank: opt(&rec[2])?, row: opt(&rec[3])? });
    }
    Ok(out)
}

//! Post-hoc checker for command logs.
//!
//! Re-reads the CSV text and replays it against the timing rules with its
//! own bookkeeping, independent of the controller that produced it.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timing::TimingParams;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub line: usize,
    pub rule: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub commands: usize,
    pub activates: usize,
    pub refreshes: usize,
    /// Most ACTs seen in any window of length tFAW.
    pub max_acts_in_faw_window: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Default, Clone, Copy)]
struct BankTrack {
    open: Option<(i64, Option<u64>)>,
    col_at: Option<i64>,
    last_act: Option<i64>,
    last_pre: Option<i64>,
    busy_until: i64,
}

struct Limits {
    rcd: i64,
    rp: i64,
    ras: i64,
    rc: i64,
    faw: i64,
    burst: i64,
    bus: i64,
    refresh: i64,
}

fn ps(seconds: f64) -> i64 {
    (seconds * 1e12).round() as i64
}

/// Checks a `cycle,command,bank,row` log against `timings`.
///
/// Malformed lines are errors; rule breaks are collected as violations.
pub fn validate_log<R: Read>(
    input: R,
    timings: &TimingParams,
    banks: usize,
    rows_per_refresh: u32,
) -> Result<ValidationReport> {
    let lim = Limits {
        rcd: ps(timings.t_rcd),
        rp: ps(timings.t_rp),
        ras: ps(timings.t_ras),
        rc: ps(timings.t_rc),
        faw: ps(timings.t_faw),
        burst: ps(timings.t_burst),
        bus: 1000,
        refresh: i64::from(rows_per_refresh) * ps(timings.t_rc),
    };
    let mut state = vec![BankTrack::default(); banks];
    let mut acts: VecDeque<i64> = VecDeque::new();
    let mut window: VecDeque<i64> = VecDeque::new();
    let mut report =
        ValidationReport { commands: 0, activates: 0, refreshes: 0, max_acts_in_faw_window: 0, violations: Vec::new() };
    let mut last_time: Option<i64> = None;

    for (i, raw) in BufReader::new(input).lines().enumerate() {
        let raw = raw?;
        let line = i + 1;
        let text = raw.trim();
        if text.is_empty() || (line == 1 && text.starts_with("cycle")) {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let malformed = |reason: String| Error::TraceParse { line, reason };
        if fields.len() != 4 {
            return Err(malformed(format!("expected cycle,command,bank,row; got `{text}`")));
        }
        let (whole, frac) = fields[0].split_once('.').unwrap_or((fields[0], "0"));
        let frac = format!("{frac:0<3}");
        let now = whole
            .parse::<i64>()
            .ok()
            .zip(frac.get(..3).and_then(|f| f.parse::<i64>().ok()))
            .map(|(w, f)| w * 1000 + f)
            .ok_or_else(|| malformed(format!("bad cycle `{}`", fields[0])))?;
        let bank = if fields[2].is_empty() {
            None
        } else {
            let b: usize = fields[2].parse().map_err(|_| malformed(format!("bad bank `{}`", fields[2])))?;
            if b >= banks {
                return Err(malformed(format!("bank {b} out of range")));
            }
            Some(b)
        };
        let row: Option<u64> = if fields[3].is_empty() {
            None
        } else {
            Some(fields[3].parse().map_err(|_| malformed(format!("bad row `{}`", fields[3])))?)
        };
        report.commands += 1;

        let mut flag =
            |rule: &str, detail: String| report.violations.push(Violation { line, rule: rule.to_string(), detail });
        if let Some(prev) = last_time {
            if now < prev {
                flag("order", format!("time {now} ps before previous {prev} ps"));
            } else if now - prev < lim.bus {
                flag("bus", format!("{} ps after previous command", now - prev));
            }
        }
        last_time = Some(now);

        let cmd = fields[1];
        if cmd == "REF" {
            report.refreshes += 1;
            for (b, s) in state.iter_mut().enumerate() {
                if s.open.is_some() {
                    flag("REF", format!("bank {b} still open"));
                }
                if let Some(p) = s.last_pre {
                    if now - p < lim.rp {
                        flag("tRP", format!("REF {} ps after PRE on bank {b}", now - p));
                    }
                }
                if now < s.busy_until {
                    flag("REF", format!("bank {b} still refreshing"));
                }
                s.busy_until = now + lim.refresh;
            }
            continue;
        }
        let Some(b) = bank else {
            return Err(malformed(format!("{cmd} needs a bank")));
        };
        let s = &mut state[b];
        match cmd {
            "ACT" => {
                report.activates += 1;
                if s.open.is_some() {
                    flag("ACT", format!("bank {b} already open"));
                }
                if let Some(a) = s.last_act {
                    if now - a < lim.rc {
                        flag("tRC", format!("bank {b}: ACT {} ps after ACT", now - a));
                    }
                }
                if let Some(p) = s.last_pre {
                    if now - p < lim.rp {
                        flag("tRP", format!("bank {b}: ACT {} ps after PRE", now - p));
                    }
                }
                if now < s.busy_until {
                    flag("refresh", format!("bank {b}: ACT during refresh"));
                }
                s.open = Some((now, row));
                s.col_at = None;
                s.last_act = Some(now);
                if acts.len() == 4 {
                    let oldest = acts.pop_front().unwrap_or(now);
                    if now - oldest < lim.faw {
                        flag("tFAW", format!("fifth ACT {} ps after the first", now - oldest));
                    }
                }
                acts.push_back(now);
                while window.front().is_some_and(|&t| now - t >= lim.faw) {
                    window.pop_front();
                }
                window.push_back(now);
                report.max_acts_in_faw_window = report.max_acts_in_faw_window.max(window.len());
            }
            "RD" | "WR" => match s.open {
                None => flag(cmd, format!("bank {b} not open")),
                Some((a, open_row)) => {
                    if now - a < lim.rcd {
                        flag("tRCD", format!("bank {b}: {cmd} {} ps after ACT", now - a));
                    }
                    if open_row != row {
                        flag(cmd, format!("bank {b}: row {row:?} but {open_row:?} is open"));
                    }
                    if s.col_at.is_some() {
                        flag("close-page", format!("bank {b}: second column command for one ACT"));
                    }
                    s.col_at = Some(now);
                }
            },
            "PRE" => {
                match s.open {
                    None => flag("PRE", format!("bank {b} not open")),
                    Some((a, _)) => {
                        if now - a < lim.ras {
                            flag("tRAS", format!("bank {b}: PRE {} ps after ACT", now - a));
                        }
                        match s.col_at {
                            Some(c) if now - c < lim.burst => {
                                flag("tBURST", format!("bank {b}: PRE {} ps after column", now - c))
                            }
                            None => flag("close-page", format!("bank {b}: PRE without a column command")),
                            _ => {}
                        }
                    }
                }
                s.open = None;
                s.col_at = None;
                s.last_pre = Some(now);
            }
            other => return Err(malformed(format!("unknown command `{other}`"))),
        }
    }
    for (b, s) in state.iter().enumerate() {
        if s.open.is_some() {
            report.violations.push(Violation { line: 0, rule: "end".into(), detail: format!("bank {b} left open") });
        }
    }
    Ok(report)
}

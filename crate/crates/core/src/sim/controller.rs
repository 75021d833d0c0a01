use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::address::{AddressMap, LINE_BYTES};
use super::{Command, CommandKind, SimConfig, SimReport, SimStats};
use crate::energy::{aggregate_power, compute_edp, edp_pj_ns, ActivityCounts, EnergyParams};
use crate::error::{Error, Result};
use crate::geometry::OrgSpec;
use crate::timing::TimingParams;
use crate::trace::{Op, TraceRecord};

/// Picoseconds per controller cycle (1 GHz).
pub const CYCLE_PS: u64 = 1000;

/// Timing constraints quantized to whole picoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTimings {
    pub t_rcd: u64,
    pub t_cas: u64,
    pub t_rp: u64,
    pub t_ras: u64,
    pub t_rc: u64,
    pub t_faw: u64,
    pub t_refi: u64,
    pub t_burst: u64,
    /// Command bus occupancy per command.
    pub t_cmd: u64,
    pub rows_per_refresh: u64,
}

fn to_ps(seconds: f64) -> u64 {
    (seconds * 1e12).round() as u64
}

impl SimTimings {
    pub fn from_params(p: &TimingParams, rows_per_refresh: u32) -> Self {
        Self {
            t_rcd: to_ps(p.t_rcd),
            t_cas: to_ps(p.t_cas),
            t_rp: to_ps(p.t_rp),
            t_ras: to_ps(p.t_ras),
            t_rc: to_ps(p.t_rc),
            t_faw: to_ps(p.t_faw),
            t_refi: to_ps(p.t_refi),
            t_burst: to_ps(p.t_burst),
            t_cmd: CYCLE_PS,
            rows_per_refresh: u64::from(rows_per_refresh),
        }
    }

    pub fn close_page_latency(&self) -> u64 {
        self.t_rcd + self.t_cas + self.t_burst
    }

    /// Time a REF keeps every bank busy.
    pub fn refresh_busy(&self) -> u64 {
        self.rows_per_refresh * self.t_rc
    }
}

/// What a bank is doing at a given instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BankPhase {
    Precharged,
    Activating,
    Active,
    Precharging,
    Refreshing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowState {
    Closed,
    Opened { req: usize, act: u64 },
    Accessed { req: usize, act: u64, col: u64 },
}

#[derive(Debug, Clone)]
struct Bank {
    queue: VecDeque<usize>,
    row: RowState,
    /// Earliest next ACT (tRP after PRE, tRC after ACT, refresh busy time).
    act_ok: u64,
    /// When the last precharge (or refresh) finishes.
    precharged_at: u64,
    refreshing_until: u64,
}

impl Bank {
    fn new() -> Self {
        Self { queue: VecDeque::new(), row: RowState::Closed, act_ok: 0, precharged_at: 0, refreshing_until: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Request {
    arrival: u64,
    op: Op,
    row: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    time: u64,
    /// Arrival of the request the command serves; refresh sorts first.
    age: u64,
    req: usize,
    bank: usize,
    kind: CommandKind,
}

/// Close-page controller for one rank: FCFS per bank, oldest request first
/// when several commands want the bus at the same time.
#[derive(Debug, Clone)]
pub struct Controller {
    t: SimTimings,
    banks: Vec<Bank>,
    requests: Vec<Request>,
    bus_free: u64,
    faw: VecDeque<u64>,
    next_ref: u64,
    refresh: bool,
    counts: ActivityCounts,
    n_precharges: u64,
    sum_latency: u128,
    completed: usize,
    last_completion: u64,
    log: Option<Vec<Command>>,
}

impl Controller {
    pub fn new(spec: &OrgSpec, timings: SimTimings, refresh: bool, record: bool) -> Self {
        Self {
            t: timings,
            banks: (0..spec.banks).map(|_| Bank::new()).collect(),
            requests: Vec::new(),
            bus_free: 0,
            faw: VecDeque::with_capacity(4),
            next_ref: timings.t_refi,
            refresh: refresh && timings.t_refi > 0,
            counts: ActivityCounts::default(),
            n_precharges: 0,
            sum_latency: 0,
            completed: 0,
            last_completion: 0,
            log: record.then(Vec::new),
        }
    }

    /// Queues a request; arrivals must be non-decreasing.
    pub fn enqueue(&mut self, arrival_ps: u64, op: Op, bank: u32, row: u32) {
        let id = self.requests.len();
        self.requests.push(Request { arrival: arrival_ps, op, row });
        self.banks[bank as usize].queue.push_back(id);
    }

    pub fn phase(&self, bank: usize, now: u64) -> BankPhase {
        let b = &self.banks[bank];
        match b.row {
            RowState::Opened { act, .. } if now < act + self.t.t_rcd => BankPhase::Activating,
            RowState::Opened { .. } | RowState::Accessed { .. } => BankPhase::Active,
            RowState::Closed if now < b.refreshing_until => BankPhase::Refreshing,
            RowState::Closed if now < b.precharged_at => BankPhase::Precharging,
            RowState::Closed => BankPhase::Precharged,
        }
    }

    fn pending(&self) -> bool {
        self.completed < self.requests.len()
    }

    fn faw_ok(&self) -> u64 {
        if self.faw.len() == 4 {
            self.faw[0] + self.t.t_faw
        } else {
            0
        }
    }

    /// The REF that is due, if refresh must run before `horizon`.
    fn refresh_due(&self, horizon: u64) -> Option<u64> {
        (self.refresh && self.next_ref <= horizon).then_some(self.next_ref)
    }

    fn refresh_candidate(&self, horizon: u64) -> Option<Candidate> {
        let due = self.refresh_due(horizon)?;
        if self.banks.iter().any(|b| b.row != RowState::Closed) {
            return None;
        }
        let ready = self.banks.iter().map(|b| b.precharged_at).max().unwrap_or(0);
        Some(Candidate {
            time: due.max(ready).max(self.bus_free),
            age: 0,
            req: usize::MAX,
            bank: usize::MAX,
            kind: CommandKind::Ref,
        })
    }

    fn bank_candidate(&self, i: usize, horizon: u64) -> Option<Candidate> {
        let b = &self.banks[i];
        let t = &self.t;
        let (time, req, kind) = match b.row {
            RowState::Opened { req, act } => {
                let kind = match self.requests[req].op {
                    Op::Read => CommandKind::Rd,
                    Op::Write => CommandKind::Wr,
                };
                ((act + t.t_rcd).max(self.bus_free), req, kind)
            }
            RowState::Accessed { req, act, col } => {
                ((act + t.t_ras).max(col + t.t_burst).max(self.bus_free), req, CommandKind::Pre)
            }
            RowState::Closed => {
                let &req = b.queue.front()?;
                let time = self.requests[req].arrival.max(b.act_ok).max(self.bus_free).max(self.faw_ok());
                // a due refresh holds back new activations
                if self.refresh_due(horizon).is_some_and(|due| time >= due) {
                    return None;
                }
                (time, req, CommandKind::Act)
            }
        };
        Some(Candidate { time, age: self.requests[req].arrival, req, bank: i, kind })
    }

    /// Chooses the next command to issue without changing state.
    fn next_candidate(&self, horizon: u64) -> Option<Candidate> {
        (0..self.banks.len())
            .filter_map(|i| self.bank_candidate(i, horizon))
            .chain(self.refresh_candidate(horizon))
            .min()
    }

    fn issue(&mut self, c: Candidate) -> Result<Command> {
        let t = self.t;
        let now = c.time;
        if now < self.bus_free {
            return Err(Error::TimingViolation(format!("command bus busy at {now} ps")));
        }
        self.bus_free = now + t.t_cmd;
        let cmd = match c.kind {
            CommandKind::Ref => {
                let until = now + t.refresh_busy();
                for b in &mut self.banks {
                    if b.row != RowState::Closed || now < b.precharged_at {
                        return Err(Error::TimingViolation(format!("REF at {now} ps with a bank not precharged")));
                    }
                    b.act_ok = b.act_ok.max(until);
                    b.precharged_at = until;
                    b.refreshing_until = until;
                }
                self.next_ref += t.t_refi;
                self.counts.n_refreshes += 1;
                Command { time_ps: now, kind: CommandKind::Ref, bank: None, row: None }
            }
            kind => {
                let r = self.requests[c.req];
                let b = &mut self.banks[c.bank];
                match kind {
                    CommandKind::Act => {
                        if now < b.act_ok || (self.faw.len() == 4 && now < self.faw[0] + t.t_faw) {
                            return Err(Error::TimingViolation(format!("ACT to bank {} at {now} ps", c.bank)));
                        }
                        b.queue.pop_front();
                        b.row = RowState::Opened { req: c.req, act: now };
                        b.act_ok = now + t.t_rc;
                        if self.faw.len() == 4 {
                            self.faw.pop_front();
                        }
                        self.faw.push_back(now);
                        self.counts.n_activates += 1;
                    }
                    CommandKind::Rd | CommandKind::Wr => {
                        let RowState::Opened { act, .. } = b.row else {
                            return Err(Error::TimingViolation(format!("column command to closed bank {}", c.bank)));
                        };
                        if now < act + t.t_rcd {
                            return Err(Error::TimingViolation(format!("tRCD on bank {} at {now} ps", c.bank)));
                        }
                        b.row = RowState::Accessed { req: c.req, act, col: now };
                        let done = if kind == CommandKind::Rd {
                            self.counts.n_reads += 1;
                            now + t.t_cas + t.t_burst
                        } else {
                            self.counts.n_writes += 1;
                            now + t.t_burst
                        };
                        self.sum_latency += u128::from(done - r.arrival);
                        self.completed += 1;
                        self.last_completion = self.last_completion.max(done);
                    }
                    CommandKind::Pre => {
                        let RowState::Accessed { act, col, .. } = b.row else {
                            return Err(Error::TimingViolation(format!("PRE to bank {} without an access", c.bank)));
                        };
                        if now < act + t.t_ras || now < col + t.t_burst {
                            return Err(Error::TimingViolation(format!("tRAS on bank {} at {now} ps", c.bank)));
                        }
                        b.row = RowState::Closed;
                        b.precharged_at = now + t.t_rp;
                        b.act_ok = b.act_ok.max(now + t.t_rp);
                        self.n_precharges += 1;
                    }
                    CommandKind::Ref => unreachable!(),
                }
                Command { time_ps: now, kind, bank: Some(c.bank as u32), row: Some(r.row) }
            }
        };
        if let Some(log) = &mut self.log {
            log.push(cmd);
        }
        Ok(cmd)
    }

    /// Issues the next command the close-page policy allows, if any.
    ///
    /// Refreshes falling at or before `idle_horizon` are issued once every
    /// request has been served.
    pub fn step_controller(&mut self, idle_horizon: u64) -> Result<Option<Command>> {
        let horizon = if self.pending() { u64::MAX } else { idle_horizon };
        match self.next_candidate(horizon) {
            Some(c) => self.issue(c).map(Some),
            None => Ok(None),
        }
    }

    /// Issues the REF that is due at or before `now`, if every bank allows it.
    pub fn schedule_refresh(&mut self, now: u64) -> Result<Option<Command>> {
        match self.refresh_candidate(now) {
            Some(c) if c.time <= now => self.issue(c).map(Some),
            _ => Ok(None),
        }
    }

    pub fn counts(&self) -> ActivityCounts {
        self.counts
    }

    pub fn into_log(self) -> Option<Vec<Command>> {
        self.log
    }
}

/// Replays a trace on one organization.
pub fn run_simulation(
    trace: &[TraceRecord],
    spec: &OrgSpec,
    timings: &TimingParams,
    energies: &EnergyParams,
    cfg: &SimConfig,
) -> Result<SimReport> {
    timings.validate()?;
    let map = AddressMap::for_org(spec)?;
    let st = SimTimings::from_params(timings, cfg.rows_per_refresh);
    let mut ctl = Controller::new(spec, st, cfg.refresh, cfg.record_commands);
    let mut previous = 0;
    for (i, r) in trace.iter().enumerate() {
        if r.cycle < previous {
            return Err(Error::OrderViolation { line: i + 1, cycle: r.cycle, previous });
        }
        previous = r.cycle;
        let d = map.decode(r.address);
        ctl.enqueue(r.cycle * CYCLE_PS, r.op, d.bank, d.row);
    }
    let duration = to_ps(cfg.duration);
    while ctl.pending() {
        if ctl.step_controller(u64::MAX)?.is_none() {
            return Err(Error::TimingViolation("controller stalled with requests pending".into()));
        }
    }
    let end = duration.max(ctl.last_completion);
    while ctl.step_controller(end)?.is_some() {}

    let n_access = ctl.counts.n_reads + ctl.counts.n_writes;
    let wall_ps = end;
    let wall = wall_ps as f64 * 1e-12;
    let avg_latency_ns = if n_access > 0 { ctl.sum_latency as f64 / n_access as f64 / 1e3 } else { 0.0 };
    let throughput = if wall > 0.0 { (n_access * LINE_BYTES * 8) as f64 / wall } else { 0.0 };
    let power = aggregate_power(&ctl.counts, energies, wall)?;
    let edp = if n_access > 0 { Some(compute_edp(&power, throughput, avg_latency_ns * 1e-9)?) } else { None };
    let stats = SimStats {
        n_reads: ctl.counts.n_reads,
        n_writes: ctl.counts.n_writes,
        n_activates: ctl.counts.n_activates,
        n_precharges: ctl.n_precharges,
        n_refreshes: ctl.counts.n_refreshes,
        sum_latency_ps: ctl.sum_latency,
        avg_access_latency_ns: avg_latency_ns,
        throughput_bits_per_s: throughput,
        wall_time_ns: wall_ps as f64 / 1e3,
    };
    Ok(SimReport { org: spec.name.clone(), stats, power, edp, edp_pj_ns: edp.map(edp_pj_ns), commands: ctl.into_log() })
}

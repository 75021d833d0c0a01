//! Fits the free sense-amplifier and access-device constants to reference
//! tRCD / tRP / tRC values.

use serde::{Deserialize, Serialize};

use super::{simulate_activation, simulate_precharge, BitlineElectricals, CellModel, SenseAmpModel, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::TechNode;

/// Largest relative miss accepted at any timing target.
pub const TIMING_FIT_TOLERANCE: f64 = 0.10;

/// tRCD misses feed straight into close-page latency, so they count more.
const TRCD_WEIGHT: f64 = 100.0;
/// Residuals past this fraction are penalized steeply so the fit trades
/// average error for headroom against the hard tolerance.
const SOFT_LIMIT: f64 = 0.08;
const EXCESS_WEIGHT: f64 = 1e3;
const MAX_SWEEPS: usize = 120;
const INITIAL_LOG_STEP: f64 = 0.25;
const MIN_LOG_STEP: f64 = 2e-3;
/// Each parameter stays within a factor e^4 (about 55x) of its starting value.
const MAX_LOG_EXCURSION: f64 = 4.0;

/// Reference timings (seconds) for one organization.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitTarget {
    pub bitline: BitlineElectricals,
    pub t_rcd: f64,
    pub t_rp: f64,
    pub t_rc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitResidual {
    pub org: String,
    pub quantity: String,
    pub observed: f64,
    pub predicted: f64,
}

impl CircuitResidual {
    pub fn relative(&self) -> f64 {
        (self.predicted - self.observed) / self.observed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitCalibration {
    pub cell: CellModel,
    pub sense_amp: SenseAmpModel,
    pub residuals: Vec<CircuitResidual>,
    /// Set when the reference could not constrain the fit and defaults were
    /// returned unchanged.
    pub underdetermined: bool,
    pub sweeps: usize,
}

const N_PARAMS: usize = 5;

fn unpack(x: &[f64; N_PARAMS], cell: &CellModel, sa: &SenseAmpModel) -> (CellModel, SenseAmpModel) {
    let cell = CellModel { access_on_resistance: x[2].exp(), ..*cell };
    let sa = SenseAmpModel {
        latch_transconductance: x[0].exp(),
        intrinsic_enable_delay: x[1].exp(),
        precharge_equalizer_resistance: x[3].exp(),
        precharge_enable_delay: x[4].exp(),
        ..*sa
    };
    (cell, sa)
}

fn pack(cell: &CellModel, sa: &SenseAmpModel) -> [f64; N_PARAMS] {
    [
        sa.latch_transconductance.ln(),
        sa.intrinsic_enable_delay.ln(),
        cell.access_on_resistance.ln(),
        sa.precharge_equalizer_resistance.ln(),
        sa.precharge_enable_delay.max(1e-12).ln(),
    ]
}

fn residuals(
    targets: &[CircuitTarget],
    cell: &CellModel,
    sa: &SenseAmpModel,
    tech: &TechNode,
    cfg: &SolverConfig,
) -> Result<Vec<CircuitResidual>> {
    let mut out = Vec::with_capacity(3 * targets.len());
    for t in targets {
        let act = simulate_activation(cell, &t.bitline, sa, tech, cfg)?;
        let t_rp = simulate_precharge(&t.bitline, sa, tech, cfg)?;
        let mut push = |q: &str, observed: f64, predicted: f64| {
            out.push(CircuitResidual { org: t.bitline.org.clone(), quantity: q.to_string(), observed, predicted })
        };
        push("t_rcd", t.t_rcd, act.t_rcd);
        push("t_rp", t.t_rp, t_rp);
        if let Some(rc) = t.t_rc {
            push("t_rc", rc, act.t_ras + t_rp);
        }
    }
    Ok(out)
}

fn objective(res: &[CircuitResidual]) -> f64 {
    res.iter()
        .map(|r| {
            let w = if r.quantity == "t_rcd" { TRCD_WEIGHT } else { 1.0 };
            let excess = (r.relative().abs() - SOFT_LIMIT).max(0.0);
            w * r.relative().powi(2) + EXCESS_WEIGHT * excess * excess
        })
        .sum()
}

/// Coordinate descent in log-parameter space over latch transconductance,
/// SA enable delay, access resistance, equalizer resistance and precharge
/// enable delay. Deterministic: fixed start, fixed coordinate order.
pub fn calibrate_circuit(
    targets: &[CircuitTarget],
    cell: &CellModel,
    sa: &SenseAmpModel,
    tech: &TechNode,
    cfg: &SolverConfig,
) -> Result<CircuitCalibration> {
    if targets.len() < 2 {
        let residuals = residuals(targets, cell, sa, tech, cfg).unwrap_or_default();
        return Ok(CircuitCalibration { cell: *cell, sense_amp: *sa, residuals, underdetermined: true, sweeps: 0 });
    }

    let eval = |x: &[f64; N_PARAMS]| -> f64 {
        let (c, s) = unpack(x, cell, sa);
        match residuals(targets, &c, &s, tech, cfg) {
            Ok(r) => objective(&r),
            Err(_) => f64::INFINITY,
        }
    };

    let start = pack(cell, sa);
    let mut x = start;
    let mut best = eval(&x);
    if !best.is_finite() {
        return Err(Error::CalibrationFailure("starting parameters do not produce a valid transient".into()));
    }
    let mut step = INITIAL_LOG_STEP;
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS && step >= MIN_LOG_STEP {
        sweeps += 1;
        let mut improved = false;
        for i in 0..N_PARAMS {
            for dir in [1.0, -1.0] {
                let mut trial = x;
                trial[i] += dir * step;
                if (trial[i] - start[i]).abs() > MAX_LOG_EXCURSION {
                    continue;
                }
                let v = eval(&trial);
                if v < best {
                    best = v;
                    x = trial;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }

    let (cell, sense_amp) = unpack(&x, cell, sa);
    let residuals = residuals(targets, &cell, &sense_amp, tech, cfg)?;
    if let Some(worst) = residuals.iter().max_by(|a, b| a.relative().abs().total_cmp(&b.relative().abs())) {
        if worst.relative().abs() > TIMING_FIT_TOLERANCE {
            return Err(Error::CalibrationFailure(format!(
                "{} {} misses by {:.1}% (reference {:.3} ns, model {:.3} ns)",
                worst.org,
                worst.quantity,
                100.0 * worst.relative(),
                worst.observed * 1e9,
                worst.predicted * 1e9
            )));
        }
    }
    Ok(CircuitCalibration { cell, sense_amp, residuals, underdetermined: false, sweeps })
}

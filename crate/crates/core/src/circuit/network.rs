use serde::{Deserialize, Serialize};

use super::rk4::{rk4_step_with, Rk4Scratch};
use super::{BitlineElectricals, CellModel, ChargeAudit, SenseAmpModel, SolverConfig, TransientResult, WaveformSample};
use crate::error::{Error, Result};
use crate::geometry::TechNode;

/// Sense threshold on the SA node, as a fraction of VDD.
pub const SENSE_THRESHOLD: f64 = 0.75;
/// Restore-complete threshold on the cell, as a fraction of VDD.
pub const RESTORE_THRESHOLD: f64 = 0.95;
/// Precharge is complete when every node is within this fraction of VDD/2.
pub const PRECHARGE_TOLERANCE: f64 = 0.01;

/// Upper bound on `h * lambda_max` for the RK4 step (the real-axis stability
/// limit is about 2.78).
const STABILITY_MARGIN: f64 = 2.5;

/// Square-law MOSFET drain current with a triode region; zero when off or
/// when `vds <= 0`.
fn mos(k: f64, vov: f64, vds: f64) -> f64 {
    if vov <= 0.0 || vds <= 0.0 {
        0.0
    } else if vds < vov {
        k * (2.0 * vov * vds - vds * vds)
    } else {
        k * vov * vov
    }
}

/// True bitline as an N-segment π ladder; node 0 is the SA end, the last
/// node is where the worst-case (farthest) cell attaches.
#[derive(Debug, Clone)]
struct Ladder {
    seg_r: Vec<f64>,
    node_c: Vec<f64>,
    c_comp: f64,
}

impl Ladder {
    fn new(bl: &BitlineElectricals, sa: &SenseAmpModel, segments: usize) -> Self {
        let n = segments as f64;
        let mut seg_r = vec![bl.r_local_bitline / n; segments];
        seg_r[0] += sa.effective_wiring_resistance(bl.is_m3d);
        let mut node_c = vec![bl.c_local_bitline / n; segments + 1];
        node_c[0] *= 0.5;
        node_c[segments] *= 0.5;
        Self { seg_r, node_c, c_comp: bl.c_local_bitline }
    }

    fn nodes(&self) -> usize {
        self.node_c.len()
    }

    fn far(&self) -> usize {
        self.nodes() - 1
    }

    /// Stamps segment currents (amps, not yet divided by C) into `dy`.
    fn stamp(&self, y: &[f64], dy: &mut [f64]) {
        for (s, r) in self.seg_r.iter().enumerate() {
            let i = (y[s] - y[s + 1]) / r;
            dy[s] -= i;
            dy[s + 1] += i;
        }
    }

    /// Gershgorin bound on the ladder's eigenvalues, with extra shunt
    /// conductance at node 0 and at the far node.
    fn lambda_bound(&self, g_sa: f64, g_far: f64) -> f64 {
        let mut lam: f64 = 0.0;
        for k in 0..self.nodes() {
            let mut g = 0.0;
            if k > 0 {
                g += 1.0 / self.seg_r[k - 1];
            }
            if k < self.seg_r.len() {
                g += 1.0 / self.seg_r[k];
            }
            if k == 0 {
                g += g_sa;
            }
            if k == self.far() {
                g += g_far;
            }
            lam = lam.max(2.0 * g / self.node_c[k]);
        }
        lam
    }

    fn true_charge(&self, y: &[f64]) -> f64 {
        self.node_c.iter().zip(y).map(|(c, v)| c * v).sum()
    }
}

/// Largest `nominal / 2^m` step that keeps RK4 stable for `lambda`.
/// Most halvings of the nominal step before a network counts as too stiff.
const MAX_HALVINGS: u32 = 10;

fn stable_step(nominal: f64, lambda: f64) -> Result<f64> {
    let mut h = nominal;
    for _ in 0..=MAX_HALVINGS {
        if h * lambda <= STABILITY_MARGIN {
            return Ok(h);
        }
        h *= 0.5;
    }
    Err(Error::NonConvergence(format!(
        "network too stiff: step would drop below {:.3e} s",
        nominal / f64::from(1u32 << MAX_HALVINGS)
    )))
}

struct ActivationNet {
    ladder: Ladder,
    vdd: f64,
    c_cell: f64,
    k_access: f64,
    access_drive: f64,
    k_latch: f64,
    vt_latch: f64,
}

impl ActivationNet {
    fn new(cell: &CellModel, bl: &BitlineElectricals, sa: &SenseAmpModel, tech: &TechNode, segments: usize) -> Self {
        let vdd = tech.vdd;
        let access_drive = cell.wordline_voltage - cell.access_threshold;
        // small-signal conductance 2 k Vov at a source sitting at VDD/2
        let vov0 = access_drive - 0.5 * vdd;
        let r = cell.effective_access_resistance(bl.is_m3d);
        Self {
            ladder: Ladder::new(bl, sa, segments),
            vdd,
            c_cell: cell.c_cell,
            k_access: 1.0 / (2.0 * vov0 * r),
            access_drive,
            k_latch: sa.latch_transconductance,
            vt_latch: sa.threshold_voltage,
        }
    }

    fn comp(&self) -> usize {
        self.ladder.nodes()
    }
    fn cell(&self) -> usize {
        self.ladder.nodes() + 1
    }
    fn q_true(&self) -> usize {
        self.ladder.nodes() + 2
    }
    fn q_comp(&self) -> usize {
        self.ladder.nodes() + 3
    }
    fn len(&self) -> usize {
        self.ladder.nodes() + 4
    }

    fn access_current(&self, v_cell: f64, v_bl: f64) -> f64 {
        if v_cell >= v_bl {
            mos(self.k_access, self.access_drive - v_bl, v_cell - v_bl)
        } else {
            -mos(self.k_access, self.access_drive - v_cell, v_bl - v_cell)
        }
    }

    /// Net latch currents into (true SA node, complement).
    fn latch_currents(&self, va: f64, vb: f64) -> (f64, f64) {
        let (k, vt, vdd) = (self.k_latch, self.vt_latch, self.vdd);
        let ia = mos(k, vdd - vb - vt, vdd - va) - mos(k, vb - vt, va);
        let ib = mos(k, vdd - va - vt, vdd - vb) - mos(k, va - vt, vb);
        (ia, ib)
    }

    fn derivs(&self, latch_on: bool, y: &[f64], dy: &mut [f64]) {
        dy.iter_mut().for_each(|d| *d = 0.0);
        self.ladder.stamp(y, dy);
        let far = self.ladder.far();
        let i_acc = self.access_current(y[self.cell()], y[far]);
        dy[far] += i_acc;
        let (ia, ib) = if latch_on { self.latch_currents(y[0], y[self.comp()]) } else { (0.0, 0.0) };
        dy[0] += ia;
        for (d, c) in dy.iter_mut().zip(&self.ladder.node_c) {
            *d /= c;
        }
        dy[self.comp()] = ib / self.ladder.c_comp;
        dy[self.cell()] = -i_acc / self.c_cell;
        dy[self.q_true()] = ia;
        dy[self.q_comp()] = ib;
    }

    fn lambda(&self) -> f64 {
        let g_acc = 2.0 * self.k_access * self.access_drive;
        let g_latch = 4.0 * self.k_latch * (self.vdd - self.vt_latch).max(0.0);
        self.ladder.lambda_bound(g_latch, g_acc).max(2.0 * g_acc / self.c_cell).max(2.0 * g_latch / self.ladder.c_comp)
    }

    fn initial_state(&self) -> Vec<f64> {
        let mut y = vec![0.5 * self.vdd; self.len()];
        y[self.cell()] = self.vdd;
        y[self.q_true()] = 0.0;
        y[self.q_comp()] = 0.0;
        y
    }

    /// Charge on the true bitline plus the cell.
    fn stored_true(&self, y: &[f64]) -> f64 {
        self.ladder.true_charge(y) + self.c_cell * y[self.cell()]
    }
}

/// First time a sampled signal crosses `thr` upward between two samples.
fn interpolate(t0: f64, v0: f64, t1: f64, v1: f64, thr: f64) -> f64 {
    if v1 == v0 {
        t1
    } else {
        t0 + (t1 - t0) * ((thr - v0) / (v1 - v0)).clamp(0.0, 1.0)
    }
}

/// Worst-case activation (cell holds '1', bitlines precharged to VDD/2).
///
/// `t_rcd` is the first time at or after SA enable that the SA-side bitline
/// node reaches 0.75 VDD; `t_ras` is when the cell is back at 0.95 VDD.
/// `t_rp` is left at zero; see [`simulate_precharge`].
pub fn simulate_activation(
    cell: &CellModel,
    bl: &BitlineElectricals,
    sa: &SenseAmpModel,
    tech: &TechNode,
    cfg: &SolverConfig,
) -> Result<TransientResult> {
    cfg.validate()?;
    cell.validate()?;
    sa.validate()?;
    tech.validate()?;
    let net = ActivationNet::new(cell, bl, sa, tech, cfg.segments);
    let h = stable_step(cfg.step, net.lambda())?;
    let t_en = sa.intrinsic_enable_delay;
    let vdd = tech.vdd;
    let sense = SENSE_THRESHOLD * vdd;
    let restore = RESTORE_THRESHOLD * vdd;

    let mut y = net.initial_state();
    let mut scratch = Rk4Scratch::new(y.len());
    let mut t = 0.0;
    let mut latch_on = false;
    let mut delta_v = 0.0;
    let mut stored_at_enable = 0.0;
    let mut t_rcd = None;
    let mut t_ras = None;
    let mut cell_dipped = false;
    let mut waveform = Vec::new();
    let mut next_sample = 0.0;
    let tail = if cfg.sample_interval > 0.0 { 2e-9 } else { 0.0 };

    loop {
        if cfg.sample_interval > 0.0 && t >= next_sample {
            waveform.push(WaveformSample { time: t, v_bitline: y[0], v_cell: y[net.cell()] });
            next_sample += cfg.sample_interval;
        }
        if !latch_on && t >= t_en {
            latch_on = true;
            delta_v = y[0] - 0.5 * vdd;
            stored_at_enable = net.stored_true(&y);
            if y[0] >= sense {
                t_rcd = Some(t);
            }
        }
        if let (Some(_), Some(ras)) = (t_rcd, t_ras) {
            if t >= ras + tail {
                break;
            }
        }
        if t >= cfg.horizon {
            break;
        }
        let mut step = h;
        if !latch_on && t + step > t_en {
            step = t_en - t;
        }
        let (v_bl0, v_cell0) = (y[0], y[net.cell()]);
        let on = latch_on;
        rk4_step_with(&mut |_t: f64, y: &[f64], dy: &mut [f64]| net.derivs(on, y, dy), t, step, &mut y, &mut scratch);
        let t1 = if !latch_on && step < h { t_en } else { t + step };
        if latch_on {
            if t_rcd.is_none() && y[0] >= sense {
                t_rcd = Some(interpolate(t, v_bl0, t1, y[0], sense));
            }
            if cell_dipped && t_ras.is_none() && y[net.cell()] >= restore {
                t_ras = Some(interpolate(t, v_cell0, t1, y[net.cell()], restore));
            }
        }
        if y[net.cell()] < restore {
            cell_dipped = true;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonConvergence(format!("{}: state diverged at {:.3} ns", bl.org, t1 * 1e9)));
        }
        t = t1;
    }

    let t_rcd = t_rcd.ok_or_else(|| {
        Error::NonConvergence(format!(
            "{}: bitline never reached {:.2} V within {:.0} ns",
            bl.org,
            sense,
            cfg.horizon * 1e9
        ))
    })?;
    let t_ras = t_ras.ok_or_else(|| {
        Error::NonConvergence(format!(
            "{}: cell never restored to {:.2} V within {:.0} ns",
            bl.org,
            restore,
            cfg.horizon * 1e9
        ))
    })?;
    Ok(TransientResult {
        org: bl.org.clone(),
        delta_v,
        t_rcd,
        t_ras,
        t_rp: 0.0,
        step: h,
        latch_audit: ChargeAudit { delivered: y[net.q_true()], stored: net.stored_true(&y) - stored_at_enable },
        waveform,
    })
}

/// Bitline signal once charge sharing has fully settled with the SA kept
/// off.
pub fn charge_share_plateau(
    cell: &CellModel,
    bl: &BitlineElectricals,
    sa: &SenseAmpModel,
    tech: &TechNode,
    cfg: &SolverConfig,
) -> Result<f64> {
    cfg.validate()?;
    cell.validate()?;
    let net = ActivationNet::new(cell, bl, sa, tech, cfg.segments);
    let h = stable_step(cfg.step, net.lambda())?;
    let mut y = net.initial_state();
    let mut scratch = Rk4Scratch::new(y.len());
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| net.derivs(false, y, dy);
    let mut t = 0.0;
    let settle = 1e-6 * tech.vdd;
    while t < cfg.horizon {
        rk4_step_with(&mut f, t, h, &mut y, &mut scratch);
        t += h;
        if (y[0] - y[net.cell()]).abs() < settle {
            return Ok(y[0] - 0.5 * tech.vdd);
        }
    }
    Err(Error::NonConvergence(format!("{}: charge sharing did not settle within {:.0} ns", bl.org, cfg.horizon * 1e9)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrechargeResult {
    pub t_rp: f64,
    pub step: f64,
    pub equalizer_audit: ChargeAudit,
}

/// Restores the bitline pair from (VDD, 0) to VDD/2 through the equalizer.
///
/// The wordline is already off, so the cell is not part of the network.
pub fn precharge_transient(
    bl: &BitlineElectricals,
    sa: &SenseAmpModel,
    tech: &TechNode,
    cfg: &SolverConfig,
) -> Result<PrechargeResult> {
    cfg.validate()?;
    sa.validate()?;
    let ladder = Ladder::new(bl, sa, cfg.segments);
    let nodes = ladder.nodes();
    let (comp, q_true) = (nodes, nodes + 1);
    let vdd = tech.vdd;
    let half = 0.5 * vdd;
    let g_eq = 1.0 / sa.precharge_equalizer_resistance;
    let lambda = ladder.lambda_bound(g_eq, 0.0).max(2.0 * g_eq / ladder.c_comp);
    let h = stable_step(cfg.step, lambda)?;

    let mut y = vec![vdd; nodes + 3];
    y[comp] = 0.0;
    y[q_true] = 0.0;
    y[nodes + 2] = 0.0;
    let stored0 = ladder.true_charge(&y);
    let mut scratch = Rk4Scratch::new(y.len());
    let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| {
        dy.iter_mut().for_each(|d| *d = 0.0);
        ladder.stamp(y, dy);
        let i0 = (half - y[0]) * g_eq;
        let ic = (half - y[comp]) * g_eq;
        dy[0] += i0;
        for (d, c) in dy.iter_mut().zip(&ladder.node_c) {
            *d /= c;
        }
        dy[comp] = ic / ladder.c_comp;
        dy[q_true] = i0;
        dy[q_true + 1] = ic;
    };
    let tol = PRECHARGE_TOLERANCE * half;
    let deviation = |y: &[f64]| y[..=comp].iter().map(|v| (v - half).abs()).fold(0.0, f64::max);

    let mut t = 0.0;
    let mut dev = deviation(&y);
    while t < cfg.horizon {
        rk4_step_with(&mut f, t, h, &mut y, &mut scratch);
        let dev1 = deviation(&y);
        if !dev1.is_finite() {
            return Err(Error::NonConvergence(format!("{}: precharge diverged", bl.org)));
        }
        if dev1 <= tol {
            // deviation falls through tol; interpolate on its decrease
            let frac = ((dev - tol) / (dev - dev1)).clamp(0.0, 1.0);
            return Ok(PrechargeResult {
                t_rp: sa.precharge_enable_delay + t + frac * h,
                step: h,
                equalizer_audit: ChargeAudit { delivered: y[q_true], stored: ladder.true_charge(&y) - stored0 },
            });
        }
        dev = dev1;
        t += h;
    }
    Err(Error::NonConvergence(format!(
        "{}: bitline did not settle to VDD/2 within {:.0} ns",
        bl.org,
        cfg.horizon * 1e9
    )))
}

/// tRP: equalizer enable delay plus settling to within 1% of VDD/2.
pub fn simulate_precharge(
    bl: &BitlineElectricals,
    sa: &SenseAmpModel,
    tech: &TechNode,
    cfg: &SolverConfig,
) -> Result<f64> {
    precharge_transient(bl, sa, tech, cfg).map(|r| r.t_rp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::BitlineParasitics;
    use crate::geometry::OrgSpec;

    fn bl(spec: &OrgSpec) -> BitlineElectricals {
        BitlineElectricals::for_org(spec, &BitlineParasitics::default())
    }

    #[test]
    fn mos_regions() {
        assert_eq!(mos(1.0, -0.1, 0.5), 0.0);
        assert_eq!(mos(1.0, 0.5, -0.1), 0.0);
        assert!((mos(2.0, 0.5, 0.1) - 2.0 * (0.1 - 0.01)).abs() < 1e-15);
        assert!((mos(2.0, 0.5, 1.0) - 0.5).abs() < 1e-15);
        // continuous at the triode/saturation boundary
        assert!((mos(1.0, 0.5, 0.5 - 1e-12) - mos(1.0, 0.5, 0.5)).abs() < 1e-11);
    }

    #[test]
    fn stiff_ladder_gets_smaller_step() {
        let sa = SenseAmpModel::default();
        let l512 = Ladder::new(&bl(&OrgSpec::ddr4(512)), &sa, 8);
        let l32 = Ladder::new(&bl(&OrgSpec::ddr4(32)), &sa, 8);
        let h512 = stable_step(10e-12, l512.lambda_bound(0.0, 0.0)).unwrap();
        let h32 = stable_step(10e-12, l32.lambda_bound(0.0, 0.0)).unwrap();
        assert!(h32 < h512);
        assert!(h32 * l32.lambda_bound(0.0, 0.0) <= STABILITY_MARGIN);
    }

    #[test]
    fn precharge_monotone_in_equalizer_resistance() {
        let tech = TechNode::default();
        let cfg = SolverConfig::default();
        let b = bl(&OrgSpec::ddr4(512));
        let sa = SenseAmpModel::default();
        let slow = SenseAmpModel { precharge_equalizer_resistance: 2.0 * sa.precharge_equalizer_resistance, ..sa };
        let a = simulate_precharge(&b, &sa, &tech, &cfg).unwrap();
        let c = simulate_precharge(&b, &slow, &tech, &cfg).unwrap();
        assert!(c > a, "{a} {c}");
    }

    #[test]
    fn precharge_conserves_charge() {
        let r = precharge_transient(
            &bl(&OrgSpec::m3d(128)),
            &SenseAmpModel::default(),
            &TechNode::default(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.equalizer_audit.relative_error() < 1e-6, "{:?}", r.equalizer_audit);
    }

    #[test]
    fn activation_reaches_thresholds_in_order() {
        let r = simulate_activation(
            &CellModel::default(),
            &bl(&OrgSpec::ddr4(512)),
            &SenseAmpModel::default(),
            &TechNode::default(),
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(r.t_rcd >= SenseAmpModel::default().intrinsic_enable_delay);
        assert!(r.t_rcd < r.t_ras);
        assert!(r.delta_v > 0.0 && r.delta_v < 0.6);
    }

    #[test]
    fn broken_latch_does_not_converge() {
        // threshold above VDD/2: the latch never turns on and a long bitline
        // never reaches the sense threshold on charge sharing alone
        let sa = SenseAmpModel { threshold_voltage: 0.9, ..Default::default() };
        let err = simulate_activation(
            &CellModel::default(),
            &bl(&OrgSpec::ddr4(512)),
            &sa,
            &TechNode::default(),
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)), "{err}");
    }

    #[test]
    fn step_halving_is_capped() {
        assert!(stable_step(10e-12, 1e9).is_ok());
        let err = stable_step(10e-12, 1e16).unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)), "{err}");

        let sa = SenseAmpModel { latch_transconductance: 1e3, ..Default::default() };
        let err = simulate_activation(
            &CellModel::default(),
            &bl(&OrgSpec::ddr4(32)),
            &sa,
            &TechNode::default(),
            &SolverConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonConvergence(_)), "{err}");
    }

    #[test]
    fn non_positive_step_rejected() {
        let cfg = SolverConfig { step: 0.0, ..Default::default() };
        let err = simulate_activation(
            &CellModel::default(),
            &bl(&OrgSpec::ddr4(512)),
            &SenseAmpModel::default(),
            &TechNode::default(),
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }
}

//! Local-bitline transient model: charge sharing, sensing, restore and
//! precharge on an RC ladder, integrated with fixed-step RK4.

mod calibrate;
mod network;
mod rk4;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrgSpec, TechNode};

pub use calibrate::{calibrate_circuit, CircuitCalibration, CircuitResidual, CircuitTarget};
pub use network::{charge_share_plateau, simulate_activation, simulate_precharge, PrechargeResult};
pub use rk4::rk4_step;

/// Per-cell bitline parasitics and the inter-tier via values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BitlineParasitics {
    pub r_per_cell: f64,
    pub c_per_cell: f64,
    pub miv_r: f64,
    pub miv_c: f64,
    /// Worst-case SA I/O vertical stack (metal-via stack plus MIV). It sits
    /// on the column path, not on the local bitline.
    pub worst_case_vertical_r: f64,
    pub worst_case_vertical_c: f64,
}

impl Default for BitlineParasitics {
    fn default() -> Self {
        Self {
            r_per_cell: 20_000.0 / 512.0,
            c_per_cell: 72e-15 / 512.0,
            miv_r: 10.0,
            miv_c: 0.2e-15,
            worst_case_vertical_r: 20.0,
            worst_case_vertical_c: 0.23e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitlineElectricals {
    pub org: String,
    pub is_m3d: bool,
    pub cells: u32,
    pub r_local_bitline: f64,
    pub c_local_bitline: f64,
    pub r_per_cell: f64,
    pub c_per_cell: f64,
    pub miv_r: f64,
    pub miv_c: f64,
    pub worst_case_vertical_r: f64,
    pub worst_case_vertical_c: f64,
}

impl BitlineElectricals {
    pub fn for_org(spec: &OrgSpec, p: &BitlineParasitics) -> Self {
        let n = f64::from(spec.cells_per_local_bitline);
        let (mr, mc) = if spec.is_m3d { (p.miv_r, p.miv_c) } else { (0.0, 0.0) };
        Self {
            org: spec.name.clone(),
            is_m3d: spec.is_m3d,
            cells: spec.cells_per_local_bitline,
            r_local_bitline: n * p.r_per_cell + mr,
            c_local_bitline: n * p.c_per_cell + mc,
            r_per_cell: p.r_per_cell,
            c_per_cell: p.c_per_cell,
            miv_r: p.miv_r,
            miv_c: p.miv_c,
            worst_case_vertical_r: p.worst_case_vertical_r,
            worst_case_vertical_c: p.worst_case_vertical_c,
        }
    }
}

/// Storage cell and its access transistor.
///
/// The access device is a square-law NMOS with a boosted wordline;
/// `access_on_resistance` is its small-signal resistance with the source at
/// the precharge level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellModel {
    pub c_cell: f64,
    pub access_on_resistance: f64,
    /// Drive-current fraction of a top-tier transistor.
    pub top_tier_current_derating: f64,
    pub wordline_voltage: f64,
    pub access_threshold: f64,
}

impl Default for CellModel {
    fn default() -> Self {
        Self {
            c_cell: 24e-15,
            access_on_resistance: 9.54e4,
            top_tier_current_derating: 0.85,
            wordline_voltage: 2.5,
            access_threshold: 0.7,
        }
    }
}

impl CellModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_cell > 0.0 && self.access_on_resistance > 0.0) {
            return Err(Error::InvalidConfig("cell capacitance and access resistance must be positive".into()));
        }
        if !(self.top_tier_current_derating > 0.0 && self.top_tier_current_derating <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "top-tier derating must be in (0, 1], got {}",
                self.top_tier_current_derating
            )));
        }
        Ok(())
    }

    /// Access resistance seen by an organization's cells.
    pub fn effective_access_resistance(&self, is_m3d: bool) -> f64 {
        if is_m3d {
            self.access_on_resistance / self.top_tier_current_derating
        } else {
            self.access_on_resistance
        }
    }
}

/// Cross-coupled square-law latch with an equalizer for precharge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SenseAmpModel {
    /// Square-law coefficient `k` in `I = k (Vgs - Vt)²`, A/V².
    pub latch_transconductance: f64,
    pub threshold_voltage: f64,
    pub precharge_equalizer_resistance: f64,
    /// Wordline assert to SA enable; no sense completes earlier.
    pub intrinsic_enable_delay: f64,
    /// PRE to equalizer enable (wordline shutoff).
    pub precharge_enable_delay: f64,
    /// SA-side wiring between latch and bitline. Doubled on the bottom tier
    /// of an M3D stack, where interconnect is tungsten.
    pub wiring_resistance: f64,
    pub bottom_tier_wire_factor: f64,
}

impl Default for SenseAmpModel {
    fn default() -> Self {
        Self {
            latch_transconductance: 9.83e-5,
            threshold_voltage: 0.5,
            precharge_equalizer_resistance: 8.77e3,
            intrinsic_enable_delay: 4.54e-9,
            precharge_enable_delay: 3.44e-9,
            wiring_resistance: 200.0,
            bottom_tier_wire_factor: 2.0,
        }
    }
}

impl SenseAmpModel {
    pub fn validate(&self) -> Result<()> {
        let v = [
            self.latch_transconductance,
            self.threshold_voltage,
            self.precharge_equalizer_resistance,
            self.intrinsic_enable_delay,
        ];
        if v.iter().any(|x| !(*x > 0.0)) || self.precharge_enable_delay < 0.0 || self.wiring_resistance < 0.0 {
            return Err(Error::InvalidConfig(format!("sense amplifier parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn effective_wiring_resistance(&self, is_m3d: bool) -> f64 {
        if is_m3d {
            self.wiring_resistance * self.bottom_tier_wire_factor
        } else {
            self.wiring_resistance
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Nominal RK4 step, seconds. Reduced by powers of two when the ladder
    /// is too stiff for it.
    pub step: f64,
    pub horizon: f64,
    pub segments: usize,
    /// Waveform sampling interval, seconds; 0 disables recording.
    pub sample_interval: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { step: 10e-12, horizon: 100e-9, segments: 8, sample_interval: 0.0 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidConfig(format!("solver step must be positive, got {}", self.step)));
        }
        if self.step > 10e-12 {
            return Err(Error::InvalidConfig(format!(
                "solver step must be at most 10 ps, got {} ps",
                self.step * 1e12
            )));
        }
        if !(self.horizon > 0.0) || self.segments == 0 {
            return Err(Error::InvalidConfig("horizon and segment count must be positive".into()));
        }
        Ok(())
    }

    pub fn with_waveform(mut self, interval: f64) -> Self {
        self.sample_interval = interval;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformSample {
    pub time: f64,
    pub v_bitline: f64,
    pub v_cell: f64,
}

/// Charge pushed through a driver versus charge stored on the capacitors it
/// feeds, over one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeAudit {
    pub delivered: f64,
    pub stored: f64,
}

impl ChargeAudit {
    pub fn relative_error(&self) -> f64 {
        (self.delivered - self.stored).abs() / self.stored.abs().max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientResult {
    pub org: String,
    /// Signal developed on the SA node when the SA fires.
    pub delta_v: f64,
    pub t_rcd: f64,
    pub t_ras: f64,
    pub t_rp: f64,
    /// Integration step actually used, seconds.
    pub step: f64,
    pub latch_audit: ChargeAudit,
    pub waveform: Vec<WaveformSample>,
}

/// Signal left on the bitline once cell and bitline share charge.
pub fn charge_share_delta(c_cell: f64, c_local_bitline: f64, vdd: f64) -> f64 {
    0.5 * vdd * c_cell / (c_cell + c_local_bitline)
}

/// Activation and precharge for one organization.
pub fn simulate_transient(
    cell: &CellModel,
    bl: &BitlineElectricals,
    sa: &SenseAmpModel,
    tech: &TechNode,
    cfg: &SolverConfig,
) -> Result<TransientResult> {
    let mut act = simulate_activation(cell, bl, sa, tech, cfg)?;
    act.t_rp = simulate_precharge(bl, sa, tech, cfg)?;
    Ok(act)
}

/// Writes `time_ns,v_bitline,v_cell` rows.
pub fn write_waveform_csv<W: std::io::Write>(out: W, waveform: &[WaveformSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["time_ns", "v_bitline", "v_cell"]).map_err(csv_err)?;
    for s in waveform {
        w.write_record(&[format!("{:.4}", s.time * 1e9), format!("{:.6}", s.v_bitline), format!("{:.6}", s.v_cell)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_charge_conservation() {
        // 0.5 * 1.2 * 24 / 96
        assert!((charge_share_delta(24e-15, 72e-15, 1.2) - 0.15).abs() < 1e-12);
        assert!((charge_share_delta(24e-15, 0.0, 1.2) - 0.6).abs() < 1e-12);
        assert_eq!(charge_share_delta(0.0, 72e-15, 1.2), 0.0);
    }

    #[test]
    fn electricals_match_reference() {
        let p = BitlineParasitics::default();
        let d = BitlineElectricals::for_org(&OrgSpec::ddr4(512), &p);
        assert!((d.r_local_bitline - 20_000.0).abs() < 1e-9);
        assert!((d.c_local_bitline - 72e-15).abs() < 1e-24);
        let m = BitlineElectricals::for_org(&OrgSpec::m3d(512), &p);
        assert!((m.r_local_bitline - 20_010.0).abs() < 1e-9);
        assert!((m.c_local_bitline - 72.2e-15).abs() < 1e-24);
        let m = BitlineElectricals::for_org(&OrgSpec::m3d(128), &p);
        assert!((m.r_local_bitline - 5_010.0).abs() < 1e-9);
        assert!((m.c_local_bitline - 18.2e-15).abs() < 1e-24);
    }

    #[test]
    fn derating_only_on_top_tier() {
        let c = CellModel::default();
        assert_eq!(c.effective_access_resistance(false), c.access_on_resistance);
        assert!(c.effective_access_resistance(true) > c.access_on_resistance);
        let bad = CellModel { top_tier_current_derating: 1.2, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig { step: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { step: -1e-12, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { step: 20e-12, ..Default::default() }.validate().is_err());
        SolverConfig::default().validate().unwrap();
    }
}

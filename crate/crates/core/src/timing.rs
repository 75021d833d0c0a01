//! Full timing parameter set for an organization.

use serde::{Deserialize, Serialize};

use crate::circuit::TransientResult;
use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::fit;
use crate::geometry::{GeometryReport, OrgSpec};

/// Four cycles at 1 GHz.
pub const T_BURST: f64 = 4e-9;
pub const T_REFI: f64 = 7.8e-6;

/// All values in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingParams {
    pub t_rcd: f64,
    pub t_cas: f64,
    pub t_rp: f64,
    pub t_ras: f64,
    pub t_rc: f64,
    pub t_faw: f64,
    pub t_refi: f64,
    pub t_burst: f64,
    pub close_page_latency: f64,
}

impl TimingParams {
    /// Builds a consistent set from the primary quantities; `t_rc` and the
    /// close-page latency are derived.
    pub fn new(t_rcd: f64, t_cas: f64, t_rp: f64, t_ras: f64, t_faw: f64) -> Result<Self> {
        let p = Self {
            t_rcd,
            t_cas,
            t_rp,
            t_ras,
            t_rc: t_ras + t_rp,
            t_faw,
            t_refi: T_REFI,
            t_burst: T_BURST,
            close_page_latency: t_rcd + t_cas + T_BURST,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.t_rcd, self.t_cas, self.t_rp, self.t_ras, self.t_rc, self.t_faw, self.t_refi, self.t_burst];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InconsistentInputs(format!("timing values must be positive: {self:?}")));
        }
        if self.t_rcd >= self.t_ras {
            return Err(Error::InconsistentInputs(format!(
                "tRCD {:.3} ns is not below tRAS {:.3} ns",
                self.t_rcd * 1e9,
                self.t_ras * 1e9
            )));
        }
        if self.t_faw < self.t_burst {
            return Err(Error::InconsistentInputs("tFAW shorter than tBURST".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcasResidual {
    pub global_bitline_length_f: f64,
    pub observed: f64,
    pub predicted: f64,
}

/// Column latency as a polynomial in global bitline length (F).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcasModel {
    pub fixed_delay: f64,
    pub per_f_delay: f64,
    pub per_f2_delay: f64,
    pub residuals: Vec<TcasResidual>,
}

impl TcasModel {
    pub fn predict(&self, global_bitline_length_f: f64) -> f64 {
        fit::polyval(&[self.fixed_delay, self.per_f_delay, self.per_f2_delay], global_bitline_length_f)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residuals.iter().map(|r| (r.observed - r.predicted).abs()).fold(0.0, f64::max)
    }
}

fn rss(coeffs: &[f64], points: &[(f64, f64)]) -> f64 {
    points.iter().map(|&(l, t)| (t - fit::polyval(coeffs, l)).powi(2)).sum()
}

/// Least-squares fit of `(L_GBL in F, tCAS in s)` points. The quadratic term
/// is kept only when it cuts the residual sum of squares by at least 20%.
pub fn fit_tcas_model(points: &[(f64, f64)]) -> Result<TcasModel> {
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    if fit::distinct(&xs) < 3 {
        return Err(Error::Underdetermined(format!(
            "tCAS fit needs at least 3 distinct bitline lengths, got {}",
            fit::distinct(&xs)
        )));
    }
    let linear = fit::polyfit(&xs, &ys, 1)?;
    let mut coeffs = vec![linear[0], linear[1], 0.0];
    if let Ok(quad) = fit::polyfit(&xs, &ys, 2) {
        if xs.len() > 3 && rss(&quad, points) <= 0.8 * rss(&linear, points) {
            coeffs = quad;
        }
    }
    if !(coeffs[0] > 0.0) {
        return Err(Error::CalibrationFailure(format!("tCAS fit has non-positive fixed delay {:.3e} s", coeffs[0])));
    }
    let residuals = points
        .iter()
        .map(|&(l, t)| TcasResidual { global_bitline_length_f: l, observed: t, predicted: fit::polyval(&coeffs, l) })
        .collect();
    Ok(TcasModel { fixed_delay: coeffs[0], per_f_delay: coeffs[1], per_f2_delay: coeffs[2], residuals })
}

/// tFAW proportional to activation energy: the power-delivery network sees
/// the same charge per window.
pub fn scale_tfaw(base_tfaw: f64, base_act_energy: f64, new_act_energy: f64) -> f64 {
    base_tfaw * (new_act_energy / base_act_energy)
}

/// The organization that anchors tFAW scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TfawBaseline {
    pub t_faw: f64,
    pub e_activate: f64,
}

impl Default for TfawBaseline {
    fn default() -> Self {
        Self { t_faw: 35.8e-9, e_activate: 0.59e-9 }
    }
}

pub fn assemble_timing(
    spec: &OrgSpec,
    geo: &GeometryReport,
    transient: &TransientResult,
    tcas: &TcasModel,
    energy: &EnergyParams,
    baseline: &TfawBaseline,
) -> Result<TimingParams> {
    for (what, name) in [("geometry", &geo.org), ("transient", &transient.org), ("energy", &energy.org)] {
        if name != &spec.name {
            return Err(Error::InconsistentInputs(format!("{what} was derived for `{name}`, not `{}`", spec.name)));
        }
    }
    let t_cas = tcas.predict(geo.global_bitline_length_f as f64);
    let t_faw = scale_tfaw(baseline.t_faw, baseline.e_activate, energy.e_activate).max(T_BURST);
    TimingParams::new(transient.t_rcd, t_cas, transient.t_rp, transient.t_ras, t_faw)
}

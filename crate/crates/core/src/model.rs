//! Calibration against a reference table and the per-organization
//! derivation pipeline (geometry, transient, energy, timing).

use serde::{Deserialize, Serialize};

use crate::circuit::{
    calibrate_circuit, simulate_transient, BitlineElectricals, BitlineParasitics, CellModel, CircuitResidual,
    CircuitTarget, SenseAmpModel, SolverConfig, TransientResult,
};
use crate::energy::{derive_energy_params, EnergyModel, EnergyObservation, EnergyParams, EnergyResidual};
use crate::error::{Error, Result};
use crate::geometry::{compute_areas, derive_global_bitline_length, GeometryReport, OrgSpec, PeripheralDims, TechNode};
use crate::reference::{ReferenceRow, ReferenceTable};
use crate::timing::{assemble_timing, fit_tcas_model, TcasModel, TfawBaseline, TimingParams};

/// Calibration produced from the bundled reference table.
pub const BUNDLED_CALIBRATION: &str = include_str!("../data/calibration.json");

/// Technology, layout and solver settings shared by every organization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelContext {
    pub tech: TechNode,
    pub dims: PeripheralDims,
    pub parasitics: BitlineParasitics,
    pub solver: SolverConfig,
}

/// A model output next to the reference value it should reproduce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub org: String,
    pub quantity: String,
    pub reference: f64,
    pub predicted: f64,
}

impl Prediction {
    pub fn relative(&self) -> f64 {
        (self.predicted - self.reference) / self.reference
    }
}

/// Every fitted constant plus the fit quality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub reference: String,
    pub cell: CellModel,
    pub sense_amp: SenseAmpModel,
    pub tcas: TcasModel,
    pub energy: EnergyModel,
    pub tfaw_baseline: TfawBaseline,
    pub underdetermined: bool,
    pub circuit_residuals: Vec<CircuitResidual>,
    pub energy_residuals: Vec<EnergyResidual>,
    /// Reference values the fit did not use: incomplete rows, tFAW away from
    /// the baseline, bank areas.
    pub held_out: Vec<Prediction>,
}

/// Everything derived for one organization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrgModel {
    pub spec: OrgSpec,
    pub geometry: GeometryReport,
    pub bitline: BitlineElectricals,
    pub transient: TransientResult,
    pub energy: EnergyParams,
    pub timing: TimingParams,
}

fn circuit_target(row: &ReferenceRow, ctx: &ModelContext) -> Option<CircuitTarget> {
    Some(CircuitTarget {
        bitline: BitlineElectricals::for_org(&row.spec(), &ctx.parasitics),
        t_rcd: row.t_rcd?,
        t_rp: row.t_rp?,
        t_rc: row.t_rc,
    })
}

fn energy_observation(row: &ReferenceRow, ctx: &ModelContext) -> Option<EnergyObservation> {
    let spec = row.spec();
    Some(EnergyObservation {
        org: row.name.clone(),
        active_bitlines: spec.active_bitlines(),
        c_local_bitline: BitlineElectricals::for_org(&spec, &ctx.parasitics).c_local_bitline,
        global_bitline_length_f: derive_global_bitline_length(&spec, &ctx.dims) as f64,
        e_activate: row.e_activate?,
        e_rw: row.e_rw?,
        e_refresh: row.e_refresh?,
    })
}

/// Fits circuit, tCAS and energy constants to `reference`.
///
/// Circuit fitting starts from the model defaults. The tFAW baseline is the
/// first 2D row with a tFAW value (the first such row of any kind when there
/// is no 2D one), and the activation-energy fit passes exactly through it.
pub fn calibrate(reference: &ReferenceTable, ctx: &ModelContext) -> Result<Calibration> {
    ctx.solver.validate()?;
    let targets: Vec<CircuitTarget> = reference.rows.iter().filter_map(|r| circuit_target(r, ctx)).collect();
    let circuit =
        calibrate_circuit(&targets, &CellModel::default(), &SenseAmpModel::default(), &ctx.tech, &ctx.solver)?;

    let points: Vec<(f64, f64)> = reference
        .rows
        .iter()
        .filter_map(|r| Some((derive_global_bitline_length(&r.spec(), &ctx.dims) as f64, r.t_cas?)))
        .collect();
    let tcas = fit_tcas_model(&points)?;

    let energy_rows: Vec<&ReferenceRow> =
        reference.rows.iter().filter(|r| energy_observation(r, ctx).is_some()).collect();
    let obs: Vec<EnergyObservation> = energy_rows.iter().filter_map(|r| energy_observation(r, ctx)).collect();
    let anchor = energy_rows
        .iter()
        .position(|r| !r.is_m3d && r.t_faw.is_some())
        .or_else(|| energy_rows.iter().position(|r| r.t_faw.is_some()));
    let (energy, energy_residuals) = EnergyModel::fit(&obs, anchor.unwrap_or(0), &ctx.tech)?;
    let tfaw_baseline = match anchor {
        Some(i) => TfawBaseline {
            t_faw: energy_rows[i].t_faw.expect("anchor has tFAW"),
            e_activate: energy_rows[i].e_activate.expect("anchor has energy"),
        },
        None => TfawBaseline::default(),
    };

    let mut cal = Calibration {
        reference: reference.source.clone(),
        cell: circuit.cell,
        sense_amp: circuit.sense_amp,
        tcas,
        energy,
        tfaw_baseline,
        underdetermined: circuit.underdetermined,
        circuit_residuals: circuit.residuals,
        energy_residuals,
        held_out: Vec::new(),
    };
    let mut held_out = Vec::new();
    for row in &reference.rows {
        let used_circuit = circuit_target(row, ctx).is_some();
        let used_energy = energy_observation(row, ctx).is_some();
        let is_anchor = anchor.is_some() && energy_rows.iter().position(|r| r.name == row.name) == anchor;
        for p in predict_row(&cal, row, ctx)? {
            let fitted = match p.quantity.as_str() {
                "t_rcd" | "t_rp" | "t_rc" => used_circuit,
                "t_cas" => true,
                "e_activate" | "e_rw" | "e_refresh" => used_energy,
                "t_faw" => is_anchor,
                _ => false,
            };
            if !fitted {
                held_out.push(p);
            }
        }
    }
    cal.held_out = held_out;
    Ok(cal)
}

/// Model outputs for every timing value `row` carries.
pub fn predict_row(cal: &Calibration, row: &ReferenceRow, ctx: &ModelContext) -> Result<Vec<Prediction>> {
    let m = derive_org(&row.spec(), &ctx.dims, cal, ctx)?;
    let mut out = Vec::new();
    let mut push = |quantity: &str, reference: Option<f64>, predicted: f64| {
        if let Some(reference) = reference {
            out.push(Prediction { org: row.name.clone(), quantity: quantity.to_string(), reference, predicted });
        }
    };
    push("t_rcd", row.t_rcd, m.timing.t_rcd);
    push("t_cas", row.t_cas, m.timing.t_cas);
    push("t_rp", row.t_rp, m.timing.t_rp);
    push("t_rc", row.t_rc, m.timing.t_rc);
    push("t_faw", row.t_faw, m.timing.t_faw);
    push("e_activate", row.e_activate, m.energy.e_activate);
    push("e_rw", row.e_rw, m.energy.e_read);
    push("e_refresh", row.e_refresh, m.energy.e_refresh);
    push("bank_area_mm2", row.bank_area_mm2, m.geometry.bank_area_mm2);
    Ok(out)
}

/// Calibrates without `name` and predicts that organization's reference
/// values.
pub fn leave_one_out(reference: &ReferenceTable, name: &str, ctx: &ModelContext) -> Result<Vec<Prediction>> {
    let row =
        reference.get(name).ok_or_else(|| Error::InvalidConfig(format!("`{name}` is not in the reference table")))?;
    let cal = calibrate(&reference.without(name), ctx)?;
    predict_row(&cal, row, ctx)
}

/// Full derivation for one organization.
pub fn derive_org(spec: &OrgSpec, dims: &PeripheralDims, cal: &Calibration, ctx: &ModelContext) -> Result<OrgModel> {
    spec.validate()?;
    dims.validate()?;
    let geometry = compute_areas(spec, dims, &ctx.tech);
    let bitline = BitlineElectricals::for_org(spec, &ctx.parasitics);
    let transient = simulate_transient(&cal.cell, &bitline, &cal.sense_amp, &ctx.tech, &ctx.solver)?;
    let energy = derive_energy_params(spec, &geometry, &bitline, &ctx.tech, &cal.energy);
    let timing = assemble_timing(spec, &geometry, &transient, &cal.tcas, &energy, &cal.tfaw_baseline)?;
    Ok(OrgModel { spec: spec.clone(), geometry, bitline, transient, energy, timing })
}

impl Calibration {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_CALIBRATION).expect("bundled calibration parses")
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::FileFormat {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Largest relative timing residual over the fitted organizations.
    pub fn worst_circuit_residual(&self) -> f64 {
        self.circuit_residuals.iter().map(|r| r.relative().abs()).fold(0.0, f64::max)
    }

    pub fn worst_energy_residual(&self) -> f64 {
        self.energy_residuals.iter().map(|r| r.relative().abs()).fold(0.0, f64::max)
    }

    pub fn with_p_background(mut self, p: Option<f64>) -> Self {
        if let Some(p) = p {
            self.energy.p_background = p;
        }
        self
    }
}

/// Where simulation takes its timing and energy values from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamSource {
    /// Reference values when the row has every timing and energy column,
    /// model values otherwise.
    #[default]
    Auto,
    Reference,
    Model,
}

impl ParamSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::Auto => "auto",
            Self::Reference => "reference",
            Self::Model => "model",
        }
    }
}

impl std::str::FromStr for ParamSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(Self::Auto),
            "reference" => Ok(Self::Reference),
            "model" => Ok(Self::Model),
            _ => Err(Error::InvalidConfig(format!("parameter source `{s}` is not one of auto, reference, model"))),
        }
    }
}

/// Timing and energy values for simulating `model`, plus the source that
/// was actually used.
pub fn sim_parameters(
    model: &OrgModel,
    reference: &ReferenceTable,
    source: ParamSource,
    p_background: f64,
) -> Result<(TimingParams, EnergyParams, ParamSource)> {
    let from_reference = || -> Option<Result<(TimingParams, EnergyParams)>> {
        let row = reference.get(&model.spec.name)?;
        let energy = row.energy_params(p_background)?;
        Some(row.timing_params()?.map(|t| (t, energy)))
    };
    let modeled = || {
        let energy = EnergyParams { p_background, ..model.energy.clone() };
        (model.timing, energy, ParamSource::Model)
    };
    match source {
        ParamSource::Model => Ok(modeled()),
        ParamSource::Auto => match from_reference() {
            Some(r) => r.map(|(t, e)| (t, e, ParamSource::Reference)),
            None => Ok(modeled()),
        },
        ParamSource::Reference => match from_reference() {
            Some(r) => r.map(|(t, e)| (t, e, ParamSource::Reference)),
            None => Err(Error::InconsistentInputs(format!(
                "reference {} has no complete timing and energy row for `{}`",
                reference.source, model.spec.name
            ))),
        },
    }
}

/// One point of the area/latency design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub org: String,
    pub cells_per_bitline: u32,
    pub m3d: bool,
    pub die_area_mm2: f64,
    pub die_area_norm: f64,
    pub t_rcd_ns: f64,
    pub t_cas_ns: f64,
    pub close_page_latency_ns: f64,
}

/// Derives every organization and normalizes die area to `baseline`.
pub fn sweep(
    orgs: &[(OrgSpec, PeripheralDims)],
    baseline: &OrgSpec,
    cal: &Calibration,
    ctx: &ModelContext,
) -> Result<Vec<SweepRow>> {
    let base_area = compute_areas(baseline, &ctx.dims, &ctx.tech).die_area_mm2;
    orgs.iter()
        .map(|(spec, dims)| {
            let m = derive_org(spec, dims, cal, ctx)?;
            Ok(SweepRow {
                org: spec.name.clone(),
                cells_per_bitline: spec.cells_per_local_bitline,
                m3d: spec.is_m3d,
                die_area_mm2: m.geometry.die_area_mm2,
                die_area_norm: m.geometry.die_area_mm2 / base_area,
                t_rcd_ns: m.timing.t_rcd * 1e9,
                t_cas_ns: m.timing.t_cas * 1e9,
                close_page_latency_ns: m.timing.close_page_latency * 1e9,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_calibration_matches_fresh_fit() {
        let fresh = calibrate(&ReferenceTable::bundled(), &ModelContext::default()).unwrap();
        let bundled = Calibration::bundled();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs());
        assert!(close(fresh.sense_amp.latch_transconductance, bundled.sense_amp.latch_transconductance));
        assert!(close(fresh.sense_amp.intrinsic_enable_delay, bundled.sense_amp.intrinsic_enable_delay));
        assert!(close(fresh.cell.access_on_resistance, bundled.cell.access_on_resistance));
        assert!(close(fresh.tcas.per_f_delay, bundled.tcas.per_f_delay));
        assert!(close(fresh.energy.activation_scale, bundled.energy.activation_scale));
        assert!(!fresh.underdetermined);
    }

    #[test]
    fn held_out_includes_ddr4_256() {
        let cal = Calibration::bundled();
        let p = cal.held_out.iter().find(|p| p.org == "ddr4-256" && p.quantity == "t_rcd").expect("held-out tRCD");
        assert!(p.relative().abs() < 0.15, "{p:?}");
        assert!(cal.held_out.iter().any(|p| p.org == "m3d-128" && p.quantity == "t_faw"));
        assert!(!cal.held_out.iter().any(|p| p.org == "ddr4-512" && p.quantity == "t_faw"));
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let ctx = ModelContext::default();
        let cal = Calibration::bundled();
        let a = derive_org(&OrgSpec::ddr4(512), &ctx.dims, &cal, &ctx).unwrap();
        let b = derive_org(&OrgSpec::m3d(128), &ctx.dims, &cal, &ctx).unwrap();
        let e = assemble_timing(&a.spec, &a.geometry, &b.transient, &cal.tcas, &a.energy, &cal.tfaw_baseline);
        assert!(matches!(e, Err(Error::InconsistentInputs(_))));
    }

    #[test]
    fn sim_parameters_pick_reference_rows() {
        let ctx = ModelContext::default();
        let cal = Calibration::bundled();
        let table = ReferenceTable::bundled();
        let d = derive_org(&OrgSpec::ddr4(512), &ctx.dims, &cal, &ctx).unwrap();
        let (t, e, src) = sim_parameters(&d, &table, ParamSource::Auto, 0.1).unwrap();
        assert_eq!(src, ParamSource::Reference);
        assert!((t.t_ras - 17.06e-9).abs() < 1e-15);
        assert_eq!(e.p_background, 0.1);
        let (t, _, src) = sim_parameters(&d, &table, ParamSource::Model, 0.1).unwrap();
        assert_eq!(src, ParamSource::Model);
        assert_eq!(t, d.timing);

        let h = derive_org(&OrgSpec::ddr4(256), &ctx.dims, &cal, &ctx).unwrap();
        assert_eq!(sim_parameters(&h, &table, ParamSource::Auto, 0.1).unwrap().2, ParamSource::Model);
        assert!(sim_parameters(&h, &table, ParamSource::Reference, 0.1).is_err());
        assert!("nope".parse::<ParamSource>().is_err());
    }
}

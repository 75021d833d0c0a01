//! WebAssembly bindings for the demo page in `www/`. Every export returns a
//! JSON string; the page parses it and draws on a canvas.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use m3dram::circuit::{simulate_activation, BitlineElectricals};
use m3dram::geometry::{builtin_orgs, OrgSpec};
use m3dram::model::{derive_org, sim_parameters, Calibration, ModelContext, ParamSource};
use m3dram::reference::ReferenceTable;
use m3dram::report::{rounded_sweep, SimRow};
use m3dram::sim::{run_simulation, SimConfig};
use m3dram::trace::{generate_trace, GeneratorConfig, TraceKind};
use m3dram::{Error, Result};

/// Organizations the simulation tab compares.
pub const SIM_ORGS: [&str; 3] = ["ddr4-512", "m3d-512", "m3d-128"];

const WAVEFORM_INTERVAL: f64 = 20e-12;

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string(v)?)
}

/// Area and close-page latency for every built-in organization, with the
/// via capacitance (fF) and top-tier drive derating overridden.
pub fn sweep_json(miv_c_ff: f64, top_tier_derating: f64) -> Result<String> {
    if !(miv_c_ff.is_finite() && miv_c_ff >= 0.0) {
        return Err(Error::InvalidConfig(format!("via capacitance must be >= 0 fF, got {miv_c_ff}")));
    }
    let mut ctx = ModelContext::default();
    ctx.parasitics.miv_c = miv_c_ff * 1e-15;
    let mut cal = Calibration::bundled();
    cal.cell.top_tier_current_derating = top_tier_derating;
    cal.cell.validate()?;
    let orgs: Vec<_> = builtin_orgs().into_iter().map(|s| (s, ctx.dims)).collect();
    let rows = m3dram::model::sweep(&orgs, &OrgSpec::ddr4(512), &cal, &ctx)?;
    to_json(&rounded_sweep(&rows))
}

#[derive(Serialize)]
struct Waveform {
    org: String,
    t_enable_ns: f64,
    t_rcd_ns: f64,
    t_ras_ns: f64,
    delta_v: f64,
    /// `[time_ns, v_bitline, v_cell]`
    samples: Vec<[f64; 3]>,
}

/// Bitline and cell voltages during one activation.
pub fn waveform_json(org: &str) -> Result<String> {
    let ctx = ModelContext::default();
    let cal = Calibration::bundled();
    let spec = OrgSpec::builtin(org)?;
    let bl = BitlineElectricals::for_org(&spec, &ctx.parasitics);
    let cfg = ctx.solver.with_waveform(WAVEFORM_INTERVAL);
    let r = simulate_activation(&cal.cell, &bl, &cal.sense_amp, &ctx.tech, &cfg)?;
    to_json(&Waveform {
        org: spec.name,
        t_enable_ns: cal.sense_amp.intrinsic_enable_delay * 1e9,
        t_rcd_ns: r.t_rcd * 1e9,
        t_ras_ns: r.t_ras * 1e9,
        delta_v: r.delta_v,
        samples: r.waveform.iter().map(|s| [s.time * 1e9, s.v_bitline, s.v_cell]).collect(),
    })
}

/// Replays one synthetic trace on the three compared organizations.
pub fn simulate_json(kind: &str, requests: usize, seed: u64, mean_interarrival: f64) -> Result<String> {
    let kind: TraceKind = kind.parse()?;
    let ctx = ModelContext::default();
    let cal = Calibration::bundled();
    let table = ReferenceTable::bundled();
    let gen = GeneratorConfig { mean_interarrival, ..Default::default() };
    let specs = SIM_ORGS.iter().map(|n| OrgSpec::builtin(n)).collect::<Result<Vec<_>>>()?;
    let trace = generate_trace(kind, requests, seed, &specs[0], &gen)?;
    let label = format!("{kind}-{requests}-{seed}");
    let rows = specs
        .iter()
        .map(|spec| {
            let m = derive_org(spec, &ctx.dims, &cal, &ctx)?;
            let (t, e, src) = sim_parameters(&m, &table, ParamSource::Auto, cal.energy.p_background)?;
            let r = run_simulation(&trace, &m.spec, &t, &e, &SimConfig::default())?;
            Ok(SimRow::new(&label, src, &r))
        })
        .collect::<Result<Vec<_>>>()?;
    to_json(&rows)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn sweep(miv_c_ff: f64, top_tier_derating: f64) -> std::result::Result<String, JsError> {
    js(sweep_json(miv_c_ff, top_tier_derating))
}

#[wasm_bindgen]
pub fn waveform(org: &str) -> std::result::Result<String, JsError> {
    js(waveform_json(org))
}

#[wasm_bindgen]
pub fn simulate(
    kind: &str,
    requests: usize,
    seed: u64,
    mean_interarrival: f64,
) -> std::result::Result<String, JsError> {
    js(simulate_json(kind, requests, seed, mean_interarrival))
}

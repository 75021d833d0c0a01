//! Text, JSON and CSV renderings of model and simulation results.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{OrgModel, ParamSource, SweepRow};
use crate::sim::SimReport;

/// Parameter set laid out like the reference table in display units (ns, nJ, mm², F).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub org: String,
    pub banks: u32,
    pub page_size_bits: u32,
    pub cells_per_bitline: u32,
    pub m3d: bool,
    pub t_rcd_ns: f64,
    pub t_cas_ns: f64,
    pub t_rp_ns: f64,
    pub t_ras_ns: f64,
    pub t_rc_ns: f64,
    pub t_faw_ns: f64,
    pub t_refi_ns: f64,
    pub t_burst_ns: f64,
    pub close_page_latency_ns: f64,
    pub e_activate_nj: f64,
    pub e_read_nj: f64,
    pub e_write_nj: f64,
    pub e_refresh_nj: f64,
    pub p_background_w: f64,
    pub subarray_area_mm2: f64,
    pub bank_area_mm2: f64,
    pub die_area_mm2: f64,
    pub miv_count_per_bank: u64,
    pub miv_area_per_bank_mm2: f64,
    pub subarray_height_f: u64,
    pub local_bitline_length_f: u64,
    pub global_bitline_length_f: u64,
    pub local_bitline_resistance_ohm: f64,
    pub local_bitline_capacitance_ff: f64,
    pub delta_v_mv: f64,
}

impl From<&OrgModel> for ParamsReport {
    fn from(m: &OrgModel) -> Self {
        let ns = |s: f64| s * 1e9;
        Self {
            org: m.spec.name.clone(),
            banks: m.spec.banks,
            page_size_bits: m.spec.page_size_bits,
            cells_per_bitline: m.spec.cells_per_local_bitline,
            m3d: m.spec.is_m3d,
            t_rcd_ns: ns(m.timing.t_rcd),
            t_cas_ns: ns(m.timing.t_cas),
            t_rp_ns: ns(m.timing.t_rp),
            t_ras_ns: ns(m.timing.t_ras),
            t_rc_ns: ns(m.timing.t_rc),
            t_faw_ns: ns(m.timing.t_faw),
            t_refi_ns: ns(m.timing.t_refi),
            t_burst_ns: ns(m.timing.t_burst),
            close_page_latency_ns: ns(m.timing.close_page_latency),
            e_activate_nj: ns(m.energy.e_activate),
            e_read_nj: ns(m.energy.e_read),
            e_write_nj: ns(m.energy.e_write),
            e_refresh_nj: ns(m.energy.e_refresh),
            p_background_w: m.energy.p_background,
            subarray_area_mm2: m.geometry.subarray_area_mm2,
            bank_area_mm2: m.geometry.bank_area_mm2,
            die_area_mm2: m.geometry.die_area_mm2,
            miv_count_per_bank: m.geometry.miv_count_per_bank,
            miv_area_per_bank_mm2: m.geometry.miv_area_per_bank_mm2,
            subarray_height_f: m.geometry.subarray_height_f,
            local_bitline_length_f: m.geometry.local_bitline_length_f,
            global_bitline_length_f: m.geometry.global_bitline_length_f,
            local_bitline_resistance_ohm: m.bitline.r_local_bitline,
            local_bitline_capacitance_ff: m.bitline.c_local_bitline * 1e15,
            delta_v_mv: m.transient.delta_v * 1e3,
        }
    }
}

/// Aligned text with one column per organization.
pub fn render_params_text(reports: &[ParamsReport]) -> String {
    type Cell = fn(&ParamsReport) -> String;
    let rows: Vec<(&str, Option<Cell>)> = vec![
        ("Banks", Some(|r| r.banks.to_string())),
        ("Page size", Some(|r| format!("{}kb", r.page_size_bits / 1024))),
        ("Cells per bitline", Some(|r| r.cells_per_bitline.to_string())),
        ("Timing parameters (ns)", None),
        ("tRCD", Some(|r| format!("{:.2}", r.t_rcd_ns))),
        ("tCAS", Some(|r| format!("{:.2}", r.t_cas_ns))),
        ("tRP", Some(|r| format!("{:.2}", r.t_rp_ns))),
        ("tRAS", Some(|r| format!("{:.2}", r.t_ras_ns))),
        ("tRC", Some(|r| format!("{:.2}", r.t_rc_ns))),
        ("tFAW", Some(|r| format!("{:.1}", r.t_faw_ns))),
        ("tREFI", Some(|r| format!("{:.0}", r.t_refi_ns))),
        ("tBURST", Some(|r| format!("{:.0}", r.t_burst_ns))),
        ("Close-page latency", Some(|r| format!("{:.2}", r.close_page_latency_ns))),
        ("Per access energy values (nJ)", None),
        ("Activation Energy", Some(|r| format!("{:.3}", r.e_activate_nj))),
        ("Read Energy", Some(|r| format!("{:.3}", r.e_read_nj))),
        ("Write Energy", Some(|r| format!("{:.3}", r.e_write_nj))),
        ("Refresh Energy", Some(|r| format!("{:.2}", r.e_refresh_nj))),
        ("Area analysis", None),
        ("Subarray (mm²)", Some(|r| format!("{:.4}", r.subarray_area_mm2))),
        ("Bank (mm²)", Some(|r| format!("{:.3}", r.bank_area_mm2))),
        ("Die (mm²)", Some(|r| format!("{:.2}", r.die_area_mm2))),
        ("#MIVs per bank", Some(|r| r.miv_count_per_bank.to_string())),
        ("MIV area per bank (mm²)", Some(|r| format!("{:.3}", r.miv_area_per_bank_mm2))),
        ("Subarray height", Some(|r| format!("{}F", r.subarray_height_f))),
        ("Local bitline length", Some(|r| format!("{}F", r.local_bitline_length_f))),
        ("Global bitline length", Some(|r| format!("{}F", r.global_bitline_length_f))),
        ("Local bitline resistance", Some(|r| format!("{:.0}Ω", r.local_bitline_resistance_ohm))),
        ("Local bitline capacitance", Some(|r| format!("{:.1}fF", r.local_bitline_capacitance_ff))),
        ("Charge-share signal (mV)", Some(|r| format!("{:.1}", r.delta_v_mv))),
    ];
    let label_w = rows.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> =
        rows.iter().map(|(_, f)| reports.iter().map(|r| f.map(|f| f(r)).unwrap_or_default()).collect()).collect();
    let col_w: Vec<usize> = (0..reports.len())
        .map(|j| {
            cells.iter().map(|c| c[j].chars().count()).chain(std::iter::once(reports[j].org.len())).max().unwrap_or(0)
        })
        .collect();
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())));
    let mut out = String::new();
    let _ = write!(out, "{}", pad("", label_w));
    for (r, w) in reports.iter().zip(&col_w) {
        let _ = write!(out, "  {:>w$}", r.org, w = *w);
    }
    out.push('\n');
    for ((label, f), row) in rows.iter().zip(&cells) {
        let _ = write!(out, "{}", pad(label, label_w));
        if f.is_some() {
            for (c, w) in row.iter().zip(&col_w) {
                let _ = write!(out, "  {:>w$}", c, w = *w);
            }
        }
        out.push('\n');
    }
    out
}

fn round(v: f64, digits: i32) -> f64 {
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

/// Sweep rows rounded for output: areas to 1e-4, times to 1e-3 ns.
pub fn rounded_sweep(rows: &[SweepRow]) -> Vec<SweepRow> {
    rows.iter()
        .map(|r| SweepRow {
            die_area_mm2: round(r.die_area_mm2, 4),
            die_area_norm: round(r.die_area_norm, 4),
            t_rcd_ns: round(r.t_rcd_ns, 3),
            t_cas_ns: round(r.t_cas_ns, 3),
            close_page_latency_ns: round(r.close_page_latency_ns, 3),
            ..r.clone()
        })
        .collect()
}

/// One simulation result, flattened for CSV and JSON. Values are rounded
/// to output precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub org: String,
    pub trace: String,
    /// `reference` or `model`: where timing and energy values came from.
    pub params: String,
    pub reads: u64,
    pub writes: u64,
    pub activates: u64,
    pub precharges: u64,
    pub refreshes: u64,
    pub avg_latency_ns: f64,
    pub throughput_gbps: f64,
    pub wall_time_ns: f64,
    pub p_background_w: f64,
    pub p_activate_w: f64,
    pub p_burst_w: f64,
    pub p_refresh_w: f64,
    pub p_total_w: f64,
    pub edp_pj_ns_per_bit: Option<f64>,
}

impl SimRow {
    pub fn new(trace: &str, params: ParamSource, r: &SimReport) -> Self {
        Self {
            org: r.org.clone(),
            trace: trace.to_string(),
            params: params.name().to_string(),
            reads: r.stats.n_reads,
            writes: r.stats.n_writes,
            activates: r.stats.n_activates,
            precharges: r.stats.n_precharges,
            refreshes: r.stats.n_refreshes,
            avg_latency_ns: round(r.stats.avg_access_latency_ns, 3),
            throughput_gbps: round(r.stats.throughput_bits_per_s / 1e9, 4),
            wall_time_ns: r.stats.wall_time_ns,
            p_background_w: round(r.power.p_background, 6),
            p_activate_w: round(r.power.p_activate, 6),
            p_burst_w: round(r.power.p_burst, 6),
            p_refresh_w: round(r.power.p_refresh, 6),
            p_total_w: round(r.power.p_total, 6),
            edp_pj_ns_per_bit: r.edp_pj_ns.map(|e| round(e, 4)),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes serializable rows as CSV with a header.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("CSV is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::OrgSpec;
    use crate::model::{derive_org, Calibration, ModelContext};

    #[test]
    fn params_text_has_table_rows() {
        let ctx = ModelContext::default();
        let cal = Calibration::bundled();
        let m = derive_org(&OrgSpec::m3d(128), &ctx.dims, &cal, &ctx).unwrap();
        let text = render_params_text(&[ParamsReport::from(&m)]);
        assert!(text.contains("m3d-128"));
        assert!(text.contains("14680576"));
        assert!(text.contains("142569F"));
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines.iter().any(|l| l.starts_with("tFAW")));
    }

    #[test]
    fn csv_header_and_rows() {
        let rows = vec![SweepRow {
            org: "a".into(),
            cells_per_bitline: 64,
            m3d: false,
            die_area_mm2: 1.0,
            die_area_norm: 1.0,
            t_rcd_ns: 4.5,
            t_cas_ns: 9.0,
            close_page_latency_ns: 17.5,
        }];
        let s = sweep_csv(&rows).unwrap();
        assert!(s.starts_with(
            "org,cells_per_bitline,m3d,die_area_mm2,die_area_norm,t_rcd_ns,t_cas_ns,close_page_latency_ns\n"
        ));
        assert_eq!(s.lines().count(), 2);
    }
}

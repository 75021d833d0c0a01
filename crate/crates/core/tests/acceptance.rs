//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! lines show up in `cargo test` output; exits non-zero if any check fails.

use std::process::ExitCode;
use std::time::Instant;

use m3dram::circuit::{
    charge_share_delta, charge_share_plateau, simulate_activation, BitlineElectricals, SolverConfig,
};
use m3dram::geometry::{builtin_orgs, compute_areas, count_mivs, derive_global_bitline_length, OrgSpec};
use m3dram::model::{calibrate, derive_org, sim_parameters, sweep, Calibration, ModelContext, OrgModel, ParamSource};
use m3dram::reference::ReferenceTable;
use m3dram::sim::{run_simulation, validate_log, write_command_log, SimConfig, SimReport};
use m3dram::trace::{generate_trace, GeneratorConfig, Op, TraceKind, TraceRecord};

const P_BACKGROUND: f64 = 0.12;

type Criterion = (&'static str, fn(&World) -> Check);

struct Check {
    ok: bool,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { ok: true, notes: Vec::new() }
    }

    fn expect(&mut self, cond: bool, note: String) {
        if !cond {
            self.ok = false;
            self.notes.push(format!("FAILED {note}"));
        } else {
            self.notes.push(note);
        }
    }
}

fn rel(model: f64, target: f64) -> f64 {
    (model - target) / target
}

fn within(model: f64, target: f64, tol: f64) -> bool {
    rel(model, target).abs() <= tol
}

struct World {
    ctx: ModelContext,
    cal: Calibration,
    table: ReferenceTable,
}

impl World {
    fn org(&self, spec: &OrgSpec) -> OrgModel {
        derive_org(spec, &self.ctx.dims, &self.cal, &self.ctx).expect("derive")
    }
}

fn geometry_exactness(w: &World) -> Check {
    let mut c = Check::new();
    // subarray height in F: two F per cell plus 23 F of SA/precharge/driver,
    // plus a 234 F strip that only the 2D layout keeps
    let height = |cells: u64, m3d: bool| 2 * cells + 23 + if m3d { 0 } else { 234 };
    let gbl = |cells: u64, m3d: bool| (65_536 / cells - 1) * height(cells, m3d);
    // per subarray: one via per bitline, half as many for the SA I/O, one per
    // wordline per tile, one for the enable
    let mivs = |cells: u64| (65_536 / cells) * (16_384 + 8_192 + cells * 32 + 1);
    for (spec, table_gbl) in [
        (OrgSpec::ddr4(512), 162_687),
        (OrgSpec::m3d(512), 132_969),
        (OrgSpec::m3d(128), 142_569),
        (OrgSpec::ddr4(256), 196_095),
    ] {
        let got = derive_global_bitline_length(&spec, &w.ctx.dims);
        let oracle = gbl(u64::from(spec.cells_per_local_bitline), spec.is_m3d);
        c.expect(got == table_gbl && oracle == table_gbl, format!("{} L_GBL {got}F", spec.name));
    }
    for (spec, table_mivs) in [(OrgSpec::m3d(512), 5_243_008), (OrgSpec::m3d(128), 14_680_576)] {
        let got = count_mivs(&spec);
        let oracle = mivs(u64::from(spec.cells_per_local_bitline));
        c.expect(got == table_mivs && oracle == table_mivs, format!("{} MIVs {got}", spec.name));
    }
    c
}

fn area(w: &World) -> Check {
    let mut c = Check::new();
    let bank = |s: &OrgSpec| compute_areas(s, &w.ctx.dims, &w.ctx.tech).bank_area_mm2;
    for (spec, table) in [(OrgSpec::ddr4(512), 3.926), (OrgSpec::m3d(512), 3.209), (OrgSpec::m3d(128), 3.42)] {
        let a = bank(&spec);
        c.expect(within(a, table, 0.02), format!("{} bank {a:.3} mm2 ({:+.1}%)", spec.name, 100.0 * rel(a, table)));
    }
    let reduction = 1.0 - bank(&OrgSpec::m3d(128)) / bank(&OrgSpec::ddr4(512));
    c.expect(reduction >= 0.12, format!("m3d-128 reduction {:.1}%", 100.0 * reduction));
    c
}

fn timing_calibration(w: &World) -> Check {
    let mut c = Check::new();
    let fresh = calibrate(&w.table, &w.ctx);
    let cal = match fresh {
        Ok(cal) => cal,
        Err(e) => {
            c.expect(false, format!("calibrate: {e}"));
            return c;
        }
    };
    let ctx = &w.ctx;
    let worst = |spec: OrgSpec, rcd: f64, rp: f64, rc: f64| {
        let m = derive_org(&spec, &ctx.dims, &cal, ctx).expect("derive");
        let t = m.timing;
        [rel(t.t_rcd * 1e9, rcd), rel(t.t_rp * 1e9, rp), rel(t.t_rc * 1e9, rc)].into_iter().fold(0.0f64, |a, r| {
            if r.abs() > a.abs() {
                r
            } else {
                a
            }
        })
    };
    for (spec, rcd, rp, rc) in [
        (OrgSpec::ddr4(512), 6.77, 9.58, 26.64),
        (OrgSpec::m3d(512), 6.78, 9.60, 25.34),
        (OrgSpec::m3d(128), 4.20, 4.04, 18.05),
    ] {
        let name = spec.name.clone();
        let r = worst(spec, rcd, rp, rc);
        c.expect(r.abs() <= 0.10, format!("{name} worst {:+.1}%", 100.0 * r));
    }
    let rcd256 = derive_org(&OrgSpec::ddr4(256), &ctx.dims, &cal, ctx).expect("derive").timing.t_rcd * 1e9;
    c.expect(within(rcd256, 5.0, 0.15), format!("ddr4-256 tRCD {rcd256:.3} ns (held out)"));
    let mut worst_cas = 0.0f64;
    for (spec, cas) in
        [(OrgSpec::ddr4(512), 10.29), (OrgSpec::m3d(512), 8.96), (OrgSpec::m3d(128), 9.82), (OrgSpec::ddr4(256), 12.0)]
    {
        let got = derive_org(&spec, &ctx.dims, &cal, ctx).expect("derive").timing.t_cas * 1e9;
        worst_cas = worst_cas.max((got - cas).abs());
    }
    c.expect(worst_cas <= 0.4, format!("tCAS max miss {worst_cas:.3} ns"));
    c
}

fn tfaw_scaling(w: &World) -> Check {
    let mut c = Check::new();
    let base = w.org(&OrgSpec::ddr4(512));
    for (spec, table) in [(OrgSpec::m3d(512), 35.3), (OrgSpec::m3d(128), 14.4)] {
        let m = w.org(&spec);
        let t = m.timing.t_faw * 1e9;
        // at most four activations per window: the window scales with activation energy
        let oracle = 35.8 * m.energy.e_activate / base.energy.e_activate;
        c.expect(
            within(t, table, 0.02) && (t - oracle).abs() < 1e-9,
            format!("{} tFAW {t:.3} ns ({:+.1}%)", spec.name, 100.0 * rel(t, table)),
        );
    }
    c
}

fn isolated_latency_ps(m: &OrgModel) -> (u64, u64) {
    // one request every 500 cycles, spread over banks and rows
    let trace: Vec<TraceRecord> = (0..64u64)
        .map(|i| TraceRecord { cycle: 500 * i, op: Op::Read, address: (i % 8) << 11 | (i * 37 % 1000) << 14 })
        .collect();
    let cfg = SimConfig { refresh: false, ..Default::default() };
    let r = run_simulation(&trace, &m.spec, &m.timing, &m.energy, &cfg).expect("simulate");
    let ps = |s: f64| (s * 1e12).round() as u64;
    let oracle = ps(m.timing.t_rcd) + ps(m.timing.t_cas) + ps(m.timing.t_burst);
    let n = r.stats.n_reads as u128;
    let each = r.stats.sum_latency_ps / n;
    assert_eq!(each * n, r.stats.sum_latency_ps, "unequal isolated latencies");
    (each as u64, oracle)
}

fn close_page(w: &World) -> Check {
    let mut c = Check::new();
    for (spec, target) in [(OrgSpec::ddr4(512), 21.1), (OrgSpec::ddr4(256), 21.0)] {
        let m = w.org(&spec);
        let cp = m.timing.close_page_latency * 1e9;
        c.expect((cp - target).abs() <= 0.3, format!("{} {cp:.3} ns", spec.name));
    }
    for spec in [OrgSpec::ddr4(512), OrgSpec::m3d(512), OrgSpec::m3d(128), OrgSpec::ddr4(256)] {
        let (sim, oracle) = isolated_latency_ps(&w.org(&spec));
        c.expect(sim == oracle, format!("{} isolated {sim} ps", spec.name));
    }
    c
}

fn design_space_shape(w: &World) -> Check {
    let mut c = Check::new();
    let orgs: Vec<_> = builtin_orgs().into_iter().map(|s| (s, w.ctx.dims)).collect();
    let rows = sweep(&orgs, &OrgSpec::ddr4(512), &w.cal, &w.ctx).expect("sweep");
    let row = |m3d: bool, cells: u32| rows.iter().find(|r| r.m3d == m3d && r.cells_per_bitline == cells).unwrap();
    let min2d = rows
        .iter()
        .filter(|r| !r.m3d)
        .min_by(|a, b| a.close_page_latency_ns.total_cmp(&b.close_page_latency_ns))
        .unwrap();
    c.expect(
        min2d.cells_per_bitline == 256,
        format!("2D minimum at {} ({:.3} ns)", min2d.cells_per_bitline, min2d.close_page_latency_ns),
    );
    let s = row(false, 32).t_rcd_ns / row(false, 64).t_rcd_ns - 1.0;
    c.expect(s.abs() <= 0.05, format!("tRCD(32)/tRCD(64) {:+.2}%", 100.0 * s));
    let dominated = m3dram::geometry::SUPPORTED_BITLINE_CELLS.iter().all(|&n| {
        let (a, b) = (row(true, n), row(false, n));
        a.die_area_mm2 <= b.die_area_mm2 && a.close_page_latency_ns <= b.close_page_latency_ns
    });
    c.expect(dominated, "M3D points dominate 2D".into());
    c
}

fn simulate(w: &World, m: &OrgModel, trace: &[TraceRecord], record: bool) -> (SimReport, m3dram::timing::TimingParams) {
    let (t, e, _) = sim_parameters(m, &w.table, ParamSource::Auto, P_BACKGROUND).expect("params");
    let cfg = SimConfig { record_commands: record, ..Default::default() };
    (run_simulation(trace, &m.spec, &t, &e, &cfg).expect("simulate"), t)
}

fn log_text(r: &SimReport) -> Vec<u8> {
    let mut out = Vec::new();
    write_command_log(&mut out, r.commands.as_deref().unwrap()).unwrap();
    out
}

fn simulator(w: &World) -> Check {
    let mut c = Check::new();
    let models: Vec<OrgModel> = builtin_orgs().iter().map(|s| w.org(s)).collect();
    let gen = GeneratorConfig::default();
    let results: Vec<(String, usize, usize, bool, usize)> = std::thread::scope(|sc| {
        let handles: Vec<_> = models
            .iter()
            .map(|m| {
                sc.spawn(move || {
                    let mut out = Vec::new();
                    for kind in TraceKind::ALL {
                        let trace = generate_trace(kind, 100_000, 7, &m.spec, &gen).unwrap();
                        let (a, t) = simulate(w, m, &trace, true);
                        let (b, _) = simulate(w, m, &trace, true);
                        let (la, lb) = (log_text(&a), log_text(&b));
                        let v = validate_log(
                            la.as_slice(),
                            &t,
                            m.spec.banks as usize,
                            SimConfig::default().rows_per_refresh,
                        )
                        .expect("log parses");
                        out.push((
                            format!("{}/{kind}", m.spec.name),
                            v.violations.len(),
                            v.max_acts_in_faw_window,
                            la == lb && a.stats == b.stats,
                            (a.stats.n_reads + a.stats.n_writes) as usize,
                        ));
                    }
                    out
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    let violations: usize = results.iter().map(|r| r.1).sum();
    let max_acts = results.iter().map(|r| r.2).max().unwrap_or(0);
    let all_served = results.iter().all(|r| r.4 == 100_000);
    let deterministic = results.iter().all(|r| r.3);
    for r in results.iter().filter(|r| r.1 > 0 || r.2 > 4 || !r.3) {
        c.expect(false, format!("{}: {} violations, {} ACTs/window", r.0, r.1, r.2));
    }
    c.expect(violations == 0 && all_served, format!("{} runs, {violations} violations", results.len()));
    c.expect(max_acts <= 4, format!("max {max_acts} ACTs per tFAW window"));
    c.expect(deterministic, "repeat runs identical".into());
    c
}

fn system_orderings(w: &World) -> Check {
    let mut c = Check::new();
    let specs = [OrgSpec::ddr4(512), OrgSpec::m3d(512), OrgSpec::m3d(128)];
    let trace = generate_trace(TraceKind::Uniform, 100_000, 1, &specs[0], &GeneratorConfig::default()).unwrap();
    let reps: Vec<SimReport> = specs.iter().map(|s| simulate(w, &w.org(s), &trace, false).0).collect();
    let lat = |i: usize| reps[i].stats.avg_access_latency_ns;
    let pw = |i: usize| reps[i].power.p_total;
    let edp = |i: usize| reps[i].edp_pj_ns.unwrap();
    c.expect(lat(2) < lat(1) && lat(1) < lat(0), format!("latency {:.1} / {:.1} / {:.1} ns", lat(0), lat(1), lat(2)));
    c.expect(pw(1) < pw(0) && pw(2) < pw(0), format!("power {:.4} / {:.4} / {:.4} W", pw(0), pw(1), pw(2)));
    c.expect(edp(2) < edp(1) && edp(1) < edp(0), format!("EDP {:.1} / {:.1} / {:.1}", edp(0), edp(1), edp(2)));
    c
}

fn solver_numerics(w: &World) -> Check {
    let mut c = Check::new();
    let ctx = &w.ctx;
    for spec in [OrgSpec::ddr4(512), OrgSpec::m3d(128), OrgSpec::ddr4(32)] {
        let bl = BitlineElectricals::for_org(&spec, &ctx.parasitics);
        let run = |cfg: &SolverConfig| simulate_activation(&w.cal.cell, &bl, &w.cal.sense_amp, &ctx.tech, cfg).unwrap();
        let full = run(&ctx.solver);
        let half = run(&SolverConfig { step: full.step / 2.0, ..ctx.solver });
        let d = rel(half.t_rcd, full.t_rcd);
        c.expect(d.abs() < 0.005, format!("{} halved step {:+.1e}", spec.name, d));
        let audit = full.latch_audit.relative_error();
        c.expect(audit <= 0.01, format!("{} charge {:.1e}", spec.name, audit));
        let plateau = charge_share_plateau(&w.cal.cell, &bl, &w.cal.sense_amp, &ctx.tech, &ctx.solver).unwrap();
        let delta = charge_share_delta(w.cal.cell.c_cell, bl.c_local_bitline, ctx.tech.vdd);
        c.expect(within(plateau, delta, 0.02), format!("{} delta {:+.1e}", spec.name, rel(plateau, delta)));
    }
    c
}

fn main() -> ExitCode {
    let start = Instant::now();
    let w = World { ctx: ModelContext::default(), cal: Calibration::bundled(), table: ReferenceTable::bundled() };
    let criteria: [Criterion; 9] = [
        ("geometry exactness", geometry_exactness),
        ("bank area", area),
        ("timing calibration", timing_calibration),
        ("tFAW scaling", tfaw_scaling),
        ("close-page latency", close_page),
        ("design-space shape", design_space_shape),
        ("simulator correctness", simulator),
        ("system orderings", system_orderings),
        ("solver numerics", solver_numerics),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let c = f(&w);
        if !c.ok {
            failed += 1;
        }
        println!(
            "criterion {}: {} {name} [{:.1}s] {}",
            i + 1,
            if c.ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            c.notes.join("; ")
        );
    }
    println!(
        "acceptance: {} of {} passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

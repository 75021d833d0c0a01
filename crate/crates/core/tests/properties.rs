use proptest::prelude::*;

use m3dram::energy::{aggregate_power, ActivityCounts, EnergyParams};
use m3dram::geometry::{
    builtin_orgs, compute_areas, count_mivs, derive_global_bitline_length, OrgSpec, PeripheralDims, TechNode,
};
use m3dram::model::{derive_org, sim_parameters, Calibration, ModelContext, OrgModel, ParamSource};
use m3dram::reference::ReferenceTable;
use m3dram::sim::{decode_address, run_simulation, validate_log, write_command_log, AddressMap, SimConfig};
use m3dram::trace::{parse_trace_str, trace_to_string, Op, TraceRecord};

fn models() -> &'static [OrgModel] {
    use std::sync::OnceLock;
    static MODELS: OnceLock<Vec<OrgModel>> = OnceLock::new();
    MODELS.get_or_init(|| {
        let ctx = ModelContext::default();
        let cal = Calibration::bundled();
        builtin_orgs().iter().map(|s| derive_org(s, &ctx.dims, &cal, &ctx).unwrap()).collect()
    })
}

fn trace_strategy(max_len: usize) -> impl Strategy<Value = Vec<TraceRecord>> {
    prop::collection::vec((0u64..60, any::<bool>(), any::<u64>()), 1..max_len).prop_map(|raw| {
        let mut cycle = 0;
        raw.into_iter()
            .map(|(gap, read, address)| {
                cycle += gap;
                TraceRecord { cycle, op: if read { Op::Read } else { Op::Write }, address: address & ((1 << 36) - 1) }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trace_text_round_trips(trace in trace_strategy(200)) {
        prop_assert_eq!(parse_trace_str(&trace_to_string(&trace)).unwrap(), trace);
    }

    #[test]
    fn schedules_obey_every_timing_rule(
        trace in trace_strategy(400),
        org in 0usize..10,
        model_params in any::<bool>(),
    ) {
        let m = &models()[org];
        let source = if model_params { ParamSource::Model } else { ParamSource::Auto };
        let (t, e, _) = sim_parameters(m, &ReferenceTable::bundled(), source, 0.12).unwrap();
        let cfg = SimConfig { record_commands: true, ..Default::default() };
        let r = run_simulation(&trace, &m.spec, &t, &e, &cfg).unwrap();
        prop_assert_eq!((r.stats.n_reads + r.stats.n_writes) as usize, trace.len());
        prop_assert_eq!(r.stats.n_activates, r.stats.n_precharges);
        // reads wait tRCD + tCAS + tBURST, writes skip tCAS; each term rounds
        // to the picosecond separately
        let ps = |v: f64| (v * 1e12).round() as u128;
        let floor = u128::from(r.stats.n_reads) * ps(t.t_rcd + t.t_cas + t.t_burst)
            + u128::from(r.stats.n_writes) * ps(t.t_rcd + t.t_burst);
        prop_assert!(r.stats.sum_latency_ps + 2 * trace.len() as u128 >= floor);

        let mut log = Vec::new();
        write_command_log(&mut log, r.commands.as_deref().unwrap()).unwrap();
        let v = validate_log(log.as_slice(), &t, m.spec.banks as usize, cfg.rows_per_refresh).unwrap();
        prop_assert!(v.is_clean(), "{:?}", &v.violations[..v.violations.len().min(3)]);
        prop_assert!(v.max_acts_in_faw_window <= 4);

        let again = run_simulation(&trace, &m.spec, &t, &e, &cfg).unwrap();
        prop_assert_eq!(again.commands, r.commands);
    }

    #[test]
    fn addresses_decode_inside_the_bank(address in any::<u64>(), org in 0usize..10) {
        let spec = &models()[org].spec;
        let map = AddressMap::for_org(spec).unwrap();
        let d = decode_address(address, spec).unwrap();
        prop_assert!(d.bank < spec.banks && d.row < map.rows() && d.column < map.columns());
        let line = map.line_index(d.bank, d.row, d.column);
        prop_assert_eq!(line, (address >> map.offset_bits()) % map.cachelines());
    }

    #[test]
    fn power_is_the_sum_of_its_parts(
        acts in 0u64..1_000_000,
        reads in 0u64..1_000_000,
        writes in 0u64..1_000_000,
        refs in 0u64..1_000,
        wall in 1e-6f64..1.0,
    ) {
        let e = EnergyParams {
            org: "x".into(),
            e_activate: 0.5e-9,
            e_read: 1.0e-9,
            e_write: 1.2e-9,
            e_refresh: 30e-9,
            p_background: 0.1,
        };
        let counts = ActivityCounts { n_activates: acts, n_reads: reads, n_writes: writes, n_refreshes: refs };
        let p = aggregate_power(&counts, &e, wall).unwrap();
        let energy = acts as f64 * 0.5e-9 + reads as f64 * 1.0e-9 + writes as f64 * 1.2e-9 + refs as f64 * 30e-9;
        prop_assert!((p.p_total - (0.1 + energy / wall)).abs() <= 1e-9 * p.p_total);
    }
}

#[test]
fn geometry_matches_integer_oracle_for_every_length() {
    let dims = PeripheralDims::default();
    let tech = TechNode::default();
    for spec in builtin_orgs() {
        let n = u64::from(spec.cells_per_local_bitline);
        let height = 2 * n + 23 + if spec.is_m3d { 0 } else { 234 };
        assert_eq!(derive_global_bitline_length(&spec, &dims), (65_536 / n - 1) * height, "{}", spec.name);
        let expected_mivs = if spec.is_m3d { (65_536 / n) * (16_384 + 8_192 + 32 * n + 1) } else { 0 };
        assert_eq!(count_mivs(&spec), expected_mivs, "{}", spec.name);
        if spec.is_m3d {
            let flat = compute_areas(&OrgSpec::ddr4(spec.cells_per_local_bitline), &dims, &tech);
            assert!(compute_areas(&spec, &dims, &tech).die_area_mm2 < flat.die_area_mm2);
        }
    }
}

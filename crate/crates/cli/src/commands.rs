use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use m3dram::config::{Config, OrgChoice};
use m3dram::model::{
    calibrate, derive_org, predict_row, sim_parameters, sweep, Calibration, ModelContext, ParamSource, Prediction,
};
use m3dram::reference::ReferenceTable;
use m3dram::report::{render_params_text, rounded_sweep, write_csv, ParamsReport, SimRow};
use m3dram::sim::{run_simulation, validate_log, write_command_log};
use m3dram::trace::{generate_trace, read_trace_file, write_trace, write_trace_file, GeneratorConfig, TraceKind};
use m3dram::{Error, Result};

use crate::{
    CalibrateArgs, Cli, Command, Format, GenTraceArgs, Global, Kind, ParamsArgs, SimulateArgs, Source, SweepArgs,
    TraceSpec, ValidateArgs,
};

/// The three organizations with complete reference rows.
const DEFAULT_ORGS: [&str; 3] = ["ddr4-512", "m3d-512", "m3d-128"];

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownOrg { .. } | Error::InvalidConfig(_) => 1,
        Error::CalibrationFailure(_) | Error::Underdetermined(_) => 3,
        _ => 2,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let s = Session::open(&cli.global)?;
    match cli.command {
        Command::Params(a) => params(&s, a),
        Command::Calibrate(a) => calibrate_cmd(&s, a),
        Command::Sweep(a) => sweep_cmd(&s, a),
        Command::Simulate(a) => simulate(&s, a),
        Command::GenTrace(a) => gen_trace(&s, a),
        Command::ValidateLog(a) => validate(&s, a),
    }
}

struct Session {
    cfg: Config,
    ctx: ModelContext,
    reference: ReferenceTable,
}

impl Session {
    fn open(g: &Global) -> Result<Self> {
        let mut cfg = Config::load_with_overrides(g.config.as_deref(), &g.overrides)?;
        if g.reference.is_some() {
            cfg.reference.clone_from(&g.reference);
        }
        if g.calibration.is_some() {
            cfg.calibration.clone_from(&g.calibration);
        }
        if g.p_background.is_some() {
            cfg.p_background = g.p_background;
        }
        cfg.validate()?;
        let reference = match &cfg.reference {
            Some(p) => ReferenceTable::load(p)?,
            None => ReferenceTable::bundled(),
        };
        Ok(Self { ctx: cfg.context(), cfg, reference })
    }

    /// Loaded from file, bundled, or refitted when the reference or the
    /// model context differ from the bundled ones.
    fn calibration(&self) -> Result<Calibration> {
        let cal = match &self.cfg.calibration {
            Some(p) => Calibration::load(p)?,
            None if self.cfg.reference.is_none() && self.ctx == ModelContext::default() => Calibration::bundled(),
            None => calibrate(&self.reference, &self.ctx)?,
        };
        Ok(cal.with_p_background(self.cfg.p_background))
    }

    fn orgs(&self, names: &[String]) -> Result<Vec<OrgChoice>> {
        if !names.is_empty() {
            names.iter().map(|n| self.cfg.find_org(n)).collect()
        } else if !self.cfg.orgs.is_empty() {
            Ok(self.cfg.org_choices())
        } else {
            DEFAULT_ORGS.iter().map(|n| self.cfg.find_org(n)).collect()
        }
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn json<T: serde::Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn csv<T: serde::Serialize>(rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Right-aligns the columns of a CSV text for terminal display.
fn align(csv_text: &str) -> String {
    let rows: Vec<Vec<&str>> = csv_text.lines().map(|l| l.split(',').collect()).collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let width: Vec<usize> =
        (0..cols).map(|j| rows.iter().filter_map(|r| r.get(j)).map(|c| c.len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn render<T: serde::Serialize>(rows: &[T], format: Format) -> Result<String> {
    match format {
        Format::Csv => csv(rows),
        Format::Json => json(rows),
        Format::Text => csv(rows).map(|c| align(&c)),
    }
}

fn params(s: &Session, a: ParamsArgs) -> Result<()> {
    let cal = s.calibration()?;
    let reports = s
        .orgs(&a.orgs)?
        .iter()
        .map(|o| derive_org(&o.spec, &o.dims, &cal, &s.ctx).map(|m| ParamsReport::from(&m)))
        .collect::<Result<Vec<_>>>()?;
    let text = match a.format {
        Format::Text => render_params_text(&reports),
        Format::Json => json(&reports)?,
        Format::Csv => csv(&reports)?,
    };
    emit(a.output.as_deref(), &text)
}

fn scaled(quantity: &str, v: f64) -> String {
    if quantity.starts_with("t_") {
        format!("{:.3} ns", v * 1e9)
    } else if quantity.starts_with("e_") {
        format!("{:.3} nJ", v * 1e9)
    } else {
        format!("{v:.3} mm²")
    }
}

fn prediction_lines(out: &mut String, title: &str, preds: &[(String, String, f64, f64)]) {
    if preds.is_empty() {
        return;
    }
    out.push_str(title);
    out.push('\n');
    for (org, q, reference, model) in preds {
        out.push_str(&format!(
            "  {org:<10} {q:<14} reference {:>12}  model {:>12}  {:+6.1}%\n",
            scaled(q, *reference),
            scaled(q, *model),
            100.0 * (model - reference) / reference
        ));
    }
}

fn calibrate_cmd(s: &Session, a: CalibrateArgs) -> Result<()> {
    let table = match &a.hold_out {
        Some(name) => {
            if s.reference.get(name).is_none() {
                return Err(Error::UnknownOrg {
                    name: name.clone(),
                    known: s.reference.rows.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", "),
                });
            }
            s.reference.without(name)
        }
        None => s.reference.clone(),
    };
    let mut cal = calibrate(&table, &s.ctx)?;
    if let Some(name) = &a.hold_out {
        let row = s.reference.get(name).expect("checked above");
        cal.held_out.extend(predict_row(&cal, row, &s.ctx)?);
    }
    let cal = cal.with_p_background(s.cfg.p_background);

    let mut summary = String::new();
    let tuple = |org: &str, q: &str, r: f64, m: f64| (org.to_string(), q.to_string(), r, m);
    let circuit: Vec<_> =
        cal.circuit_residuals.iter().map(|r| tuple(&r.org, &r.quantity, r.observed, r.predicted)).collect();
    let tcas: Vec<_> = table
        .rows
        .iter()
        .filter_map(|r| r.t_cas.map(|t| (r, t)))
        .zip(&cal.tcas.residuals)
        .map(|((r, _), res)| tuple(&r.name, "t_cas", res.observed, res.predicted))
        .collect();
    let energy: Vec<_> =
        cal.energy_residuals.iter().map(|r| tuple(&r.org, &r.quantity, r.observed, r.predicted)).collect();
    let held: Vec<_> =
        cal.held_out.iter().map(|p: &Prediction| tuple(&p.org, &p.quantity, p.reference, p.predicted)).collect();
    summary.push_str(&format!("reference: {}\n", table.source));
    if cal.underdetermined {
        summary.push_str("circuit constants left at defaults: fewer than two complete timing rows\n");
    }
    prediction_lines(&mut summary, "fitted timing", &circuit);
    prediction_lines(&mut summary, "fitted tCAS", &tcas);
    prediction_lines(&mut summary, "fitted energy", &energy);
    prediction_lines(&mut summary, "not fitted (predicted)", &held);

    let text = cal.to_json()?;
    match &a.output {
        Some(p) => {
            std::fs::write(p, text)?;
            print!("{summary}");
            println!("wrote {}", p.display());
        }
        None => {
            eprint!("{summary}");
            emit(None, &text)?;
        }
    }
    Ok(())
}

fn sweep_cmd(s: &Session, a: SweepArgs) -> Result<()> {
    let cal = s.calibration()?;
    let baseline = s.cfg.find_org(&a.baseline)?;
    let orgs: Vec<_> = s.cfg.org_choices().into_iter().map(|o| (o.spec, o.dims)).collect();
    let rows = rounded_sweep(&sweep(&orgs, &baseline.spec, &cal, &s.ctx)?);
    emit(a.output.as_deref(), &render(&rows, a.format)?)
}

fn trace_kind(k: Kind) -> TraceKind {
    match k {
        Kind::Uniform => TraceKind::Uniform,
        Kind::Stream => TraceKind::Stream,
        Kind::Conflict => TraceKind::Conflict,
        Kind::Mixed => TraceKind::Mixed,
    }
}

fn param_source(s: Source) -> ParamSource {
    match s {
        Source::Auto => ParamSource::Auto,
        Source::Reference => ParamSource::Reference,
        Source::Model => ParamSource::Model,
    }
}

fn generator(s: &Session, t: &TraceSpec) -> GeneratorConfig {
    let mut g = s.cfg.generator;
    if let Some(m) = t.mean_interarrival {
        g.mean_interarrival = m;
    }
    if let Some(r) = t.read_fraction {
        g.read_fraction = r;
    }
    g
}

fn simulate(s: &Session, a: SimulateArgs) -> Result<()> {
    let cal = s.calibration()?;
    let orgs = s.orgs(&a.orgs)?;
    let (trace, label) = match &a.trace {
        Some(p) => (
            read_trace_file(p).map_err(|e| match e {
                Error::TraceParse { line, reason } => {
                    Error::TraceParse { line, reason: format!("{}: {reason}", p.display()) }
                }
                e => e,
            })?,
            p.file_name().map_or_else(|| p.display().to_string(), |f| f.to_string_lossy().into_owned()),
        ),
        None => {
            let kind = trace_kind(a.generator.kind);
            let trace = generate_trace(
                kind,
                a.generator.requests,
                a.generator.seed,
                &orgs[0].spec,
                &generator(s, &a.generator),
            )?;
            (trace, kind.name().to_string())
        }
    };
    let mut sim_cfg = s.cfg.sim;
    sim_cfg.refresh &= !a.no_refresh;
    sim_cfg.record_commands |= a.dump_commands.is_some();
    let source = param_source(a.params);
    let p_background = cal.energy.p_background;

    let results: Vec<Result<_>> = std::thread::scope(|scope| {
        let handles: Vec<_> = orgs
            .iter()
            .map(|o| {
                let (cal, trace, reference, ctx) = (&cal, &trace, &s.reference, &s.ctx);
                scope.spawn(move || {
                    let m = derive_org(&o.spec, &o.dims, cal, ctx)?;
                    let (timing, energy, used) = sim_parameters(&m, reference, source, p_background)?;
                    let report = run_simulation(trace, &m.spec, &timing, &energy, &sim_cfg)?;
                    Ok((used, report))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    if let Some(dir) = &a.dump_commands {
        std::fs::create_dir_all(dir)?;
    }
    for r in results {
        let (used, report) = r?;
        if let (Some(dir), Some(cmds)) = (&a.dump_commands, &report.commands) {
            let path = dir.join(format!("{}.csv", report.org));
            write_command_log(BufWriter::new(File::create(&path)?), cmds)?;
        }
        rows.push(SimRow::new(&label, used, &report));
    }
    emit(a.output.as_deref(), &render(&rows, a.format)?)
}

fn gen_trace(s: &Session, a: GenTraceArgs) -> Result<()> {
    let org = s.cfg.find_org(&a.org)?;
    let t = &a.generator;
    let trace = generate_trace(trace_kind(t.kind), t.requests, t.seed, &org.spec, &generator(s, t))?;
    match &a.output {
        Some(p) => write_trace_file(p, &trace),
        None => write_trace(BufWriter::new(std::io::stdout().lock()), &trace),
    }
}

fn validate(s: &Session, a: ValidateArgs) -> Result<()> {
    let cal = s.calibration()?;
    let org = s.cfg.find_org(&a.org)?;
    let m = derive_org(&org.spec, &org.dims, &cal, &s.ctx)?;
    let (timing, _, used) = sim_parameters(&m, &s.reference, param_source(a.params), cal.energy.p_background)?;
    let file = File::open(&a.log)?;
    let report = validate_log(file, &timing, m.spec.banks as usize, s.cfg.sim.rows_per_refresh)?;
    let text = match a.format {
        Format::Json => json(&report)?,
        Format::Csv => csv(&report.violations)?,
        Format::Text => {
            let mut t = format!(
                "{}: {} commands, {} ACT, {} REF, at most {} ACT per tFAW window ({} timings for {})\n",
                a.log.display(),
                report.commands,
                report.activates,
                report.refreshes,
                report.max_acts_in_faw_window,
                used.name(),
                m.spec.name
            );
            for v in &report.violations {
                t.push_str(&format!("line {}: {}: {}\n", v.line, v.rule, v.detail));
            }
            t.push_str(&format!("{} violations\n", report.violations.len()));
            t
        }
    };
    emit(None, &text)?;
    if report.is_clean() {
        Ok(())
    } else {
        Err(Error::TimingViolation(format!("{} violations in {}", report.violations.len(), a.log.display())))
    }
}

//! Memory traces: `<cycle> <R|W> <0xADDRESS>` per line, `#` comments.
//!
//! Cycles are controller clock cycles at 1 GHz. Files ending in `.gz` (or
//! starting with the gzip magic bytes) are decompressed transparently.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OrgSpec;
use crate::sim::AddressMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Read,
    Write,
}

impl Op {
    pub fn letter(self) -> char {
        match self {
            Op::Read => 'R',
            Op::Write => 'W',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub cycle: u64,
    pub op: Op,
    pub address: u64,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {:#x}", self.cycle, self.op.letter(), self.address)
    }
}

fn parse_line(body: &str, line: usize) -> Result<TraceRecord> {
    let bad = |reason: String| Error::TraceParse { line, reason };
    let mut it = body.split_whitespace();
    let (Some(c), Some(o), Some(a), None) = (it.next(), it.next(), it.next(), it.next()) else {
        return Err(bad(format!("expected `<cycle> <R|W> <0xADDRESS>`, got `{body}`")));
    };
    let cycle = c.parse::<u64>().map_err(|_| bad(format!("cycle `{c}` is not a non-negative integer")))?;
    let op = match o {
        "R" | "r" => Op::Read,
        "W" | "w" => Op::Write,
        _ => return Err(bad(format!("op `{o}` is not R or W"))),
    };
    let hex = a
        .strip_prefix("0x")
        .or_else(|| a.strip_prefix("0X"))
        .ok_or_else(|| bad(format!("address `{a}` lacks the 0x prefix")))?;
    let address = u64::from_str_radix(hex, 16).map_err(|_| bad(format!("address `{a}` is not 64-bit hex")))?;
    Ok(TraceRecord { cycle, op, address })
}

/// Streaming parser; stops at the first malformed or out-of-order line.
pub fn parse_trace<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    let mut previous = 0;
    for (i, raw) in input.lines().enumerate() {
        let raw = raw?;
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let rec = parse_line(body, line)?;
        if rec.cycle < previous {
            return Err(Error::OrderViolation { line, cycle: rec.cycle, previous });
        }
        previous = rec.cycle;
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_trace_str(text: &str) -> Result<Vec<TraceRecord>> {
    parse_trace(text.as_bytes())
}

pub fn read_trace_file(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut file = BufReader::new(std::fs::File::open(path)?);
    let gz = file.fill_buf()?.starts_with(&[0x1f, 0x8b]);
    if gz {
        parse_trace(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        let mut text = String::new();
        file.read_to_string(&mut text)?;
        parse_trace_str(&text)
    }
}

pub fn write_trace<W: Write>(mut out: W, trace: &[TraceRecord]) -> Result<()> {
    for r in trace {
        writeln!(out, "{r}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `trace` to `path`, gzip-compressed when the name ends in `.gz`.
pub fn write_trace_file(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    if path.extension().is_some_and(|e| e == "gz") {
        let mut gz = GzEncoder::new(file, Compression::default());
        write_trace(&mut gz, trace)?;
        gz.finish()?.flush()?;
        Ok(())
    } else {
        write_trace(file, trace)
    }
}

pub fn trace_to_string(trace: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace(&mut buf, trace).expect("writing to memory");
    String::from_utf8(buf).expect("trace text is ASCII")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Uniform,
    Stream,
    Conflict,
    Mixed,
}

impl TraceKind {
    pub const ALL: [TraceKind; 4] = [TraceKind::Uniform, TraceKind::Stream, TraceKind::Conflict, TraceKind::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            TraceKind::Uniform => "uniform",
            TraceKind::Stream => "stream",
            TraceKind::Conflict => "conflict",
            TraceKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TraceKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown trace kind `{s}` (uniform, stream, conflict, mixed)")))
    }
}

/// Fraction of reads in a `mixed` trace.
pub const MIXED_READ_FRACTION: f64 = 0.7;
pub const DEFAULT_MEAN_INTERARRIVAL: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Mean gap between requests in cycles. Exponential for `uniform` and
    /// `mixed`, rounded to a fixed interval for `stream` and `conflict`.
    pub mean_interarrival: f64,
    pub read_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { mean_interarrival: DEFAULT_MEAN_INTERARRIVAL, read_fraction: MIXED_READ_FRACTION }
    }
}

/// Deterministic synthetic trace. Addresses are cacheline-aligned and stay
/// inside the organization's capacity.
pub fn generate_trace(
    kind: TraceKind,
    n: usize,
    seed: u64,
    spec: &OrgSpec,
    cfg: &GeneratorConfig,
) -> Result<Vec<TraceRecord>> {
    if n == 0 {
        return Err(Error::InvalidConfig("trace length must be positive".into()));
    }
    if !(cfg.mean_interarrival > 0.0) || !(0.0..=1.0).contains(&cfg.read_fraction) {
        return Err(Error::InvalidConfig(format!("bad generator settings {cfg:?}")));
    }
    let map = AddressMap::for_org(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(1.0 / cfg.mean_interarrival).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let step = cfg.mean_interarrival.round().max(1.0) as u64;
    let lines = map.cachelines();

    let mut out = Vec::with_capacity(n);
    let mut clock = 0.0f64;
    for i in 0..n {
        let (cycle, op, line) = match kind {
            TraceKind::Uniform | TraceKind::Mixed => {
                if i > 0 {
                    clock += exp.sample(&mut rng);
                }
                let op =
                    if kind == TraceKind::Mixed && !rng.random_bool(cfg.read_fraction) { Op::Write } else { Op::Read };
                (clock.floor() as u64, op, rng.random_range(0..lines))
            }
            TraceKind::Stream => (i as u64 * step, Op::Read, i as u64 % lines),
            TraceKind::Conflict => {
                // bank 0, a new row every time
                let row = (i as u64 * 7919) % u64::from(map.rows());
                let col = rng.random_range(0..u64::from(map.columns()));
                (i as u64 * step, Op::Read, map.line_index(0, row as u32, col as u32))
            }
        };
        out.push(TraceRecord { cycle, op, address: line << map.offset_bits() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::decode_address;

    #[test]
    fn parses_single_record() {
        let t = parse_trace_str("0 R 0x0\n").unwrap();
        assert_eq!(t, vec![TraceRecord { cycle: 0, op: Op::Read, address: 0 }]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let t = parse_trace_str("# header\n\n5 W 0x40  # store\n  7 r 0XFF\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].op, Op::Write);
        assert_eq!(t[1].address, 0xff);
    }

    #[test]
    fn bad_op_reports_line() {
        let e = parse_trace_str("0 R 0x0\n5 X 0x10\n").unwrap_err();
        match e {
            Error::TraceParse { line, reason } => {
                assert_eq!(line, 2);
                assert!(reason.contains("op"), "{reason}");
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn malformed_lines() {
        for bad in ["1 R", "1 R 0x1 extra", "-1 R 0x0", "1 R 12", "1 R 0xZZ", "x R 0x0"] {
            assert!(matches!(parse_trace_str(bad), Err(Error::TraceParse { line: 1, .. })), "{bad}");
        }
    }

    #[test]
    fn decreasing_cycles_rejected() {
        let e = parse_trace_str("10 R 0x0\n9 R 0x0\n").unwrap_err();
        assert!(matches!(e, Error::OrderViolation { line: 2, cycle: 9, previous: 10 }));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = OrgSpec::ddr4(512);
        let g = GeneratorConfig::default();
        let a = generate_trace(TraceKind::Uniform, 8, 42, &spec, &g).unwrap();
        let b = generate_trace(TraceKind::Uniform, 8, 42, &spec, &g).unwrap();
        let c = generate_trace(TraceKind::Uniform, 8, 43, &spec, &g).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn conflict_trace_hits_one_bank() {
        let spec = OrgSpec::ddr4(512);
        let t = generate_trace(TraceKind::Conflict, 100, 1, &spec, &GeneratorConfig::default()).unwrap();
        let decoded: Vec<_> = t.iter().map(|r| decode_address(r.address, &spec).unwrap()).collect();
        assert!(decoded.iter().all(|d| d.bank == 0));
        let mut rows: Vec<u32> = decoded.iter().map(|d| d.row).collect();
        rows.sort_unstable();
        rows.dedup();
        assert!(rows.len() > 1);
    }

    #[test]
    fn uniform_spreads_over_banks() {
        let spec = OrgSpec::ddr4(512);
        let n = 80_000;
        let t = generate_trace(TraceKind::Uniform, n, 7, &spec, &GeneratorConfig::default()).unwrap();
        let mut counts = [0usize; 8];
        for r in &t {
            counts[decode_address(r.address, &spec).unwrap().bank as usize] += 1;
        }
        let expect = n as f64 / 8.0;
        for c in counts {
            assert!((c as f64 - expect).abs() / expect < 0.05, "{counts:?}");
        }
        let mean_gap = t.last().unwrap().cycle as f64 / (n - 1) as f64;
        assert!((mean_gap - 10.0).abs() < 0.3, "{mean_gap}");
    }

    #[test]
    fn mixed_read_fraction() {
        let spec = OrgSpec::ddr4(512);
        let t = generate_trace(TraceKind::Mixed, 20_000, 3, &spec, &GeneratorConfig::default()).unwrap();
        let reads = t.iter().filter(|r| r.op == Op::Read).count() as f64 / t.len() as f64;
        assert!((reads - MIXED_READ_FRACTION).abs() < 0.02, "{reads}");
    }

    #[test]
    fn zero_length_rejected() {
        assert!(generate_trace(TraceKind::Stream, 0, 0, &OrgSpec::ddr4(512), &GeneratorConfig::default()).is_err());
    }

    #[test]
    fn gzip_is_transparent() {
        let spec = OrgSpec::m3d(128);
        let t = generate_trace(TraceKind::Mixed, 50, 9, &spec, &GeneratorConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("t.trace");
        let gz = dir.path().join("t.trace.gz");
        write_trace_file(&plain, &t).unwrap();
        write_trace_file(&gz, &t).unwrap();
        assert_eq!(std::fs::read(&gz).unwrap()[..2], [0x1f, 0x8b]);
        assert_eq!(read_trace_file(&plain).unwrap(), t);
        assert_eq!(read_trace_file(&gz).unwrap(), t);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in TraceKind::ALL {
            assert_eq!(k.name().parse::<TraceKind>().unwrap(), k);
        }
        assert!("zipf".parse::<TraceKind>().is_err());
    }
}

//! Reference timing/energy/area table used as the calibration target.
//!
//! Plain text, one organization per line:
//!
//! ```text
//! # name  cells  m3d  t_rcd  t_cas  t_rp  t_rc  t_faw  e_act  e_rw  e_ref  bank_mm2
//! ddr4-512  512  no  6.77  10.29  9.58  26.64  35.8  0.59  1.1  35.22  3.926
//! ```
//!
//! Times are ns, energies nJ, areas mm²; `-` marks a missing value and `#`
//! starts a comment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyParams;
use crate::error::{Error, Result};
use crate::geometry::OrgSpec;
use crate::timing::TimingParams;

/// Bundled copy of the calibration reference.
pub const BUNDLED_REFERENCE: &str = include_str!("../data/reference.ref");

const COLUMNS: usize = 12;

/// One reference row, converted to SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub name: String,
    pub cells_per_local_bitline: u32,
    pub is_m3d: bool,
    pub t_rcd: Option<f64>,
    pub t_cas: Option<f64>,
    pub t_rp: Option<f64>,
    pub t_rc: Option<f64>,
    pub t_faw: Option<f64>,
    pub e_activate: Option<f64>,
    pub e_rw: Option<f64>,
    pub e_refresh: Option<f64>,
    pub bank_area_mm2: Option<f64>,
}

impl ReferenceRow {
    pub fn spec(&self) -> OrgSpec {
        OrgSpec::new(self.name.clone(), self.cells_per_local_bitline, self.is_m3d)
    }

    /// Complete rows carry every circuit and energy target.
    pub fn is_complete(&self) -> bool {
        self.t_rcd.is_some()
            && self.t_rp.is_some()
            && self.t_rc.is_some()
            && self.e_activate.is_some()
            && self.e_rw.is_some()
            && self.e_refresh.is_some()
    }

    /// Timing set taken directly from the row, with tRAS = tRC − tRP.
    /// `None` when any of tRCD, tCAS, tRP, tRC or tFAW is missing.
    pub fn timing_params(&self) -> Option<Result<TimingParams>> {
        let (rcd, cas, rp, rc, faw) = (self.t_rcd?, self.t_cas?, self.t_rp?, self.t_rc?, self.t_faw?);
        Some(TimingParams::new(rcd, cas, rp, rc - rp, faw))
    }

    /// Energy set taken directly from the row; reads and writes share `e_rw`.
    pub fn energy_params(&self, p_background: f64) -> Option<EnergyParams> {
        Some(EnergyParams {
            org: self.name.clone(),
            e_activate: self.e_activate?,
            e_read: self.e_rw?,
            e_write: self.e_rw?,
            e_refresh: self.e_refresh?,
            p_background,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub source: String,
    pub rows: Vec<ReferenceRow>,
}

impl ReferenceTable {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_REFERENCE, Path::new("<bundled reference.ref>")).expect("bundled reference parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| Error::FileFormat { path: PathBuf::from(path), line, reason };
        let mut rows: Vec<ReferenceRow> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let f: Vec<&str> = body.split_whitespace().collect();
            if f.len() != COLUMNS {
                return Err(err(line, format!("expected {COLUMNS} columns, found {}", f.len())));
            }
            let cells: u32 =
                f[1].parse().map_err(|_| err(line, format!("cells per bitline `{}` is not an integer", f[1])))?;
            let is_m3d = match f[2].to_ascii_lowercase().as_str() {
                "yes" | "true" | "m3d" => true,
                "no" | "false" | "2d" => false,
                other => return Err(err(line, format!("m3d column must be yes/no, got `{other}`"))),
            };
            let num = |k: usize, scale: f64, what: &str| -> Result<Option<f64>> {
                if f[k] == "-" {
                    return Ok(None);
                }
                match f[k].parse::<f64>() {
                    Ok(v) if v.is_finite() && v > 0.0 => Ok(Some(v * scale)),
                    _ => Err(err(line, format!("{what} `{}` is not a positive number", f[k]))),
                }
            };
            let row = ReferenceRow {
                name: f[0].to_string(),
                cells_per_local_bitline: cells,
                is_m3d,
                t_rcd: num(3, 1e-9, "t_rcd")?,
                t_cas: num(4, 1e-9, "t_cas")?,
                t_rp: num(5, 1e-9, "t_rp")?,
                t_rc: num(6, 1e-9, "t_rc")?,
                t_faw: num(7, 1e-9, "t_faw")?,
                e_activate: num(8, 1e-9, "e_act")?,
                e_rw: num(9, 1e-9, "e_rw")?,
                e_refresh: num(10, 1e-9, "e_ref")?,
                bank_area_mm2: num(11, 1.0, "bank_mm2")?,
            };
            row.spec().validate().map_err(|e| err(line, e.to_string()))?;
            if rows.iter().any(|r| r.name.eq_ignore_ascii_case(&row.name)) {
                return Err(err(line, format!("duplicate organization `{}`", row.name)));
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(err(0, "no reference rows".into()));
        }
        Ok(Self { source: path.display().to_string(), rows })
    }

    pub fn get(&self, name: &str) -> Option<&ReferenceRow> {
        self.rows.iter().find(|r| r.name.eq_ignore_ascii_case(name))
    }

    /// The table with one organization removed, for held-out checks.
    pub fn without(&self, name: &str) -> Self {
        Self {
            source: format!("{} without {name}", self.source),
            rows: self.rows.iter().filter(|r| !r.name.eq_ignore_ascii_case(name)).cloned().collect(),
        }
    }
}

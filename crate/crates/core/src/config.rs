//! TOML run configuration.
//!
//! ```toml
//! reference = "reference.ref"    # optional; bundled table otherwise
//! calibration = "calibration.json" # optional; bundled fit otherwise
//!
//! [tech]
//! feature_size_nm = 22.0
//! vdd = 1.2
//!
//! [solver]
//! step = 1e-11
//!
//! [[org]]
//! name = "ddr4-512"
//! cells_per_bitline = 512
//! m3d = false
//!
//! [[org]]
//! name = "m3d-128-wide"
//! cells_per_bitline = 128
//! m3d = true
//! [org.dims]
//! residual_strip_height = 30
//! ```
//!
//! Every section is optional. Without `[[org]]` entries the ten built-in
//! organizations are used.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::{BitlineParasitics, SolverConfig};
use crate::error::{Error, Result};
use crate::geometry::{builtin_orgs, OrgSpec, PeripheralDims, TechNode};
use crate::model::ModelContext;
use crate::sim::SimConfig;
use crate::trace::GeneratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrgEntry {
    pub name: String,
    pub cells_per_bitline: u32,
    #[serde(default)]
    pub m3d: bool,
    #[serde(default)]
    pub dims: Option<PeripheralDims>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub reference: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    /// Overrides the calibrated background power, watts.
    pub p_background: Option<f64>,
    pub tech: TechNode,
    pub solver: SolverConfig,
    pub dims: PeripheralDims,
    pub parasitics: BitlineParasitics,
    pub sim: SimConfig,
    pub generator: GeneratorConfig,
    #[serde(rename = "org")]
    pub orgs: Vec<OrgEntry>,
}

/// An organization together with the peripheral dimensions it is built with.
#[derive(Debug, Clone, PartialEq)]
pub struct OrgChoice {
    pub spec: OrgSpec,
    pub dims: PeripheralDims,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::FileFormat {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            reason: e.message().to_string(),
        })?;
        cfg.validate().map_err(|e| Error::FileFormat { path: path.to_path_buf(), line: 0, reason: e.to_string() })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse(&text, path)?.resolved_against(path))
    }

    /// Loads `path` (an empty config when `None`) and applies `key=value`
    /// overrides, where `key` is a dotted TOML path such as `tech.vdd` and
    /// `value` is a TOML literal (bare words are taken as strings).
    pub fn load_with_overrides(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return match path {
                Some(p) => Self::load(p),
                None => Ok(Self::default()),
            };
        }
        let label = path.unwrap_or(Path::new("<command line>"));
        let text = match path {
            Some(p) => std::fs::read_to_string(p)?,
            None => String::new(),
        };
        let bad = |line: usize, reason: String| Error::FileFormat { path: label.to_path_buf(), line, reason };
        let mut table: toml::Table = toml::from_str(&text)
            .map_err(|e| bad(e.span().map_or(0, |s| line_of(&text, s.start)), e.message().to_string()))?;
        for o in overrides {
            let (key, value) =
                o.split_once('=').ok_or_else(|| Error::InvalidConfig(format!("override `{o}` is not key=value")))?;
            let value = parse_value(value.trim());
            let mut parts: Vec<&str> = key.trim().split('.').collect();
            let last = parts
                .pop()
                .filter(|k| !k.is_empty())
                .ok_or_else(|| Error::InvalidConfig(format!("override `{o}` has an empty key")))?;
            let mut t = &mut table;
            for part in parts {
                let entry = t.entry(part).or_insert_with(|| toml::Value::Table(toml::Table::new()));
                t = entry
                    .as_table_mut()
                    .ok_or_else(|| Error::InvalidConfig(format!("override `{o}`: `{part}` is not a table")))?;
            }
            t.insert(last.to_string(), value);
        }
        let cfg: Config = table.try_into().map_err(|e: toml::de::Error| bad(0, e.message().to_string()))?;
        cfg.validate().map_err(|e| bad(0, e.to_string()))?;
        Ok(match path {
            Some(p) => cfg.resolved_against(p),
            None => cfg,
        })
    }

    // relative file references resolve against the config's directory
    fn resolved_against(mut self, path: &Path) -> Self {
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut self.reference, &mut self.calibration].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.tech.validate()?;
        self.solver.validate()?;
        self.dims.validate()?;
        for o in &self.orgs {
            self.choice(o).spec.validate()?;
            if let Some(d) = &o.dims {
                d.validate()?;
            }
        }
        if let Some(p) = self.p_background {
            if !(p >= 0.0) {
                return Err(Error::InvalidConfig(format!("p_background must be non-negative, got {p}")));
            }
        }
        Ok(())
    }

    fn choice(&self, o: &OrgEntry) -> OrgChoice {
        OrgChoice { spec: OrgSpec::new(o.name.clone(), o.cells_per_bitline, o.m3d), dims: o.dims.unwrap_or(self.dims) }
    }

    /// Configured organizations, or the built-in set when none are given.
    pub fn org_choices(&self) -> Vec<OrgChoice> {
        if self.orgs.is_empty() {
            builtin_orgs().into_iter().map(|spec| OrgChoice { spec, dims: self.dims }).collect()
        } else {
            self.orgs.iter().map(|o| self.choice(o)).collect()
        }
    }

    /// Looks `name` up among configured organizations, then built-ins.
    pub fn find_org(&self, name: &str) -> Result<OrgChoice> {
        if let Some(o) = self.orgs.iter().find(|o| o.name.eq_ignore_ascii_case(name)) {
            return Ok(self.choice(o));
        }
        match OrgSpec::builtin(name) {
            Ok(spec) => Ok(OrgChoice { spec, dims: self.dims }),
            Err(Error::UnknownOrg { name, known }) => {
                let mut all: Vec<String> = self.orgs.iter().map(|o| o.name.clone()).collect();
                all.push(known);
                Err(Error::UnknownOrg { name, known: all.join(", ") })
            }
            Err(e) => Err(e),
        }
    }

    pub fn context(&self) -> ModelContext {
        ModelContext { tech: self.tech, dims: self.dims, parasitics: self.parasitics, solver: self.solver }
    }
}

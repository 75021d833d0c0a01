//! Structural geometry of 2D and M3D bank organizations.
//!
//! Lengths are carried as integer multiples of the feature size `F` so that
//! bitline lengths come out exact; areas are converted to mm² only at the
//! end using the technology node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cells-per-local-bitline values the model supports.
pub const SUPPORTED_BITLINE_CELLS: [u32; 5] = [512, 256, 128, 64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TechNode {
    pub feature_size_nm: f64,
    pub vdd: f64,
}

impl Default for TechNode {
    fn default() -> Self {
        Self { feature_size_nm: 22.0, vdd: 1.2 }
    }
}

impl TechNode {
    pub fn validate(&self) -> Result<()> {
        if !(self.feature_size_nm > 0.0) || !(self.vdd > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "feature size and VDD must be positive (got F = {} nm, VDD = {} V)",
                self.feature_size_nm, self.vdd
            )));
        }
        Ok(())
    }

    /// Area of one F² in mm².
    pub fn f2_mm2(&self) -> f64 {
        let f_mm = self.feature_size_nm * 1e-6;
        f_mm * f_mm
    }
}

/// Dimensions of the per-subarray peripheral strips and of a cell, in F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeripheralDims {
    pub sa_height: u64,
    pub sa_pitch: u64,
    pub precharge_height: u64,
    pub write_driver_height: u64,
    /// Strip left in every subarray even when the SA, precharge and write
    /// driver strips move to the bottom tier.
    pub residual_strip_height: u64,
    pub cell_area: u64,
    pub cell_bitline_pitch: u64,
    pub cell_wordline_pitch: u64,
    /// Footprint of one MIV including keep-out, mm².
    pub miv_footprint_mm2: f64,
}

impl Default for PeripheralDims {
    fn default() -> Self {
        Self {
            sa_height: 117,
            sa_pitch: 6,
            precharge_height: 90,
            write_driver_height: 27,
            residual_strip_height: 23,
            cell_area: 6,
            cell_bitline_pitch: 2,
            cell_wordline_pitch: 3,
            miv_footprint_mm2: 1.98e-9,
        }
    }
}

impl PeripheralDims {
    /// Height of the strips an M3D organization moves under the cell array.
    pub fn movable_strip_height(&self) -> u64 {
        self.sa_height + self.precharge_height + self.write_driver_height
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_bitline_pitch == 0 || self.cell_wordline_pitch == 0 {
            return Err(Error::InvalidConfig("cell pitches must be non-zero".into()));
        }
        if self.cell_bitline_pitch * self.cell_wordline_pitch != self.cell_area {
            return Err(Error::InvalidConfig(format!(
                "cell pitches {}F x {}F do not match the {}F² cell area",
                self.cell_bitline_pitch, self.cell_wordline_pitch, self.cell_area
            )));
        }
        if !(self.miv_footprint_mm2 >= 0.0) {
            return Err(Error::InvalidConfig("MIV footprint must be non-negative".into()));
        }
        Ok(())
    }
}

/// Declarative description of one bank organization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrgSpec {
    pub name: String,
    pub cells_per_local_bitline: u32,
    pub is_m3d: bool,
    pub banks: u32,
    pub rows_per_bank: u32,
    pub tiles_per_subarray: u32,
    pub cells_per_local_wordline: u32,
    pub page_size_bits: u32,
}

impl OrgSpec {
    pub fn new(name: impl Into<String>, cells_per_local_bitline: u32, is_m3d: bool) -> Self {
        Self {
            name: name.into(),
            cells_per_local_bitline,
            is_m3d,
            banks: 8,
            rows_per_bank: 65536,
            tiles_per_subarray: 32,
            cells_per_local_wordline: 512,
            page_size_bits: 16384,
        }
    }

    pub fn ddr4(cells: u32) -> Self {
        Self::new(format!("ddr4-{cells}"), cells, false)
    }

    pub fn m3d(cells: u32) -> Self {
        Self::new(format!("m3d-{cells}"), cells, true)
    }

    /// Looks up one of the ten built-in organizations (`ddr4-N`, `m3d-N`).
    pub fn builtin(name: &str) -> Result<Self> {
        builtin_orgs().into_iter().find(|o| o.name.eq_ignore_ascii_case(name)).ok_or_else(|| Error::UnknownOrg {
            name: name.to_string(),
            known: builtin_orgs().iter().map(|o| o.name.as_str()).collect::<Vec<_>>().join(", "),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Error::InvalidOrg { name: self.name.clone(), reason };
        if !SUPPORTED_BITLINE_CELLS.contains(&self.cells_per_local_bitline) {
            return Err(bad(format!(
                "cells per local bitline must be one of {SUPPORTED_BITLINE_CELLS:?}, got {}",
                self.cells_per_local_bitline
            )));
        }
        if !self.rows_per_bank.is_multiple_of(self.cells_per_local_bitline) {
            return Err(bad(format!(
                "{} rows per bank are not divisible by {} cells per bitline",
                self.rows_per_bank, self.cells_per_local_bitline
            )));
        }
        if self.banks == 0 || self.tiles_per_subarray == 0 || self.cells_per_local_wordline == 0 {
            return Err(bad("banks, tiles and wordline cells must be non-zero".into()));
        }
        if self.tiles_per_subarray * self.cells_per_local_wordline != self.page_size_bits {
            return Err(bad(format!(
                "{} tiles x {} cells do not form a {}-bit page",
                self.tiles_per_subarray, self.cells_per_local_wordline, self.page_size_bits
            )));
        }
        Ok(())
    }

    pub fn subarrays_per_bank(&self) -> u64 {
        u64::from(self.rows_per_bank / self.cells_per_local_bitline)
    }

    /// Bitlines opened by one activation (one per column of the page).
    pub fn active_bitlines(&self) -> u64 {
        u64::from(self.tiles_per_subarray) * u64::from(self.cells_per_local_wordline)
    }

    pub fn capacity_bits(&self) -> u64 {
        u64::from(self.banks) * u64::from(self.rows_per_bank) * u64::from(self.page_size_bits)
    }
}

/// DDR4 and M3D variants for every supported bitline length, 2D first.
pub fn builtin_orgs() -> Vec<OrgSpec> {
    let mut orgs: Vec<OrgSpec> = SUPPORTED_BITLINE_CELLS.iter().map(|&c| OrgSpec::ddr4(c)).collect();
    orgs.extend(SUPPORTED_BITLINE_CELLS.iter().map(|&c| OrgSpec::m3d(c)));
    orgs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub org: String,
    pub local_bitline_length_f: u64,
    pub global_bitline_length_f: u64,
    pub subarray_height_f: u64,
    pub subarray_width_f: u64,
    pub bank_height_f: u64,
    pub subarrays_per_bank: u64,
    pub subarray_area_mm2: f64,
    pub bank_area_mm2: f64,
    pub die_area_mm2: f64,
    pub miv_count_per_bank: u64,
    pub miv_area_per_bank_mm2: f64,
    pub cell_density_per_mm2: f64,
}

pub fn local_bitline_length(spec: &OrgSpec, dims: &PeripheralDims) -> u64 {
    u64::from(spec.cells_per_local_bitline) * dims.cell_bitline_pitch
}

/// Cell rows plus the residual strip, plus the SA/precharge/write-driver
/// strips when they are not folded under the array.
pub fn derive_subarray_height(spec: &OrgSpec, dims: &PeripheralDims) -> u64 {
    let strips = if spec.is_m3d { 0 } else { dims.movable_strip_height() };
    local_bitline_length(spec, dims) + dims.residual_strip_height + strips
}

/// The global bitline crosses every subarray but the one it starts in.
pub fn derive_global_bitline_length(spec: &OrgSpec, dims: &PeripheralDims) -> u64 {
    (spec.subarrays_per_bank() - 1) * derive_subarray_height(spec, dims)
}

/// MIVs needed per bank to reach the bottom-tier peripherals.
///
/// Per subarray: one per bitline (to its SA), one per SA I/O (each folded
/// SA serves a bitline pair), one per local wordline per tile, and one
/// control via.
pub fn count_mivs(spec: &OrgSpec) -> u64 {
    if !spec.is_m3d {
        return 0;
    }
    let bitlines = spec.active_bitlines();
    let sa_io = bitlines / 2;
    let wordlines = u64::from(spec.cells_per_local_bitline) * u64::from(spec.tiles_per_subarray);
    (bitlines + sa_io + wordlines + 1) * spec.subarrays_per_bank()
}

pub fn compute_areas(spec: &OrgSpec, dims: &PeripheralDims, tech: &TechNode) -> GeometryReport {
    let f2 = tech.f2_mm2();
    let subarray_height = derive_subarray_height(spec, dims);
    let subarrays = spec.subarrays_per_bank();
    let width = spec.active_bitlines() * dims.cell_wordline_pitch;
    let bank_height = subarrays * subarray_height;

    let subarray_area = (width * subarray_height) as f64 * f2;
    let bank_area = (width * bank_height) as f64 * f2;
    let die_area = f64::from(spec.banks) * bank_area;
    let mivs = count_mivs(spec);

    GeometryReport {
        org: spec.name.clone(),
        local_bitline_length_f: local_bitline_length(spec, dims),
        global_bitline_length_f: derive_global_bitline_length(spec, dims),
        subarray_height_f: subarray_height,
        subarray_width_f: width,
        bank_height_f: bank_height,
        subarrays_per_bank: subarrays,
        subarray_area_mm2: subarray_area,
        bank_area_mm2: bank_area,
        die_area_mm2: die_area,
        miv_count_per_bank: mivs,
        miv_area_per_bank_mm2: mivs as f64 * dims.miv_footprint_mm2,
        cell_density_per_mm2: spec.capacity_bits() as f64 / die_area,
    }
}

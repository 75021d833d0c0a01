use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OrgSpec;

/// Bytes per request (one 64-byte cacheline burst).
pub const LINE_BYTES: u64 = 64;

/// Physical address split `row : bank : column : offset`, most significant
/// first. Bank bits sit below the row bits so consecutive rows' worth of
/// lines rotate across banks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressMap {
    offset_bits: u32,
    column_bits: u32,
    bank_bits: u32,
    row_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DecodedAddress {
    pub bank: u32,
    pub row: u32,
    pub column: u32,
}

fn log2_exact(v: u64, what: &str, spec: &OrgSpec) -> Result<u32> {
    if v == 0 || !v.is_power_of_two() {
        return Err(Error::InvalidOrg {
            name: spec.name.clone(),
            reason: format!("{what} ({v}) must be a power of two for address decoding"),
        });
    }
    Ok(v.trailing_zeros())
}

impl AddressMap {
    pub fn for_org(spec: &OrgSpec) -> Result<Self> {
        let page_bytes = u64::from(spec.page_size_bits) / 8;
        Ok(Self {
            offset_bits: LINE_BYTES.trailing_zeros(),
            column_bits: log2_exact(page_bytes / LINE_BYTES, "cachelines per page", spec)?,
            bank_bits: log2_exact(u64::from(spec.banks), "bank count", spec)?,
            row_bits: log2_exact(u64::from(spec.rows_per_bank), "rows per bank", spec)?,
        })
    }

    pub fn offset_bits(&self) -> u32 {
        self.offset_bits
    }

    pub fn columns(&self) -> u32 {
        1 << self.column_bits
    }

    pub fn rows(&self) -> u32 {
        1 << self.row_bits
    }

    /// Cachelines in the whole device.
    pub fn cachelines(&self) -> u64 {
        1u64 << (self.column_bits + self.bank_bits + self.row_bits)
    }

    pub fn line_index(&self, bank: u32, row: u32, column: u32) -> u64 {
        (u64::from(row) << (self.bank_bits + self.column_bits))
            | (u64::from(bank) << self.column_bits)
            | u64::from(column)
    }

    /// Bits above the device capacity are ignored.
    pub fn decode(&self, addr: u64) -> DecodedAddress {
        let line = addr >> self.offset_bits;
        let mask = |bits: u32| (1u64 << bits) - 1;
        DecodedAddress {
            column: (line & mask(self.column_bits)) as u32,
            bank: ((line >> self.column_bits) & mask(self.bank_bits)) as u32,
            row: ((line >> (self.column_bits + self.bank_bits)) & mask(self.row_bits)) as u32,
        }
    }
}

pub fn decode_address(addr: u64, spec: &OrgSpec) -> Result<DecodedAddress> {
    Ok(AddressMap::for_org(spec)?.decode(addr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_address() {
        let d = decode_address(0, &OrgSpec::ddr4(512)).unwrap();
        assert_eq!(d, DecodedAddress { bank: 0, row: 0, column: 0 });
    }

    #[test]
    fn bank_bits_change_only_bank() {
        let spec = OrgSpec::ddr4(512);
        let m = AddressMap::for_org(&spec).unwrap();
        let a = m.line_index(2, 1234, 5) << m.offset_bits();
        let b = m.line_index(6, 1234, 5) << m.offset_bits();
        let (da, db) = (m.decode(a), m.decode(b));
        assert_eq!((da.row, da.column), (db.row, db.column));
        assert_ne!(da.bank, db.bank);
    }

    #[test]
    fn sequential_lines_balance_banks() {
        let spec = OrgSpec::m3d(128);
        let mut counts = [0u32; 8];
        for line in 0..(1u64 << 16) {
            counts[decode_address(line * LINE_BYTES, &spec).unwrap().bank as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 1 << 13), "{counts:?}");
    }

    #[test]
    fn layout_covers_capacity() {
        let spec = OrgSpec::ddr4(512);
        let m = AddressMap::for_org(&spec).unwrap();
        assert_eq!(m.cachelines() * LINE_BYTES * 8, spec.capacity_bits());
        let top = m.decode((m.cachelines() - 1) * LINE_BYTES);
        assert_eq!((top.bank, top.row, top.column), (7, 65535, 31));
    }

    #[test]
    fn non_power_of_two_banks_rejected() {
        let mut spec = OrgSpec::ddr4(512);
        spec.banks = 6;
        assert!(AddressMap::for_org(&spec).is_err());
    }
}

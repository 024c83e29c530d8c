use std::fmt;

use super::AllocError;
use crate::slab::{BASE_SLAB, EMPTY_ADDRESS, SLAB_BYTES};

pub const UNIT_BITS: u32 = 10;
pub const BLOCK_BITS: u32 = 14;
pub const SUPER_BITS: u32 = 8;

const UNIT_MASK: u32 = (1 << UNIT_BITS) - 1;
const BLOCK_MASK: u32 = (1 << BLOCK_BITS) - 1;

/// Packed 32-bit slab locator: bits `[0,10)` unit, `[10,24)` memory block,
/// `[24,32)` super block. Super block 255 is never addressable, which keeps
/// [`EMPTY_ADDRESS`] and [`BASE_SLAB`] out of the live address space.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SlabAddress(u32);

impl SlabAddress {
    pub fn pack(unit: u32, block: u32, super_block: u32) -> Result<Self, AllocError> {
        if unit > UNIT_MASK || block > BLOCK_MASK || super_block >= super::MAX_SUPER_BLOCKS {
            return Err(AllocError::AddressOutOfRange {
                unit,
                block,
                super_block,
            });
        }
        Ok(SlabAddress(super_block << (UNIT_BITS + BLOCK_BITS) | block << UNIT_BITS | unit))
    }

    /// Wraps a raw word read from an address lane.
    pub fn from_raw(raw: u32) -> Result<Self, AllocError> {
        if is_sentinel(raw) {
            Err(AllocError::Sentinel(raw))
        } else {
            Ok(SlabAddress(raw))
        }
    }

    #[inline]
    pub fn raw(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn unit(self) -> u32 {
        self.0 & UNIT_MASK
    }

    #[inline]
    pub fn block(self) -> u32 {
        (self.0 >> UNIT_BITS) & BLOCK_MASK
    }

    #[inline]
    pub fn super_block(self) -> u32 {
        self.0 >> (UNIT_BITS + BLOCK_BITS)
    }

    /// `(unit, block, super_block)`.
    pub fn unpack(self) -> (u32, u32, u32) {
        (self.unit(), self.block(), self.super_block())
    }

    /// Byte offset of the unit inside its super block.
    pub fn byte_offset(self) -> usize {
        (self.block() as usize * super::UNITS_PER_BLOCK as usize + self.unit() as usize) * SLAB_BYTES
    }
}

/// Decodes a raw address word, rejecting the reserved sentinels.
pub fn unpack_address(raw: u32) -> Result<(u32, u32, u32), AllocError> {
    SlabAddress::from_raw(raw).map(SlabAddress::unpack)
}

#[inline]
pub fn is_sentinel(raw: u32) -> bool {
    raw == EMPTY_ADDRESS || raw == BASE_SLAB
}

impl fmt::Debug for SlabAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SlabAddress({:#010x}: s{} b{} u{})", self.0, self.super_block(), self.block(), self.unit())
    }
}

impl fmt::Display for SlabAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pack_examples() {
        assert_eq!(SlabAddress::pack(0, 0, 0).unwrap().raw(), 0);
        let oracle = (2u32 << 24) | (3 << 10) | 5;
        assert_eq!(SlabAddress::pack(5, 3, 2).unwrap().raw(), oracle);
        assert_eq!(oracle, 0x0200_0C05);
        assert_eq!(unpack_address(0xFFFF_FFFF), Err(AllocError::Sentinel(0xFFFF_FFFF)));
        assert_eq!(unpack_address(0xFFFF_FFFE), Err(AllocError::Sentinel(0xFFFF_FFFE)));
        assert!(SlabAddress::pack(1024, 0, 0).is_err());
        assert!(SlabAddress::pack(0, 1 << 14, 0).is_err());
        assert!(SlabAddress::pack(0, 0, 255).is_err());
    }

    #[test]
    fn byte_offset_example() {
        let addr = SlabAddress::pack(5, 3, 2).unwrap();
        assert_eq!(addr.byte_offset(), (3 * 1024 + 5) * 128);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn codec_round_trip(unit in 0u32..1024, block in 0u32..(1 << 14), sb in 0u32..255) {
            let addr = SlabAddress::pack(unit, block, sb).unwrap();
            prop_assert_eq!(addr.unpack(), (unit, block, sb));
            prop_assert!(!is_sentinel(addr.raw()));
            prop_assert_eq!(unpack_address(addr.raw()).unwrap(), (unit, block, sb));
        }
    }
}

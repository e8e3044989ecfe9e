//! Block structure for QR versions 1 through 10.

use super::EcLevel;

pub const MIN_VERSION: u8 = 1;
pub const MAX_VERSION: u8 = 10;

// indexed [ec.ordinal()][version - 1], ordinal order L, M, Q, H
const ECC_PER_BLOCK: [[u8; 10]; 4] = [
    [7, 10, 15, 20, 26, 18, 20, 24, 30, 18],
    [10, 16, 26, 18, 24, 16, 18, 22, 22, 26],
    [13, 22, 18, 26, 18, 24, 18, 22, 20, 24],
    [17, 28, 22, 16, 22, 28, 26, 26, 24, 28],
];

const NUM_BLOCKS: [[u8; 10]; 4] = [
    [1, 1, 1, 1, 1, 2, 2, 2, 2, 4],
    [1, 1, 1, 2, 2, 4, 4, 4, 5, 5],
    [1, 1, 2, 2, 4, 4, 6, 6, 8, 8],
    [1, 1, 2, 4, 4, 4, 5, 6, 8, 8],
];

const ALIGNMENT_CENTERS: [&[usize]; 10] = [
    &[],
    &[6, 18],
    &[6, 22],
    &[6, 26],
    &[6, 30],
    &[6, 34],
    &[6, 22, 38],
    &[6, 24, 42],
    &[6, 26, 46],
    &[6, 28, 50],
];

pub fn side_for_version(version: u8) -> usize {
    17 + 4 * version as usize
}

pub fn version_for_side(side: usize) -> Option<u8> {
    if side < 21 || (side - 17) % 4 != 0 {
        return None;
    }
    let v = (side - 17) / 4;
    (v <= MAX_VERSION as usize).then_some(v as u8)
}

pub fn alignment_centers(version: u8) -> &'static [usize] {
    ALIGNMENT_CENTERS[version as usize - 1]
}

/// Number of modules available for codewords (data + parity + remainder bits).
pub fn raw_data_modules(version: u8) -> usize {
    let v = version as usize;
    let mut result = (16 * v + 128) * v + 64;
    if v >= 2 {
        let num_align = v / 7 + 2;
        result -= (25 * num_align - 10) * num_align - 55;
        if v >= 7 {
            result -= 36;
        }
    }
    result
}

pub fn total_codewords(version: u8) -> usize {
    raw_data_modules(version) / 8
}

/// How the codewords of one (version, level) pair split into RS blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub ecc_per_block: usize,
    pub num_blocks: usize,
    /// Blocks carrying `short_data_len` data bytes; the rest carry one more.
    pub num_short: usize,
    pub short_data_len: usize,
}

impl BlockLayout {
    pub fn new(version: u8, ec: EcLevel) -> Self {
        let i = ec.ordinal();
        let v = version as usize - 1;
        let ecc_per_block = ECC_PER_BLOCK[i][v] as usize;
        let num_blocks = NUM_BLOCKS[i][v] as usize;
        let total = total_codewords(version);
        let num_short = num_blocks - total % num_blocks;
        let short_data_len = total / num_blocks - ecc_per_block;
        BlockLayout {
            ecc_per_block,
            num_blocks,
            num_short,
            short_data_len,
        }
    }

    pub fn data_len(&self, block: usize) -> usize {
        self.short_data_len + usize::from(block >= self.num_short)
    }

    pub fn total_data(&self) -> usize {
        (0..self.num_blocks).map(|b| self.data_len(b)).sum()
    }
}

pub fn data_codewords(version: u8, ec: EcLevel) -> usize {
    BlockLayout::new(version, ec).total_data()
}

pub fn char_count_bits(version: u8) -> usize {
    if version <= 9 {
        8
    } else {
        16
    }
}

/// Largest byte-mode payload that fits.
pub fn byte_capacity(version: u8, ec: EcLevel) -> usize {
    (data_codewords(version, ec) * 8 - 4 - char_count_bits(version)) / 8
}

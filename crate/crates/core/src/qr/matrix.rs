//! The module grid and everything about where things live on it: function
//! patterns, format and version information, data placement order and masks.

use super::tables::{alignment_centers, side_for_version, version_for_side};
use super::EcLevel;

/// Square grid of QR modules, `true` = dark.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModuleMatrix {
    version: u8,
    side: usize,
    cells: Vec<bool>,
}

impl ModuleMatrix {
    /// All-light grid for `version`.
    pub fn new(version: u8) -> Self {
        let side = side_for_version(version);
        ModuleMatrix {
            version,
            side,
            cells: vec![false; side * side],
        }
    }

    /// Wraps raw row-major cells; the side must correspond to a version in 1..=10.
    pub fn from_cells(side: usize, cells: Vec<bool>) -> Option<Self> {
        let version = version_for_side(side)?;
        (cells.len() == side * side).then_some(ModuleMatrix {
            version,
            side,
            cells,
        })
    }

    pub fn version(&self) -> u8 {
        self.version
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.cells[y * self.side + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, dark: bool) {
        self.cells[y * self.side + x] = dark;
    }

    #[inline]
    pub fn toggle_index(&mut self, idx: usize) {
        self.cells[idx] = !self.cells[idx];
    }

    pub fn dark_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Number of cells that differ. Panics if sides differ.
    pub fn hamming(&self, other: &ModuleMatrix) -> usize {
        assert_eq!(self.side, other.side);
        self.cells
            .iter()
            .zip(&other.cells)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn complement(&self) -> ModuleMatrix {
        ModuleMatrix {
            version: self.version,
            side: self.side,
            cells: self.cells.iter().map(|c| !c).collect(),
        }
    }
}

/// Which cells of a version's grid hold function patterns (finders,
/// separators, timing, alignment, dark module, format and version areas).
pub fn function_map(version: u8) -> Vec<bool> {
    let mut m = ModuleMatrix::new(version);
    let mut reserved = vec![false; m.side * m.side];
    draw_function_patterns(&mut m, &mut reserved);
    reserved
}

/// Draws the fixed patterns of `matrix.version()` and marks every function
/// cell in `reserved`. Format and version areas are reserved but left light.
pub fn draw_function_patterns(matrix: &mut ModuleMatrix, reserved: &mut [bool]) {
    let side = matrix.side;
    let version = matrix.version;
    let mut put = |x: usize, y: usize, dark: bool| {
        matrix.set(x, y, dark);
        reserved[y * side + x] = true;
    };

    for i in 0..side {
        put(6, i, i % 2 == 0);
        put(i, 6, i % 2 == 0);
    }

    for &(cx, cy) in &[(3usize, 3usize), (side - 4, 3), (3, side - 4)] {
        for dy in -4i32..=4 {
            for dx in -4i32..=4 {
                let (x, y) = (cx as i32 + dx, cy as i32 + dy);
                if x < 0 || y < 0 || x >= side as i32 || y >= side as i32 {
                    continue;
                }
                let dist = dx.abs().max(dy.abs());
                put(x as usize, y as usize, dist != 2 && dist != 4);
            }
        }
    }

    let centers = alignment_centers(version);
    let n = centers.len();
    for (i, &cy) in centers.iter().enumerate() {
        for (j, &cx) in centers.iter().enumerate() {
            let on_finder = (i == 0 && j == 0) || (i == 0 && j == n - 1) || (i == n - 1 && j == 0);
            if on_finder {
                continue;
            }
            for dy in -2i32..=2 {
                for dx in -2i32..=2 {
                    let dist = dx.abs().max(dy.abs());
                    put(
                        (cx as i32 + dx) as usize,
                        (cy as i32 + dy) as usize,
                        dist != 1,
                    );
                }
            }
        }
    }

    // format areas, then the always-dark module
    for i in 0..9 {
        if i != 6 {
            put(8, i, false);
            put(i, 8, false);
        }
    }
    for i in 0..8 {
        put(side - 1 - i, 8, false);
        put(8, side - 1 - i, false);
    }
    put(8, side - 8, true);

    if version >= 7 {
        for i in 0..18 {
            let (a, b) = (side - 11 + i % 3, i / 3);
            put(a, b, false);
            put(b, a, false);
        }
    }
}

/// Non-function cells in codeword placement order: two-column strips from
/// the right edge, alternating upward and downward, skipping the timing column.
pub fn placement_order(version: u8) -> Vec<(usize, usize)> {
    let side = side_for_version(version);
    let reserved = function_map(version);
    let mut order = Vec::with_capacity(side * side);
    let mut right = side as i32 - 1;
    while right >= 1 {
        if right == 6 {
            right = 5;
        }
        let upward = (right + 1) & 2 == 0;
        for vert in 0..side {
            for j in 0..2 {
                let x = (right - j) as usize;
                let y = if upward { side - 1 - vert } else { vert };
                if !reserved[y * side + x] {
                    order.push((x, y));
                }
            }
        }
        right -= 2;
    }
    order
}

/// Whether mask pattern `mask` flips the module at column `x`, row `y`.
#[inline]
pub fn mask_bit(mask: u8, x: usize, y: usize) -> bool {
    match mask {
        0 => (x + y) % 2 == 0,
        1 => y % 2 == 0,
        2 => x % 3 == 0,
        3 => (x + y) % 3 == 0,
        4 => (x / 3 + y / 2) % 2 == 0,
        5 => x * y % 2 + x * y % 3 == 0,
        6 => (x * y % 2 + x * y % 3) % 2 == 0,
        7 => ((x + y) % 2 + x * y % 3) % 2 == 0,
        _ => panic!("mask {mask} out of range 0..=7"),
    }
}

/// XORs `mask` over every non-function cell. Applying twice is the identity.
pub fn apply_mask(matrix: &mut ModuleMatrix, reserved: &[bool], mask: u8) {
    let side = matrix.side;
    for y in 0..side {
        for x in 0..side {
            if !reserved[y * side + x] && mask_bit(mask, x, y) {
                matrix.toggle_index(y * side + x);
            }
        }
    }
}

const FORMAT_GENERATOR: u32 = 0x537;
const FORMAT_XOR: u32 = 0x5412;
const VERSION_GENERATOR: u32 = 0x1F25;

/// The 15 BCH(15,5) format bits for (level, mask), already XOR-masked.
pub fn format_bits(ec: EcLevel, mask: u8) -> u16 {
    let data = (ec.format_bits() << 3 | mask as u32) & 0x1F;
    let mut rem = data;
    for _ in 0..10 {
        rem = (rem << 1) ^ ((rem >> 9) * FORMAT_GENERATOR);
    }
    ((data << 10 | (rem & 0x3FF)) ^ FORMAT_XOR) as u16
}

/// The 18-bit BCH(18,6) version word (only written for version >= 7).
pub fn version_bits(version: u8) -> u32 {
    let mut rem = version as u32;
    for _ in 0..12 {
        rem = (rem << 1) ^ ((rem >> 11) * VERSION_GENERATOR);
    }
    (version as u32) << 12 | (rem & 0xFFF)
}

// bit i of the format word, for both copies: (x, y)
fn format_positions(side: usize) -> [[(usize, usize); 15]; 2] {
    let mut first = [(0, 0); 15];
    let mut second = [(0, 0); 15];
    for (i, slot) in first.iter_mut().enumerate() {
        *slot = match i {
            0..=5 => (8, i),
            6 => (8, 7),
            7 => (8, 8),
            8 => (7, 8),
            _ => (14 - i, 8),
        };
    }
    for (i, slot) in second.iter_mut().enumerate() {
        *slot = if i < 8 {
            (side - 1 - i, 8)
        } else {
            (8, side - 15 + i)
        };
    }
    [first, second]
}

pub fn write_format(matrix: &mut ModuleMatrix, bits: u16) {
    for copy in format_positions(matrix.side) {
        for (i, &(x, y)) in copy.iter().enumerate() {
            matrix.set(x, y, bits >> i & 1 == 1);
        }
    }
}

/// Raw 15-bit words read from the two format copies.
pub fn read_format_copies(matrix: &ModuleMatrix) -> [u16; 2] {
    format_positions(matrix.side).map(|copy| {
        copy.iter()
            .enumerate()
            .fold(0u16, |acc, (i, &(x, y))| acc | (matrix.get(x, y) as u16) << i)
    })
}

/// Nearest valid format word over both copies, accepted when within three
/// bit errors and not tied with a different (level, mask).
pub fn decode_format(copies: [u16; 2]) -> Option<(EcLevel, u8)> {
    let mut best: Option<(u32, EcLevel, u8)> = None;
    let mut tied = false;
    for ec in EcLevel::ALL {
        for mask in 0..8u8 {
            let want = format_bits(ec, mask);
            let dist = copies
                .iter()
                .map(|&c| (c ^ want).count_ones())
                .min()
                .unwrap_or(u32::MAX);
            match best {
                Some((d, _, _)) if dist > d => {}
                Some((d, _, _)) if dist == d => tied = true,
                _ => {
                    best = Some((dist, ec, mask));
                    tied = false;
                }
            }
        }
    }
    match best {
        Some((d, ec, mask)) if d <= 3 && !tied => Some((ec, mask)),
        _ => None,
    }
}

pub fn write_version(matrix: &mut ModuleMatrix) {
    if matrix.version < 7 {
        return;
    }
    let bits = version_bits(matrix.version);
    let side = matrix.side;
    for i in 0..18 {
        let dark = bits >> i & 1 == 1;
        let (a, b) = (side - 11 + i % 3, i / 3);
        matrix.set(a, b, dark);
        matrix.set(b, a, dark);
    }
}

use super::matrix::{
    apply_mask, draw_function_patterns, format_bits, placement_order, write_format, write_version,
    ModuleMatrix,
};
use super::tables::{byte_capacity, char_count_bits, BlockLayout, MAX_VERSION, MIN_VERSION};
use super::{EcLevel, QrError};
use crate::raster::Image;
use crate::rs::rs_encode;
use crate::scalar::Scalar;

/// Mask selection: lowest penalty, or a fixed pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mask {
    #[default]
    Auto,
    Fixed(u8),
}

/// What to encode and how.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrSpec {
    pub payload: Vec<u8>,
    pub ec: EcLevel,
    pub mask: Mask,
    /// Forces a version instead of the smallest that fits.
    pub version: Option<u8>,
}

impl QrSpec {
    pub fn new(text: &str, ec: EcLevel) -> Self {
        QrSpec {
            payload: text.as_bytes().to_vec(),
            ec,
            mask: Mask::Auto,
            version: None,
        }
    }

    pub fn with_mask(mut self, mask: u8) -> Self {
        self.mask = Mask::Fixed(mask);
        self
    }

    pub fn with_version(mut self, version: u8) -> Self {
        self.version = Some(version);
        self
    }
}

/// Smallest supported version whose byte-mode capacity holds `payload_len`.
pub fn select_version(payload_len: usize, ec: EcLevel) -> Result<u8, QrError> {
    if payload_len == 0 {
        return Err(QrError::EmptyPayload);
    }
    (MIN_VERSION..=MAX_VERSION)
        .find(|&v| byte_capacity(v, ec) >= payload_len)
        .ok_or(QrError::PayloadTooLarge {
            len: payload_len,
            ec,
            max_version: MAX_VERSION,
        })
}

struct BitBuffer(Vec<bool>);

impl BitBuffer {
    fn push(&mut self, value: u32, bits: usize) {
        for i in (0..bits).rev() {
            self.0.push(value >> i & 1 == 1);
        }
    }
}

/// Byte-mode segment, terminator, bit padding and 0xEC/0x11 pad codewords.
fn data_codewords(payload: &[u8], version: u8, ec: EcLevel) -> Vec<u8> {
    let capacity = BlockLayout::new(version, ec).total_data();
    let mut bits = BitBuffer(Vec::with_capacity(capacity * 8));
    bits.push(0b0100, 4);
    bits.push(payload.len() as u32, char_count_bits(version));
    for &b in payload {
        bits.push(b as u32, 8);
    }
    let terminator = (capacity * 8 - bits.0.len()).min(4);
    bits.push(0, terminator);
    let align = (8 - bits.0.len() % 8) % 8;
    bits.push(0, align);

    let mut bytes: Vec<u8> = bits
        .0
        .chunks(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| acc << 1 | b as u8))
        .collect();
    for pad in [0xECu8, 0x11].into_iter().cycle() {
        if bytes.len() >= capacity {
            break;
        }
        bytes.push(pad);
    }
    bytes
}

/// Splits into RS blocks, appends parity and interleaves.
fn add_ecc_and_interleave(data: &[u8], version: u8, ec: EcLevel) -> Vec<u8> {
    let layout = BlockLayout::new(version, ec);
    let mut blocks = Vec::with_capacity(layout.num_blocks);
    let mut offset = 0;
    for b in 0..layout.num_blocks {
        let len = layout.data_len(b);
        let block = rs_encode(&data[offset..offset + len], layout.ecc_per_block)
            .expect("QR blocks are non-empty and shorter than 255");
        blocks.push(block);
        offset += len;
    }
    let mut out = Vec::with_capacity(data.len() + layout.num_blocks * layout.ecc_per_block);
    for i in 0..=layout.short_data_len {
        for block in &blocks {
            if i < block.data.len() {
                out.push(block.data[i]);
            }
        }
    }
    for i in 0..layout.ecc_per_block {
        for block in &blocks {
            out.push(block.parity[i]);
        }
    }
    out
}

/// Builds the symbol: function patterns, codewords in zigzag order, mask
/// (AUTO picks the lowest penalty, first on ties), format and version info.
pub fn encode_matrix(spec: &QrSpec) -> Result<ModuleMatrix, QrError> {
    let version = match spec.version {
        None => select_version(spec.payload.len(), spec.ec)?,
        Some(v) if !(MIN_VERSION..=MAX_VERSION).contains(&v) => return Err(QrError::InvalidVersion(v)),
        Some(v) => {
            if spec.payload.is_empty() {
                return Err(QrError::EmptyPayload);
            }
            if byte_capacity(v, spec.ec) < spec.payload.len() {
                return Err(QrError::PayloadTooLarge {
                    len: spec.payload.len(),
                    ec: spec.ec,
                    max_version: v,
                });
            }
            v
        }
    };
    if let Mask::Fixed(m) = spec.mask {
        if m > 7 {
            return Err(QrError::InvalidMask(m));
        }
    }

    let data = data_codewords(&spec.payload, version, spec.ec);
    let codewords = add_ecc_and_interleave(&data, version, spec.ec);

    let mut base = ModuleMatrix::new(version);
    let mut reserved = vec![false; base.side() * base.side()];
    draw_function_patterns(&mut base, &mut reserved);
    for (i, (x, y)) in placement_order(version).into_iter().enumerate() {
        let dark = codewords
            .get(i / 8)
            .is_some_and(|&byte| byte >> (7 - i % 8) & 1 == 1);
        base.set(x, y, dark);
    }
    write_version(&mut base);

    let with_mask = |mask: u8| {
        let mut m = base.clone();
        apply_mask(&mut m, &reserved, mask);
        write_format(&mut m, format_bits(spec.ec, mask));
        m
    };

    Ok(match spec.mask {
        Mask::Fixed(mask) => with_mask(mask),
        Mask::Auto => (0..8u8)
            .map(with_mask)
            .min_by_key(penalty_score)
            .expect("eight masks to choose from"),
    })
}

const PENALTY_N1: u32 = 3;
const PENALTY_N2: u32 = 3;
const PENALTY_N3: u32 = 40;
const PENALTY_N4: u32 = 10;

/// Run and finder-like penalties of one row or column.
fn line_penalty(line: &[bool]) -> u32 {
    const CORE: [bool; 7] = [true, false, true, true, true, false, true];
    let side = line.len();
    let mut score = 0;
    let mut run = 1;
    for j in 1..=side {
        if j < side && line[j] == line[j - 1] {
            run += 1;
        } else {
            if run >= 5 {
                score += PENALTY_N1 + (run - 5) as u32;
            }
            run = 1;
        }
    }
    let light = |j: isize| j < 0 || j as usize >= side || !line[j as usize];
    for start in 0..=(side - 7) {
        if line[start..start + 7] != CORE {
            continue;
        }
        let s = start as isize;
        if (1..=4).all(|d| light(s - d)) {
            score += PENALTY_N3;
        }
        if (7..11).all(|d| light(s + d)) {
            score += PENALTY_N3;
        }
    }
    score
}

/// Sum of the four mask-evaluation penalties: long runs, 2x2 blocks,
/// finder-like 1:1:3:1:1 patterns with four light modules on a side, and
/// dark/light imbalance. Modules beyond the edge count as light.
pub fn penalty_score(m: &ModuleMatrix) -> u32 {
    let side = m.side();
    let cells = m.cells();
    let mut score = 0;

    let mut column = vec![false; side];
    for idx in 0..side {
        score += line_penalty(&cells[idx * side..(idx + 1) * side]);
        for (j, c) in column.iter_mut().enumerate() {
            *c = cells[j * side + idx];
        }
        score += line_penalty(&column);
    }

    let rows = cells.chunks_exact(side);
    for (upper, lower) in rows.clone().zip(rows.skip(1)) {
        for x in 0..side - 1 {
            let c = upper[x];
            if c == upper[x + 1] && c == lower[x] && c == lower[x + 1] {
                score += PENALTY_N2;
            }
        }
    }

    let total = (side * side) as i64;
    let dark = m.dark_count() as i64;
    let k = (20 * dark - 10 * total).unsigned_abs() / total as u64;
    score + k as u32 * PENALTY_N4
}

/// Paints modules as 0.0 (dark) / 1.0 (light) with `scale` pixels per module
/// and a light border of `quiet` modules.
pub fn render<T: Scalar>(matrix: &ModuleMatrix, scale: usize, quiet: usize) -> Image<T> {
    assert!(scale >= 1, "scale must be at least 1");
    let side = matrix.side();
    let px = (side + 2 * quiet) * scale;
    Image::from_fn(px, px, |x, y| {
        let (mx, my) = (x / scale, y / scale);
        let inside = (quiet..quiet + side).contains(&mx) && (quiet..quiet + side).contains(&my);
        if inside && matrix.get(mx - quiet, my - quiet) {
            T::zero()
        } else {
            T::one()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qr::matrix::{decode_format, read_format_copies};

    #[test]
    fn version_selection_boundaries() {
        assert_eq!(select_version(7, EcLevel::L), Ok(1));
        assert_eq!(select_version(17, EcLevel::L), Ok(1));
        assert_eq!(select_version(18, EcLevel::L), Ok(2));
        assert!(matches!(
            select_version(3000, EcLevel::H),
            Err(QrError::PayloadTooLarge { .. })
        ));
        assert_eq!(select_version(0, EcLevel::L), Err(QrError::EmptyPayload));
    }

    #[test]
    fn pads_alternate() {
        let cw = data_codewords(b"A", 1, EcLevel::H);
        assert_eq!(cw.len(), 9);
        // 0100 00000001 01000001 0000 -> 0x40 0x14 0x10, then pads
        assert_eq!(&cw[..5], &[0x40, 0x14, 0x10, 0xEC, 0x11]);
    }

    #[test]
    fn encoding_is_deterministic() {
        let spec = QrSpec::new("approuvé/JOHN/SMITH/01/01/1980", EcLevel::Q);
        assert_eq!(encode_matrix(&spec).unwrap(), encode_matrix(&spec).unwrap());
    }

    #[test]
    fn format_info_reads_back() {
        for ec in EcLevel::ALL {
            for mask in 0..8 {
                let m = encode_matrix(&QrSpec::new("format check", ec).with_mask(mask)).unwrap();
                assert_eq!(decode_format(read_format_copies(&m)), Some((ec, mask)));
            }
            let auto = encode_matrix(&QrSpec::new("format check", ec)).unwrap();
            assert_eq!(decode_format(read_format_copies(&auto)).map(|f| f.0), Some(ec));
        }
    }

    #[test]
    fn auto_mask_has_minimal_penalty() {
        let spec = QrSpec::new("https://facebook/someone123", EcLevel::M);
        let auto = encode_matrix(&spec).unwrap();
        let best = (0..8)
            .map(|m| penalty_score(&encode_matrix(&spec.clone().with_mask(m)).unwrap()))
            .min()
            .unwrap();
        assert_eq!(penalty_score(&auto), best);
    }

    #[test]
    fn known_symbol_hello_world() {
        // "Hello, world!" at level L with mask 0 as produced by reference generators:
        // check the first row of the symbol (finder, separator, data, finder).
        let m = encode_matrix(&QrSpec::new("Hello, world!", EcLevel::L).with_mask(0)).unwrap();
        assert_eq!(m.version(), 1);
        let row0: String = (0..21).map(|x| if m.get(x, 0) { '#' } else { '.' }).collect();
        assert!(row0.starts_with("#######."));
        assert!(row0.ends_with(".#######"));
        let timing: String = (8..13).map(|x| if m.get(x, 6) { '#' } else { '.' }).collect();
        assert_eq!(timing, "#.#.#");
    }

    #[test]
    fn forced_version_and_errors() {
        let m = encode_matrix(&QrSpec::new("hi", EcLevel::H).with_version(7)).unwrap();
        assert_eq!(m.side(), 45);
        assert!(matches!(
            encode_matrix(&QrSpec::new(&"x".repeat(20), EcLevel::H).with_version(1)),
            Err(QrError::PayloadTooLarge { .. })
        ));
        assert_eq!(
            encode_matrix(&QrSpec::new("x", EcLevel::H).with_version(11)),
            Err(QrError::InvalidVersion(11))
        );
        assert_eq!(
            encode_matrix(&QrSpec::new("x", EcLevel::H).with_mask(8)),
            Err(QrError::InvalidMask(8))
        );
    }

    #[test]
    fn render_sizes_and_values() {
        let m = encode_matrix(&QrSpec::new("abc", EcLevel::L)).unwrap();
        let img: Image<f64> = render(&m, 1, 0);
        assert_eq!(img.dims(), (21, 21));
        assert!(img.is_binary());
        assert_eq!(img.get(0, 0), 0.0);
        let big: Image<f64> = render(&m, 8, 4);
        assert_eq!(big.dims(), (232, 232));
        assert!(big.is_binary());
        assert_eq!(big.get(0, 0), 1.0);
        assert_eq!(big.get(32, 32), 0.0);
    }
}

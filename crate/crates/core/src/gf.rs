//! Arithmetic in GF(2^8) modulo the QR primitive polynomial x^8+x^4+x^3+x^2+1.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};
use std::sync::OnceLock;

/// Reduction polynomial, including the x^8 term.
pub const PRIMITIVE_POLY: u16 = 0x11D;

struct Tables {
    // exp is doubled so that exp[log a + log b] never needs a modulo
    exp: [u8; 512],
    log: [u8; 256],
}

fn tables() -> &'static Tables {
    static TABLES: OnceLock<Tables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut exp = [0u8; 512];
        let mut log = [0u8; 256];
        let mut x: u16 = 1;
        for i in 0..255 {
            exp[i] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= PRIMITIVE_POLY;
            }
        }
        for i in 255..512 {
            exp[i] = exp[i - 255];
        }
        Tables { exp, log }
    })
}

/// An element of GF(256).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct GfElement(pub u8);

impl GfElement {
    pub const ZERO: Self = GfElement(0);
    pub const ONE: Self = GfElement(1);

    /// alpha^power, where alpha = 2 generates the multiplicative group.
    pub fn alpha_pow(power: usize) -> Self {
        GfElement(tables().exp[power % 255])
    }

    /// Discrete log base alpha. `None` for zero.
    pub fn log(self) -> Option<usize> {
        (self.0 != 0).then(|| tables().log[self.0 as usize] as usize)
    }

    /// Multiplicative inverse. Panics on zero.
    pub fn inv(self) -> Self {
        assert!(self.0 != 0, "zero has no inverse in GF(256)");
        let t = tables();
        GfElement(t.exp[255 - t.log[self.0 as usize] as usize])
    }

    pub fn pow(self, e: usize) -> Self {
        if e == 0 {
            return Self::ONE;
        }
        match self.log() {
            None => Self::ZERO,
            Some(l) => Self::alpha_pow(l * e % 255),
        }
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Debug for GfElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gf({:#04x})", self.0)
    }
}

impl From<u8> for GfElement {
    fn from(v: u8) -> Self {
        GfElement(v)
    }
}

impl From<GfElement> for u8 {
    fn from(v: GfElement) -> Self {
        v.0
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Add for GfElement {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        GfElement(self.0 ^ rhs.0)
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Sub for GfElement {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        GfElement(self.0 ^ rhs.0)
    }
}

impl AddAssign for GfElement {
    fn add_assign(&mut self, rhs: Self) {
        self.0 ^= rhs.0;
    }
}

impl Mul for GfElement {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        GfElement(mul(self.0, rhs.0))
    }
}

impl MulAssign for GfElement {
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl Div for GfElement {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        assert!(rhs.0 != 0, "division by zero in GF(256)");
        if self.0 == 0 {
            return Self::ZERO;
        }
        let t = tables();
        let l = t.log[self.0 as usize] as usize + 255 - t.log[rhs.0 as usize] as usize;
        GfElement(t.exp[l])
    }
}

/// Table-driven product of two field elements given as raw bytes.
#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    let t = tables();
    t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Carry-less multiply followed by bitwise reduction; no tables involved.
    fn shift_xor_mul(a: u8, b: u8) -> u8 {
        let mut acc: u16 = 0;
        for i in 0..8 {
            if b >> i & 1 == 1 {
                acc ^= (a as u16) << i;
            }
        }
        for bit in (8..16).rev() {
            if acc >> bit & 1 == 1 {
                acc ^= PRIMITIVE_POLY << (bit - 8);
            }
        }
        acc as u8
    }

    #[test]
    fn trivial_products() {
        assert_eq!(mul(0, 77), 0);
        assert_eq!(mul(1, 77), 77);
        // x * x^7 = x^8 = x^4+x^3+x^2+1
        assert_eq!(mul(2, 128), 0x1D);
        assert_eq!(shift_xor_mul(2, 128), 0x1D);
    }

    #[test]
    fn table_matches_shift_xor_for_all_pairs() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), shift_xor_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn log_antilog_roundtrip() {
        for a in 1..=255u8 {
            let e = GfElement(a);
            assert_eq!(GfElement::alpha_pow(e.log().unwrap()), e);
            assert_eq!(e * e.inv(), GfElement::ONE);
            assert_eq!(e / e, GfElement::ONE);
        }
        assert_eq!(GfElement::ZERO.log(), None);
    }

    proptest! {
        #[test]
        fn field_axioms(a: u8, b: u8, c: u8) {
            let (a, b, c) = (GfElement(a), GfElement(b), GfElement(c));
            prop_assert_eq!(a * b, b * a);
            prop_assert_eq!((a * b) * c, a * (b * c));
            prop_assert_eq!(a * (b + c), a * b + a * c);
        }

        #[test]
        fn pow_matches_repeated_mul(a: u8, e in 0usize..600) {
            let a = GfElement(a);
            let mut acc = GfElement::ONE;
            for _ in 0..e {
                acc *= a;
            }
            prop_assert_eq!(a.pow(e), acc);
        }
    }
}

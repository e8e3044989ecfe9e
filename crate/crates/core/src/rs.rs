//! Reed-Solomon coding over GF(256) with the QR conventions: generator roots
//! alpha^0 .. alpha^(ecc_len-1), codeword bytes ordered highest degree first.
//!
//! Decoding is syndrome based: Berlekamp-Massey for the error locator, Chien
//! search for its roots and Forney's formula for the magnitudes. Erasures are
//! not supported.

use crate::gf::GfElement;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RsError {
    #[error("block has more errors than the code can correct")]
    UncorrectableBlock,
    #[error("block length {0} exceeds 255 symbols")]
    BlockTooLong(usize),
    #[error("cannot add parity to empty data")]
    EmptyData,
}

/// A systematic codeword: the message followed by its parity symbols.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsBlock {
    pub data: Vec<u8>,
    pub parity: Vec<u8>,
}

impl RsBlock {
    /// Splits a received codeword whose last `ecc_len` bytes are parity.
    pub fn from_codeword(codeword: &[u8], ecc_len: usize) -> Self {
        let split = codeword.len().saturating_sub(ecc_len);
        RsBlock {
            data: codeword[..split].to_vec(),
            parity: codeword[split..].to_vec(),
        }
    }

    pub fn ecc_len(&self) -> usize {
        self.parity.len()
    }

    /// Number of symbol errors the block can always correct.
    pub fn capacity(&self) -> usize {
        self.parity.len() / 2
    }

    pub fn len(&self) -> usize {
        self.data.len() + self.parity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn codeword(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.data);
        out.extend_from_slice(&self.parity);
        out
    }
}

/// Generator polynomial prod_{i<ecc_len} (x - alpha^i), highest degree first,
/// leading coefficient 1 included.
pub fn generator_poly(ecc_len: usize) -> Vec<GfElement> {
    let mut g = vec![GfElement::ONE];
    for i in 0..ecc_len {
        let root = GfElement::alpha_pow(i);
        let mut next = vec![GfElement::ZERO; g.len() + 1];
        for (j, &c) in g.iter().enumerate() {
            next[j] += c;
            next[j + 1] += c * root;
        }
        g = next;
    }
    g
}

/// Computes `ecc_len` parity bytes for `data`.
pub fn rs_encode(data: &[u8], ecc_len: usize) -> Result<RsBlock, RsError> {
    if ecc_len == 0 {
        return Ok(RsBlock {
            data: data.to_vec(),
            parity: Vec::new(),
        });
    }
    if data.is_empty() {
        return Err(RsError::EmptyData);
    }
    if data.len() + ecc_len > 255 {
        return Err(RsError::BlockTooLong(data.len() + ecc_len));
    }
    let gen = generator_poly(ecc_len);
    // LFSR form of the division by the monic generator
    let mut rem = vec![GfElement::ZERO; ecc_len];
    for &b in data {
        let factor = GfElement(b) + rem[0];
        rem.rotate_left(1);
        rem[ecc_len - 1] = GfElement::ZERO;
        for (r, &g) in rem.iter_mut().zip(&gen[1..]) {
            *r += g * factor;
        }
    }
    Ok(RsBlock {
        data: data.to_vec(),
        parity: rem.into_iter().map(u8::from).collect(),
    })
}

/// Syndromes S_j = c(alpha^j) for j in 0..ecc_len.
pub fn syndromes(codeword: &[u8], ecc_len: usize) -> Vec<GfElement> {
    (0..ecc_len)
        .map(|j| {
            let x = GfElement::alpha_pow(j);
            codeword
                .iter()
                .fold(GfElement::ZERO, |acc, &c| acc * x + GfElement(c))
        })
        .collect()
}

/// Berlekamp-Massey. Returns the error locator, lowest degree first, with
/// Lambda(0) = 1.
fn berlekamp_massey(synd: &[GfElement]) -> Vec<GfElement> {
    let mut lambda = vec![GfElement::ONE];
    let mut prev = vec![GfElement::ONE];
    let mut len = 0usize;
    let mut shift = 1usize;
    let mut prev_disc = GfElement::ONE;

    for n in 0..synd.len() {
        let mut disc = synd[n];
        for i in 1..=len.min(lambda.len() - 1) {
            disc += lambda[i] * synd[n - i];
        }
        if disc.is_zero() {
            shift += 1;
            continue;
        }
        let coef = disc / prev_disc;
        let mut updated = lambda.clone();
        if updated.len() < prev.len() + shift {
            updated.resize(prev.len() + shift, GfElement::ZERO);
        }
        for (i, &p) in prev.iter().enumerate() {
            updated[i + shift] += coef * p;
        }
        if 2 * len <= n {
            prev = std::mem::replace(&mut lambda, updated);
            len = n + 1 - len;
            prev_disc = disc;
            shift = 1;
        } else {
            lambda = updated;
            shift += 1;
        }
    }
    while lambda.len() > 1 && lambda.last().is_some_and(|c| c.is_zero()) {
        lambda.pop();
    }
    lambda
}

fn eval_low_first(poly: &[GfElement], x: GfElement) -> GfElement {
    poly.iter()
        .rev()
        .fold(GfElement::ZERO, |acc, &c| acc * x + c)
}

/// Corrects up to `ecc_len / 2` symbol errors in place and returns the data
/// part together with the number of corrected positions.
pub fn rs_decode(block: &RsBlock) -> Result<(Vec<u8>, usize), RsError> {
    let n = block.len();
    if n > 255 {
        return Err(RsError::BlockTooLong(n));
    }
    let ecc_len = block.ecc_len();
    let mut codeword = block.codeword();
    let synd = syndromes(&codeword, ecc_len);
    if synd.iter().all(|s| s.is_zero()) {
        return Ok((block.data.clone(), 0));
    }

    let lambda = berlekamp_massey(&synd);
    let degree = lambda.len() - 1;
    if degree == 0 || 2 * degree > ecc_len {
        return Err(RsError::UncorrectableBlock);
    }

    // Chien search: byte i carries exponent n-1-i, so its locator is alpha^(n-1-i).
    let mut positions = Vec::with_capacity(degree);
    for i in 0..n {
        let locator = GfElement::alpha_pow(n - 1 - i);
        if eval_low_first(&lambda, locator.inv()).is_zero() {
            positions.push(i);
        }
    }
    if positions.len() != degree {
        return Err(RsError::UncorrectableBlock);
    }

    // Omega = S * Lambda mod x^ecc_len
    let mut omega = vec![GfElement::ZERO; ecc_len];
    for (i, &s) in synd.iter().enumerate() {
        for (j, &l) in lambda.iter().enumerate() {
            if i + j < ecc_len {
                omega[i + j] += s * l;
            }
        }
    }
    // formal derivative: only odd powers survive in characteristic 2
    let lambda_prime: Vec<GfElement> = lambda
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| if k % 2 == 1 { c } else { GfElement::ZERO })
        .collect();

    for &i in &positions {
        let locator = GfElement::alpha_pow(n - 1 - i);
        let inv = locator.inv();
        let denom = eval_low_first(&lambda_prime, inv);
        if denom.is_zero() {
            return Err(RsError::UncorrectableBlock);
        }
        let magnitude = locator * eval_low_first(&omega, inv) / denom;
        codeword[i] ^= magnitude.0;
    }

    if syndromes(&codeword, ecc_len).iter().any(|s| !s.is_zero()) {
        return Err(RsError::UncorrectableBlock);
    }
    codeword.truncate(block.data.len());
    Ok((codeword, positions.len()))
}

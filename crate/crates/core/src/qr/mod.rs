//! QR Model 2 symbols, versions 1 to 10, byte mode only.

mod decode;
mod encode;
mod finder;
pub mod matrix;
pub mod tables;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decode::{decode_image, decode_matrix, detect_constant, sample_grid, DecodeFailure, DecodeResult};
pub use encode::{encode_matrix, penalty_score, render, select_version, Mask, QrSpec};
pub use finder::{locate_finders, FinderCenter, FinderTriple};
pub use matrix::ModuleMatrix;

/// Error-correction level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EcLevel {
    L,
    M,
    Q,
    H,
}

impl EcLevel {
    pub const ALL: [EcLevel; 4] = [EcLevel::L, EcLevel::M, EcLevel::Q, EcLevel::H];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    /// Nominal fraction of codewords that can be restored.
    pub fn nominal_recovery(self) -> f64 {
        match self {
            EcLevel::L => 0.07,
            EcLevel::M => 0.15,
            EcLevel::Q => 0.25,
            EcLevel::H => 0.30,
        }
    }

    /// Two-bit code stored in the format information.
    pub fn format_bits(self) -> u32 {
        match self {
            EcLevel::L => 1,
            EcLevel::M => 0,
            EcLevel::Q => 3,
            EcLevel::H => 2,
        }
    }
}

impl fmt::Display for EcLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EcLevel::L => "L",
            EcLevel::M => "M",
            EcLevel::Q => "Q",
            EcLevel::H => "H",
        };
        f.write_str(s)
    }
}

impl FromStr for EcLevel {
    type Err = QrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L" => Ok(EcLevel::L),
            "M" => Ok(EcLevel::M),
            "Q" => Ok(EcLevel::Q),
            "H" => Ok(EcLevel::H),
            _ => Err(QrError::UnknownLevel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QrError {
    #[error("payload of {len} bytes does not fit at level {ec} (version {max_version} or below)")]
    PayloadTooLarge {
        len: usize,
        ec: EcLevel,
        max_version: u8,
    },
    #[error("payload must not be empty")]
    EmptyPayload,
    #[error("version {0} outside supported range 1..=10")]
    InvalidVersion(u8),
    #[error("mask {0} outside 0..=7")]
    InvalidMask(u8),
    #[error("unknown error-correction level {0:?}")]
    UnknownLevel(String),
}

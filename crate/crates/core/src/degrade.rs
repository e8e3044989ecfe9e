//! The four noise models. Each is a pure function of (input, parameters, seed).
//!
//! Module inversion works on the module grid itself (one module per pixel,
//! no quiet zone). The three document-style models work on rendered images:
//! a random Gaussian-smoothed displacement field (ink spread), a per-column
//! vertical displacement (paper curl) and spatially varying foreground and
//! background luminance (lighting defects).

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qr::ModuleMatrix;
use crate::raster::{blur_1d, blur_field, warp, DisplacementField, Image};
use crate::scalar::Scalar;

/// Default amplitude of the random displacement field, in pixels.
pub const DEFAULT_MAXDELTA: f64 = 5.0;
/// Smoothing applied along the ruled-surface displacement profile, in pixels.
pub const RULED_SMOOTHING: f64 = 20.0;
/// Smoothing scales summed by the luminance fields of fg/bg selection.
pub const FGBG_SCALES: [f64; 3] = [4.0, 16.0, 64.0];
pub const FG_BAND: (f64, f64) = (0.05, 0.45);
pub const BG_BAND: (f64, f64) = (0.55, 0.95);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DegradeError {
    #[error("fg/bg selection needs a binary image; pixel {index} is {value}")]
    NonBinaryInput { index: usize, value: f64 },
    #[error("invalid noise parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse noise spec {0:?}")]
    Parse(String),
}

/// One degradation and its parameters. Serialized as `inversion:p=12`,
/// `rdist:sigma=5,maxdelta=5`, `ruled:mag=20` or `fgbg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Noise {
    Inversion { percent: f64 },
    RandomDistortion { sigma: f64, maxdelta: f64 },
    RuledSurface { mag: f64 },
    FgBgSelection,
}

impl Noise {
    pub fn inversion(percent: f64) -> Self {
        Noise::Inversion { percent }
    }

    pub fn rdist(sigma: f64) -> Self {
        Noise::RandomDistortion {
            sigma,
            maxdelta: DEFAULT_MAXDELTA,
        }
    }

    pub fn ruled(mag: f64) -> Self {
        Noise::RuledSurface { mag }
    }

    /// Short family name: `inversion`, `rdist`, `ruled` or `fgbg`.
    pub fn family(&self) -> &'static str {
        match self {
            Noise::Inversion { .. } => "inversion",
            Noise::RandomDistortion { .. } => "rdist",
            Noise::RuledSurface { .. } => "ruled",
            Noise::FgBgSelection => "fgbg",
        }
    }

    /// Whether the model operates on the module grid rather than on pixels.
    pub fn is_module_level(&self) -> bool {
        matches!(self, Noise::Inversion { .. })
    }

    pub fn validate(&self) -> Result<(), DegradeError> {
        let bad = |m: String| Err(DegradeError::InvalidParameter(m));
        match *self {
            Noise::Inversion { percent } if !(0.0..=100.0).contains(&percent) => {
                bad(format!("percent {percent} outside [0, 100]"))
            }
            Noise::RandomDistortion { sigma, .. } if !(sigma > 0.0) => bad(format!("sigma {sigma} must be positive")),
            Noise::RandomDistortion { maxdelta, .. } if !(maxdelta >= 0.0) => {
                bad(format!("maxdelta {maxdelta} must be non-negative"))
            }
            Noise::RuledSurface { mag } if !(mag >= 0.0) => bad(format!("mag {mag} must be non-negative")),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Noise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Noise::Inversion { percent } => write!(f, "inversion:p={percent}"),
            Noise::RandomDistortion { sigma, maxdelta } => write!(f, "rdist:sigma={sigma},maxdelta={maxdelta}"),
            Noise::RuledSurface { mag } => write!(f, "ruled:mag={mag}"),
            Noise::FgBgSelection => f.write_str("fgbg"),
        }
    }
}

impl FromStr for Noise {
    type Err = DegradeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || DegradeError::Parse(s.to_string());
        let (kind, params) = s.trim().split_once(':').unwrap_or((s.trim(), ""));
        let mut values = std::collections::BTreeMap::new();
        for pair in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(err)?;
            let v: f64 = v.trim().parse().map_err(|_| err())?;
            values.insert(k.trim().to_string(), v);
        }
        let mut take = |key: &str| values.remove(key);
        let noise = match kind {
            "inversion" => Noise::Inversion {
                percent: take("p").ok_or_else(err)?,
            },
            "rdist" => Noise::RandomDistortion {
                sigma: take("sigma").ok_or_else(err)?,
                maxdelta: take("maxdelta").unwrap_or(DEFAULT_MAXDELTA),
            },
            "ruled" => Noise::RuledSurface {
                mag: take("mag").ok_or_else(err)?,
            },
            "fgbg" => Noise::FgBgSelection,
            _ => return Err(err()),
        };
        if !values.is_empty() {
            return Err(err());
        }
        noise.validate()?;
        Ok(noise)
    }
}

impl TryFrom<String> for Noise {
    type Error = DegradeError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Noise> for String {
    fn from(n: Noise) -> String {
        n.to_string()
    }
}

/// A noise model bound to its seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub noise: Noise,
    pub seed: u64,
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Complements exactly round(percent/100 * side^2) distinct modules chosen
/// uniformly over the whole grid, finder patterns included.
pub fn invert_modules(matrix: &ModuleMatrix, percent: f64, seed: u64) -> ModuleMatrix {
    assert!((0.0..=100.0).contains(&percent), "percent {percent} outside [0, 100]");
    let cells = matrix.side() * matrix.side();
    let budget = inversion_budget(matrix.side(), percent);
    let mut out = matrix.clone();
    // rand's index::sample is a partial Fisher-Yates for small budgets and
    // always returns exactly `budget` distinct indices
    for idx in index::sample(&mut rng(seed), cells, budget) {
        out.toggle_index(idx);
    }
    out
}

pub fn inversion_budget(side: usize, percent: f64) -> usize {
    (percent / 100.0 * (side * side) as f64).round() as usize
}

fn normalized_noise_field<T: Scalar>(rng: &mut ChaCha8Rng, width: usize, height: usize, sigma: f64) -> Vec<T> {
    let white: Vec<T> = (0..width * height)
        .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut field = blur_field(&white, width, height, sigma);
    normalize_max_abs(&mut field);
    field
}

fn normalize_max_abs<T: Scalar>(values: &mut [T]) {
    let peak = values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if peak > T::zero() {
        for v in values.iter_mut() {
            *v /= peak;
        }
    }
}

/// Two independent smoothed white-noise grids, each scaled so its largest
/// magnitude is exactly `maxdelta`.
pub fn random_displacement_field<T: Scalar>(
    width: usize,
    height: usize,
    sigma: f64,
    maxdelta: f64,
    seed: u64,
) -> DisplacementField<T> {
    let mut rng = rng(seed);
    let scale = T::of(maxdelta);
    let dx = normalized_noise_field::<T>(&mut rng, width, height, sigma);
    let dy = normalized_noise_field::<T>(&mut rng, width, height, sigma);
    DisplacementField {
        width,
        height,
        dx: dx.into_iter().map(|v| v * scale).collect(),
        dy: dy.into_iter().map(|v| v * scale).collect(),
    }
}

/// Ink-spread style distortion: warp along a random smooth displacement field.
pub fn random_distortion<T: Scalar>(img: &Image<T>, sigma: f64, maxdelta: f64, seed: u64) -> Image<T> {
    assert!(sigma > 0.0 && maxdelta >= 0.0, "sigma must be > 0 and maxdelta >= 0");
    let field = random_displacement_field(img.width(), img.height(), sigma, maxdelta, seed);
    warp(img, &field).expect("field built with the image dimensions")
}

/// Vertical displacement per column: smoothed noise along x, peak `mag`.
pub fn ruled_profile<T: Scalar>(width: usize, mag: f64, seed: u64) -> Vec<T> {
    let mut rng = rng(seed);
    let white: Vec<T> = (0..width)
        .map(|_| T::of(rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let mut profile = blur_1d(&white, RULED_SMOOTHING);
    normalize_max_abs(&mut profile);
    let m = T::of(mag);
    profile.into_iter().map(|v| v * m).collect()
}

/// Paper-curl style distortion: every column moves vertically by its own amount.
pub fn ruled_surface<T: Scalar>(img: &Image<T>, mag: f64, seed: u64) -> Image<T> {
    assert!(mag >= 0.0, "mag must be non-negative");
    let (w, h) = img.dims();
    let profile = ruled_profile::<T>(w, mag, seed);
    let mut field = DisplacementField::zeros(w, h);
    for y in 0..h {
        field.dy[y * w..(y + 1) * w].copy_from_slice(&profile);
    }
    warp(img, &field).expect("field built with the image dimensions")
}

/// Sum of smoothed white-noise grids at several scales.
fn multiscale_field<T: Scalar>(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<T> {
    let mut total = vec![T::zero(); width * height];
    for &scale in &FGBG_SCALES {
        let layer = normalized_noise_field::<T>(rng, width, height, scale);
        for (t, l) in total.iter_mut().zip(layer) {
            *t += l;
        }
    }
    total
}

/// Rescales `field` so that, over the pixels where `use_px` holds, it spans
/// exactly `[lo, hi]`.
fn fit_band<T: Scalar>(field: &mut [T], use_px: impl Fn(usize) -> bool, (lo, hi): (f64, f64)) {
    let (mut min, mut max) = (T::infinity(), T::neg_infinity());
    for (i, &v) in field.iter().enumerate() {
        if use_px(i) {
            min = min.min(v);
            max = max.max(v);
        }
    }
    let range = max - min;
    let (lo, span) = (T::of(lo), T::of(hi - lo));
    for v in field.iter_mut() {
        let unit = if range > T::zero() { (*v - min) / range } else { T::of(0.5) };
        *v = (lo + span * unit).max(lo).min(lo + span);
    }
}

/// Lighting defects: dark pixels take a luminance field spanning
/// [0.05, 0.45], light pixels another spanning [0.55, 0.95].
pub fn fgbg_selection<T: Scalar>(img: &Image<T>, seed: u64) -> Result<Image<T>, DegradeError> {
    let px = img.pixels();
    if let Some((index, &value)) = px.iter().enumerate().find(|(_, &v)| v != T::zero() && v != T::one()) {
        return Err(DegradeError::NonBinaryInput {
            index,
            value: value.as_f64(),
        });
    }
    let (w, h) = img.dims();
    let mut rng = rng(seed);
    let mut fg = multiscale_field::<T>(&mut rng, w, h);
    let mut bg = multiscale_field::<T>(&mut rng, w, h);
    fit_band(&mut fg, |i| px[i] == T::zero(), FG_BAND);
    fit_band(&mut bg, |i| px[i] == T::one(), BG_BAND);
    let pixels = px
        .iter()
        .enumerate()
        .map(|(i, &v)| if v == T::zero() { fg[i] } else { bg[i] })
        .collect();
    Ok(Image::from_pixels(w, h, pixels).expect("same dimensions"))
}

/// Applies an image-level model. Inversion must go through [`invert_modules`].
pub fn degrade_image<T: Scalar>(img: &Image<T>, spec: &NoiseSpec) -> Result<Image<T>, DegradeError> {
    spec.noise.validate()?;
    match spec.noise {
        Noise::Inversion { .. } => Err(DegradeError::InvalidParameter(
            "inversion acts on the module grid, not on pixels".into(),
        )),
        Noise::RandomDistortion { sigma, maxdelta } => Ok(random_distortion(img, sigma, maxdelta, spec.seed)),
        Noise::RuledSurface { mag } => Ok(ruled_surface(img, mag, spec.seed)),
        Noise::FgBgSelection => fgbg_selection(img, spec.seed),
    }
}

/// Inversion on an image whose pixels are modules (scale 1, no quiet zone):
/// thresholds at 0.5, flips the budgeted pixels and returns a binary image.
pub fn invert_pixels<T: Scalar>(img: &Image<T>, percent: f64, seed: u64) -> Image<T> {
    assert!((0.0..=100.0).contains(&percent), "percent {percent} outside [0, 100]");
    let (w, h) = img.dims();
    let budget = (percent / 100.0 * (w * h) as f64).round() as usize;
    let mut px: Vec<T> = img
        .pixels()
        .iter()
        .map(|&v| if v < T::of(0.5) { T::zero() } else { T::one() })
        .collect();
    for idx in index::sample(&mut rng(seed), w * h, budget) {
        px[idx] = T::one() - px[idx];
    }
    Image::from_pixels(w, h, px).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qr::{encode_matrix, render, EcLevel, QrSpec};
    use crate::raster::{binarize, otsu_threshold};

    type Img = Image<f64>;

    fn qr(text: &str, ec: EcLevel) -> ModuleMatrix {
        encode_matrix(&QrSpec::new(text, ec)).unwrap()
    }

    #[test]
    fn inversion_extremes() {
        let m = qr("approuvé/ANNA/LEE/02/03/1990", EcLevel::Q);
        assert_eq!(invert_modules(&m, 0.0, 7), m);
        assert_eq!(invert_modules(&m, 100.0, 7), m.complement());
    }

    #[test]
    fn inversion_touches_exact_budget() {
        let m = encode_matrix(&QrSpec::new("version four", EcLevel::H).with_version(4)).unwrap();
        assert_eq!(m.side(), 33);
        let out = invert_modules(&m, 10.0, 42);
        assert_eq!(m.hamming(&out), 109);
        for p in [1.0, 6.0, 33.3, 50.0, 99.0] {
            let n = invert_modules(&m, p, 3).hamming(&m);
            assert_eq!(n, inversion_budget(33, p));
        }
    }

    #[test]
    fn inversion_depends_on_seed() {
        let m = qr("seed check", EcLevel::L);
        assert_eq!(invert_modules(&m, 20.0, 1), invert_modules(&m, 20.0, 1));
        assert_ne!(invert_modules(&m, 20.0, 1), invert_modules(&m, 20.0, 2));
    }

    #[test]
    fn invert_pixels_matches_module_inversion_at_scale_one() {
        let m = qr("pixels are modules", EcLevel::M);
        let img: Img = render(&m, 1, 0);
        let a = invert_pixels(&img, 15.0, 9);
        let b: Img = render(&invert_modules(&m, 15.0, 9), 1, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn rdist_zero_amplitude_is_identity() {
        let img: Img = render(&qr("rdist", EcLevel::L), 4, 2);
        assert_eq!(random_distortion(&img, 5.0, 0.0, 11), img);
    }

    #[test]
    fn rdist_field_peaks_at_maxdelta() {
        for sigma in [2.0, 5.0, 20.0] {
            let f = random_displacement_field::<f64>(80, 60, sigma, 5.0, 3);
            let (mx, my) = f.max_abs();
            assert!((mx - 5.0).abs() < 1e-9 && (my - 5.0).abs() < 1e-9);
            assert!(f.is_finite());
        }
    }

    #[test]
    fn realistic_models_are_deterministic_and_seeded() {
        let img: Img = render(&qr("determinism", EcLevel::H), 4, 2);
        let a = random_distortion(&img, 5.0, 5.0, 1);
        assert_eq!(a, random_distortion(&img, 5.0, 5.0, 1));
        assert_ne!(a, random_distortion(&img, 5.0, 5.0, 2));
        let r = ruled_surface(&img, 10.0, 1);
        assert_eq!(r, ruled_surface(&img, 10.0, 1));
        assert_ne!(r, ruled_surface(&img, 10.0, 2));
        let f = fgbg_selection(&img, 1).unwrap();
        assert_eq!(f, fgbg_selection(&img, 1).unwrap());
        assert_ne!(f, fgbg_selection(&img, 2).unwrap());
        for out in [a, r, f] {
            assert!(out.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn ruled_zero_mag_is_identity() {
        let img: Img = render(&qr("ruled", EcLevel::L), 3, 1);
        assert_eq!(ruled_surface(&img, 0.0, 4), img);
    }

    /// Linear interpolation of one column at a fractional offset, edge clamped.
    fn shifted_column(col: &[f64], shift: f64) -> Vec<f64> {
        let n = col.len() as f64;
        (0..col.len())
            .map(|y| {
                let p = (y as f64 + shift).clamp(0.0, n - 1.0);
                let i = p.floor() as usize;
                let j = (i + 1).min(col.len() - 1);
                col[i] + (col[j] - col[i]) * (p - i as f64)
            })
            .collect()
    }

    #[test]
    fn ruled_moves_each_column_vertically_only() {
        let (w, h) = (48usize, 120usize);
        // horizontal stripes, with column-dependent contrast so any horizontal
        // mixing would show up
        let img = Img::from_fn(w, h, |x, y| {
            let stripe = if (y / 6) % 2 == 0 { 0.9 } else { 0.1 };
            stripe * (0.6 + 0.4 * (x % 2) as f64)
        });
        let out = ruled_surface(&img, 10.0, 77);
        let mut shifts = Vec::new();
        for x in 0..w {
            let col: Vec<f64> = (0..h).map(|y| img.get(x, y)).collect();
            let got: Vec<f64> = (0..h).map(|y| out.get(x, y)).collect();
            // exhaustive search over candidate shifts for the best correlation
            let mut best = (f64::INFINITY, 0.0);
            for step in -1200..=1200 {
                let s = step as f64 / 100.0;
                let cand = shifted_column(&col, s);
                let sse: f64 = cand.iter().zip(&got).map(|(a, b)| (a - b).powi(2)).sum();
                if sse < best.0 {
                    best = (sse, s);
                }
            }
            // a pure shift leaves only the quantization of the search grid
            assert!(best.0 < 0.05, "column {x}: residual {}", best.0);
            shifts.push(best.1);
        }
        let peak = shifts.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!(peak > 9.5 && peak <= 10.01, "peak shift {peak}");
    }

    #[test]
    fn fgbg_bands_separate_and_otsu_recovers() {
        for (i, text) in ["approuvé/A/B/01/01/2000", "invalide/LONGER/NAMES/31/12/1921", "x"]
            .iter()
            .enumerate()
        {
            let img: Img = render(&qr(text, EcLevel::ALL[i]), 8, 4);
            let out = fgbg_selection(&img, i as u64).unwrap();
            for (a, b) in img.pixels().iter().zip(out.pixels()) {
                if *a == 0.0 {
                    assert!(*b < 0.5 && *b >= 0.05 - 1e-12);
                } else {
                    assert!(*b > 0.5 && *b <= 0.95 + 1e-12);
                }
            }
            let t = otsu_threshold(&out).unwrap();
            assert!(t > 0.45 && t < 0.55, "threshold {t}");
            assert_eq!(binarize(&out, t), img);
        }
    }

    #[test]
    fn fgbg_rejects_gray_input() {
        let img = Img::new(8, 8, 0.5);
        assert!(matches!(fgbg_selection(&img, 0), Err(DegradeError::NonBinaryInput { .. })));
    }

    #[test]
    fn noise_spec_text_form() {
        let cases = [
            ("inversion:p=12", Noise::inversion(12.0)),
            ("rdist:sigma=5,maxdelta=5", Noise::rdist(5.0)),
            ("ruled:mag=20", Noise::ruled(20.0)),
            ("fgbg", Noise::FgBgSelection),
        ];
        for (text, noise) in cases {
            assert_eq!(text.parse::<Noise>().unwrap(), noise);
            assert_eq!(noise.to_string(), text);
        }
        assert_eq!("rdist:sigma=2".parse::<Noise>().unwrap(), Noise::rdist(2.0));
        for bad in ["inversion:p=120", "rdist:sigma=0", "ruled", "blur:s=2", "ruled:mag=3,x=1", "inversion:p=abc"] {
            assert!(bad.parse::<Noise>().is_err(), "{bad}");
        }
        let json = serde_json::to_string(&NoiseSpec { noise: Noise::ruled(50.0), seed: 9 }).unwrap();
        assert_eq!(json, r#"{"noise":"ruled:mag=50","seed":9}"#);
    }
}

//! Grayscale images with intensities in [0, 1] and the classical operations
//! the degradation models and the decoder are built from.
//!
//! Edges are clamped everywhere: a sample outside the image reads the
//! nearest edge pixel.

use std::io::{self, BufRead, Write};
use std::path::Path;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("histogram has a single occupied bin; no threshold separates it")]
    DegenerateHistogram,
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("malformed PGM: {0}")]
    BadPgm(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major grayscale image; 0 is black, 1 is white.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Image {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    /// Wraps row-major pixels, clamping them into [0, 1].
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<T>) -> Result<Self, RasterError> {
        if pixels.len() != width * height {
            return Err(RasterError::DimensionMismatch {
                expected: (width, height),
                got: (pixels.len(), 1),
            });
        }
        let mut img = Image {
            width,
            height,
            pixels,
        };
        img.clamp();
        Ok(img)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(clamp_unit(f(x, y)));
            }
        }
        Image {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.pixels[y * self.width + x] = clamp_unit(v);
    }

    /// Edge-clamped read at integer coordinates that may lie outside.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> T {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[y * self.width + x]
    }

    /// Bilinear sample at continuous pixel coordinates (pixel centers on integers).
    pub fn sample_bilinear(&self, x: T, y: T) -> T {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let xi = x0.to_isize().unwrap_or(0);
        let yi = y0.to_isize().unwrap_or(0);
        let p00 = self.get_clamped(xi, yi);
        let p10 = self.get_clamped(xi + 1, yi);
        let p01 = self.get_clamped(xi, yi + 1);
        let p11 = self.get_clamped(xi + 1, yi + 1);
        let one = T::one();
        let top = p00 * (one - fx) + p10 * fx;
        let bottom = p01 * (one - fx) + p11 * fx;
        top * (one - fy) + bottom * fy
    }

    pub fn mean(&self) -> T {
        if self.pixels.is_empty() {
            return T::zero();
        }
        self.pixels.iter().copied().sum::<T>() / T::of(self.pixels.len() as f64)
    }

    /// True when every pixel is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.pixels
            .iter()
            .all(|&v| v == T::zero() || v == T::one())
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| clamp_unit(f(v))).collect(),
        }
    }

    pub fn convert<U: Scalar>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&v| U::of(v.as_f64())).collect(),
        }
    }

    fn clamp(&mut self) {
        for v in &mut self.pixels {
            *v = clamp_unit(*v);
        }
    }
}

#[inline]
fn clamp_unit<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        return T::zero();
    }
    v.max(T::zero()).min(T::one())
}

/// Normalized samples of a Gaussian with radius ceil(3 sigma).
pub fn gaussian_kernel<T: Scalar>(sigma: f64) -> Vec<T> {
    if sigma <= 0.0 {
        return vec![T::one()];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| T::of(w / total)).collect()
}

/// Edge-clamped 1-D Gaussian smoothing of a sequence. Values are not clamped.
pub fn blur_1d<T: Scalar>(values: &[T], sigma: f64) -> Vec<T> {
    if sigma <= 0.0 || values.is_empty() {
        return values.to_vec();
    }
    let kernel = gaussian_kernel::<T>(sigma);
    let r = (kernel.len() / 2) as isize;
    let last = values.len() as isize - 1;
    (0..values.len() as isize)
        .map(|i| {
            kernel
                .iter()
                .enumerate()
                .map(|(k, &w)| w * values[(i + k as isize - r).clamp(0, last) as usize])
                .sum()
        })
        .collect()
}

/// Separable Gaussian blur of an unconstrained real field (no [0,1] clamp).
pub fn blur_field<T: Scalar>(values: &[T], width: usize, height: usize, sigma: f64) -> Vec<T> {
    assert_eq!(values.len(), width * height);
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let mut rows = Vec::with_capacity(values.len());
    for row in values.chunks(width) {
        rows.extend(blur_1d(row, sigma));
    }
    let mut out = rows.clone();
    let mut column = vec![T::zero(); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = rows[y * width + x];
        }
        for (y, v) in blur_1d(&column, sigma).into_iter().enumerate() {
            out[y * width + x] = v;
        }
    }
    out
}

/// Separable Gaussian blur, kernel radius ceil(3 sigma); `sigma = 0` returns a copy.
pub fn gaussian_blur<T: Scalar>(img: &Image<T>, sigma: f64) -> Image<T> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let pixels = blur_field(&img.pixels, img.width, img.height, sigma);
    let mut out = Image {
        width: img.width,
        height: img.height,
        pixels,
    };
    out.clamp();
    out
}

/// Per-pixel displacement in pixels: output(x, y) samples input(x + dx, y + dy).
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField<T> {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<T>,
    pub dy: Vec<T>,
}

impl<T: Scalar> DisplacementField<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        DisplacementField {
            width,
            height,
            dx: vec![T::zero(); width * height],
            dy: vec![T::zero(); width * height],
        }
    }

    pub fn constant(width: usize, height: usize, dx: T, dy: T) -> Self {
        DisplacementField {
            width,
            height,
            dx: vec![dx; width * height],
            dy: vec![dy; width * height],
        }
    }

    pub fn max_abs(&self) -> (T, T) {
        let m = |v: &[T]| v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()));
        (m(&self.dx), m(&self.dy))
    }

    pub fn is_finite(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|v| v.is_finite())
    }
}

/// Bilinear resampling of `img` along `field`.
pub fn warp<T: Scalar>(img: &Image<T>, field: &DisplacementField<T>) -> Result<Image<T>, RasterError> {
    if (field.width, field.height) != img.dims() {
        return Err(RasterError::DimensionMismatch {
            expected: img.dims(),
            got: (field.width, field.height),
        });
    }
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for y in 0..img.height {
        for x in 0..img.width {
            let i = y * img.width + x;
            let sx = T::of(x as f64) + field.dx[i];
            let sy = T::of(y as f64) + field.dy[i];
            pixels.push(clamp_unit(img.sample_bilinear(sx, sy)));
        }
    }
    Ok(Image {
        width: img.width,
        height: img.height,
        pixels,
    })
}

/// 256-bin histogram with bin = round(v * 255).
pub fn histogram<T: Scalar>(img: &Image<T>) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in &img.pixels {
        hist[quantize(v) as usize] += 1;
    }
    hist
}

#[inline]
fn quantize<T: Scalar>(v: T) -> u8 {
    (clamp_unit(v).as_f64() * 255.0).round() as u8
}

/// Otsu's threshold: the histogram split maximizing between-class variance.
///
/// When several splits tie (an empty gap between two populations), the
/// middle of the tied run is taken. The returned value sits halfway between
/// bins, so `v <= t` exactly selects the lower class.
pub fn otsu_threshold<T: Scalar>(img: &Image<T>) -> Result<T, RasterError> {
    let hist = histogram(img);
    let bin = otsu_bin(&hist)?;
    Ok(T::of((bin as f64 + 0.5) / 255.0))
}

/// The last bin of the dark class chosen by Otsu's method.
pub fn otsu_bin(hist: &[u64; 256]) -> Result<usize, RasterError> {
    let total: u64 = hist.iter().sum();
    if hist.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(RasterError::DegenerateHistogram);
    }
    let total_f = total as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();

    let mut variances = [f64::NEG_INFINITY; 256];
    let mut weight_low = 0.0;
    let mut sum_low = 0.0;
    for (k, &count) in hist.iter().enumerate().take(255) {
        weight_low += count as f64;
        sum_low += k as f64 * count as f64;
        let weight_high = total_f - weight_low;
        if weight_low == 0.0 || weight_high == 0.0 {
            continue;
        }
        let mean_low = sum_low / weight_low;
        let mean_high = (sum_all - sum_low) / weight_high;
        let diff = mean_low - mean_high;
        variances[k] = weight_low * weight_high * diff * diff / (total_f * total_f);
    }
    Ok(plateau_center(&variances))
}

/// Middle index of the first run of maximal values.
fn plateau_center(values: &[f64; 256]) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = best.abs() * 1e-12;
    let first = values.iter().position(|&v| v >= best - tol).unwrap_or(0);
    let mut last = first;
    while last + 1 < values.len() && values[last + 1] >= best - tol {
        last += 1;
    }
    (first + last) / 2
}

/// Maps `v <= threshold` to 0 and everything else to 1.
pub fn binarize<T: Scalar>(img: &Image<T>, threshold: T) -> Image<T> {
    img.map(|v| if v <= threshold { T::zero() } else { T::one() })
}

/// Bilinear resize with pixel centers aligned; identity when the size is unchanged.
pub fn resize<T: Scalar>(img: &Image<T>, new_w: usize, new_h: usize) -> Image<T> {
    assert!(new_w >= 1 && new_h >= 1, "resize targets must be positive");
    if (new_w, new_h) == img.dims() {
        return img.clone();
    }
    let sx = img.width as f64 / new_w as f64;
    let sy = img.height as f64 / new_h as f64;
    Image::from_fn(new_w, new_h, |x, y| {
        let fx = (x as f64 + 0.5) * sx - 0.5;
        let fy = (y as f64 + 0.5) * sy - 0.5;
        img.sample_bilinear(T::of(fx), T::of(fy))
    })
}

/// Nearest-neighbour resize; never introduces new intensity values.
pub fn resize_nearest<T: Scalar>(img: &Image<T>, new_w: usize, new_h: usize) -> Image<T> {
    assert!(new_w >= 1 && new_h >= 1, "resize targets must be positive");
    if (new_w, new_h) == img.dims() {
        return img.clone();
    }
    let mut pixels = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let src_y = ((y * img.height) / new_h).min(img.height - 1);
        for x in 0..new_w {
            let src_x = ((x * img.width) / new_w).min(img.width - 1);
            pixels.push(img.pixels[src_y * img.width + src_x]);
        }
    }
    Image {
        width: new_w,
        height: new_h,
        pixels,
    }
}

/// Writes binary PGM (P5, maxval 255) with byte = round(v * 255).
pub fn write_pgm<T: Scalar, W: Write>(img: &Image<T>, mut out: W) -> io::Result<()> {
    write!(out, "P5\n{} {}\n255\n", img.width, img.height)?;
    let bytes: Vec<u8> = img.pixels.iter().map(|&v| quantize(v)).collect();
    out.write_all(&bytes)?;
    out.flush()
}

pub fn save_pgm<T: Scalar>(img: &Image<T>, path: impl AsRef<Path>) -> Result<(), RasterError> {
    let file = std::fs::File::create(path)?;
    write_pgm(img, io::BufWriter::new(file))?;
    Ok(())
}

/// Reads binary PGM (P5, maxval 255) with v = byte / 255.
pub fn read_pgm<T: Scalar, R: BufRead>(mut input: R) -> Result<Image<T>, RasterError> {
    let mut fields = Vec::with_capacity(4);
    let mut token = String::new();
    while fields.len() < 4 {
        let mut byte = [0u8; 1];
        if input.read(&mut byte)? == 0 {
            return Err(RasterError::BadPgm("truncated header".into()));
        }
        let c = byte[0];
        if c == b'#' && token.is_empty() {
            let mut comment = Vec::new();
            input.read_until(b'\n', &mut comment)?;
        } else if c.is_ascii_whitespace() {
            if !token.is_empty() {
                fields.push(std::mem::take(&mut token));
            }
        } else {
            token.push(c as char);
        }
    }
    if fields[0] != "P5" {
        return Err(RasterError::BadPgm(format!("magic {:?}, expected P5", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| RasterError::BadPgm(format!("bad number {s:?}")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(RasterError::BadPgm(format!("maxval {maxval}, only 255 supported")));
    }
    let mut bytes = vec![0u8; width * height];
    input.read_exact(&mut bytes)?;
    let pixels = bytes.iter().map(|&b| T::of(b as f64 / 255.0)).collect();
    Ok(Image {
        width,
        height,
        pixels,
    })
}

pub fn load_pgm<T: Scalar>(path: impl AsRef<Path>) -> Result<Image<T>, RasterError> {
    let file = std::fs::File::open(path)?;
    read_pgm(io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Img = Image<f64>;

    fn checkerboard(w: usize, h: usize, cell: usize) -> Img {
        Img::from_fn(w, h, |x, y| ((x / cell + y / cell) % 2) as f64)
    }

    #[test]
    fn blur_sigma_zero_is_identity() {
        let img = checkerboard(9, 7, 2);
        assert_eq!(gaussian_blur(&img, 0.0), img);
    }

    #[test]
    fn blur_preserves_constant() {
        let img = Img::new(15, 11, 0.37);
        let out = gaussian_blur(&img, 2.5);
        assert!(out.pixels().iter().all(|v| (v - 0.37).abs() < 1e-9));
    }

    #[test]
    fn blur_impulse_matches_direct_2d_convolution() {
        let (w, h, sigma) = (31usize, 31usize, 2.0);
        let mut img = Img::new(w, h, 0.0);
        img.set(15, 15, 1.0);
        let out = gaussian_blur(&img, sigma);
        // direct non-separable convolution with a 2-D kernel built from exp() only
        let r = (3.0 * sigma).ceil() as isize;
        let mut k2 = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                k2.push(((-(dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
            }
        }
        let norm: f64 = k2.iter().sum();
        let side = (2 * r + 1) as usize;
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let wgt = k2[((dy + r) as usize) * side + (dx + r) as usize] / norm;
                        acc += wgt * img.get_clamped(x + dx, y + dy);
                    }
                }
                assert!((out.get(x as usize, y as usize) - acc).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn blur_preserves_mean_of_interior_dominated_image() {
        let mut img = Img::new(64, 64, 0.5);
        for y in 20..44 {
            for x in 24..40 {
                img.set(x, y, 0.9);
            }
        }
        let out = gaussian_blur(&img, 1.5);
        assert!((out.mean() - img.mean()).abs() < 1e-6);
    }

    #[test]
    fn warp_zero_field_is_identity() {
        let img = checkerboard(12, 9, 3);
        assert_eq!(warp(&img, &DisplacementField::zeros(12, 9)).unwrap(), img);
    }

    #[test]
    fn warp_unit_shift_duplicates_edge_column() {
        let img = Img::from_fn(6, 4, |x, y| (x * 4 + y) as f64 / 30.0);
        let out = warp(&img, &DisplacementField::constant(6, 4, 1.0, 0.0)).unwrap();
        for y in 0..4 {
            for x in 0..5 {
                assert!((out.get(x, y) - img.get(x + 1, y)).abs() < 1e-12);
            }
            assert_eq!(out.get(5, y), img.get(5, y));
        }
    }

    #[test]
    fn warp_matches_scalar_bilinear_oracle() {
        let (w, h) = (20, 16);
        let img = checkerboard(w, h, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let noise2: Vec<f64> = (0..w * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let field = DisplacementField {
            width: w,
            height: h,
            dx: blur_field(&noise, w, h, 2.0).iter().map(|v| v * 6.0).collect(),
            dy: blur_field(&noise2, w, h, 2.0).iter().map(|v| v * 6.0).collect(),
        };
        let out = warp(&img, &field).unwrap();
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let px = (x as f64 + field.dx[i]).clamp(0.0, (w - 1) as f64);
                let py = (y as f64 + field.dy[i]).clamp(0.0, (h - 1) as f64);
                let (x0, y0) = (px.floor() as usize, py.floor() as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                let (fx, fy) = (px - x0 as f64, py - y0 as f64);
                let want = img.get(x0, y0) * (1.0 - fx) * (1.0 - fy)
                    + img.get(x1, y0) * fx * (1.0 - fy)
                    + img.get(x0, y1) * (1.0 - fx) * fy
                    + img.get(x1, y1) * fx * fy;
                assert!((out.get(x, y) - want).abs() < 1e-9, "({x},{y})");
            }
        }
    }

    #[test]
    fn otsu_separates_bimodal_image() {
        let img = Img::from_fn(10, 10, |x, _| if x < 7 { 0.2 } else { 0.8 });
        let t = otsu_threshold(&img).unwrap();
        assert!(t > 0.2 && t < 0.8);
        let bin = binarize(&img, t);
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(bin.get(x, y), if x < 7 { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn otsu_rejects_constant_image() {
        assert!(matches!(
            otsu_threshold(&Img::new(4, 4, 0.3)),
            Err(RasterError::DegenerateHistogram)
        ));
    }

    /// Between-class variance from explicit class member lists, for every split.
    fn brute_force_otsu(values: &[u8]) -> usize {
        let mut scores = [f64::NEG_INFINITY; 256];
        for (k, score) in scores.iter_mut().enumerate().take(255) {
            let low: Vec<f64> = values.iter().filter(|&&v| v as usize <= k).map(|&v| v as f64).collect();
            let high: Vec<f64> = values.iter().filter(|&&v| v as usize > k).map(|&v| v as f64).collect();
            if low.is_empty() || high.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let m0 = low.iter().sum::<f64>() / low.len() as f64;
            let m1 = high.iter().sum::<f64>() / high.len() as f64;
            let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
            *score = (low.len() as f64 * (m0 - mean).powi(2) + high.len() as f64 * (m1 - mean).powi(2)) / n;
        }
        plateau_center(&scores)
    }

    #[test]
    fn otsu_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let n = 400;
            let values: Vec<u8> = (0..n)
                .map(|_| {
                    let centre = if rng.random_bool(0.4) { 60.0 } else { 170.0 };
                    (centre + rng.random_range(-40.0..40.0) * (1.0 + trial as f64 / 10.0)).clamp(0.0, 255.0) as u8
                })
                .collect();
            let img = Img::from_fn(20, 20, |x, y| values[y * 20 + x] as f64 / 255.0);
            assert_eq!(otsu_bin(&histogram(&img)).unwrap(), brute_force_otsu(&values));
        }
    }

    #[test]
    fn otsu_depends_on_histogram_only() {
        let a = Img::from_fn(8, 8, |x, y| if (x + y) % 3 == 0 { 0.1 } else { 0.7 });
        let mut px: Vec<f64> = a.pixels().to_vec();
        px.reverse();
        px.rotate_left(5);
        let b = Img::from_pixels(8, 8, px).unwrap();
        assert_eq!(otsu_threshold(&a).unwrap(), otsu_threshold(&b).unwrap());
    }

    #[test]
    fn resize_identity_and_constant() {
        let img = checkerboard(7, 5, 1);
        assert_eq!(resize(&img, 7, 5), img);
        let c = Img::new(2, 2, 0.25);
        assert!(resize(&c, 9, 9).pixels().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn resize_down_after_up_recovers_smooth_image() {
        let img = gaussian_blur(&checkerboard(24, 24, 6), 2.0);
        let back = resize(&resize(&img, 48, 48), 24, 24);
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 0.02);
        }
    }

    #[test]
    fn nearest_resize_keeps_values() {
        let img = checkerboard(21, 21, 1);
        let up = resize_nearest(&img, 96, 96);
        assert!(up.is_binary());
        assert_eq!(up.get(0, 0), img.get(0, 0));
        assert_eq!(up.get(95, 95), img.get(20, 20));
    }

    #[test]
    fn pgm_roundtrip_is_bit_exact_on_quantized_values() {
        let img = Img::from_fn(13, 7, |x, y| ((x * 7 + y * 31) % 256) as f64 / 255.0);
        let mut buf = Vec::new();
        write_pgm(&img, &mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n13 7\n255\n"));
        let back: Img = read_pgm(&buf[..]).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_reader_skips_comments_and_rejects_other_formats() {
        let data = b"P5\n# made by hand\n2 1\n255\n\x00\xff";
        let img: Img = read_pgm(&data[..]).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
        assert!(read_pgm::<f64, _>(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_pgm::<f64, _>(&b"P5\n1 1\n65535\n\x00\x00"[..]).is_err());
    }

    #[test]
    fn operations_stay_in_unit_range() {
        let img = checkerboard(16, 16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let field = DisplacementField {
            width: 16,
            height: 16,
            dx: (0..256).map(|_| rng.random_range(-30.0..30.0)).collect(),
            dy: (0..256).map(|_| rng.random_range(-30.0..30.0)).collect(),
        };
        for out in [gaussian_blur(&img, 3.0), warp(&img, &field).unwrap(), resize(&img, 5, 40)] {
            assert!(out.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

//! Seeded payloads and labelled datasets.
//!
//! Every record carries its own seed, derived from the master seed and its
//! (class, EC level, noise config, item) coordinates, so a record can be
//! regenerated alone and datasets do not depend on generation order.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::degrade::{degrade_image, invert_modules, DegradeError, Noise, NoiseSpec};
use crate::qr::{encode_matrix, render, EcLevel, QrError, QrSpec};
use crate::raster::{load_pgm, save_pgm, Image, RasterError};

/// Pixels per module and quiet zone for the document-style noises.
pub const REALISTIC_SCALE: usize = 8;
pub const REALISTIC_QUIET: usize = 4;

const FIRST_NAMES: &str = include_str!("../data/first_names.txt");
const SURNAMES: &str = include_str!("../data/surnames.txt");

fn names() -> &'static (Vec<&'static str>, Vec<&'static str>) {
    static NAMES: OnceLock<(Vec<&str>, Vec<&str>)> = OnceLock::new();
    NAMES.get_or_init(|| {
        let list = |s: &'static str| s.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        (list(FIRST_NAMES), list(SURNAMES))
    })
}

pub fn first_names() -> &'static [&'static str] {
    &names().0
}

pub fn surnames() -> &'static [&'static str] {
    &names().1
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {source}")]
    Manifest { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Qr(#[from] QrError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Template {
    /// `constant/First/Last/DD/MM/YYYY`
    HealthPassConstantFirst,
    /// `First/Last/DD/MM/YYYY/constant`
    HealthPassConstantLast,
    /// `https://constant/username`
    Url,
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::HealthPassConstantFirst => "first",
            Template::HealthPassConstantLast => "last",
            Template::Url => "url",
        })
    }
}

impl FromStr for Template {
    type Err = DatagenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(Template::HealthPassConstantFirst),
            "last" => Ok(Template::HealthPassConstantLast),
            "url" => Ok(Template::Url),
            _ => Err(DatagenError::Config(format!("unknown template {s:?} (first, last, url)"))),
        }
    }
}

/// A template and its two class constants; class `i` is `constants[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadSpec {
    pub template: Template,
    pub constants: [String; 2],
}

impl PayloadSpec {
    pub fn new(template: Template, a: &str, b: &str) -> Self {
        PayloadSpec {
            template,
            constants: [a.to_string(), b.to_string()],
        }
    }

    pub fn health_first() -> Self {
        Self::new(Template::HealthPassConstantFirst, "approuvé", "invalide")
    }

    pub fn health_last() -> Self {
        Self::new(Template::HealthPassConstantLast, "approuvé", "invalide")
    }

    pub fn url() -> Self {
        Self::new(Template::Url, "Facebook", "Twitter")
    }

    pub fn constant(&self, class: u8) -> &str {
        &self.constants[class as usize]
    }
}

pub fn date_range() -> (NaiveDate, NaiveDate) {
    (
        NaiveDate::from_ymd_opt(1921, 1, 1).expect("valid date"),
        NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
    )
}

fn random_date(rng: &mut ChaCha8Rng) -> NaiveDate {
    let (lo, hi) = date_range();
    let span = (hi - lo).num_days() as u64;
    lo + Days::new(rng.random_range(0..=span))
}

pub const USERNAME_LEN: (usize, usize) = (5, 20);
const USERNAME_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

/// Deterministic payload for `class` under `seed`.
pub fn gen_payload(spec: &PayloadSpec, class: u8, seed: u64) -> String {
    assert!(class < 2, "class must be 0 or 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constant = spec.constant(class);
    match spec.template {
        Template::Url => {
            let len = rng.random_range(USERNAME_LEN.0..=USERNAME_LEN.1);
            let user: String = (0..len)
                .map(|_| *USERNAME_CHARS.choose(&mut rng).expect("non-empty") as char)
                .collect();
            format!("https://{constant}/{user}")
        }
        Template::HealthPassConstantFirst | Template::HealthPassConstantLast => {
            let first = first_names().choose(&mut rng).expect("non-empty list");
            let last = surnames().choose(&mut rng).expect("non-empty list");
            let date = random_date(&mut rng).format("%d/%m/%Y");
            if spec.template == Template::HealthPassConstantFirst {
                format!("{constant}/{first}/{last}/{date}")
            } else {
                format!("{first}/{last}/{date}/{constant}")
            }
        }
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` one word at a time through splitmix64.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(master), |h, &p| mix(h ^ mix(p)))
}

/// The twelve training noise configurations in their fixed order.
pub fn training_noises() -> Vec<Noise> {
    let mut v: Vec<Noise> = [0.0, 10.0, 20.0, 30.0, 40.0].into_iter().map(Noise::inversion).collect();
    v.extend([2.0, 5.0, 20.0].into_iter().map(Noise::rdist));
    v.extend([10.0, 20.0, 50.0].into_iter().map(Noise::ruled));
    v.push(Noise::FgBgSelection);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Paper,
    Desk,
    Test,
}

impl FromStr for Preset {
    type Err = DatagenError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            "test" => Ok(Preset::Test),
            _ => Err(DatagenError::Config(format!("unknown preset {s:?} (paper, desk, test)"))),
        }
    }
}

/// Cell layout: every class x EC level x noise config gets `per_cell` records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub ec_levels: Vec<EcLevel>,
    pub noises: Vec<Noise>,
    pub per_cell: usize,
}

impl Distribution {
    /// Training presets use the twelve configs; `test` needs its one config.
    pub fn preset(preset: Preset, test_noise: Option<Noise>) -> Result<Self, DatagenError> {
        let ec_levels = EcLevel::ALL.to_vec();
        Ok(match preset {
            Preset::Paper => Distribution {
                ec_levels,
                noises: training_noises(),
                per_cell: 165,
            },
            Preset::Desk => Distribution {
                ec_levels,
                noises: training_noises(),
                per_cell: 8,
            },
            Preset::Test => Distribution {
                ec_levels,
                noises: vec![test_noise.ok_or_else(|| DatagenError::Config("test preset needs a noise config".into()))?],
                per_cell: 250,
            },
        })
    }

    pub fn total(&self) -> usize {
        2 * self.ec_levels.len() * self.noises.len() * self.per_cell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub image_path: String,
    pub class: u8,
    pub payload: String,
    pub ec: EcLevel,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub template: Template,
    pub constants: [String; 2],
}

impl Record {
    pub fn payload_spec(&self) -> PayloadSpec {
        PayloadSpec {
            template: self.template,
            constants: self.constants.clone(),
        }
    }
}

/// Builds the record for one cell coordinate; nothing is rendered.
pub fn plan_record(spec: &PayloadSpec, class: u8, ec: EcLevel, config: usize, noise: Noise, item: usize, master: u64) -> Record {
    let seed = derive_seed(master, &[class as u64, ec.ordinal() as u64, config as u64, item as u64]);
    record_from_seed(spec, class, ec, noise, seed, format!("images/c{class}_{ec}_k{config:02}_{item:05}.pgm"))
}

/// Payload and noise seed both follow from the record seed.
pub fn record_from_seed(spec: &PayloadSpec, class: u8, ec: EcLevel, noise: Noise, seed: u64, image_path: String) -> Record {
    Record {
        image_path,
        class,
        payload: gen_payload(spec, class, derive_seed(seed, &[0])),
        ec,
        noise: NoiseSpec {
            noise,
            seed: derive_seed(seed, &[1]),
        },
        seed,
        template: spec.template,
        constants: spec.constants.clone(),
    }
}

/// All records of a distribution in class, EC, config, item order.
pub fn plan_dataset(dist: &Distribution, spec: &PayloadSpec, master: u64) -> Vec<Record> {
    let mut out = Vec::with_capacity(dist.total());
    for class in 0..2u8 {
        for &ec in &dist.ec_levels {
            for (k, &noise) in dist.noises.iter().enumerate() {
                for item in 0..dist.per_cell {
                    out.push(plan_record(spec, class, ec, k, noise, item, master));
                }
            }
        }
    }
    out
}

/// Renders the symbol a record describes: inversion at one pixel per
/// module without quiet zone, the other noises on a scale-8 render.
pub fn synthesize(record: &Record) -> Result<Image<f64>, DatagenError> {
    let matrix = encode_matrix(&QrSpec::new(&record.payload, record.ec))?;
    let spec = record.noise;
    Ok(match spec.noise {
        Noise::Inversion { percent } => render(&invert_modules(&matrix, percent, spec.seed), 1, 0),
        _ => degrade_image(&render(&matrix, REALISTIC_SCALE, REALISTIC_QUIET), &spec)?,
    })
}

/// The stored form of an image: quantized to 8 bits as in its PGM file.
pub fn quantize(img: &Image<f64>) -> Image<f64> {
    img.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

/// Renders every record under `out_dir` and writes the manifest.
pub fn build_dataset(
    dist: &Distribution,
    spec: &PayloadSpec,
    out_dir: impl AsRef<Path>,
    master: u64,
) -> Result<Vec<Record>, DatagenError> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir.join("images"))?;
    let records = plan_dataset(dist, spec, master);
    for r in &records {
        save_pgm(&synthesize(r)?, out_dir.join(&r.image_path))?;
    }
    write_manifest(&records, out_dir.join(MANIFEST_NAME))?;
    Ok(records)
}

pub fn write_manifest(records: &[Record], path: impl AsRef<Path>) -> Result<(), DatagenError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<Record>, DatagenError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DatagenError::Manifest { line: i + 1, source })?);
    }
    Ok(out)
}

/// Loads the images of a manifest stored at `manifest_path`.
pub fn load_images(manifest_path: impl AsRef<Path>, records: &[Record]) -> Result<Vec<Image<f32>>, DatagenError> {
    let root: PathBuf = manifest_path.as_ref().parent().map(Path::to_path_buf).unwrap_or_default();
    records
        .iter()
        .map(|r| load_pgm(root.join(&r.image_path)).map_err(DatagenError::from))
        .collect()
}

/// Stratified split: `round(fraction * n_c)` records of each class go to
/// validation. Both halves keep manifest order.
pub fn split_train_val<T: Clone>(items: &[T], class_of: impl Fn(&T) -> u8, fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    assert!(fraction > 0.0 && fraction < 1.0, "fraction must be in (0, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_val = vec![false; items.len()];
    for class in 0..2u8 {
        let mut idx: Vec<usize> = (0..items.len()).filter(|&i| class_of(&items[i]) == class).collect();
        idx.shuffle(&mut rng);
        let n_val = (fraction * idx.len() as f64).round() as usize;
        for &i in &idx[..n_val] {
            is_val[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (item, v) in items.iter().zip(is_val) {
        if v { &mut val } else { &mut train }.push(item.clone());
    }
    (train, val)
}

//! Experiment harness: inversion sweeps, the realistic-noise table, the
//! constant-position ablation, and their CSV/SVG output.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnn::{train, CnnError, Dataset, EpochStats, History, Model, ModelConfig, TrainConfig};
use crate::datagen::{derive_seed, quantize, record_from_seed, split_train_val, synthesize, DatagenError, PayloadSpec, Record};
use crate::degrade::Noise;
use crate::qr::{decode_image, detect_constant, DecodeFailure, EcLevel};
use crate::raster::Image;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Cnn(#[from] CnnError),
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
}

pub const DESK_SWEEP_N: usize = 50;
pub const CSV_HEADER: &str = "percent,decoder_acc,classifier_acc,n";

/// What the decoder made of one trial image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecoderOutcome {
    Correct,
    /// Decoded, but the text did not single out the right constant.
    WrongConstant,
    Failed(DecodeFailure),
}

impl DecoderOutcome {
    pub fn name(self) -> &'static str {
        match self {
            DecoderOutcome::Correct => "Correct",
            DecoderOutcome::WrongConstant => "WrongConstant",
            DecoderOutcome::Failed(f) => f.name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub noise: Noise,
    pub index: usize,
    pub class: u8,
    pub ec: EcLevel,
    pub decoder: DecoderOutcome,
    pub classifier: Option<bool>,
}

/// Scores one image with both methods.
pub fn score_image<T: Scalar>(img: &Image<f64>, record: &Record, model: Option<&Model<T>>) -> (DecoderOutcome, Option<bool>) {
    let constants = (record.constants[0].as_str(), record.constants[1].as_str());
    let decoded = decode_image(img);
    let decoder = match (&decoded, detect_constant(&decoded, constants)) {
        (Err(f), _) => DecoderOutcome::Failed(*f),
        (Ok(_), Some(c)) if c == record.class as usize => DecoderOutcome::Correct,
        (Ok(_), _) => DecoderOutcome::WrongConstant,
    };
    let classifier = model.map(|m| m.predict(img).0 == record.class as usize);
    (decoder, classifier)
}

fn run_trial<T: Scalar>(record: &Record, index: usize, model: Option<&Model<T>>) -> Result<Trial, BenchError> {
    // both methods see the bytes a PGM file would hold
    let img = quantize(&synthesize(record)?);
    let (decoder, classifier) = score_image(&img, record, model);
    Ok(Trial {
        noise: record.noise.noise,
        index,
        class: record.class,
        ec: record.ec,
        decoder,
        classifier,
    })
}

/// Success counts for one noise setting; accuracies are formed only on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub n: usize,
    pub decoder_ok: usize,
    pub classifier_ok: Option<usize>,
}

impl Tally {
    fn from_trials(trials: &[Trial]) -> Self {
        let classifier_ok = trials
            .iter()
            .map(|t| t.classifier.map(usize::from))
            .sum::<Option<usize>>();
        Tally {
            n: trials.len(),
            decoder_ok: trials.iter().filter(|t| t.decoder == DecoderOutcome::Correct).count(),
            classifier_ok: if trials.is_empty() { None } else { classifier_ok },
        }
    }

    pub fn decoder_accuracy(&self) -> f64 {
        self.decoder_ok as f64 / self.n as f64
    }

    pub fn classifier_accuracy(&self) -> Option<f64> {
        self.classifier_ok.map(|k| k as f64 / self.n as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub spec: PayloadSpec,
    pub percents: Vec<u32>,
    pub n: usize,
    /// Cycled over trials; L is left out by default because at one percent
    /// inversion its codeword budget is sometimes exceeded.
    pub ec_levels: Vec<EcLevel>,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(spec: PayloadSpec, n: usize, seed: u64) -> Self {
        SweepConfig {
            spec,
            percents: (0..=100).collect(),
            n,
            ec_levels: vec![EcLevel::M, EcLevel::Q, EcLevel::H],
            seed,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.n == 0 || self.ec_levels.is_empty() || self.percents.iter().any(|&p| p > 100) {
            return Err(BenchError::Config(format!(
                "need n >= 1, at least one EC level and percents in 0..=100 (n = {})",
                self.n
            )));
        }
        Ok(())
    }

    /// Trial `i` alternates classes and cycles EC levels per class pair.
    pub fn trial_record(&self, noise: Noise, key: u64, i: usize) -> Record {
        let class = (i % 2) as u8;
        let ec = self.ec_levels[(i / 2) % self.ec_levels.len()];
        let seed = derive_seed(self.seed, &[key, i as u64]);
        record_from_seed(&self.spec, class, ec, noise, seed, String::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub percent: u32,
    pub tally: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<Trial>,
}

impl Sweep {
    pub fn row(&self, percent: u32) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.percent == percent)
    }

    /// Area under the classifier curve, percent axis scaled to [0, 1].
    pub fn classifier_auc(&self) -> Option<f64> {
        let pts: Option<Vec<(f64, f64)>> = self
            .rows
            .iter()
            .map(|r| r.tally.classifier_accuracy().map(|a| (r.percent as f64 / 100.0, a)))
            .collect();
        pts.map(|p| trapezoid(&p))
    }

    pub fn decoder_auc(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| (r.percent as f64 / 100.0, r.tally.decoder_accuracy()))
            .collect();
        trapezoid(&pts)
    }
}

fn trapezoid(pts: &[(f64, f64)]) -> f64 {
    pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum()
}

/// Inversion sweep. Without a model only the decoder is scored.
pub fn sweep_inversion<T: Scalar>(model: Option<&Model<T>>, cfg: &SweepConfig) -> Result<Sweep, BenchError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.percents.len());
    let mut trials = Vec::with_capacity(cfg.percents.len() * cfg.n);
    for &percent in &cfg.percents {
        let noise = Noise::inversion(percent as f64);
        let start = trials.len();
        for i in 0..cfg.n {
            trials.push(run_trial(&cfg.trial_record(noise, percent as u64, i), i, model)?);
        }
        rows.push(SweepRow {
            percent,
            tally: Tally::from_trials(&trials[start..]),
        });
    }
    Ok(Sweep { rows, trials })
}

/// The realistic configurations and the family each one belongs to.
pub fn realistic_noises() -> Vec<Noise> {
    vec![
        Noise::rdist(2.0),
        Noise::rdist(5.0),
        Noise::rdist(20.0),
        Noise::ruled(10.0),
        Noise::ruled(20.0),
        Noise::ruled(50.0),
        Noise::FgBgSelection,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRow {
    pub noise: Noise,
    pub tally: Tally,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRow {
    pub family: String,
    pub configs: usize,
    pub decoder_mean: f64,
    pub classifier_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTable {
    pub configs: Vec<ConfigRow>,
    pub families: Vec<FamilyRow>,
    pub trials: Vec<Trial>,
}

impl NoiseTable {
    pub fn family(&self, name: &str) -> Option<&FamilyRow> {
        self.families.iter().find(|f| f.family == name)
    }
}

/// Per-config accuracies and unweighted family means. `cfg.percents` is
/// ignored; the configurations are given by `noises`.
pub fn eval_realistic<T: Scalar>(model: Option<&Model<T>>, noises: &[Noise], cfg: &SweepConfig) -> Result<NoiseTable, BenchError> {
    cfg.validate()?;
    let mut configs = Vec::new();
    let mut trials = Vec::new();
    for (k, &noise) in noises.iter().enumerate() {
        noise.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        let start = trials.len();
        for i in 0..cfg.n {
            trials.push(run_trial(&cfg.trial_record(noise, 1000 + k as u64, i), i, model)?);
        }
        configs.push(ConfigRow {
            noise,
            tally: Tally::from_trials(&trials[start..]),
        });
    }
    let mut families: Vec<FamilyRow> = Vec::new();
    for row in &configs {
        let name = row.noise.family();
        if families.iter().any(|f| f.family == name) {
            continue;
        }
        let members: Vec<&Tally> = configs.iter().filter(|r| r.noise.family() == name).map(|r| &r.tally).collect();
        let k = members.len() as f64;
        let classifier_mean = members
            .iter()
            .map(|t| t.classifier_accuracy())
            .sum::<Option<f64>>()
            .map(|s| s / k);
        families.push(FamilyRow {
            family: name.to_string(),
            configs: members.len(),
            decoder_mean: members.iter().map(|t| t.decoder_accuracy()).sum::<f64>() / k,
            classifier_mean,
        });
    }
    Ok(NoiseTable {
        configs,
        families,
        trials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCurve {
    pub label: String,
    pub sweep: Sweep,
    pub auc: f64,
}

/// One sweep per (label, model, payload spec); curves come back sorted by
/// classifier AUC, best first (ties keep input order).
pub fn ablate_constants<T: Scalar>(
    entries: &[(String, &Model<T>, PayloadSpec)],
    base: &SweepConfig,
) -> Result<Vec<AblationCurve>, BenchError> {
    let mut curves = Vec::with_capacity(entries.len());
    for (label, model, spec) in entries {
        let cfg = SweepConfig {
            spec: spec.clone(),
            ..base.clone()
        };
        let sweep = sweep_inversion(Some(*model), &cfg)?;
        let auc = sweep.classifier_auc().expect("model given");
        curves.push(AblationCurve {
            label: label.clone(),
            sweep,
            auc,
        });
    }
    curves.sort_by(|a, b| b.auc.total_cmp(&a.auc));
    Ok(curves)
}

/// Share of each class held out for validation during training.
pub const VAL_FRACTION: f64 = 0.1;

/// Stratified train/validation split of a loaded dataset, then training.
pub fn train_on_records<T: Scalar>(
    records: &[Record],
    images: &[Image<T>],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model<T>, History), BenchError> {
    if records.len() != images.len() {
        return Err(BenchError::Config(format!("{} records but {} images", records.len(), images.len())));
    }
    let idx: Vec<usize> = (0..records.len()).collect();
    let (tr, va) = split_train_val(&idx, |&i| records[i].class, VAL_FRACTION, derive_seed(cfg.seed, &[2]));
    let subset = |ix: &[usize]| {
        let imgs: Vec<Image<T>> = ix.iter().map(|&i| images[i].clone()).collect();
        let labels: Vec<usize> = ix.iter().map(|&i| records[i].class as usize).collect();
        Dataset::<T>::from_images(&imgs, &labels, model_cfg.input_side)
    };
    Ok(train(model_cfg, cfg, &subset(&tr), &subset(&va), on_epoch)?)
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub fn write_sweep_csv(sweep: &Sweep, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in &sweep.rows {
        writeln!(
            out,
            "{},{:.4},{},{}",
            r.percent,
            r.tally.decoder_accuracy(),
            fmt_acc(r.tally.classifier_accuracy()),
            r.tally.n
        )?;
    }
    Ok(())
}

/// One line per trial: which decoder stage failed, and the classifier verdict.
pub fn write_taxonomy_csv(trials: &[Trial], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "noise,trial,class,ec,decoder_outcome,classifier_correct")?;
    for t in trials {
        let verdict = t.classifier.map(|c| u8::from(c).to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{},{}", t.noise, t.index, t.class, t.ec, t.decoder.name(), verdict)?;
    }
    Ok(())
}

pub fn write_table_csv(table: &NoiseTable, mut out: impl Write) -> io::Result<()> {
    writeln!(out, "family,config,decoder_acc,classifier_acc,n")?;
    for r in &table.configs {
        writeln!(
            out,
            "{},{},{:.4},{},{}",
            r.noise.family(),
            r.noise,
            r.tally.decoder_accuracy(),
            fmt_acc(r.tally.classifier_accuracy()),
            r.tally.n
        )?;
    }
    for f in &table.families {
        let n: usize = table
            .configs
            .iter()
            .filter(|r| r.noise.family() == f.family)
            .map(|r| r.tally.n)
            .sum();
        writeln!(out, "{},mean,{:.4},{},{}", f.family, f.decoder_mean, fmt_acc(f.classifier_mean), n)?;
    }
    Ok(())
}

pub fn write_ablation_csv(curves: &[AblationCurve], mut out: impl Write) -> io::Result<()> {
    writeln!(out, "label,auc,{CSV_HEADER}")?;
    for c in curves {
        for r in &c.sweep.rows {
            writeln!(
                out,
                "{},{:.4},{},{:.4},{},{}",
                c.label,
                c.auc,
                r.percent,
                r.tally.decoder_accuracy(),
                fmt_acc(r.tally.classifier_accuracy()),
                r.tally.n
            )?;
        }
    }
    Ok(())
}

/// A named polyline in data coordinates (x in 0..=100, y in 0..=1).
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Line chart with axes 0-100 by 0-1 and a legend.
pub fn svg_chart(title: &str, xlabel: &str, series: &[Series]) -> String {
    let (w, h, left, top, pw, ph) = (640.0, 420.0, 60.0, 40.0, 540.0, 320.0);
    let px = |x: f64| left + x / 100.0 * pw;
    let py = |y: f64| top + (1.0 - y) * ph;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, w / 2.0, xml_escape(title));
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let (x, y) = (px(t * 100.0), py(t));
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/>"##, top, top + ph);
        let _ = writeln!(s, r##"<line x1="{left:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##, left + pw);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#, top + ph + 16.0, i * 10);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{t:.1}</text>"#, left - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#, left + pw / 2.0, h - 30.0, xml_escape(xlabel));
    let _ = writeln!(s, r#"<text x="16" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.1})">accuracy</text>"#, top + ph / 2.0, top + ph / 2.0);
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        let ly = top + 14.0 + 16.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, left + pw - 150.0, left + pw - 130.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#, left + pw - 125.0, ly + 4.0, xml_escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}

/// Decoder and (when scored) classifier curves of one sweep.
pub fn sweep_series(sweep: &Sweep, prefix: &str) -> Vec<Series> {
    let mut out = vec![Series {
        name: format!("{prefix}decoder"),
        points: sweep.rows.iter().map(|r| (r.percent as f64, r.tally.decoder_accuracy())).collect(),
    }];
    let classifier: Option<Vec<(f64, f64)>> = sweep
        .rows
        .iter()
        .map(|r| r.tally.classifier_accuracy().map(|a| (r.percent as f64, a)))
        .collect();
    if let Some(points) = classifier {
        out.push(Series {
            name: format!("{prefix}classifier"),
            points,
        });
    }
    out
}

pub fn sweep_svg(sweep: &Sweep) -> String {
    svg_chart("Accuracy under module inversion", "inverted modules (%)", &sweep_series(sweep, ""))
}

pub fn ablation_svg(curves: &[AblationCurve]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .flat_map(|c| sweep_series(&c.sweep, &format!("{} ", c.label)).into_iter().rev())
        .filter(|s| s.name.ends_with("classifier"))
        .collect();
    svg_chart("Classifier accuracy by training payload", "inverted modules (%)", &series)
}

/// Writes the sweep CSV, its SVG, and (if a path is given) the per-trial taxonomy.
pub fn emit(sweep: &Sweep, csv: &Path, svg: Option<&Path>, taxonomy: Option<&Path>) -> Result<(), BenchError> {
    if sweep.rows.is_empty() {
        return Err(BenchError::Config("nothing to emit".into()));
    }
    let mut buf = Vec::new();
    write_sweep_csv(sweep, &mut buf)?;
    fs::write(csv, buf)?;
    if let Some(svg) = svg {
        fs::write(svg, sweep_svg(sweep))?;
    }
    if let Some(tax) = taxonomy {
        let mut buf = Vec::new();
        write_taxonomy_csv(&sweep.trials, &mut buf)?;
        fs::write(tax, buf)?;
    }
    Ok(())
}

/// Reads a sweep CSV back (classifier column may be empty).
pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>, BenchError> {
    let bad = |line: usize| BenchError::Config(format!("malformed sweep CSV at line {line}"));
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(bad(1));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(i + 2));
        }
        let n: usize = f[3].parse().map_err(|_| bad(i + 2))?;
        let count = |s: &str| -> Result<usize, BenchError> {
            let a: f64 = s.parse().map_err(|_| bad(i + 2))?;
            Ok((a * n as f64).round() as usize)
        };
        rows.push(SweepRow {
            percent: f[0].parse().map_err(|_| bad(i + 2))?,
            tally: Tally {
                n,
                decoder_ok: count(f[1])?,
                classifier_ok: if f[2].is_empty() { None } else { Some(count(f[2])?) },
            },
        });
    }
    Ok(rows)
}

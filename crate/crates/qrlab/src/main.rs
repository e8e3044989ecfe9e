use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qrlab::bench::{
    ablate_constants, ablation_svg, emit, eval_realistic, read_sweep_csv, realistic_noises, svg_chart, sweep_inversion,
    sweep_series, train_on_records, write_ablation_csv, write_table_csv, Sweep, SweepConfig, DESK_SWEEP_N,
};
use qrlab::cnn::{load_checkpoint, save_checkpoint, Model, ModelConfig, TrainConfig};
use qrlab::datagen::{build_dataset, load_images, read_manifest, Distribution, PayloadSpec, Preset, Template};
use qrlab::degrade::{degrade_image, invert_pixels, Noise, NoiseSpec};
use qrlab::qr::{decode_image, detect_constant, encode_matrix, render, EcLevel, QrSpec};
use qrlab::raster::{load_pgm, save_pgm, Image};

#[derive(Parser)]
#[command(name = "qrlab", version, about = "QR codes under noise: a decoder against a small CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a byte-mode QR symbol to PGM.
    Encode {
        #[arg(long)]
        text: String,
        #[arg(long, default_value = "Q")]
        ec: EcLevel,
        #[arg(long, default_value_t = 8)]
        scale: usize,
        #[arg(long, default_value_t = 4)]
        quiet: usize,
        /// Force a version (1-10) instead of the smallest that fits.
        #[arg(long)]
        version: Option<u8>,
        /// Force a mask (0-7) instead of the lowest-penalty one.
        #[arg(long)]
        mask: Option<u8>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one noise model to a PGM image.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        /// e.g. `inversion:p=12`, `rdist:sigma=5,maxdelta=5`, `ruled:mag=20`, `fgbg`
        #[arg(long)]
        noise: Noise,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a PGM image; exits 1 with the failing stage on stderr.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        /// Report which of two constants the payload carries.
        #[arg(long, value_name = "A,B", value_parser = parse_pair)]
        expect_constants: Option<[String; 2]>,
    },
    /// Generate a labelled, degraded dataset with its manifest.
    GenDataset {
        #[arg(long, default_value = "desk")]
        preset: Preset,
        #[arg(long, default_value = "first")]
        template: Template,
        #[arg(long, value_name = "A,B", value_parser = parse_pair)]
        constants: Option<[String; 2]>,
        /// Noise of the `test` preset.
        #[arg(long)]
        noise: Option<Noise>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the classifier on a manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "desk")]
        preset: TrainPreset,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Per-epoch history as JSON.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Inversion sweep, 0 to 100 percent.
    Sweep {
        #[command(flatten)]
        bench: BenchArgs,
        /// Per-trial decoder outcomes.
        #[arg(long)]
        out_taxonomy: Option<PathBuf>,
    },
    /// Realistic-noise table (rdist, ruled, fgbg).
    Eval {
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Sweep several models, each on its own payload template, ranked by AUC.
    Ablate {
        /// `TEMPLATE:A,B=CHECKPOINT`, repeatable.
        #[arg(long = "config", required = true)]
        configs: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DESK_SWEEP_N)]
        n: usize,
        #[arg(long)]
        out_csv: PathBuf,
        #[arg(long)]
        out_svg: Option<PathBuf>,
    },
    /// Chart one or more sweep CSVs.
    Plot {
        #[arg(long = "in-csv", required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_svg: PathBuf,
        #[arg(long, default_value = "Accuracy under module inversion")]
        title: String,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Classifier checkpoint; without it only the decoder is scored.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value = "first")]
    template: Template,
    #[arg(long, value_name = "A,B", value_parser = parse_pair)]
    constants: Option<[String; 2]>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DESK_SWEEP_N)]
    n: usize,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_svg: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TrainPreset {
    Desk,
    Paper,
}

fn parse_pair(s: &str) -> Result<[String; 2], String> {
    match s.split_once(',') {
        Some((a, b)) if !a.is_empty() && !b.is_empty() && !b.contains(',') => Ok([a.to_owned(), b.to_owned()]),
        _ => Err(format!("expected two comma-separated values, got {s:?}")),
    }
}

fn payload_spec(template: Template, constants: Option<&[String; 2]>) -> PayloadSpec {
    let mut spec = match template {
        Template::HealthPassConstantFirst => PayloadSpec::health_first(),
        Template::HealthPassConstantLast => PayloadSpec::health_last(),
        Template::Url => PayloadSpec::url(),
    };
    if let Some([a, b]) = constants {
        spec.constants = [a.clone(), b.clone()];
    }
    spec
}

fn load_model(path: &Path) -> Result<Model<f32>> {
    load_checkpoint(path).with_context(|| format!("loading {}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn print_sweep(sweep: &Sweep) {
    for r in &sweep.rows {
        let c = r.tally.classifier_accuracy().map_or("-".into(), |a| format!("{a:.4}"));
        println!("{:>3}%  decoder {:.4}  classifier {c}", r.percent, r.tally.decoder_accuracy());
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Encode {
            text,
            ec,
            scale,
            quiet,
            version,
            mask,
            out,
        } => {
            let mut spec = QrSpec::new(&text, ec);
            if let Some(v) = version {
                spec = spec.with_version(v);
            }
            if let Some(m) = mask {
                spec = spec.with_mask(m);
            }
            let m = encode_matrix(&spec)?;
            let img: Image<f64> = render(&m, scale, quiet);
            save_pgm(&img, &out)?;
            eprintln!("version {} ({}x{} modules)", m.version(), m.side(), m.side());
        }
        Command::Degrade {
            input,
            noise,
            seed,
            out,
        } => {
            let img: Image<f64> = load_pgm(&input)?;
            let degraded = match noise {
                // one pixel per module is assumed, as in a scale-1 render
                Noise::Inversion { percent } => {
                    if !img.is_binary() {
                        bail!("inversion needs a binary image rendered at one pixel per module");
                    }
                    invert_pixels(&img, percent, seed)
                }
                _ => degrade_image(&img, &NoiseSpec { noise, seed })?,
            };
            save_pgm(&degraded, &out)?;
        }
        Command::Decode {
            input,
            expect_constants,
        } => {
            let img: Image<f64> = load_pgm(&input)?;
            let result = decode_image(&img);
            match &result {
                Ok(bytes) => println!("{}", String::from_utf8_lossy(bytes)),
                Err(reason) => {
                    eprintln!("decode failed: {} ({reason})", reason.name());
                    return Ok(ExitCode::FAILURE);
                }
            }
            if let Some([a, b]) = &expect_constants {
                match detect_constant(&result, (a, b)) {
                    Some(k) => println!("constant {k}: {}", [a, b][k]),
                    None => {
                        eprintln!("decode failed: NoConstantMatch");
                        return Ok(ExitCode::from(2));
                    }
                }
            }
        }
        Command::GenDataset {
            preset,
            template,
            constants,
            noise,
            out,
            seed,
        } => {
            let dist = Distribution::preset(preset, noise)?;
            let spec = payload_spec(template, constants.as_ref());
            let records = build_dataset(&dist, &spec, &out, seed)?;
            eprintln!("{} records written to {}", records.len(), out.display());
        }
        Command::Train {
            manifest,
            preset,
            out,
            seed,
            epochs,
            lr,
            history,
        } => {
            let records = read_manifest(&manifest)?;
            let images = load_images(&manifest, &records)?;
            let mut cfg = match preset {
                TrainPreset::Desk => TrainConfig::desk(seed),
                TrainPreset::Paper => TrainConfig::paper(seed),
            };
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.lr = lr.unwrap_or(cfg.lr);
            let (model, hist) = train_on_records(&records, &images, &ModelConfig::default(), &cfg, |s| {
                eprintln!(
                    "epoch {:>3}  train {:.4}  val {:.4}  acc {:.4}  lr {:.1e}",
                    s.epoch, s.train_loss, s.val_loss, s.val_accuracy, s.lr
                )
            })?;
            save_checkpoint(&model, &out)?;
            if let Some(path) = history {
                write_file(&path, serde_json::to_string_pretty(&hist)?)?;
            }
            eprintln!("best epoch {} (val accuracy {:.4})", hist.best_epoch, hist.best_val_accuracy);
        }
        Command::Sweep { bench, out_taxonomy } => {
            let model = bench.model.as_deref().map(load_model).transpose()?;
            let cfg = SweepConfig::new(payload_spec(bench.template, bench.constants.as_ref()), bench.n, bench.seed);
            let sweep = sweep_inversion(model.as_ref(), &cfg)?;
            emit(&sweep, &bench.out_csv, bench.out_svg.as_deref(), out_taxonomy.as_deref())?;
            print_sweep(&sweep);
        }
        Command::Eval { bench } => {
            let model = bench.model.as_deref().map(load_model).transpose()?;
            let cfg = SweepConfig::new(payload_spec(bench.template, bench.constants.as_ref()), bench.n, bench.seed);
            let table = eval_realistic(model.as_ref(), &realistic_noises(), &cfg)?;
            let mut buf = Vec::new();
            write_table_csv(&table, &mut buf)?;
            write_file(&bench.out_csv, &buf)?;
            if let Some(svg) = bench.out_svg {
                // the configs along the x axis, spaced evenly
                let k = table.configs.len().max(2) - 1;
                let series = |name: &str, f: &dyn Fn(usize) -> Option<f64>| qrlab::bench::Series {
                    name: name.into(),
                    points: (0..table.configs.len()).filter_map(|i| f(i).map(|a| (100.0 * i as f64 / k as f64, a))).collect(),
                };
                let charts = vec![
                    series("decoder", &|i| Some(table.configs[i].tally.decoder_accuracy())),
                    series("classifier", &|i| table.configs[i].tally.classifier_accuracy()),
                ];
                let labels: Vec<String> = table.configs.iter().map(|c| c.noise.to_string()).collect();
                write_file(&svg, svg_chart("Realistic noise", &labels.join("  |  "), &charts))?;
            }
            print!("{}", String::from_utf8_lossy(&buf));
        }
        Command::Ablate {
            configs,
            seed,
            n,
            out_csv,
            out_svg,
        } => {
            let mut loaded = Vec::new();
            for c in &configs {
                let (label, path) = c.split_once('=').context("expected TEMPLATE:A,B=CHECKPOINT")?;
                let (template, constants) = label.split_once(':').unwrap_or((label, ""));
                let constants = match constants {
                    "" => None,
                    pair => Some(parse_pair(pair).map_err(|e| anyhow!("{label}: {e}"))?),
                };
                let spec = payload_spec(template.parse()?, constants.as_ref());
                loaded.push((label.to_string(), load_model(Path::new(path))?, spec));
            }
            let entries: Vec<_> = loaded.iter().map(|(l, m, s)| (l.clone(), m, s.clone())).collect();
            let base = SweepConfig::new(PayloadSpec::health_first(), n, seed);
            let curves = ablate_constants(&entries, &base)?;
            let mut buf = Vec::new();
            write_ablation_csv(&curves, &mut buf)?;
            write_file(&out_csv, &buf)?;
            if let Some(svg) = out_svg {
                write_file(&svg, ablation_svg(&curves))?;
            }
            for c in &curves {
                println!("{:.4}  {}", c.auc, c.label);
            }
        }
        Command::Plot { inputs, out_svg, title } => {
            let mut series = Vec::new();
            for path in &inputs {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let sweep = Sweep {
                    rows: read_sweep_csv(&text)?,
                    trials: Vec::new(),
                };
                let prefix = if inputs.len() > 1 {
                    format!("{} ", path.file_stem().unwrap_or_default().to_string_lossy())
                } else {
                    String::new()
                };
                series.extend(sweep_series(&sweep, &prefix));
            }
            write_file(&out_svg, svg_chart(&title, "inverted modules (%)", &series))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! Writes rendered symbols plus their payloads for checking against an
//! external decoder: `cargo run --example dump_symbols -- <dir> [count]`.

use std::io::Write;

use qrlab::qr::{encode_matrix, render, EcLevel, QrSpec};
use qrlab::raster::save_pgm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = std::path::PathBuf::from(args.next().unwrap_or_else(|| "symbols".into()));
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut index = std::fs::File::create(dir.join("index.tsv"))?;
    let alphabet = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789/:.-_ ";
    for i in 0..count {
        for ec in EcLevel::ALL {
            let len = rng.random_range(1..=60);
            let text: String = (0..len)
                .map(|_| alphabet[rng.random_range(0..alphabet.len())] as char)
                .collect();
            let m = encode_matrix(&QrSpec::new(&text, ec))?;
            let name = format!("{i:04}_{ec}.pgm");
            save_pgm(&render::<f64>(&m, 4, 4), dir.join(&name))?;
            writeln!(index, "{name}\t{text}")?;
        }
    }
    let m = encode_matrix(&QrSpec::new("approuvé/JOHN/SMITH/01/01/1980", EcLevel::Q))?;
    save_pgm(&render::<f64>(&m, 4, 4), dir.join("paper_example.pgm"))?;
    Ok(())
}

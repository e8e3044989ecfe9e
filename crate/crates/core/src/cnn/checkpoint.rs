//! Checkpoint file: one JSON header line, then little-endian parameters,
//! first Adam moments and second Adam moments, in header order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CnnError, Model, ModelConfig, Net, Tensor};
use crate::scalar::Scalar;

const FORMAT: &str = "qrlab-cnn-1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dims: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    dtype: String,
    config: ModelConfig,
    step: u64,
    tensors: Vec<TensorEntry>,
}

pub fn write_checkpoint<T: Scalar, W: Write>(model: &Model<T>, mut out: W) -> Result<(), CnnError> {
    let header = Header {
        format: FORMAT.into(),
        dtype: T::DTYPE.into(),
        config: model.config.clone(),
        step: model.step,
        tensors: model
            .names
            .iter()
            .zip(&model.params)
            .map(|(name, p)| TensorEntry {
                name: name.clone(),
                dims: p.dims().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&header).map_err(|e| CnnError::Checkpoint(e.to_string()))?;
    out.write_all(json.as_bytes())?;
    out.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(3 * model.num_parameters() * T::BYTES);
    let values = model
        .params
        .iter()
        .map(|p| p.data())
        .chain(model.adam_m.iter().map(Vec::as_slice))
        .chain(model.adam_v.iter().map(Vec::as_slice));
    for v in values.flatten() {
        v.write_le(&mut buf);
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<T: Scalar, R: BufRead>(mut input: R) -> Result<Model<T>, CnnError> {
    let bad = |m: String| CnnError::Checkpoint(m);
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end()).map_err(|e| bad(e.to_string()))?;
    if header.format != FORMAT {
        return Err(bad(format!("unknown format {:?}", header.format)));
    }
    if header.dtype != T::DTYPE {
        return Err(bad(format!("checkpoint holds {}, expected {}", header.dtype, T::DTYPE)));
    }
    header.config.validate()?;
    let (net, specs) = Net::build(&header.config);
    let layout_matches = specs.len() == header.tensors.len()
        && specs
            .iter()
            .zip(&header.tensors)
            .all(|((n, d), e)| *n == e.name && *d == e.dims);
    if !layout_matches {
        return Err(bad("tensor list does not match the configuration".into()));
    }
    let mut payload = Vec::new();
    input.read_to_end(&mut payload)?;
    let total: usize = specs.iter().map(|(_, d)| d.iter().product::<usize>()).sum();
    if payload.len() != 3 * total * T::BYTES {
        return Err(bad(format!("payload is {} bytes, expected {}", payload.len(), 3 * total * T::BYTES)));
    }
    let mut values = payload.chunks_exact(T::BYTES).map(T::read_le);
    let mut take = |n: usize| -> Vec<T> { values.by_ref().take(n).collect() };
    let params: Vec<Tensor<T>> = specs
        .iter()
        .map(|(_, d)| Tensor::new(d.clone(), take(d.iter().product())).expect("sized from dims"))
        .collect();
    let adam_m: Vec<Vec<T>> = params.iter().map(|p| take(p.len())).collect();
    let adam_v: Vec<Vec<T>> = params.iter().map(|p| take(p.len())).collect();
    let mut model = Model::assemble(header.config, net, specs, params);
    model.adam_m = adam_m;
    model.adam_v = adam_v;
    model.step = header.step;
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &Model<T>, path: impl AsRef<Path>) -> Result<(), CnnError> {
    write_checkpoint(model, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Model<T>, CnnError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

//! Dataset files.
//!
//! CSV: header `f0,…,f{d−1},label`, one example per line, features written
//! in shortest round-trip decimal form.
//!
//! Binary: magic `IMBD`, then `N`, `d`, `|C|` as little-endian `u32`, the
//! features as row-major little-endian `f64`, then the labels as `u32`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, GeneratorSpec};
use crate::error::{Error, Result};
use crate::nn::Matrix;
use crate::scalar::Real;

const BINARY_MAGIC: &[u8; 4] = b"IMBD";

/// Provenance written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub generator: Option<GeneratorSpec>,
    pub seed: u64,
    pub rng: String,
    pub num_examples: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub class_counts: Vec<usize>,
    pub files: Vec<String>,
}

pub fn write_dataset_csv<T: Real, W: Write>(ds: &Dataset<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(fmt)?;
    let mut record = Vec::with_capacity(ds.dim() + 1);
    for i in 0..ds.len() {
        record.clear();
        record.extend(ds.features().row(i).iter().map(|x| x.to_string()));
        record.push(ds.labels()[i].to_string());
        w.write_record(&record).map_err(fmt)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset_csv<T: Real>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    write_dataset_csv(ds, fs::File::create(path)?)
}

/// Parses a dataset CSV. When `num_classes` is `None` it is inferred as the
/// largest label plus one.
pub fn read_dataset_csv<T: Real, R: Read>(
    input: R,
    source: &Path,
    num_classes: Option<usize>,
) -> Result<Dataset<T>> {
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        reason,
    };
    let mut r = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(input);
    let header = r
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    let dim = cols.len().saturating_sub(1);
    let expected: Vec<String> = (0..dim)
        .map(|j| format!("f{j}"))
        .chain(std::iter::once("label".to_string()))
        .collect();
    if dim == 0 || cols != expected {
        return Err(parse_err(1, format!("expected header f0..f{{d-1}},label, got {cols:?}")));
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != dim + 1 {
            return Err(parse_err(
                line,
                format!("expected {} cells, found {}", dim + 1, rec.len()),
            ));
        }
        for (j, cell) in rec.iter().take(dim).enumerate() {
            let v: T = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("non-numeric feature f{j}: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite feature f{j}")));
            }
            data.push(v);
        }
        let cell = &rec[dim];
        let label: usize = cell
            .trim()
            .parse()
            .map_err(|_| parse_err(line, format!("bad label {cell:?}")))?;
        if let Some(c) = num_classes {
            if label >= c {
                return Err(parse_err(line, format!("label {label} >= {c} classes")));
            }
        }
        labels.push(label);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().unwrap() + 1);
    Dataset::new(Matrix::new(labels.len(), dim, data)?, labels, classes)
}

pub fn load_dataset_csv<T: Real>(path: &Path, num_classes: Option<usize>) -> Result<Dataset<T>> {
    read_dataset_csv(fs::File::open(path)?, path, num_classes)
}

pub fn encode_dataset_binary<T: Real>(ds: &Dataset<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + ds.len() * (ds.dim() * 8 + 4));
    out.extend_from_slice(BINARY_MAGIC);
    for n in [ds.len(), ds.dim(), ds.num_classes()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for &x in ds.features().data() {
        out.extend_from_slice(&x.as_f64().to_le_bytes());
    }
    for &l in ds.labels() {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    out
}

pub fn save_dataset_binary<T: Real>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    fs::write(path, encode_dataset_binary(ds))?;
    Ok(())
}

pub fn load_dataset_binary<T: Real>(path: &Path) -> Result<Dataset<T>> {
    decode_dataset_binary(&fs::read(path)?, path)
}

/// `source` only labels error messages.
pub fn decode_dataset_binary<T: Real>(bytes: &[u8], source: &Path) -> Result<Dataset<T>> {
    let bad = |what: &str| Error::Format(format!("{}: {what}", source.display()));
    if bytes.len() < 16 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad("not an IMBD dataset file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (n, dim, classes) = (word(0), word(1), word(2));
    let feat_end = 16 + n * dim * 8;
    if bytes.len() != feat_end + n * 4 {
        return Err(bad("length does not match header"));
    }
    let data = bytes[16..feat_end]
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let labels = bytes[feat_end..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    Dataset::new(Matrix::new(n, dim, data)?, labels, classes)
}

//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `CUMP`, format version `u32`, scalar width
//! `u8` (4 or 8), activation code `u8`, layer-size count `u32`, the layer
//! sizes as `u32`, then for every layer its weights row-major followed by its
//! biases, each value in the scalar's native width. Values are stored by bit
//! pattern, so a round trip is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::matrix::Matrix;
use super::mlp::{Activation, MlpModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"CUMP";
const VERSION: u32 = 1;

pub fn encode_model<T: Real>(model: &MlpModel<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + model.num_parameters() * T::BYTES);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTES as u8);
    out.push(model.activation().code());
    out.extend_from_slice(&(model.dims().len() as u32).to_le_bytes());
    for &d in model.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for (w, b) in model.weights().iter().zip(model.biases()) {
        for &x in w.data().iter().chain(b) {
            x.write_le(&mut out);
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "checkpoint truncated at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode_model<T: Real>(bytes: &[u8]) -> Result<MlpModel<T>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let width = cur.u8()? as usize;
    if width != T::BYTES {
        return Err(Error::Format(format!(
            "checkpoint stores {width}-byte scalars, reader expects {}",
            T::BYTES
        )));
    }
    let activation = Activation::from_code(cur.u8()?)
        .ok_or_else(|| Error::Format("unknown activation".into()))?;
    let n_dims = cur.u32()? as usize;
    let dims = (0..n_dims)
        .map(|_| cur.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    if dims.len() < 2 {
        return Err(Error::Format("checkpoint has fewer than two layer sizes".into()));
    }
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in dims.windows(2) {
        let (rows, cols) = (pair[0], pair[1]);
        let mut read = |n: usize| -> Result<Vec<T>> {
            let raw = cur.take(n * T::BYTES)?;
            Ok(raw.chunks_exact(T::BYTES).map(T::read_le).collect())
        };
        weights.push(Matrix::new(rows, cols, read(rows * cols)?)?);
        biases.push(read(cols)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    MlpModel::from_parts(weights, biases, activation)
}

pub fn save_checkpoint<T: Real>(model: &MlpModel<T>, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_model(model))?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<MlpModel<T>> {
    decode_model(&fs::read(path)?)
}

//! Binary parameter container.
//!
//! Little-endian layout:
//!
//! ```text
//! b"ARCK"  u32 version (1)  u32 layer count
//! per layer: u32 in_dim, u32 out_dim, u8 activation tag
//! per layer: out_dim*in_dim f64, row-major
//! u8 feedback flag; if 1, per layer: in_dim*out_dim f64, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{ArError, Result};
use crate::math::Matrix;
use crate::network::{Activation, LayerSpec, NetworkParams};

const MAGIC: &[u8; 4] = b"ARCK";
const VERSION: u32 = 1;

pub fn encode(params: &NetworkParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.depth() as u32).to_le_bytes());
    for s in params.layers() {
        out.extend_from_slice(&(s.in_dim as u32).to_le_bytes());
        out.extend_from_slice(&(s.out_dim as u32).to_le_bytes());
        out.push(s.activation.tag());
    }
    for m in params.weights() {
        put_matrix(&mut out, m);
    }
    match params.feedback() {
        Some(fb) => {
            out.push(1);
            for m in fb {
                put_matrix(&mut out, m);
            }
        }
        None => out.push(0),
    }
    out
}

fn put_matrix(out: &mut Vec<u8>, m: &Matrix) {
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn err(&self, message: impl Into<String>) -> ArError {
        ArError::Checkpoint {
            path: self.path.into(),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                self.err(format!(
                    "truncated: needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("four bytes"),
        ))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix> {
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| self.err("matrix too large"))?;
        let data = self
            .take(n)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<NetworkParams> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
    };
    if r.take(4)? != MAGIC {
        return Err(r.err("not a checkpoint (bad magic)"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let depth = r.u32()? as usize;
    if depth == 0 {
        return Err(r.err("no layers"));
    }
    let mut specs = Vec::with_capacity(depth.min(1024));
    for l in 0..depth {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let tag = r.u8()?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| r.err(format!("layer {l}: unknown activation tag {tag}")))?;
        specs.push(LayerSpec::new(in_dim, out_dim, activation));
    }
    let weights = specs
        .iter()
        .map(|s| r.matrix(s.out_dim, s.in_dim))
        .collect::<Result<Vec<_>>>()?;
    let feedback = match r.u8()? {
        0 => None,
        1 => Some(
            specs
                .iter()
                .map(|s| r.matrix(s.in_dim, s.out_dim))
                .collect::<Result<Vec<_>>>()?,
        ),
        f => return Err(r.err(format!("invalid feedback flag {f}"))),
    };
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    NetworkParams::new(specs, weights, feedback).map_err(|e| r.err(e.to_string()))
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| ArError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    let bytes = fs::read(path).map_err(|e| ArError::io(path, e))?;
    decode(&bytes, path)
}

/// Loads and checks that the layer structure equals `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &[LayerSpec]) -> Result<NetworkParams> {
    let params = load_checkpoint(path)?;
    if params.layers() != expected {
        return Err(ArError::Checkpoint {
            path: path.into(),
            message: format!(
                "architecture {:?} does not match the requested {:?}",
                params.widths(),
                widths_of(expected)
            ),
        });
    }
    Ok(params)
}

fn widths_of(specs: &[LayerSpec]) -> Vec<usize> {
    specs
        .first()
        .map(|s| s.in_dim)
        .into_iter()
        .chain(specs.iter().map(|s| s.out_dim))
        .collect()
}

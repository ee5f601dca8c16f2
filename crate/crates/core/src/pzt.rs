//! PZT tensor files.
//!
//! Layout, little-endian throughout:
//!
//! | bytes      | content                                   |
//! |------------|-------------------------------------------|
//! | 0..4       | magic `PZT1`                              |
//! | 4          | dtype code (1 = f32, 2 = f64)             |
//! | 5          | ndim (1..=8)                              |
//! | 6..8       | zero padding                              |
//! | 8..8+4n    | ndim `u32` dimension sizes                |
//! | rest       | row-major payload, product(dims) scalars  |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{DType, Tensor};

pub const MAGIC: &[u8; 4] = b"PZT1";
pub const MAX_NDIM: usize = 8;
const HEADER_LEN: usize = 8;

pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    if t.ndim() > MAX_NDIM {
        return Err(Error::Format {
            field: "ndim",
            detail: format!("{} axes exceeds the maximum of {MAX_NDIM}", t.ndim()),
        });
    }
    let dtype = t.dtype();
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * t.ndim() + dtype.size_of() * t.len());
    buf.extend_from_slice(MAGIC);
    buf.push(dtype.code());
    buf.push(t.ndim() as u8);
    buf.extend_from_slice(&[0, 0]);
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::Format {
            field: "dims",
            detail: format!("dimension {d} does not fit in u32"),
        })?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    match dtype {
        DType::F32 => t
            .data()
            .iter()
            .for_each(|&v| buf.extend_from_slice(&(v as f32).to_le_bytes())),
        DType::F64 => t
            .data()
            .iter()
            .for_each(|&v| buf.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(buf)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Length {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format {
            field: "magic",
            detail: format!("expected \"PZT1\", found {:?}", String::from_utf8_lossy(&bytes[0..4])),
        });
    }
    let dtype = DType::from_code(bytes[4]).ok_or_else(|| Error::Format {
        field: "dtype",
        detail: format!("unknown dtype code {}", bytes[4]),
    })?;
    let ndim = bytes[5] as usize;
    if ndim == 0 || ndim > MAX_NDIM {
        return Err(Error::Format {
            field: "ndim",
            detail: format!("ndim {ndim} outside 1..={MAX_NDIM}"),
        });
    }
    if bytes[6] != 0 || bytes[7] != 0 {
        return Err(Error::Format {
            field: "padding",
            detail: "header padding bytes must be zero".into(),
        });
    }
    let dims_end = HEADER_LEN + 4 * ndim;
    if bytes.len() < dims_end {
        return Err(Error::Length {
            expected: dims_end,
            actual: bytes.len(),
        });
    }
    let shape: Vec<usize> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    if shape.contains(&0) {
        return Err(Error::Format {
            field: "dims",
            detail: format!("zero-sized dimension in {shape:?}"),
        });
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format {
            field: "dims",
            detail: format!("element count of {shape:?} overflows"),
        })?;
    let expected = count
        .checked_mul(dtype.size_of())
        .and_then(|n| n.checked_add(dims_end))
        .ok_or_else(|| Error::Format {
            field: "dims",
            detail: format!("payload size of {shape:?} overflows"),
        })?;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    let payload = &bytes[dims_end..];
    let data = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        DType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    };
    Tensor::new(shape, data, dtype)
}

pub fn write_to(t: &Tensor, mut w: impl Write) -> std::io::Result<()> {
    let bytes = encode(t).map_err(std::io::Error::other)?;
    w.write_all(&bytes)
}

pub fn read_from(mut r: impl Read) -> Result<Tensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::storage("<reader>", e))?;
    decode(&bytes)
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(t)?;
    fs::write(path, bytes).map_err(|e| Error::storage(path, e))
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    decode(&bytes)
}

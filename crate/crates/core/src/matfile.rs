//! Binary matrix interchange file.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic  b"ASMX" (f32 values) or b"ASMD" (f64 values)
//! 4       4     rows   u32
//! 8       4     cols   u32
//! 12      w*r*c values, row-major, w = 4 or 8
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ASMX";
pub const MAGIC_F64: [u8; 4] = *b"ASMD";
const HEADER_LEN: usize = 12;

trait Element: Copy {
    const MAGIC: [u8; 4];
    const WIDTH: usize;
    fn put(self, out: &mut Vec<u8>);
    fn take(bytes: &[u8]) -> Self;
}

impl Element for f32 {
    const MAGIC: [u8; 4] = MAGIC;
    const WIDTH: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl Element for f64 {
    const MAGIC: [u8; 4] = MAGIC_F64;
    const WIDTH: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }
}

fn encode_with<T: Element>(rows: usize, cols: usize, values: &[T]) -> Vec<u8> {
    assert_eq!(rows * cols, values.len(), "matrix shape does not match data");
    let mut out = Vec::with_capacity(HEADER_LEN + T::WIDTH * values.len());
    out.extend_from_slice(&T::MAGIC);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for &v in values {
        v.put(&mut out);
    }
    out
}

fn decode_with<T: Element>(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<T>), String> {
    if bytes.len() < HEADER_LEN || bytes[..4] != T::MAGIC {
        return Err("missing matrix header".into());
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let (rows, cols) = (word(4), word(8));
    let body = &bytes[HEADER_LEN..];
    if body.len() != T::WIDTH * rows * cols {
        return Err(format!(
            "header declares {rows}x{cols} but body holds {} bytes",
            body.len()
        ));
    }
    Ok((rows, cols, body.chunks_exact(T::WIDTH).map(T::take).collect()))
}

fn read_with<T: Element>(path: &Path) -> Result<(usize, usize, Vec<T>)> {
    decode_with(&fs::read(path)?).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn encode(rows: usize, cols: usize, values: &[f32]) -> Vec<u8> {
    encode_with(rows, cols, values)
}

/// Returns `(rows, cols, values)`.
pub fn decode(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f32>), String> {
    decode_with(bytes)
}

pub fn write(path: impl AsRef<Path>, rows: usize, cols: usize, values: &[f32]) -> Result<()> {
    fs::write(path, encode(rows, cols, values))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f32>)> {
    read_with(path.as_ref())
}

pub fn encode_f64(rows: usize, cols: usize, values: &[f64]) -> Vec<u8> {
    encode_with(rows, cols, values)
}

pub fn decode_f64(bytes: &[u8]) -> std::result::Result<(usize, usize, Vec<f64>), String> {
    decode_with(bytes)
}

pub fn write_f64(path: impl AsRef<Path>, rows: usize, cols: usize, values: &[f64]) -> Result<()> {
    fs::write(path, encode_f64(rows, cols, values))?;
    Ok(())
}

pub fn read_f64(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    read_with(path.as_ref())
}

//! Versioned little-endian binary container for gridded f64 arrays.
//!
//! Layout: magic `PDLF`, format version (u32), width (u32), height (u32),
//! array count (u32), pixel size (f64), then each array as `width*height`
//! f64 values in row-major order (index = y*width + x). Flow fields store
//! three arrays (u, v, p); concentration snapshots store one.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"PDLF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic at byte 0: expected PDLF")]
    BadMagic,
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("corrupt header: {0}")]
    BadHeader(String),
    #[error("truncated payload: expected {expected} f64 values, got {got}")]
    Truncated { expected: usize, got: usize },
}

#[derive(Debug, Clone)]
pub struct ArrayFile {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub arrays: Vec<Vec<f64>>,
}

pub fn write_arrays(
    path: &Path,
    width: usize,
    height: usize,
    pixel_size: f64,
    arrays: &[&[f64]],
) -> Result<(), ContainerError> {
    let n = width * height;
    for a in arrays {
        assert_eq!(a.len(), n, "array length must equal width*height");
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(width as u32).to_le_bytes())?;
    w.write_all(&(height as u32).to_le_bytes())?;
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    w.write_all(&pixel_size.to_le_bytes())?;
    for a in arrays {
        for x in *a {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_arrays(path: &Path) -> Result<ArrayFile, ContainerError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(ContainerError::BadVersion(version));
    }
    let width = read_u32(&mut r)? as usize;
    let height = read_u32(&mut r)? as usize;
    let n_arrays = read_u32(&mut r)? as usize;
    let pixel_size = read_f64(&mut r)?;
    if width == 0 || height == 0 {
        return Err(ContainerError::BadHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if !(pixel_size.is_finite() && pixel_size > 0.0) {
        return Err(ContainerError::BadHeader(format!(
            "non-positive pixel size {pixel_size}"
        )));
    }
    let n = width * height;
    let mut arrays = Vec::with_capacity(n_arrays);
    for _ in 0..n_arrays {
        let mut a = Vec::with_capacity(n);
        for i in 0..n {
            match read_f64(&mut r) {
                Ok(x) => a.push(x),
                Err(_) => return Err(ContainerError::Truncated { expected: n, got: i }),
            }
        }
        arrays.push(a);
    }
    Ok(ArrayFile {
        width,
        height,
        pixel_size,
        arrays,
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ContainerError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, ContainerError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

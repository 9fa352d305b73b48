//! Binary field dumps.
//!
//! Layout (all little-endian):
//!
//! | offset | size | content                         |
//! |--------|------|---------------------------------|
//! | 0      | 8    | magic `SNLSFLD1`                |
//! | 8      | 4    | dimension `d` (u32)             |
//! | 12     | 4    | points per axis `N` (u32)       |
//! | 16     | 8    | half-width `L` (f64)            |
//! | 24     | 8    | reserved, zero                  |
//! | 32     | 16·N^d | row-major `(re, im)` f64 pairs |

use std::io::{Read, Write};

use num_complex::Complex;

use super::{ComplexField, GridSpec};
use crate::{Error, Real, Result};

pub const MAGIC: [u8; 8] = *b"SNLSFLD1";
pub const HEADER_LEN: usize = 32;

pub fn write_field<W: Write, T: Real>(mut out: W, field: &ComplexField<T>) -> Result<()> {
    let grid = field.grid();
    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(&MAGIC);
    header[8..12].copy_from_slice(&(grid.dim() as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(grid.points() as u32).to_le_bytes());
    header[16..24].copy_from_slice(&grid.half_width().to_le_bytes());
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(16 * field.values().len());
    for v in field.values() {
        body.extend_from_slice(&v.re.as_f64().to_le_bytes());
        body.extend_from_slice(&v.im.as_f64().to_le_bytes());
    }
    out.write_all(&body)?;
    Ok(())
}

pub fn read_field<R: Read, T: Real>(mut input: R) -> Result<ComplexField<T>> {
    let mut header = [0u8; HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|e| Error::Format(format!("short header: {e}")))?;
    if header[..8] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let word = |r: std::ops::Range<usize>| -> [u8; 4] { header[r].try_into().unwrap() };
    let dim = u32::from_le_bytes(word(8..12)) as usize;
    let points = u32::from_le_bytes(word(12..16)) as usize;
    let half_width = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let grid = GridSpec::new(dim, points, half_width)
        .map_err(|e| Error::Format(format!("header describes an invalid grid: {e}")))?;
    let mut body = vec![0u8; 16 * grid.len()];
    input
        .read_exact(&mut body)
        .map_err(|e| Error::Format(format!("truncated body: {e}")))?;
    let values = body
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex::new(T::of(re), T::of(im))
        })
        .collect();
    ComplexField::new(grid, values)
}

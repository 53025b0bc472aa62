//! Flat binary container for fields.
//!
//! Layout: `n, Nx, Nt` as little-endian `u64`, then `Lx, Lt` as little-endian
//! `f64`, then interleaved `(re, im)` doubles in row-major `(x₁,…,x_n,t)` order.

use super::{Field, GridSpec};
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::io::{Read, Write};

pub(crate) fn write_grid<W: Write>(w: &mut W, g: &GridSpec) -> Result<()> {
    for v in [g.n, g.nx, g.nt] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    w.write_all(&g.lx.to_le_bytes())?;
    w.write_all(&g.lt.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub(crate) fn read_grid<R: Read>(r: &mut R) -> Result<GridSpec> {
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = usize::try_from(read_u64(r)?).map_err(|_| Error::Malformed("dimension".into()))?;
    }
    let lx = read_f64(r)?;
    let lt = read_f64(r)?;
    GridSpec::new(dims[0], dims[1], dims[2], lx, lt)
}

pub(crate) fn write_samples<W: Write>(w: &mut W, v: &[C64]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 16);
    for z in v {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_samples<R: Read>(r: &mut R, count: usize) -> Result<Vec<C64>> {
    let mut buf = vec![0u8; count * 16];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect())
}

pub fn write_field<W: Write>(w: &mut W, f: &Field) -> Result<()> {
    write_grid(w, f.grid())?;
    write_samples(w, f.values())
}

pub fn read_field<R: Read>(r: &mut R) -> Result<Field> {
    let grid = read_grid(r)?;
    let values = read_samples(r, grid.len())?;
    Field::from_values(grid, values)
}

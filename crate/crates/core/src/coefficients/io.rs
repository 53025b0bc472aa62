//! Binary container for coefficient fields.
//!
//! Layout: the field header (`n, Nx, Nt` as `u64`, `Lx, Lt` as `f64`), then
//! `c1, c2, c3` as `f64`, then the S block (`n²` complex entries per point,
//! row-major, as interleaved `(re, im)`), then the D block (`n²` real entries
//! per point). All values are little-endian.

use super::{CoefficientField, EllipticityParams, SpatialCube, ZERO_C, ZERO_R};
use crate::error::{Error, Result};
use crate::lattice::{read_grid, read_samples, write_grid, write_samples};
use num_complex::Complex64 as C64;
use std::io::{Read, Write};

pub fn write_coefficients<W: Write>(w: &mut W, c: &CoefficientField) -> Result<()> {
    write_grid(w, &c.grid)?;
    for v in [c.params.c1, c.params.c2, c.params.c3] {
        w.write_all(&v.to_le_bytes())?;
    }
    let n = c.n();
    let s: Vec<C64> = c.s.iter().flat_map(|m| (0..n).flat_map(move |i| (0..n).map(move |j| m[i][j]))).collect();
    write_samples(w, &s)?;
    let mut buf = Vec::with_capacity(c.d.len() * n * n * 8);
    for m in &c.d {
        for row in m.iter().take(n) {
            for v in row.iter().take(n) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_coefficients<R: Read>(r: &mut R) -> Result<CoefficientField> {
    let grid = read_grid(r)?;
    let mut p = [0.0; 3];
    for v in &mut p {
        *v = crate::lattice::io_read_f64(r)?;
    }
    let params = EllipticityParams::new(p[0], p[1], p[2])?;
    let n = grid.n;
    let s_flat = read_samples(r, grid.len() * n * n)?;
    let mut d_bytes = vec![0u8; grid.len() * n * n * 8];
    r.read_exact(&mut d_bytes)?;
    let d_flat: Vec<f64> = d_bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    if s_flat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) || d_flat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let s = s_flat
        .chunks_exact(n * n)
        .map(|blk| {
            let mut m = ZERO_C;
            for i in 0..n {
                for j in 0..n {
                    m[i][j] = blk[i * n + j];
                }
            }
            m
        })
        .collect();
    let d = d_flat
        .chunks_exact(n * n)
        .map(|blk| {
            let mut m = ZERO_R;
            for i in 0..n {
                for j in 0..n {
                    m[i][j] = blk[i * n + j];
                }
            }
            m
        })
        .collect();
    Ok(CoefficientField { grid, s, d, params, q0: SpatialCube::full(&grid), label: String::from("file") })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{generate, Family, GeneratorSpec};
    use crate::lattice::GridSpec;

    #[test]
    fn roundtrip() {
        let g = GridSpec::unit(2, 4, 4).unwrap();
        let c = generate(&GeneratorSpec::new(Family::RandomSmooth, 0.4, 9), &g).unwrap();
        let mut bytes = Vec::new();
        write_coefficients(&mut bytes, &c).unwrap();
        let back = read_coefficients(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.s, c.s);
        assert_eq!(back.d, c.d);
        assert_eq!(back.params, c.params);
    }
}

//! Coefficient fields `A = S + D` with complex elliptic `S` and real
//! anti-symmetric `D`.

mod bmo;
mod generate;
mod io;

pub use bmo::{bmo_norm, bmo_norm_entry, john_nirenberg_growth, BmoMode, GrowthRow, GrowthTable};
pub use generate::{generate, Family, GeneratorExtra, GeneratorSpec};
pub use io::{read_coefficients, write_coefficients};

use crate::error::{Error, Result};
use crate::lattice::{GridSpec, MAX_DIM};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub type CMat = [[C64; MAX_DIM]; MAX_DIM];
pub type RMat = [[f64; MAX_DIM]; MAX_DIM];

pub const ZERO_C: CMat = [[C64 { re: 0.0, im: 0.0 }; MAX_DIM]; MAX_DIM];
pub const ZERO_R: RMat = [[0.0; MAX_DIM]; MAX_DIM];

pub fn identity_c(n: usize) -> CMat {
    let mut m = ZERO_C;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = C64::new(1.0, 0.0);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl EllipticityParams {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        if !(c1 > 0.0 && c2 >= c1 && c3 >= 0.0) {
            return Err(Error::InvalidParameter(format!("need 0 < c1 <= c2 and c3 >= 0, got ({c1}, {c2}, {c3})")));
        }
        Ok(Self { c1, c2, c3 })
    }
}

/// Grid-aligned spatial cube given by its lower corner and side, in cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpatialCube {
    pub origin: [usize; MAX_DIM],
    pub side: usize,
}

impl SpatialCube {
    pub fn full(grid: &GridSpec) -> Self {
        Self { origin: [0; MAX_DIM], side: grid.nx }
    }

    pub fn check(&self, grid: &GridSpec) -> Result<()> {
        if self.side == 0 || self.side > grid.nx || self.origin[..grid.n].iter().any(|&o| o >= grid.nx) {
            return Err(Error::InvalidParameter(format!(
                "cube {:?} is not a grid-aligned cube of the {}-point torus",
                self, grid.nx
            )));
        }
        Ok(())
    }

    /// Flat spatial indices covered, with periodic wraparound.
    pub fn spatial_indices(&self, grid: &GridSpec) -> Vec<usize> {
        let count = self.side.pow(grid.n as u32);
        (0..count)
            .map(|r| {
                let mut rem = r;
                let mut xs = [0; MAX_DIM];
                for a in (0..grid.n).rev() {
                    xs[a] = (self.origin[a] + rem % self.side) % grid.nx;
                    rem /= self.side;
                }
                grid.spatial_index(&xs)
            })
            .collect()
    }

    /// The concentric cube with `factor` times the side.
    pub fn dilate(&self, factor: usize, grid: &GridSpec) -> Self {
        let grow = self.side * (factor - 1) / 2;
        let mut origin = self.origin;
        for o in origin.iter_mut().take(grid.n) {
            *o = (*o + grid.nx * (grow / grid.nx + 1) - grow) % grid.nx;
        }
        Self { origin, side: self.side * factor }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub grid: GridSpec,
    pub s: Vec<CMat>,
    pub d: Vec<RMat>,
    pub params: EllipticityParams,
    pub q0: SpatialCube,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub c1_observed: f64,
    pub c2_observed: f64,
    pub antisym_defect: f64,
    pub ok: bool,
}

impl CoefficientField {
    pub fn identity(grid: &GridSpec) -> Self {
        Self {
            grid: *grid,
            s: vec![identity_c(grid.n); grid.len()],
            d: vec![ZERO_R; grid.len()],
            params: EllipticityParams { c1: 1.0, c2: 1.0, c3: 0.0 },
            q0: SpatialCube::full(grid),
            label: "identity".into(),
        }
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    /// `A = S + D` at lattice point `p`.
    #[inline]
    pub fn a(&self, p: usize) -> CMat {
        let mut m = self.s[p];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += self.d[p][i][j];
            }
        }
        m
    }

    /// `A* = S* − D` at lattice point `p`.
    #[inline]
    pub fn a_adjoint(&self, p: usize) -> CMat {
        let mut m = ZERO_C;
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = self.s[p][j][i].conj() - self.d[p][i][j];
            }
        }
        m
    }

    pub fn has_d(&self) -> bool {
        self.d.iter().any(|m| m.iter().flatten().any(|&v| v != 0.0))
    }

    /// Same `S`, with `D` multiplied by `alpha`.
    pub fn scale_d(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.d.par_iter_mut().for_each(|m| {
            for v in m.iter_mut().flatten() {
                *v *= alpha;
            }
        });
        out.params.c3 *= alpha.abs();
        out
    }

    /// Largest entry of `|D|` over the lattice.
    pub fn d_max(&self) -> f64 {
        self.d.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Entry `(i, j)` of `D` as a lattice array.
    pub fn d_entry(&self, i: usize, j: usize) -> Vec<f64> {
        self.d.iter().map(|m| m[i][j]).collect()
    }

    pub fn validate(&self) -> EllipticityReport {
        let n = self.n();
        let per_point: Vec<(f64, f64, f64)> = self
            .s
            .par_iter()
            .zip(&self.d)
            .map(|(s, d)| {
                let sm = DMatrix::from_fn(n, n, |i, j| s[i][j]);
                let herm = (&sm + sm.adjoint()) * C64::new(0.5, 0.0);
                let low = SymmetricEigen::new(herm).eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
                let norm = sm.svd(false, false).singular_values.max();
                let mut defect = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        defect = defect.max((d[i][j] + d[j][i]).abs());
                    }
                }
                (low, norm, defect)
            })
            .collect();
        let c1 = per_point.iter().fold(f64::INFINITY, |m, p| m.min(p.0));
        let c2 = per_point.iter().fold(0.0f64, |m, p| m.max(p.1));
        let def = per_point.iter().fold(0.0f64, |m, p| m.max(p.2));
        EllipticityReport { c1_observed: c1, c2_observed: c2, antisym_defect: def, ok: c1 > 0.0 && def == 0.0 }
    }

    /// Per-time average of `D` over `q0`, indexed by time slice.
    pub fn d_average(&self, q0: &SpatialCube) -> Result<Vec<RMat>> {
        q0.check(&self.grid)?;
        let idx = q0.spatial_indices(&self.grid);
        let nt = self.grid.nt;
        let n = self.n();
        Ok((0..nt)
            .map(|it| {
                let mut avg = ZERO_R;
                for i in 0..n {
                    for j in (i + 1)..n {
                        // Shifted mean: exact when the slice is constant.
                        let pivot = self.d[idx[0] * nt + it][i][j];
                        let dev: Vec<f64> = idx.iter().map(|&s| self.d[s * nt + it][i][j] - pivot).collect();
                        let mean = pivot + crate::reduce::sum_f64(&dev) / dev.len() as f64;
                        avg[i][j] = mean;
                        avg[j][i] = -mean;
                    }
                }
                avg
            })
            .collect())
    }

    /// Replace `D` by `D − ⨍_{Q₀} D` slice by slice.
    ///
    /// Slices whose average is already below roundoff are left untouched, so an
    /// already normalized field is returned unchanged.
    pub fn normalize_d(&self, q0: &SpatialCube) -> Result<Self> {
        let avg = self.d_average(q0)?;
        let tol = 1e-14 * self.d_max().max(f64::MIN_POSITIVE);
        let nt = self.grid.nt;
        let n = self.n();
        let mut out = self.clone();
        out.q0 = *q0;
        out.d.par_iter_mut().enumerate().for_each(|(p, m)| {
            let a = &avg[p % nt];
            if a.iter().flatten().all(|v| v.abs() <= tol) {
                return;
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    m[i][j] -= a[i][j];
                    m[j][i] = -m[i][j];
                }
            }
        });
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_validates() {
        let g = GridSpec::unit(2, 4, 4).unwrap();
        let r = CoefficientField::identity(&g).validate();
        assert!((r.c1_observed - 1.0).abs() < 1e-14);
        assert!((r.c2_observed - 1.0).abs() < 1e-14);
        assert_eq!(r.antisym_defect, 0.0);
        assert!(r.ok);
    }

    #[test]
    fn diagonal_s() {
        let g = GridSpec::unit(2, 4, 4).unwrap();
        let mut c = CoefficientField::identity(&g);
        for s in &mut c.s {
            s[0][0] = C64::new(2.0, 0.0);
            s[1][1] = C64::new(0.5, 0.0);
        }
        let r = c.validate();
        assert!((r.c1_observed - 0.5).abs() < 1e-14);
        assert!((r.c2_observed - 2.0).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_hermitian_part_reported() {
        let g = GridSpec::unit(2, 4, 4).unwrap();
        let mut c = CoefficientField::identity(&g);
        c.s[5][1][1] = C64::new(-0.1, 3.0);
        let r = c.validate();
        assert!(!r.ok);
        assert!(r.c1_observed < 0.0);
    }

    #[test]
    fn constant_antisym_normalizes_to_zero() {
        let g = GridSpec::unit(2, 8, 4).unwrap();
        let mut c = CoefficientField::identity(&g);
        for d in &mut c.d {
            d[0][1] = 0.7;
            d[1][0] = -0.7;
        }
        let z = c.normalize_d(&SpatialCube::full(&g)).unwrap();
        assert_eq!(z.d_max(), 0.0);
        let again = z.normalize_d(&SpatialCube::full(&g)).unwrap();
        assert_eq!(again, z);
    }

    #[test]
    fn cube_dilation_is_concentric() {
        let g = GridSpec::unit(2, 8, 4).unwrap();
        let q = SpatialCube { origin: [4, 4, 0], side: 2 };
        let q2 = q.dilate(2, &g);
        assert_eq!(q2.side, 4);
        assert_eq!(&q2.origin[..2], &[3, 3]);
    }
}

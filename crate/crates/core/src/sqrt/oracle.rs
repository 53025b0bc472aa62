//! Dense principal square root of the assembled operator matrix.
//!
//! The matrix of `H` in the lattice basis is reduced to complex Schur form
//! `H = Q T Q*`, the upper-triangular root `R` of `T` is built column by column
//! (Björck–Hammarling), and `O = Q R Q*`.

use crate::error::{Error, Result};
use crate::lattice::Field;
use crate::operator::ParabolicOperator;
use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

pub const ORACLE_DOF_CAP: usize = 4096;

/// Deflation threshold of the Schur iteration. Machine epsilon stalls on the kernel of `H`.
const SCHUR_EPS: f64 = 1e-14;

/// Eigenvalues of `H` may sit left of the imaginary axis by at most this fraction of `‖H‖`.
const SPECTRUM_SLACK: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct DenseOracle {
    pub h: DMatrix<C64>,
    pub root: DMatrix<C64>,
    /// `‖O² − H‖_F / ‖H‖_F`.
    pub residual: f64,
    /// Smallest real part among the eigenvalues of `H`.
    pub min_re_eigenvalue: f64,
    grid: crate::lattice::GridSpec,
}

impl DenseOracle {
    pub fn apply(&self, u: &Field) -> Result<Field> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let v = DVector::from_column_slice(u.values());
        let w = &self.root * v;
        Field::from_values(self.grid, w.as_slice().to_vec())
    }
}

/// Matrix of `H` in the lattice basis, column `p` being `H e_p`.
pub fn assemble_matrix(op: &ParabolicOperator) -> Result<DMatrix<C64>> {
    let grid = *op.grid();
    let dof = grid.len();
    if dof > ORACLE_DOF_CAP {
        return Err(Error::SizeCap { dof, cap: ORACLE_DOF_CAP });
    }
    let cols: Vec<Vec<C64>> = (0..dof)
        .into_par_iter()
        .map(|p| {
            let mut e = Field::zeros(grid);
            e.values_mut()[p] = C64::new(1.0, 0.0);
            op.apply(&e).map(|f| f.into_values())
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(dof, dof, |i, j| cols[j][i]))
}

/// Principal square root of an upper-triangular matrix.
fn triangular_sqrt(t: &DMatrix<C64>) -> DMatrix<C64> {
    let n = t.nrows();
    let mut r = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        r[(i, i)] = t[(i, i)].sqrt();
    }
    for j in 1..n {
        for i in (0..j).rev() {
            let mut s = t[(i, j)];
            for k in (i + 1)..j {
                s -= r[(i, k)] * r[(k, j)];
            }
            let den = r[(i, i)] + r[(j, j)];
            // Both diagonal roots vanish only on the kernel, where the numerator vanishes too.
            r[(i, j)] = if den.norm() > f64::MIN_POSITIVE { s / den } else { C64::new(0.0, 0.0) };
        }
    }
    r
}

/// `P M P` with `P` the orthogonal projector off `span{1, (−1)^{i_t}}`.
///
/// That span is the kernel of both `H` and `H*`, so the exact root satisfies
/// `√H = P √H P`. The two zero eigenvalues come out of the Schur form as
/// rounding-size numbers whose square roots are far above rounding size, and
/// the projection removes them.
fn project_kernel(m: &DMatrix<C64>, grid: &crate::lattice::GridSpec) -> DMatrix<C64> {
    let dof = m.nrows();
    let s = 1.0 / (dof as f64).sqrt();
    let k1 = DVector::from_element(dof, C64::new(s, 0.0));
    let k2 = DVector::from_fn(dof, |i, _| C64::new(if (i % grid.nt).is_multiple_of(2) { s } else { -s }, 0.0));
    let mut p = DMatrix::<C64>::identity(dof, dof);
    p -= &k1 * k1.adjoint();
    p -= &k2 * k2.adjoint();
    &p * m * &p
}

pub fn sqrt_dense_oracle(op: &ParabolicOperator) -> Result<DenseOracle> {
    let h = assemble_matrix(op)?;
    let hn = h.norm();
    let max_iter = 200 * h.nrows();
    let schur = Schur::try_new(h.clone(), SCHUR_EPS, max_iter)
        .ok_or(Error::NonConvergence { iterations: max_iter, residual: f64::NAN })?;
    let (q, t) = schur.unpack();
    let min_re = (0..t.nrows()).map(|i| t[(i, i)].re).fold(f64::INFINITY, f64::min);
    if min_re < -SPECTRUM_SLACK * hn {
        return Err(Error::SpectrumViolation(format!("eigenvalue with real part {min_re:.3e} for ‖H‖ = {hn:.3e}")));
    }
    let r = triangular_sqrt(&t);
    let root = project_kernel(&(&q * r * q.adjoint()), op.grid());
    let residual = (&root * &root - &h).norm() / hn;
    Ok(DenseOracle { h, root, residual, min_re_eigenvalue: min_re, grid: *op.grid() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;
    use crate::lattice::{forward, inverse, Frequencies, GridSpec};

    #[test]
    fn triangular_root_squares_back() {
        let t = DMatrix::from_fn(4, 4, |i, j| {
            if j >= i {
                C64::new(1.0 + i as f64, (j - i) as f64 * 0.3)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let r = triangular_sqrt(&t);
        assert!((&r * &r - &t).norm() < 1e-13 * t.norm());
    }

    #[test]
    fn heat_root_is_the_fourier_symbol() {
        let g = GridSpec::unit(2, 4, 4).unwrap();
        let op = ParabolicOperator::new(CoefficientField::identity(&g));
        let o = sqrt_dense_oracle(&op).unwrap();
        assert!(o.residual < 1e-10);
        let u = crate::sampling::generic(&g, 3, 0, false);
        let freqs = Frequencies::new(&g);
        let mut spec = forward(&u);
        freqs.for_each_mut(&mut spec, |z, m| *z *= (op.time_symbol(m) + m.xi_sqr()).sqrt());
        let expect = inverse(&g, spec);
        let got = o.apply(&u).unwrap();
        assert!(got.sub(&expect).norm() < 1e-8 * expect.norm());
    }

    #[test]
    fn size_cap() {
        let g = GridSpec::unit(2, 16, 32).unwrap();
        let op = ParabolicOperator::new(CoefficientField::identity(&g));
        assert!(matches!(assemble_matrix(&op), Err(Error::SizeCap { .. })));
    }
}

//! Exact Fourier-multiplier derivatives and the energy norms built from them.

use super::fft::{apply_symbol, apply_symbols, forward, Frequencies, Mode};
use super::{Field, VectorField};
use crate::error::Result;
use crate::reduce;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Symbol of `Dₜ^{1/2}`: `|τ|^{1/2}`, zero at the zero mode.
#[inline]
pub fn half_dt_symbol(m: &Mode) -> f64 {
    m.tau.abs().sqrt()
}

/// Symbol of `Hₜ`: `i·sgn(τ)`, zero at the zero mode and at the time Nyquist.
#[inline]
pub fn hilbert_symbol(m: &Mode) -> C64 {
    if m.time_nyquist || m.kt == 0 {
        C64::new(0.0, 0.0)
    } else {
        C64::new(0.0, m.tau.signum())
    }
}

/// Symbol of `Dₜ^{1/2}HₜDₜ^{1/2}`: `iτ` off the time-Nyquist line and zero on it.
#[inline]
pub fn time_symbol(m: &Mode) -> C64 {
    hilbert_symbol(m) * m.tau.abs()
}

pub fn gradx(f: &Field) -> Result<VectorField> {
    f.ensure_finite()?;
    let comps = apply_symbols(f, f.grid().n, |j, m| I * m.xi[j]);
    VectorField::new(comps)
}

pub fn divx(v: &VectorField) -> Result<Field> {
    if !v.is_finite() {
        return Err(crate::error::Error::NonFinite);
    }
    let grid = *v.grid();
    let freqs = Frequencies::new(&grid);
    let mut acc = vec![C64::new(0.0, 0.0); grid.len()];
    for (j, c) in v.components().iter().enumerate() {
        let spec = forward(c);
        let mut s = spec;
        freqs.for_each_mut(&mut s, |z, m| *z *= I * m.xi[j]);
        for (a, b) in acc.iter_mut().zip(s) {
            *a += b;
        }
    }
    Ok(super::fft::inverse(&grid, acc))
}

pub fn half_dt(f: &Field) -> Result<Field> {
    f.ensure_finite()?;
    Ok(apply_symbol(f, |m| C64::new(half_dt_symbol(m), 0.0)))
}

pub fn hilbert_t(f: &Field) -> Result<Field> {
    f.ensure_finite()?;
    Ok(apply_symbol(f, hilbert_symbol))
}

/// `∂t` with symbol `iτ`, keeping the time-Nyquist mode.
pub fn dt(f: &Field) -> Result<Field> {
    f.ensure_finite()?;
    Ok(apply_symbol(f, |m| I * m.tau))
}

/// `Dₜ^{1/2}HₜDₜ^{1/2}`, the time part used by the operator.
pub fn time_symbol_factorized(f: &Field) -> Result<Field> {
    f.ensure_finite()?;
    Ok(apply_symbol(f, time_symbol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l2: f64,
    pub energy: f64,
    pub d_seminorm: f64,
}

/// Norms evaluated in physical space from derivative fields.
pub fn norms(f: &Field) -> Result<Norms> {
    let l2 = f.norm();
    let g = gradx(f)?.norm_sqr();
    let h = half_dt(f)?.norm_sqr();
    let d = (g + h).sqrt();
    Ok(Norms { l2, energy: (d * d + l2 * l2).sqrt(), d_seminorm: d })
}

/// Norms evaluated by Parseval from the spectrum.
pub fn norms_spectral(f: &Field) -> Result<Norms> {
    f.ensure_finite()?;
    let grid = *f.grid();
    let freqs = Frequencies::new(&grid);
    let spec = forward(f);
    let scale = grid.cell_volume() / grid.len() as f64;
    let nt = grid.nt;
    let l2sq: Vec<f64> = spec.iter().map(|z| z.norm_sqr()).collect();
    let dsq: Vec<f64> = spec
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let m = freqs.mode(i / nt, i % nt);
            z.norm_sqr() * (m.xi_sqr() + m.tau.abs())
        })
        .collect();
    let l2 = (reduce::sum_f64(&l2sq) * scale).sqrt();
    let d = (reduce::sum_f64(&dsq) * scale).sqrt();
    Ok(Norms { l2, energy: (d * d + l2 * l2).sqrt(), d_seminorm: d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridSpec;
    use std::f64::consts::PI;

    fn grid() -> GridSpec {
        GridSpec::new(2, 8, 16, 1.0, 1.0).unwrap()
    }

    fn mode(g: GridSpec, k: [f64; 2], m: f64) -> Field {
        Field::from_fn(g, move |x, t| C64::from_polar(1.0, 2.0 * PI * (k[0] * x[0] + k[1] * x[1] + m * t)))
    }

    fn close(a: &Field, b: &Field, tol: f64) -> bool {
        a.sub(b).norm() <= tol * b.norm().max(1e-300)
    }

    #[test]
    fn gradient_of_single_mode() {
        let g = grid();
        let f = mode(g, [1.0, 0.0], 0.0);
        let gr = gradx(&f).unwrap();
        assert!(close(gr.component(0), &f.scale(I * 2.0 * PI), 1e-12));
        assert!(gr.component(1).norm() < 1e-12);
        let c = gradx(&Field::constant(g, C64::new(3.0, 0.0))).unwrap();
        assert!(c.norm() < 1e-12);
    }

    #[test]
    fn laplacian_of_mode() {
        let g = grid();
        let f = mode(g, [1.0, 0.0], 0.0);
        let lap = divx(&gradx(&f).unwrap()).unwrap();
        assert!(close(&lap, &f.scale(C64::new(-(2.0 * PI).powi(2), 0.0)), 1e-12));
    }

    #[test]
    fn time_multipliers_on_mode() {
        let g = grid();
        let f = mode(g, [0.0, 0.0], 1.0);
        let w = 2.0 * PI;
        assert!(close(&half_dt(&f).unwrap(), &f.scale(C64::new(w.sqrt(), 0.0)), 1e-12));
        assert!(close(&hilbert_t(&f).unwrap(), &f.scale(I), 1e-12));
        assert!(close(&dt(&f).unwrap(), &f.scale(I * w), 1e-12));
        let c = Field::constant(g, C64::new(1.0, 0.0));
        assert!(half_dt(&c).unwrap().norm() < 1e-13);
        assert!(dt(&c).unwrap().norm() < 1e-13);
    }

    #[test]
    fn nyquist_handling() {
        let g = grid();
        let f = mode(g, [0.0, 0.0], 8.0);
        assert!(hilbert_t(&f).unwrap().norm() < 1e-12);
        assert!(time_symbol_factorized(&f).unwrap().norm() < 1e-12);
        let h = half_dt(&f).unwrap();
        assert!(close(&h, &f.scale(C64::new((16.0 * PI).sqrt(), 0.0)), 1e-12));
    }

    #[test]
    fn unit_norms() {
        let g = grid();
        let n = norms(&Field::constant(g, C64::new(1.0, 0.0))).unwrap();
        assert!((n.l2 - 1.0).abs() < 1e-14);
        assert!(n.d_seminorm < 1e-12);
        assert!((n.energy - 1.0).abs() < 1e-14);
        let f = mode(g, [1.0, 0.0], 1.0);
        let n = norms(&f).unwrap();
        let expect = (2.0 * PI).powi(2) + 2.0 * PI;
        assert!((n.d_seminorm.powi(2) - expect).abs() < 1e-10 * expect);
    }
}

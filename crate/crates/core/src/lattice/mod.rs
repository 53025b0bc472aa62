//! Periodic space–time lattice and the fields that live on it.
//!
//! Samples are stored row-major in `(x₁, …, x_n, t)` order, so time is the
//! fastest axis. Spatial axes share one resolution `nx` and period `lx`.

mod calculus;
mod fft;
mod io;

pub use calculus::{
    divx, dt, gradx, half_dt, half_dt_symbol, hilbert_symbol, hilbert_t, norms, norms_spectral, time_symbol,
    time_symbol_factorized, Norms,
};
pub use fft::{apply_symbol, apply_symbols, forward, forward_in_place, inverse, inverse_in_place, Frequencies, Mode};
pub(crate) use io::{read_f64 as io_read_f64, read_grid, read_samples, write_grid, write_samples};
pub use io::{read_field, write_field};

use crate::error::{Error, Result};
use crate::reduce;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Spatial dimension.
    pub n: usize,
    /// Points per spatial axis.
    pub nx: usize,
    /// Points on the time axis.
    pub nt: usize,
    /// Spatial period.
    pub lx: f64,
    /// Time period.
    pub lt: f64,
}

impl GridSpec {
    pub fn new(n: usize, nx: usize, nt: usize, lx: f64, lt: f64) -> Result<Self> {
        let g = Self { n, nx, nt, lx, lt };
        g.validate()?;
        Ok(g)
    }

    /// Unit periods in space and time.
    pub fn unit(n: usize, nx: usize, nt: usize) -> Result<Self> {
        Self::new(n, nx, nt, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_DIM {
            return Err(Error::InvalidGrid(format!("n = {} outside 1..=3", self.n)));
        }
        for (name, v) in [("nx", self.nx), ("nt", self.nt)] {
            if v < 4 || !v.is_power_of_two() {
                return Err(Error::InvalidGrid(format!("{name} = {v} must be a power of two >= 4")));
            }
        }
        if !(self.lx.is_finite() && self.lx > 0.0 && self.lt.is_finite() && self.lt > 0.0) {
            return Err(Error::InvalidGrid("periods must be positive".into()));
        }
        Ok(())
    }

    pub fn spatial_len(&self) -> usize {
        self.nx.pow(self.n as u32)
    }

    pub fn len(&self) -> usize {
        self.spatial_len() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.lt / self.nt as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.n as i32) * self.dt()
    }

    pub fn volume(&self) -> f64 {
        self.lx.powi(self.n as i32) * self.lt
    }

    /// Dyadic parabolic cubes need at least as many time samples as spatial
    /// samples per axis to resolve `time side = (space side)²` at coarse scales.
    pub fn parabolic_compatible(&self) -> bool {
        self.nt >= self.nx
    }

    #[inline]
    pub fn index(&self, xs: &[usize], it: usize) -> usize {
        let mut s = 0;
        for &x in &xs[..self.n] {
            s = s * self.nx + x;
        }
        s * self.nt + it
    }

    /// Spatial multi-index of a flat spatial index.
    #[inline]
    pub fn spatial_coords(&self, mut s: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for a in (0..self.n).rev() {
            out[a] = s % self.nx;
            s /= self.nx;
        }
        out
    }

    #[inline]
    pub fn spatial_index(&self, xs: &[usize]) -> usize {
        let mut s = 0;
        for &x in &xs[..self.n] {
            s = s * self.nx + x;
        }
        s
    }

    /// Signed integer frequency in `[-N/2, N/2)`.
    #[inline]
    pub fn signed_freq(i: usize, len: usize) -> i64 {
        if i < len / 2 {
            i as i64
        } else {
            i as i64 - len as i64
        }
    }

    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Complex samples on the lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn constant(grid: GridSpec, c: C64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!("expected {} samples, got {}", grid.len(), values.len())));
        }
        let f = Self { grid, values };
        if !f.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(f)
    }

    /// Samples `g(x, t)` at the lattice points `x = i·dx`, `t = m·dt`.
    pub fn from_fn<F>(grid: GridSpec, g: F) -> Self
    where
        F: Fn(&[f64], f64) -> C64 + Sync,
    {
        let dx = grid.dx();
        let dt = grid.dt();
        let mut values = vec![C64::new(0.0, 0.0); grid.len()];
        values.par_chunks_mut(grid.nt).enumerate().for_each(|(s, line)| {
            let c = grid.spatial_coords(s);
            let mut x = [0.0; MAX_DIM];
            for a in 0..grid.n {
                x[a] = c[a] as f64 * dx;
            }
            for (it, v) in line.iter_mut().enumerate() {
                *v = g(&x[..grid.n], it as f64 * dt);
            }
        });
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn ensure_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite)
        }
    }

    /// `⟨f, g⟩ = Σ f·ḡ · cell volume`.
    pub fn inner(&self, other: &Field) -> C64 {
        debug_assert_eq!(self.grid, other.grid);
        reduce::dot(&self.values, &other.values) * self.grid.cell_volume()
    }

    pub fn norm_sqr(&self) -> f64 {
        reduce::norm_sqr(&self.values) * self.grid.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// L² norm over the points selected by `mask`.
    pub fn norm_on(&self, mask: &[bool]) -> f64 {
        let s: Vec<f64> = self.values.iter().zip(mask).map(|(z, &m)| if m { z.norm_sqr() } else { 0.0 }).collect();
        (reduce::sum_f64(&s) * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn scale(&self, a: C64) -> Field {
        self.map(|z| z * a)
    }

    pub fn map<F: Fn(C64) -> C64 + Sync>(&self, f: F) -> Field {
        Field { grid: self.grid, values: self.values.par_iter().map(|&z| f(z)).collect() }
    }

    pub fn zip_map<F: Fn(C64, C64) -> C64 + Sync>(&self, other: &Field, f: F) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field { grid: self.grid, values: self.values.par_iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_map(other, |a, b| a - b)
    }

    /// `self += a·x`
    pub fn axpy(&mut self, a: C64, x: &Field) {
        debug_assert_eq!(self.grid, x.grid);
        self.values.par_iter_mut().zip(&x.values).for_each(|(y, &xv)| *y += a * xv);
    }

    pub fn mask(&self, mask: &[bool]) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().zip(mask).map(|(&z, &m)| if m { z } else { C64::new(0.0, 0.0) }).collect(),
        }
    }

    pub fn real_part(&self) -> Field {
        self.map(|z| C64::new(z.re, 0.0))
    }

    /// Largest |imaginary part| relative to the largest modulus.
    pub fn imag_defect(&self) -> f64 {
        let m = self.max_abs();
        if m == 0.0 {
            return 0.0;
        }
        self.values.iter().fold(0.0f64, |acc, z| acc.max(z.im.abs())) / m
    }
}

/// `n` fields on one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: Vec<Field>,
}

impl VectorField {
    pub fn new(components: Vec<Field>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::InvalidParameter("empty vector field".into()))?;
        if components.iter().any(|c| c.grid != first.grid) {
            return Err(Error::GridMismatch);
        }
        if components.len() != first.grid.n {
            return Err(Error::InvalidParameter(format!(
                "expected {} components, got {}",
                first.grid.n,
                components.len()
            )));
        }
        Ok(Self { components })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { components: (0..grid.n).map(|_| Field::zeros(grid)).collect() }
    }

    pub fn constant(grid: GridSpec, c: &[C64]) -> Self {
        Self { components: c.iter().map(|&v| Field::constant(grid, v)).collect() }
    }

    pub fn grid(&self) -> &GridSpec {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Field {
        &self.components[i]
    }

    pub fn into_components(self) -> Vec<Field> {
        self.components
    }

    pub fn inner(&self, other: &VectorField) -> C64 {
        self.components.iter().zip(&other.components).map(|(a, b)| a.inner(b)).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.components.iter().map(Field::norm_sqr).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn norm_on(&self, mask: &[bool]) -> f64 {
        self.components.iter().map(|c| c.norm_on(mask).powi(2)).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(Field::is_finite)
    }

    pub fn scale(&self, a: C64) -> VectorField {
        Self { components: self.components.iter().map(|c| c.scale(a)).collect() }
    }

    pub fn mask(&self, mask: &[bool]) -> VectorField {
        Self { components: self.components.iter().map(|c| c.mask(mask)).collect() }
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        Self { components: self.components.iter().zip(&other.components).map(|(a, b)| a.sub(b)).collect() }
    }
}

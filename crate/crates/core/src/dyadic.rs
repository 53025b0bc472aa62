//! Grid-aligned parabolic dyadic cubes `Δ = Q × I`.
//!
//! At scale `j` the spatial side is `Lx·2^{-j}` and the time side is
//! `Lt·4^{-j}`. Children split every spatial axis in two and time in four.
//! When the time side would fall below one lattice cell it is held at one cell,
//! which is only needed by averaging at scales finer than the parabolic range.

use crate::error::{Error, Result};
use crate::lattice::{Field, GridSpec, MAX_DIM};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cube {
    pub scale: usize,
    /// Cube coordinates along each spatial axis at this scale.
    pub pos: [usize; MAX_DIM],
    /// Cube coordinate along time at this scale.
    pub tpos: usize,
}

#[derive(Debug, Clone)]
pub struct DyadicDecomposition {
    grid: GridSpec,
    j_max: usize,
}

fn log2(v: usize) -> usize {
    v.trailing_zeros() as usize
}

impl DyadicDecomposition {
    /// Scales `0..=j_max` where both the spatial and the time side are whole cells.
    pub fn new(grid: &GridSpec) -> Self {
        let j_max = log2(grid.nx).min(log2(grid.nt) / 2);
        Self { grid: *grid, j_max }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Finest exactly parabolic scale.
    pub fn j_max(&self) -> usize {
        self.j_max
    }

    /// Finest scale with a spatial side of at least one cell.
    pub fn j_finest(&self) -> usize {
        log2(self.grid.nx)
    }

    /// Spatial side of a scale-`j` cube in cells.
    pub fn side_cells(&self, j: usize) -> usize {
        self.grid.nx >> j
    }

    /// Time side of a scale-`j` cube in cells, at least one.
    pub fn time_cells(&self, j: usize) -> usize {
        (self.grid.nt >> (2 * j).min(63)).max(1)
    }

    /// Spatial side length `ℓ(Δ)`.
    pub fn side(&self, j: usize) -> f64 {
        self.grid.lx / (1u64 << j) as f64
    }

    pub fn volume(&self, j: usize) -> f64 {
        let g = &self.grid;
        (self.side_cells(j) as f64 * g.dx()).powi(g.n as i32) * self.time_cells(j) as f64 * g.dt()
    }

    pub fn counts(&self, j: usize) -> (usize, usize) {
        (self.grid.nx / self.side_cells(j), self.grid.nt / self.time_cells(j))
    }

    /// All cubes of scale `j`.
    pub fn cubes(&self, j: usize) -> Vec<Cube> {
        let (cx, ct) = self.counts(j);
        let n = self.grid.n;
        let total = cx.pow(n as u32);
        let mut out = Vec::with_capacity(total * ct);
        for s in 0..total {
            let mut pos = [0; MAX_DIM];
            let mut r = s;
            for a in (0..n).rev() {
                pos[a] = r % cx;
                r /= cx;
            }
            for tpos in 0..ct {
                out.push(Cube { scale: j, pos, tpos });
            }
        }
        out
    }

    /// Scale whose side lies in `[λ, 2λ)`.
    pub fn scale_for(&self, lambda: f64) -> Result<usize> {
        if !(lambda > 0.0) || lambda > self.grid.lx {
            return Err(Error::InvalidParameter(format!("lambda {lambda} outside (0, Lx]")));
        }
        let j = (self.grid.lx / lambda).log2().floor();
        let j = j.max(0.0) as usize;
        if j > self.j_finest() {
            return Err(Error::BelowResolution(format!("lambda {lambda} is finer than one spatial cell")));
        }
        Ok(j)
    }

    /// Flat index of the scale-`j` cube that contains lattice point `idx`.
    pub fn cube_id(&self, j: usize, idx: usize) -> usize {
        let g = &self.grid;
        let (cx, ct) = self.counts(j);
        let sc = self.side_cells(j);
        let tc = self.time_cells(j);
        let c = g.spatial_coords(idx / g.nt);
        let mut s = 0;
        for &x in &c[..g.n] {
            s = s * cx + x / sc;
        }
        s * ct + (idx % g.nt) / tc
    }

    pub fn cube_index(&self, cube: &Cube) -> usize {
        let (cx, ct) = self.counts(cube.scale);
        let mut s = 0;
        for &p in &cube.pos[..self.grid.n] {
            s = s * cx + p;
        }
        s * ct + cube.tpos
    }

    pub fn contains(&self, cube: &Cube, idx: usize) -> bool {
        self.cube_id(cube.scale, idx) == self.cube_index(cube)
    }

    pub fn mask(&self, cube: &Cube) -> Vec<bool> {
        let id = self.cube_index(cube);
        (0..self.grid.len()).map(|i| self.cube_id(cube.scale, i) == id).collect()
    }

    /// Center of a cube in physical coordinates: spatial center and time center.
    pub fn center(&self, cube: &Cube) -> ([f64; MAX_DIM], f64) {
        let g = &self.grid;
        let sc = self.side_cells(cube.scale) as f64 * g.dx();
        let tc = self.time_cells(cube.scale) as f64 * g.dt();
        let mut x = [0.0; MAX_DIM];
        for a in 0..g.n {
            x[a] = (cube.pos[a] as f64 + 0.5) * sc;
        }
        (x, (cube.tpos as f64 + 0.5) * tc)
    }

    /// Averages of `f` over every scale-`j` cube, indexed like [`Self::cube_index`].
    ///
    /// Each mean is taken as a pivot sample plus the mean deviation from it, so a
    /// cube holding one repeated value returns that value exactly.
    pub fn cube_means(&self, j: usize, f: &Field) -> Vec<C64> {
        let (cx, ct) = self.counts(j);
        let count = cx.pow(self.grid.n as u32) * ct;
        let mut pivots: Vec<Option<C64>> = vec![None; count];
        let mut sums = vec![C64::new(0.0, 0.0); count];
        for (i, &v) in f.values().iter().enumerate() {
            let id = self.cube_id(j, i);
            let p = *pivots[id].get_or_insert(v);
            sums[id] += v - p;
        }
        let per = (self.side_cells(j).pow(self.grid.n as u32) * self.time_cells(j)) as f64;
        sums.iter().zip(&pivots).map(|(s, p)| p.unwrap_or_default() + s / per).collect()
    }

    /// `A_λ` at scale `j`: replace `f` by its cube averages.
    pub fn average_at(&self, j: usize, f: &Field) -> Field {
        let means = self.cube_means(j, f);
        let values = (0..self.grid.len()).map(|i| means[self.cube_id(j, i)]).collect();
        Field::from_values(self.grid, values).expect("averages of finite samples are finite")
    }
}

//! Lattice sets for off-diagonal estimates: parabolic cubes with their
//! dilations and annuli, and pairs of separated sets.
//!
//! Distances are toroidal. The parabolic size of `(x, t)` is `|x| + |t|^{1/2}`
//! with `|x|` Euclidean.

use crate::error::{Error, Result};
use crate::lattice::{GridSpec, MAX_DIM};
use serde::{Deserialize, Serialize};

/// Signed toroidal offset of `a − b` in `[−L/2, L/2)`.
fn wrap(d: f64, period: f64) -> f64 {
    (d + 0.5 * period).rem_euclid(period) - 0.5 * period
}

/// `Q × I` centred on a lattice point, with `|Q| = ℓⁿ` and `|I| = ℓ²`.
///
/// A lattice point belongs to the cube when its offset from the centre lies in
/// `[−ℓ/2, ℓ/2)` along every spatial axis and in `[−ℓ²/2, ℓ²/2)` in time, so
/// the centre always belongs to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParabolicCube {
    pub center: [usize; MAX_DIM],
    pub tcenter: usize,
    pub side: f64,
}

impl ParabolicCube {
    pub fn new(grid: &GridSpec, center: &[usize], tcenter: usize, side: f64) -> Result<Self> {
        if center.len() != grid.n || center.iter().any(|&c| c >= grid.nx) || tcenter >= grid.nt {
            return Err(Error::InvalidParameter(format!("centre {center:?}, {tcenter} not on the lattice")));
        }
        if !(side > 0.0 && side.is_finite()) {
            return Err(Error::InvalidParameter(format!("side {side} must be positive")));
        }
        let mut c = [0; MAX_DIM];
        c[..grid.n].copy_from_slice(center);
        Ok(Self { center: c, tcenter, side })
    }

    /// `cΔ = cQ × c²I` with the same centre.
    pub fn dilate(&self, c: f64) -> Self {
        Self { side: self.side * c, ..*self }
    }

    pub fn fits(&self, grid: &GridSpec) -> bool {
        self.side <= grid.lx && self.side * self.side <= grid.lt
    }

    pub fn contains(&self, grid: &GridSpec, idx: usize) -> bool {
        let half = 0.5 * self.side;
        let c = grid.spatial_coords(idx / grid.nt);
        let inside_x = (0..grid.n).all(|a| {
            let o = wrap((c[a] as f64 - self.center[a] as f64) * grid.dx(), grid.lx);
            -half <= o && o < half
        });
        let ht = 0.5 * self.side * self.side;
        let o = wrap(((idx % grid.nt) as f64 - self.tcenter as f64) * grid.dt(), grid.lt);
        inside_x && -ht <= o && o < ht
    }

    pub fn mask(&self, grid: &GridSpec) -> Vec<bool> {
        (0..grid.len()).map(|i| self.contains(grid, i)).collect()
    }

    /// `2^{k+1}Δ ∖ 2^kΔ`.
    pub fn annulus(&self, grid: &GridSpec, k: usize) -> Result<Vec<bool>> {
        let outer = self.dilate(2f64.powi(k as i32 + 1));
        if !outer.fits(grid) {
            return Err(Error::SupportOverflow(format!("2^{}Δ of side {} exceeds the torus", k + 1, outer.side)));
        }
        let inner = self.dilate(2f64.powi(k as i32));
        Ok((0..grid.len()).map(|i| outer.contains(grid, i) && !inner.contains(grid, i)).collect())
    }
}

/// Two disjoint lattice sets with their distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparatedSets {
    pub e: Vec<bool>,
    pub f: Vec<bool>,
    /// `inf ‖(x−y, t−s)‖` over `E × F`.
    pub distance: f64,
    /// `inf |t−s|^{1/2}` over the time projections of `E` and `F`.
    pub time_distance: f64,
}

impl SeparatedSets {
    pub fn new(grid: &GridSpec, e: Vec<bool>, f: Vec<bool>) -> Result<Self> {
        if e.len() != grid.len() || f.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if !e.iter().any(|&v| v) || !f.iter().any(|&v| v) {
            return Err(Error::InvalidParameter("sets must be nonempty".into()));
        }
        let distance = parabolic_distance(grid, &e, &f);
        let time_distance = time_distance(grid, &e, &f);
        Ok(Self { e, f, distance, time_distance })
    }

    /// `E` and `F` as the time slabs `[e0, e1)` and `[f0, f1)` in time cells.
    pub fn time_slabs(grid: &GridSpec, e: (usize, usize), f: (usize, usize)) -> Result<Self> {
        let slab = |(a, b): (usize, usize)| -> Result<Vec<bool>> {
            if a >= b || b > grid.nt {
                return Err(Error::InvalidParameter(format!("time slab [{a}, {b}) outside 0..{}", grid.nt)));
            }
            Ok((0..grid.len()).map(|i| (a..b).contains(&(i % grid.nt))).collect())
        };
        Self::new(grid, slab(e)?, slab(f)?)
    }
}

fn time_projection(grid: &GridSpec, m: &[bool]) -> Vec<bool> {
    let mut p = vec![false; grid.nt];
    for (i, &v) in m.iter().enumerate() {
        if v {
            p[i % grid.nt] = true;
        }
    }
    p
}

fn time_gap(grid: &GridSpec, a: usize, b: usize) -> f64 {
    wrap((a as f64 - b as f64) * grid.dt(), grid.lt).abs()
}

fn time_distance(grid: &GridSpec, e: &[bool], f: &[bool]) -> f64 {
    let pe = time_projection(grid, e);
    let pf = time_projection(grid, f);
    let mut best = f64::INFINITY;
    for (a, _) in pe.iter().enumerate().filter(|p| *p.1) {
        for (b, _) in pf.iter().enumerate().filter(|p| *p.1) {
            best = best.min(time_gap(grid, a, b));
        }
    }
    best.sqrt()
}

/// Exact minimum over pairs, organized by time slice of `F`.
fn parabolic_distance(grid: &GridSpec, e: &[bool], f: &[bool]) -> f64 {
    let nt = grid.nt;
    let ns = grid.spatial_len();
    let coords: Vec<[usize; MAX_DIM]> = (0..ns).map(|s| grid.spatial_coords(s)).collect();
    let spatial = |s: usize, r: usize| -> f64 {
        (0..grid.n)
            .map(|a| wrap((coords[s][a] as f64 - coords[r][a] as f64) * grid.dx(), grid.lx).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    // Distance from every spatial point to F at each time slice.
    let mut to_f = vec![f64::INFINITY; ns * nt];
    for it in 0..nt {
        let members: Vec<usize> = (0..ns).filter(|&s| f[s * nt + it]).collect();
        if members.is_empty() {
            continue;
        }
        for s in 0..ns {
            to_f[s * nt + it] = members.iter().map(|&r| spatial(s, r)).fold(f64::INFINITY, f64::min);
        }
    }
    let mut best = f64::INFINITY;
    for (i, _) in e.iter().enumerate().filter(|p| *p.1) {
        let (s, it) = (i / nt, i % nt);
        for js in 0..nt {
            let d = to_f[s * nt + js];
            if d.is_finite() {
                best = best.min(d + time_gap(grid, it, js).sqrt());
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_counts_and_dilation() {
        let g = GridSpec::unit(2, 32, 32).unwrap();
        let q = ParabolicCube::new(&g, &[16, 16], 16, 1.0 / 16.0).unwrap();
        assert_eq!(q.mask(&g).iter().filter(|&&v| v).count(), 4);
        let big = q.dilate(8.0);
        // Side 1/2: 16 cells per axis, time side 1/4: 8 cells.
        assert_eq!(big.mask(&g).iter().filter(|&&v| v).count(), 16 * 16 * 8);
        assert!(q.annulus(&g, 3).is_ok());
        assert!(matches!(q.annulus(&g, 4), Err(Error::SupportOverflow(_))));
        let a0 = q.annulus(&g, 0).unwrap();
        assert!(a0.iter().zip(q.mask(&g)).all(|(a, m)| !(*a && m)));
    }

    #[test]
    fn full_side_covers_the_torus_once() {
        let g = GridSpec::unit(2, 8, 8).unwrap();
        let q = ParabolicCube::new(&g, &[3, 5], 2, 1.0).unwrap();
        assert!(q.mask(&g).iter().all(|&v| v));
    }

    #[test]
    fn slab_distances() {
        let g = GridSpec::unit(1, 8, 16).unwrap();
        let s = SeparatedSets::time_slabs(&g, (0, 4), (8, 12)).unwrap();
        // Nearest samples are t = 3 and t = 8 cells.
        let gap: f64 = 5.0 / 16.0;
        assert!((s.time_distance - gap.sqrt()).abs() < 1e-15);
        assert!((s.distance - gap.sqrt()).abs() < 1e-15);
        let same = SeparatedSets::time_slabs(&g, (0, 4), (2, 6)).unwrap();
        assert_eq!(same.time_distance, 0.0);
    }

    #[test]
    fn spatial_wraparound() {
        let g = GridSpec::unit(1, 8, 4).unwrap();
        let e: Vec<bool> = (0..g.len()).map(|i| i / 4 == 0 && i % 4 == 0).collect();
        let f: Vec<bool> = (0..g.len()).map(|i| i / 4 == 7 && i % 4 == 0).collect();
        let s = SeparatedSets::new(&g, e, f).unwrap();
        assert!((s.distance - 0.125).abs() < 1e-15);
        assert_eq!(s.time_distance, 0.0);
    }
}

//! Mean-oscillation scans of the anti-symmetric part.

use super::{CoefficientField, SpatialCube};
use crate::dyadic::DyadicDecomposition;
use crate::error::{Error, Result};
use crate::lattice::{GridSpec, MAX_DIM};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BmoMode {
    /// Sup over time slices and over dyadic spatial cubes of all scales, on the
    /// aligned grid and its half-shifted copies, of the L¹ mean oscillation.
    PerTimeSup,
    /// Square root of the sup over parabolic dyadic cubes of the L² mean oscillation.
    Parabolic,
}

/// BMO norm of `D`: the largest norm over the entries above the diagonal.
pub fn bmo_norm(coeffs: &CoefficientField, mode: BmoMode) -> f64 {
    let n = coeffs.n();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            best = best.max(bmo_norm_entry(&coeffs.grid, &coeffs.d_entry(i, j), mode));
        }
    }
    best
}

/// BMO norm of one real lattice array.
pub fn bmo_norm_entry(grid: &GridSpec, values: &[f64], mode: BmoMode) -> f64 {
    match mode {
        BmoMode::PerTimeSup => per_time_sup(grid, values),
        BmoMode::Parabolic => parabolic(grid, values),
    }
}

fn per_time_sup(grid: &GridSpec, values: &[f64]) -> f64 {
    let nt = grid.nt;
    let ns = grid.spatial_len();
    let scales = grid.nx.trailing_zeros() as usize;
    (0..nt)
        .into_par_iter()
        .map(|it| {
            let slice: Vec<f64> = (0..ns).map(|s| values[s * nt + it]).collect();
            let mut best = 0.0f64;
            for j in 0..scales {
                let side = grid.nx >> j;
                for shift_bits in 0..(1usize << grid.n) {
                    let mut shift = [0; MAX_DIM];
                    for (a, sh) in shift.iter_mut().enumerate().take(grid.n) {
                        if shift_bits >> a & 1 == 1 {
                            *sh = side / 2;
                        }
                    }
                    best = best.max(sup_oscillation(grid, &slice, side, &shift));
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Largest L¹ mean oscillation over the cubes of side `side` (cells) in a
/// spatial slice, with the cube grid offset by `shift`.
fn sup_oscillation(grid: &GridSpec, slice: &[f64], side: usize, shift: &[usize; MAX_DIM]) -> f64 {
    let per_axis = grid.nx / side;
    let count = per_axis.pow(grid.n as u32);
    let ids: Vec<usize> = (0..slice.len())
        .map(|s| {
            let c = grid.spatial_coords(s);
            let mut id = 0;
            for a in 0..grid.n {
                id = id * per_axis + (c[a] + grid.nx - shift[a]) % grid.nx / side;
            }
            id
        })
        .collect();
    let mut sums = vec![0.0; count];
    for (&v, &id) in slice.iter().zip(&ids) {
        sums[id] += v;
    }
    let cells = side.pow(grid.n as u32) as f64;
    let means: Vec<f64> = sums.iter().map(|s| s / cells).collect();
    let mut dev = vec![0.0; count];
    for (&v, &id) in slice.iter().zip(&ids) {
        dev[id] += (v - means[id]).abs();
    }
    dev.iter().fold(0.0f64, |m, d| m.max(d / cells))
}

fn parabolic(grid: &GridSpec, values: &[f64]) -> f64 {
    let dec = DyadicDecomposition::new(grid);
    let mut best = 0.0f64;
    for j in 0..=dec.j_max() {
        let (cx, ct) = dec.counts(j);
        let count = cx.pow(grid.n as u32) * ct;
        let ids: Vec<usize> = (0..values.len()).map(|i| dec.cube_id(j, i)).collect();
        let mut sums = vec![0.0; count];
        for (&v, &id) in values.iter().zip(&ids) {
            sums[id] += v;
        }
        let cells = (dec.side_cells(j).pow(grid.n as u32) * dec.time_cells(j)) as f64;
        let means: Vec<f64> = sums.iter().map(|s| s / cells).collect();
        let mut dev = vec![0.0; count];
        for (&v, &id) in values.iter().zip(&ids) {
            dev[id] += (v - means[id]).powi(2);
        }
        best = dev.iter().fold(best, |m, d| m.max(d / cells));
    }
    best.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub k: usize,
    /// `(⨍_{2^kQ₀×I} |D − ⨍_{Q₀}D|^p)^{1/p}`, largest over entries.
    pub average: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthTable {
    pub rows: Vec<GrowthRow>,
    /// Set when `average/k` rises at every step and ends more than twice its first value.
    pub superlinear: bool,
}

/// Growth of `D − ⨍_{Q₀}D` on the dilated cylinders `2^k Q₀ × I`, `I` the full period.
pub fn john_nirenberg_growth(coeffs: &CoefficientField, q0: &SpatialCube, p: f64, k_max: usize) -> Result<GrowthTable> {
    let grid = &coeffs.grid;
    q0.check(grid)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("p = {p} must be at least 1")));
    }
    if k_max == 0 || q0.side << k_max > grid.nx {
        return Err(Error::InvalidParameter(format!("2^{k_max} Q0 does not fit in the {}-cell torus", grid.nx)));
    }
    let avg = coeffs.d_average(q0)?;
    let n = coeffs.n();
    let nt = grid.nt;
    let mut rows = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let big = q0.dilate(1 << k, grid).spatial_indices(grid);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let terms: Vec<f64> = big
                    .iter()
                    .flat_map(|&s| (0..nt).map(move |it| (s, it)))
                    .map(|(s, it)| (coeffs.d[s * nt + it][i][j] - avg[it][i][j]).abs().powf(p))
                    .collect();
                let mean = crate::reduce::sum_f64(&terms) / terms.len() as f64;
                worst = worst.max(mean.powf(1.0 / p));
            }
        }
        rows.push(GrowthRow { k, average: worst, ratio: worst / k as f64 });
    }
    let rising = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let superlinear = rows.len() > 1 && rising && rows[rows.len() - 1].ratio > 2.0 * rows[0].ratio;
    Ok(GrowthTable { rows, superlinear })
}

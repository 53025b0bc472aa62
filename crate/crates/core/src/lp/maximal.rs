//! Centered maximal functions in the spatial and time variables separately.
//!
//! `M⁽¹⁾f(x,t)` is the supremum over centered cubes of odd side `2r+1` cells of
//! the spatial average of `|f(·,t)|`, and `M⁽²⁾` is the same in time. Both are
//! evaluated by brute force over every admissible window.

use crate::lattice::{Field, GridSpec};

/// Periodic box sums of half-width `r` along one axis with stride `stride`.
fn box_sum_axis(data: &[f64], axis_len: usize, stride: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    let block = axis_len * stride;
    for base in (0..data.len()).step_by(block) {
        for off in 0..stride {
            let line: Vec<f64> = (0..axis_len).map(|k| data[base + off + k * stride]).collect();
            for k in 0..axis_len {
                let mut s = 0.0;
                for d in 0..=(2 * r) {
                    s += line[(k + axis_len + d - r) % axis_len];
                }
                out[base + off + k * stride] = s;
            }
        }
    }
    out
}

/// `M⁽¹⁾` applied to `|values|` given as real samples.
pub fn spatial_maximal(grid: &GridSpec, values: &[f64]) -> Vec<f64> {
    let mut best = values.to_vec();
    for r in 1..=(grid.nx - 1) / 2 {
        let mut acc = values.to_vec();
        for axis in 0..grid.n {
            let stride = grid.nt * grid.nx.pow((grid.n - 1 - axis) as u32);
            acc = box_sum_axis(&acc, grid.nx, stride, r);
        }
        let count = ((2 * r + 1) as f64).powi(grid.n as i32);
        for (b, a) in best.iter_mut().zip(&acc) {
            *b = b.max(a / count);
        }
    }
    best
}

/// `M⁽²⁾` applied to real samples.
pub fn time_maximal(grid: &GridSpec, values: &[f64]) -> Vec<f64> {
    let mut best = values.to_vec();
    for r in 1..=(grid.nt - 1) / 2 {
        let acc = box_sum_axis(values, grid.nt, 1, r);
        let count = (2 * r + 1) as f64;
        for (b, a) in best.iter_mut().zip(&acc) {
            *b = b.max(a / count);
        }
    }
    best
}

/// `M⁽¹⁾(M⁽²⁾|f|)`.
pub fn composed_maximal(f: &Field) -> Vec<f64> {
    let abs: Vec<f64> = f.values().iter().map(|z| z.norm()).collect();
    let m2 = time_maximal(f.grid(), &abs);
    spatial_maximal(f.grid(), &m2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    #[test]
    fn constants_are_fixed_points() {
        let g = GridSpec::unit(2, 8, 8).unwrap();
        let f = Field::constant(g, C64::new(-3.0, 4.0));
        assert!(composed_maximal(&f).iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn dominates_and_spreads_a_spike() {
        let g = GridSpec::unit(2, 8, 8).unwrap();
        let mut f = Field::zeros(g);
        f.values_mut()[0] = C64::new(9.0, 0.0);
        let m = composed_maximal(&f);
        assert_eq!(m[0], 9.0);
        // Neighbour one cell away in x and t: best windows are r = 1 in both.
        let idx = g.index(&[1, 0], 1);
        assert!((m[idx] - 9.0 / 9.0 / 3.0).abs() < 1e-12, "{}", m[idx]);
    }
}

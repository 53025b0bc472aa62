//! Multidimensional FFT on the lattice layout and per-mode symbol application.
//!
//! The forward transform is unnormalized and the inverse divides by the total
//! sample count, so `inverse(forward(f)) = f`.

use super::{Field, GridSpec, MAX_DIM};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

type Plan = Arc<dyn Fft<f64>>;

fn plan(len: usize, inverse: bool) -> Plan {
    static CACHE: OnceLock<Mutex<HashMap<(usize, bool), Plan>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|e| e.into_inner());
    map.entry((len, inverse))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            if inverse {
                planner.plan_fft_inverse(len)
            } else {
                planner.plan_fft_forward(len)
            }
        })
        .clone()
}

/// In-place transform of every axis.
fn transform(grid: &GridSpec, data: &mut [C64], inverse: bool) {
    let nt = grid.nt;
    let pt = plan(nt, inverse);
    data.par_chunks_mut(nt).for_each(|line| pt.process(line));

    let nx = grid.nx;
    let px = plan(nx, inverse);
    for axis in 0..grid.n {
        // Distance between consecutive samples along `axis`.
        let stride = nt * nx.pow((grid.n - 1 - axis) as u32);
        data.par_chunks_mut(nx * stride).for_each(|block| {
            let mut buf = vec![C64::new(0.0, 0.0); nx * stride];
            for k in 0..nx {
                for j in 0..stride {
                    buf[j * nx + k] = block[k * stride + j];
                }
            }
            for line in buf.chunks_mut(nx) {
                px.process(line);
            }
            for k in 0..nx {
                for j in 0..stride {
                    block[k * stride + j] = buf[j * nx + k];
                }
            }
        });
    }
}

/// Unnormalized forward transform in place.
pub fn forward_in_place(grid: &GridSpec, data: &mut [C64]) {
    transform(grid, data, false);
}

/// Normalized inverse transform in place.
pub fn inverse_in_place(grid: &GridSpec, data: &mut [C64]) {
    transform(grid, data, true);
    let s = 1.0 / grid.len() as f64;
    data.par_iter_mut().for_each(|z| *z *= s);
}

/// Unnormalized forward transform of a field.
pub fn forward(f: &Field) -> Vec<C64> {
    let mut data = f.values().to_vec();
    transform(f.grid(), &mut data, false);
    data
}

/// Normalized inverse transform of a spectrum laid out like a field.
pub fn inverse(grid: &GridSpec, spectrum: Vec<C64>) -> Field {
    let mut data = spectrum;
    inverse_in_place(grid, &mut data);
    Field { grid: *grid, values: data }
}

/// One lattice mode: angular frequencies and Nyquist flags.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub xi: [f64; MAX_DIM],
    pub tau: f64,
    /// Signed integer spatial frequencies.
    pub kx: [i64; MAX_DIM],
    /// Signed integer time frequency.
    pub kt: i64,
    pub time_nyquist: bool,
}

impl Mode {
    pub fn xi_sqr(&self) -> f64 {
        self.xi.iter().map(|v| v * v).sum()
    }

    /// Parabolic size `|ξ| + |τ|^{1/2}`.
    pub fn parabolic_size(&self) -> f64 {
        self.xi_sqr().sqrt() + self.tau.abs().sqrt()
    }
}

/// Angular frequency tables for a grid.
#[derive(Debug, Clone)]
pub struct Frequencies {
    pub grid: GridSpec,
    pub xi: Vec<f64>,
    pub tau: Vec<f64>,
}

impl Frequencies {
    pub fn new(grid: &GridSpec) -> Self {
        let xi = (0..grid.nx).map(|i| 2.0 * PI * GridSpec::signed_freq(i, grid.nx) as f64 / grid.lx).collect();
        let tau = (0..grid.nt).map(|i| 2.0 * PI * GridSpec::signed_freq(i, grid.nt) as f64 / grid.lt).collect();
        Self { grid: *grid, xi, tau }
    }

    /// Mode at flat spatial index `s` and time index `it`.
    #[inline]
    pub fn mode(&self, s: usize, it: usize) -> Mode {
        let c = self.grid.spatial_coords(s);
        let mut xi = [0.0; MAX_DIM];
        let mut kx = [0; MAX_DIM];
        for a in 0..self.grid.n {
            xi[a] = self.xi[c[a]];
            kx[a] = GridSpec::signed_freq(c[a], self.grid.nx);
        }
        Mode {
            xi,
            tau: self.tau[it],
            kx,
            kt: GridSpec::signed_freq(it, self.grid.nt),
            time_nyquist: it == self.grid.nt / 2,
        }
    }

    /// Calls `f(value, mode)` for every spectral sample, in parallel over spatial lines.
    pub fn for_each_mut<F>(&self, data: &mut [C64], f: F)
    where
        F: Fn(&mut C64, &Mode) + Sync,
    {
        let nt = self.grid.nt;
        data.par_chunks_mut(nt).enumerate().for_each(|(s, line)| {
            for (it, z) in line.iter_mut().enumerate() {
                f(z, &self.mode(s, it));
            }
        });
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        let nt = self.grid.nt;
        (0..self.grid.len()).map(move |i| self.mode(i / nt, i % nt))
    }
}

/// Applies the Fourier multiplier `symbol` to `f`.
pub fn apply_symbol<F>(f: &Field, symbol: F) -> Field
where
    F: Fn(&Mode) -> C64 + Sync,
{
    let freqs = Frequencies::new(f.grid());
    let mut spec = forward(f);
    freqs.for_each_mut(&mut spec, |z, m| *z *= symbol(m));
    inverse(f.grid(), spec)
}

/// Applies several multipliers sharing one forward transform.
pub fn apply_symbols<F>(f: &Field, count: usize, symbol: F) -> Vec<Field>
where
    F: Fn(usize, &Mode) -> C64 + Sync,
{
    let freqs = Frequencies::new(f.grid());
    let spec = forward(f);
    (0..count)
        .map(|c| {
            let mut s = spec.clone();
            freqs.for_each_mut(&mut s, |z, m| *z *= symbol(c, m));
            inverse(f.grid(), s)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(grid: &GridSpec, v: &[C64]) -> Vec<C64> {
        let freqs = Frequencies::new(grid);
        let dx = grid.dx();
        let dt = grid.dt();
        let mut out = vec![C64::new(0.0, 0.0); v.len()];
        for (k, o) in out.iter_mut().enumerate() {
            let m = freqs.mode(k / grid.nt, k % grid.nt);
            for (j, &val) in v.iter().enumerate() {
                let c = grid.spatial_coords(j / grid.nt);
                let mut ph = m.tau * (j % grid.nt) as f64 * dt;
                for a in 0..grid.n {
                    ph += m.xi[a] * c[a] as f64 * dx;
                }
                *o += val * C64::from_polar(1.0, -ph);
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let g = GridSpec::new(2, 4, 8, 2.0, 3.0).unwrap();
        let f = Field::from_fn(g, |x, t| C64::new((x[0] * 1.7 + t).sin() + x[1], t * x[0]));
        let fast = forward(&f);
        let slow = naive_dft(&g, f.values());
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn roundtrip_3d() {
        let g = GridSpec::unit(3, 4, 4).unwrap();
        let f = Field::from_fn(g, |x, t| C64::new(x[0] - x[2] * t, x[1] * x[1]));
        let back = inverse(&g, forward(&f));
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}

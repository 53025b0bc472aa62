//! Reproducible random fields.
//!
//! Spectral coefficients are drawn mode by mode from a counter-based ChaCha
//! stream: the stream id selects the sample and the word position is derived
//! from the signed integer frequencies. A mode therefore receives the same
//! coefficient on every grid that resolves it, and parallel generation is
//! order-independent.

use crate::lattice::{inverse, Field, Frequencies, GridSpec, Mode};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Stable 64-bit key of a mode built from its signed integer frequencies.
fn mode_key(m: &Mode) -> u64 {
    let mut key = 0u64;
    for (a, &k) in m.kx.iter().enumerate() {
        key |= ((k + 0x8000) as u64 & 0xffff) << (16 * a);
    }
    key | ((m.kt + 0x8000) as u64 & 0xffff) << 48
}

fn gaussian_pair(seed: u64, stream: u64, key: u64) -> C64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(key as u128 * 64);
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

fn from_amplitudes<F>(grid: &GridSpec, seed: u64, stream: u64, real: bool, amp: F) -> Field
where
    F: Fn(&Mode) -> f64 + Sync,
{
    let freqs = Frequencies::new(grid);
    let mut spec = vec![C64::new(0.0, 0.0); grid.len()];
    freqs.for_each_mut(&mut spec, |z, m| {
        let a = amp(m);
        if a != 0.0 {
            *z = gaussian_pair(seed, stream, mode_key(m)) * a;
        }
    });
    let f = inverse(grid, spec);
    if real {
        f.real_part()
    } else {
        f
    }
}

/// Band-limited field with modes `|k_a| ≤ kx`, `|k_t| ≤ kt`, normalized to unit L² norm.
pub fn smooth(grid: &GridSpec, seed: u64, stream: u64, kx: i64, kt: i64, real: bool) -> Field {
    let f = from_amplitudes(grid, seed, stream, real, |m| {
        let inside = m.kx.iter().all(|k| k.abs() <= kx) && m.kt.abs() <= kt && !m.time_nyquist;
        if inside {
            1.0
        } else {
            0.0
        }
    });
    normalized(f)
}

/// Field with `|f̂| ∼ (1 + |ξ| + |τ|^{1/2})^{-(n+2)/2-ε}` on every mode, unit L² norm.
pub fn rough(grid: &GridSpec, seed: u64, stream: u64, eps: f64, real: bool) -> Field {
    let p = -(grid.n as f64 + 2.0) / 2.0 - eps;
    let f = from_amplitudes(grid, seed, stream, real, |m| (1.0 + m.parabolic_size()).powf(p));
    normalized(f)
}

/// Field whose spectrum decays like `(1 + |ξ|² + |τ|)^{-1}`, unit L² norm.
///
/// The decay keeps derivative norms comparable to the field norm while every
/// mode is populated.
pub fn generic(grid: &GridSpec, seed: u64, stream: u64, real: bool) -> Field {
    let f = from_amplitudes(grid, seed, stream, real, |m| 1.0 / (1.0 + m.xi_sqr() + m.tau.abs()));
    normalized(f)
}

/// Field with the zero mode removed.
pub fn without_mean(f: &Field) -> Field {
    let mean = crate::reduce::sum_c64(f.values()) / f.grid().len() as f64;
    f.map(|z| z - mean)
}

pub fn normalized(f: Field) -> Field {
    let n = f.norm();
    if n > 0.0 {
        f.scale(C64::new(1.0 / n, 0.0))
    } else {
        f
    }
}

//! Order-fixed summation.
//!
//! Every reduction in the crate goes through these helpers. The input is cut
//! into chunks of a fixed size (independent of the thread count), each chunk
//! is summed pairwise, and the partial sums are combined pairwise in index
//! order. Serial and parallel runs therefore produce bitwise-identical sums.

use num_complex::Complex64 as C64;
use rayon::prelude::*;

const CHUNK: usize = 4096;
const LEAF: usize = 32;

fn pairwise<T: Copy + std::ops::Add<Output = T>>(xs: &[T], zero: T) -> T {
    if xs.len() <= LEAF {
        return xs.iter().fold(zero, |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise(&xs[..mid], zero) + pairwise(&xs[mid..], zero)
}

pub fn sum_f64(xs: &[f64]) -> f64 {
    if xs.len() <= CHUNK {
        return pairwise(xs, 0.0);
    }
    let partial: Vec<f64> = xs.par_chunks(CHUNK).map(|c| pairwise(c, 0.0)).collect();
    pairwise(&partial, 0.0)
}

pub fn sum_c64(xs: &[C64]) -> C64 {
    let zero = C64::new(0.0, 0.0);
    if xs.len() <= CHUNK {
        return pairwise(xs, zero);
    }
    let partial: Vec<C64> = xs.par_chunks(CHUNK).map(|c| pairwise(c, zero)).collect();
    pairwise(&partial, zero)
}

/// Σ f(a_i, b_i) with the same fixed-order guarantee.
pub fn sum_zip_c64<F>(a: &[C64], b: &[C64], f: F) -> C64
where
    F: Fn(C64, C64) -> C64 + Sync,
{
    debug_assert_eq!(a.len(), b.len());
    let zero = C64::new(0.0, 0.0);
    let partial: Vec<C64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(ca, cb)| {
            let buf: Vec<C64> = ca.iter().zip(cb).map(|(&x, &y)| f(x, y)).collect();
            pairwise(&buf, zero)
        })
        .collect();
    pairwise(&partial, zero)
}

pub fn sum_map_f64<T: Sync, F>(xs: &[T], f: F) -> f64
where
    F: Fn(&T) -> f64 + Sync,
{
    let partial: Vec<f64> = xs
        .par_chunks(CHUNK)
        .map(|c| {
            let buf: Vec<f64> = c.iter().map(&f).collect();
            pairwise(&buf, 0.0)
        })
        .collect();
    pairwise(&partial, 0.0)
}

/// Σ a_i · conj(b_i).
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    sum_zip_c64(a, b, |x, y| x * y.conj())
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    sum_map_f64(a, |z| z.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_naive_on_exact_integers() {
        let xs: Vec<f64> = (0..100_000).map(|i| (i % 97) as f64).collect();
        let naive: f64 = xs.iter().sum();
        assert_eq!(sum_f64(&xs), naive);
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let xs: Vec<C64> =
            (0..50_000).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos() * 1e-3)).collect();
        let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| sum_c64(&xs));
        let parallel = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| sum_c64(&xs));
        assert_eq!(serial.re.to_bits(), parallel.re.to_bits());
        assert_eq!(serial.im.to_bits(), parallel.im.to_bits());
    }
}

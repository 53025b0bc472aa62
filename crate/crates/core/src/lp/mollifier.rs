//! The product mollifier `P(x,t) = P⁽¹⁾(x)·P⁽²⁾(t)` and its Fourier transform.
//!
//! Both factors are the bump `exp(−1/(1−s²))` on `|s| < 1`, radial in space,
//! normalized to unit integral. The transform of the radial factor along any
//! direction equals the one-dimensional cosine transform of its projection
//! onto a line, so a single table of the projection serves every frequency.

use crate::error::{Error, Result};
use crate::lattice::{forward, inverse, Field, Frequencies, GridSpec, Mode};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::OnceLock;

/// Midpoint nodes on `[0, 1)` for the cosine transform.
const OUTER_NODES: usize = 2048;
/// Midpoint nodes for the transverse integral of the projection.
const INNER_NODES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Bump,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct MollifierSpec {
    pub profile: Profile,
}

fn bump(s: f64) -> f64 {
    let q = 1.0 - s * s;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

/// Projection of the radial bump in dimension `n` onto a line, sampled at the
/// outer midpoints and normalized so that `2Σ R·h = 1`.
fn projection(n: usize) -> &'static [f64] {
    static TABLES: [OnceLock<Vec<f64>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    TABLES[n - 1].get_or_init(|| {
        let h = 1.0 / OUTER_NODES as f64;
        let raw: Vec<f64> = (0..OUTER_NODES)
            .map(|k| {
                let s = (k as f64 + 0.5) * h;
                match n {
                    1 => bump(s),
                    2 => {
                        let top = (1.0 - s * s).max(0.0).sqrt();
                        let dy = top / INNER_NODES as f64;
                        2.0 * (0..INNER_NODES)
                            .map(|i| {
                                let y = (i as f64 + 0.5) * dy;
                                bump((s * s + y * y).sqrt())
                            })
                            .sum::<f64>()
                            * dy
                    }
                    _ => {
                        // π∫_{s²}^{1} b(√u) du after the substitution u = s² + r².
                        let du = (1.0 - s * s) / INNER_NODES as f64;
                        PI * (0..INNER_NODES).map(|i| bump((s * s + (i as f64 + 0.5) * du).sqrt())).sum::<f64>() * du
                    }
                }
            })
            .collect();
        let mass = 2.0 * raw.iter().sum::<f64>() * h;
        raw.into_iter().map(|r| r / mass).collect()
    })
}

fn cosine_transform(table: &[f64], rho: f64) -> f64 {
    if rho == 0.0 {
        return 1.0;
    }
    let h = 1.0 / table.len() as f64;
    2.0 * h * table.iter().enumerate().map(|(k, r)| r * (rho * (k as f64 + 0.5) * h).cos()).sum::<f64>()
}

impl MollifierSpec {
    /// `P̂⁽¹⁾(ρ)` for `|ξ| = ρ` in dimension `n`.
    pub fn spatial_symbol(&self, n: usize, rho: f64) -> f64 {
        cosine_transform(projection(n), rho)
    }

    /// `P̂⁽²⁾(ω)`.
    pub fn time_symbol(&self, omega: f64) -> f64 {
        cosine_transform(projection(1), omega)
    }

    /// Mass-normalized radial profile `P⁽¹⁾(x)` at `|x| = r`.
    pub fn spatial_profile(&self, n: usize, r: f64) -> f64 {
        bump(r) / radial_mass(n)
    }

    /// Mass-normalized `P⁽²⁾(t)`.
    pub fn time_profile(&self, t: f64) -> f64 {
        bump(t) / radial_mass(1)
    }
}

/// `∫_{ℝⁿ} b(|x|) dx`.
fn radial_mass(n: usize) -> f64 {
    static MASS: [OnceLock<f64>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    *MASS[n - 1].get_or_init(|| {
        let m = 1 << 16;
        let h = 1.0 / m as f64;
        let shell = match n {
            1 => 2.0,
            2 => 2.0 * PI,
            _ => 4.0 * PI,
        };
        shell
            * (0..m)
                .map(|k| {
                    let r = (k as f64 + 0.5) * h;
                    bump(r) * r.powi(n as i32 - 1)
                })
                .sum::<f64>()
            * h
    })
}

/// Which factors of the mollifier to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factors {
    Both,
    Spatial,
    Time,
}

/// Symbol of `P_λ` (or of one factor) over the lattice spectrum, in storage order.
#[derive(Debug, Clone)]
pub struct MollifierSymbol {
    pub lambda: f64,
    pub values: Vec<f64>,
}

fn check_support(grid: &GridSpec, lambda: f64, factors: Factors) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
    }
    if factors != Factors::Time && 2.0 * lambda > grid.lx {
        return Err(Error::SupportOverflow(format!(
            "spatial support 2λ = {} exceeds the period {}",
            2.0 * lambda,
            grid.lx
        )));
    }
    if factors != Factors::Spatial && 2.0 * lambda * lambda > grid.lt {
        return Err(Error::SupportOverflow(format!(
            "time support 2λ² = {} exceeds the period {}",
            2.0 * lambda * lambda,
            grid.lt
        )));
    }
    Ok(())
}

impl MollifierSymbol {
    pub fn new(spec: &MollifierSpec, grid: &GridSpec, lambda: f64, factors: Factors) -> Result<Self> {
        check_support(grid, lambda, factors)?;
        let freqs = Frequencies::new(grid);
        let mut spatial: HashMap<i64, f64> = HashMap::new();
        let mut time: HashMap<i64, f64> = HashMap::new();
        let modes: Vec<Mode> = freqs.modes().collect();
        let mut values = Vec::with_capacity(modes.len());
        for m in &modes {
            let px = if factors == Factors::Time {
                1.0
            } else {
                let key: i64 = m.kx.iter().map(|k| k * k).sum();
                *spatial.entry(key).or_insert_with(|| spec.spatial_symbol(grid.n, lambda * m.xi_sqr().sqrt()))
            };
            let pt = if factors == Factors::Spatial {
                1.0
            } else {
                *time.entry(m.kt.abs()).or_insert_with(|| spec.time_symbol(lambda * lambda * m.tau.abs()))
            };
            values.push(px * pt);
        }
        Ok(Self { lambda, values })
    }

    pub fn apply(&self, f: &Field) -> Field {
        let mut spec = forward(f);
        for (z, s) in spec.iter_mut().zip(&self.values) {
            *z *= s;
        }
        inverse(f.grid(), spec)
    }
}

/// `P_λ f`.
pub fn conv_p(spec: &MollifierSpec, lambda: f64, f: &Field) -> Result<Field> {
    f.ensure_finite()?;
    Ok(MollifierSymbol::new(spec, f.grid(), lambda, Factors::Both)?.apply(f))
}

/// `P⁽¹⁾_λ f`, spatial factor only.
pub fn conv_p1(spec: &MollifierSpec, lambda: f64, f: &Field) -> Result<Field> {
    f.ensure_finite()?;
    Ok(MollifierSymbol::new(spec, f.grid(), lambda, Factors::Spatial)?.apply(f))
}

/// `P⁽²⁾_λ f`, time factor only.
pub fn conv_p2(spec: &MollifierSpec, lambda: f64, f: &Field) -> Result<Field> {
    f.ensure_finite()?;
    Ok(MollifierSymbol::new(spec, f.grid(), lambda, Factors::Time)?.apply(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C64;

    fn direct_transform(n: usize, rho: f64) -> f64 {
        // Brute-force ∫ P⁽¹⁾(x) cos(ρ x₁) dx on a tensor grid.
        let m = 400;
        let h = 2.0 / m as f64;
        let spec = MollifierSpec::default();
        let mut acc = 0.0;
        match n {
            1 => {
                for i in 0..m {
                    let x = -1.0 + (i as f64 + 0.5) * h;
                    acc += spec.spatial_profile(1, x.abs()) * (rho * x).cos() * h;
                }
            }
            _ => {
                for i in 0..m {
                    for j in 0..m {
                        let x = -1.0 + (i as f64 + 0.5) * h;
                        let y = -1.0 + (j as f64 + 0.5) * h;
                        acc += spec.spatial_profile(2, (x * x + y * y).sqrt()) * (rho * x).cos() * h * h;
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn transform_matches_direct_quadrature() {
        let spec = MollifierSpec::default();
        for n in [1, 2] {
            for rho in [0.0, 0.7, 3.0, 11.0] {
                let a = spec.spatial_symbol(n, rho);
                let b = direct_transform(n, rho);
                assert!((a - b).abs() < 1e-8, "n={n} rho={rho}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn symbol_bounded_by_one() {
        let spec = MollifierSpec::default();
        for n in 1..=3 {
            for k in 0..200 {
                let v = spec.spatial_symbol(n, k as f64 * 0.37);
                assert!(v.abs() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn constants_preserved_and_support_checked() {
        let g = GridSpec::unit(2, 16, 32).unwrap();
        let spec = MollifierSpec::default();
        let one = Field::constant(g, C64::new(1.0, 0.0));
        let p = conv_p(&spec, 0.3, &one).unwrap();
        assert!(p.sub(&one).max_abs() < 1e-14);
        assert!(matches!(conv_p(&spec, 0.6, &one), Err(Error::SupportOverflow(_))));
        assert!(matches!(conv_p2(&spec, 0.8, &one), Err(Error::SupportOverflow(_))));
        assert!(conv_p1(&spec, 0.5, &one).is_ok());
    }

    #[test]
    fn small_scale_is_near_identity() {
        let g = GridSpec::unit(2, 16, 32).unwrap();
        let spec = MollifierSpec::default();
        let f = Field::from_fn(g, |x, t| C64::from_polar(1.0, 2.0 * PI * (x[0] + 2.0 * x[1] + t)));
        let l = 1e-2;
        let p = conv_p(&spec, l, &f).unwrap();
        let sym = spec.spatial_symbol(2, l * 2.0 * PI * 5f64.sqrt()) * spec.time_symbol(l * l * 2.0 * PI);
        assert!((1.0 - sym).abs() < 5e-3, "{sym}");
        assert!(p.sub(&f.scale(C64::new(sym, 0.0))).norm() < 1e-12 * f.norm());
    }

    #[test]
    fn discrete_kernel_has_no_first_moment() {
        let g = GridSpec::unit(2, 32, 8).unwrap();
        let spec = MollifierSpec::default();
        let mut delta = Field::zeros(g);
        delta.values_mut()[0] = C64::new(1.0 / g.dx().powi(2), 0.0);
        let k = conv_p1(&spec, 0.2, &delta).unwrap();
        let mut mass = 0.0;
        let mut moment = [0.0; 2];
        for (i, v) in k.values().iter().enumerate() {
            if i % g.nt != 0 {
                continue;
            }
            let c = g.spatial_coords(i / g.nt);
            mass += v.re * g.dx().powi(2);
            for a in 0..2 {
                // The half-period point is its own mirror image and carries no signed offset.
                let x = if 2 * c[a] == g.nx { 0.0 } else { GridSpec::signed_freq(c[a], g.nx) as f64 * g.dx() };
                moment[a] += x * v.re * g.dx().powi(2);
            }
        }
        assert!((mass - 1.0).abs() < 1e-12, "{mass}");
        assert!(moment.iter().all(|m| m.abs() < 1e-12), "{moment:?}");
    }
}

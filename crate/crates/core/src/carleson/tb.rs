//! Test functions `f = E_{εℓ(Δ)}L` built from localized linear profiles, their
//! approximation bounds, and the reduction of the Carleson bound to a finite
//! set of directions.

use super::{carleson_functional, UCache};
use crate::dyadic::{Cube, DyadicDecomposition};
use crate::error::{Error, Result};
use crate::lattice::{gradx, half_dt, Field, GridSpec, MAX_DIM};
use crate::operator::ParabolicOperator;
use crate::resolvent::{ShiftedSystem, SolverConfig};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Smooth step: 0 for `u ≤ 0`, 1 for `u ≥ 1`, built from `e^{−1/u}`.
fn smooth_step(u: f64) -> f64 {
    let h = |v: f64| if v > 0.0 { (-1.0 / v).exp() } else { 0.0 };
    let a = h(u);
    let b = h(1.0 - u);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Even bump equal to 1 on `|r| ≤ plateau` and 0 for `|r| ≥ support`.
pub fn cutoff(r: f64, plateau: f64, support: f64) -> f64 {
    smooth_step((support - r.abs()) / (support - plateau))
}

fn wrap(d: f64, period: f64) -> f64 {
    (d + 0.5 * period).rem_euclid(period) - 0.5 * period
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbConfig {
    pub epsilon: f64,
    /// Unit directions `ζ`.
    pub directions: Vec<Vec<f64>>,
    /// Cubes examined per scale, spread evenly through the cube index order.
    pub max_cubes_per_scale: usize,
}

impl TbConfig {
    pub fn new(n: usize) -> Self {
        Self { epsilon: 0.1, directions: default_directions(n), max_cubes_per_scale: 64 }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if self.directions.is_empty() || self.max_cubes_per_scale == 0 {
            return Err(Error::InvalidParameter("empty direction set or cube budget".into()));
        }
        for z in &self.directions {
            let nrm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if z.len() != n || (nrm - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("direction {z:?} is not a unit {n}-vector")));
            }
        }
        Ok(())
    }
}

/// `±e_a` and `(±e_a ± e_b)/√2`.
pub fn default_directions(n: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for a in 0..n {
        for s in [1.0, -1.0] {
            let mut z = vec![0.0; n];
            z[a] = s;
            out.push(z);
        }
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for a in 0..n {
        for b in (a + 1)..n {
            for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let mut z = vec![0.0; n];
                z[a] = sa * h;
                z[b] = sb * h;
                out.push(z);
            }
        }
    }
    out
}

/// `count` equally spaced angles in the plane.
pub fn refined_directions(count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            vec![th.cos(), th.sin()]
        })
        .collect()
}

/// `L = χ_Δ·((x − x_Δ)·ζ̄)` and `f = E_{εℓ(Δ)}L`.
#[derive(Debug, Clone)]
pub struct TestFunction {
    pub cube: Cube,
    pub profile: Field,
    pub smoothed: Field,
    pub scale: f64,
}

/// Centre and side of a dyadic cube, with the check that `2Δ` fits.
fn geometry(dec: &DyadicDecomposition, cube: &Cube) -> Result<([f64; MAX_DIM], f64, f64)> {
    let g = dec.grid();
    let side = dec.side(cube.scale);
    if 2.0 * side > g.lx + 1e-12 || 2.0 * side * side > g.lt + 1e-12 {
        return Err(Error::SupportOverflow(format!("2Δ at scale {} exceeds the torus", cube.scale)));
    }
    let (x, t) = dec.center(cube);
    Ok((x, t, side))
}

/// The profile `χ_Δ(x,t)·((x − x_Δ)·ζ̄)` at a point, with toroidal offsets.
pub fn profile_at(grid: &GridSpec, center: &[f64], tcenter: f64, side: f64, zeta: &[C64], x: &[f64], t: f64) -> C64 {
    let mut chi = cutoff(wrap(t - tcenter, grid.lt), 0.25 * side * side, side * side);
    let mut lin = C64::new(0.0, 0.0);
    for a in 0..grid.n {
        let r = wrap(x[a] - center[a], grid.lx);
        chi *= cutoff(r, 0.5 * side, side);
        lin += zeta[a].conj() * r;
    }
    lin * chi
}

fn profile_field(dec: &DyadicDecomposition, cube: &Cube, zeta: &[C64]) -> Result<Field> {
    let (c, tc, side) = geometry(dec, cube)?;
    let g = *dec.grid();
    if zeta.len() != g.n {
        return Err(Error::InvalidParameter(format!("direction of length {} for n = {}", zeta.len(), g.n)));
    }
    Ok(Field::from_fn(g, |x, t| profile_at(&g, &c[..g.n], tc, side, zeta, x, t)))
}

pub fn complex_direction(z: &[f64]) -> Vec<C64> {
    z.iter().map(|&v| C64::new(v, 0.0)).collect()
}

pub fn test_function(
    op: &ParabolicOperator,
    dec: &DyadicDecomposition,
    cube: &Cube,
    zeta: &[C64],
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<TestFunction> {
    if dec.grid() != op.grid() {
        return Err(Error::GridMismatch);
    }
    let profile = profile_field(dec, cube, zeta)?;
    let scale = epsilon * dec.side(cube.scale);
    let smoothed = ShiftedSystem::resolvent(op, scale, cfg)?.solve(&profile, cfg)?.u;
    Ok(TestFunction { cube: *cube, profile, smoothed, scale })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaaReport {
    pub epsilon: f64,
    /// `∬|f − L|² / ((εℓ)²|Δ|)`.
    pub ratio_i: f64,
    /// `∬|f − L|² / |Δ|`.
    pub raw_i: f64,
    /// `∬|∇ₓ(f − L)|² + |Dₜ^{1/2}(f − L)|²` over `|Δ|`.
    pub ratio_ii: f64,
    /// `‖∇ₓf‖² + ‖Dₜ^{1/2}f‖²` over `|Δ|`.
    pub ratio_iii: f64,
    /// `‖∇ₓL‖² + ‖Dₜ^{1/2}L‖²` over `|Δ|`, the limit of the third ratio as `ε → 0`.
    pub profile_energy: f64,
}

fn energy(f: &Field) -> Result<f64> {
    Ok(gradx(f)?.norm_sqr() + half_dt(f)?.norm_sqr())
}

pub fn verify_laa(
    op: &ParabolicOperator,
    dec: &DyadicDecomposition,
    cube: &Cube,
    zeta: &[C64],
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<LaaReport> {
    let tf = test_function(op, dec, cube, zeta, epsilon, cfg)?;
    let vol = dec.volume(cube.scale);
    let diff = tf.smoothed.sub(&tf.profile);
    let raw_i = diff.norm_sqr() / vol;
    Ok(LaaReport {
        epsilon,
        ratio_i: raw_i / (tf.scale * tf.scale),
        raw_i,
        ratio_ii: energy(&diff)? / vol,
        ratio_iii: energy(&tf.smoothed)? / vol,
        profile_energy: energy(&tf.profile)? / vol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsHalving {
    pub coarse: LaaReport,
    pub fine: LaaReport,
    /// `∬|f_ε − L|² / ∬|f_{ε/2} − L|²`.
    pub factor_i: f64,
    /// Fine over coarse for the second and third ratios.
    pub drift_ii: f64,
    pub drift_iii: f64,
}

pub fn laa_eps_halving(
    op: &ParabolicOperator,
    dec: &DyadicDecomposition,
    cube: &Cube,
    zeta: &[C64],
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<EpsHalving> {
    let coarse = verify_laa(op, dec, cube, zeta, epsilon, cfg)?;
    let fine = verify_laa(op, dec, cube, zeta, 0.5 * epsilon, cfg)?;
    Ok(EpsHalving {
        factor_i: coarse.raw_i / fine.raw_i,
        drift_ii: fine.ratio_ii / coarse.ratio_ii,
        drift_iii: fine.ratio_iii / coarse.ratio_iii,
        coarse,
        fine,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionValue {
    pub zeta: Vec<f64>,
    /// `sup_Δ (1/|Δ|)∫₀^{ℓ(Δ)}∬_Δ|(U_λA)·A_λ∇ₓf^ζ_Δ|² dλ/λ`.
    pub value: f64,
    pub attaining: Cube,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbReductionReport {
    /// Carleson supremum over the examined cubes.
    pub left: f64,
    /// Mean over `W` of the per-direction suprema.
    pub right: f64,
    /// `left / right`, zero when both sides vanish.
    pub constant: f64,
    pub directions: Vec<DirectionValue>,
    pub attaining_direction: Vec<f64>,
    pub cubes_examined: usize,
}

/// Evenly spread cubes of scales `1..=j_max`.
fn examined_cubes(dec: &DyadicDecomposition, budget: usize) -> Vec<Cube> {
    let mut out = Vec::new();
    for j in 1..=dec.j_max() {
        let all = dec.cubes(j);
        let take = all.len().min(budget);
        out.extend((0..take).map(|k| all[k * all.len() / take]));
    }
    out
}

/// Per-cube Gram matrices `∫∬_Δ conj(w_a)w_b dλ/λ` with `w_a = (U_λA)·A_λ∇ₓf^{e_a}`.
///
/// The test function is linear in `ζ̄`, so `w` for `ζ` is `Σ_a ζ̄_a w_a` and
/// every direction is read off these matrices.
fn cube_gram(
    op: &ParabolicOperator,
    dec: &DyadicDecomposition,
    cache: &UCache,
    cube: &Cube,
    epsilon: f64,
    cfg: &SolverConfig,
) -> Result<DMatrix<C64>> {
    let n = op.grid().n;
    let grid = *op.grid();
    let side = dec.side(cube.scale);
    let sys = ShiftedSystem::resolvent(op, epsilon * side, cfg)?;
    let mut grads = Vec::with_capacity(n);
    for a in 0..n {
        let mut e = vec![C64::new(0.0, 0.0); n];
        e[a] = C64::new(1.0, 0.0);
        let f = sys.solve(&profile_field(dec, cube, &e)?, cfg)?.u;
        grads.push(gradx(&f)?);
    }
    let mask = dec.mask(cube);
    let inside: Vec<usize> = (0..grid.len()).filter(|&p| mask[p]).collect();
    let cell = grid.cell_volume();
    let mut gram = DMatrix::<C64>::zeros(n, n);
    // Averaged gradients depend on λ only through its dyadic scale.
    let mut averaged: Option<(Option<usize>, Vec<Vec<Field>>)> = None;
    for (k, &l) in cache.lambdas.values.iter().enumerate() {
        if l > side {
            continue;
        }
        let j = dec.scale_for(l).ok();
        if averaged.as_ref().map(|a| a.0) != Some(j) {
            let avg = grads
                .iter()
                .map(|g| g.components().iter().map(|c| j.map_or_else(|| c.clone(), |j| dec.average_at(j, c))).collect())
                .collect();
            averaged = Some((j, avg));
        }
        let avg = &averaged.as_ref().expect("set above").1;
        let u = cache.at(k);
        let w = cache.lambdas.weights[k] * cell;
        for &p in &inside {
            let vals: Vec<C64> =
                (0..n).map(|a| (0..n).map(|i| u[i].values()[p] * avg[a][i].values()[p]).sum()).collect();
            for a in 0..n {
                for b in 0..n {
                    gram[(a, b)] += vals[a].conj() * vals[b] * w;
                }
            }
        }
    }
    Ok(gram.map(|v| v / dec.volume(cube.scale)))
}

pub fn tb_reduction_check(
    op: &ParabolicOperator,
    dec: &DyadicDecomposition,
    cache: &UCache,
    tb: &TbConfig,
    cfg: &SolverConfig,
) -> Result<TbReductionReport> {
    let n = op.grid().n;
    tb.validate(n)?;
    if dec.grid() != op.grid() || &cache.grid != op.grid() {
        return Err(Error::GridMismatch);
    }
    let cubes = examined_cubes(dec, tb.max_cubes_per_scale);
    if cubes.is_empty() {
        return Err(Error::InvalidParameter("the grid has no dyadic scale below the torus".into()));
    }
    let grams: Vec<DMatrix<C64>> =
        cubes.par_iter().map(|c| cube_gram(op, dec, cache, c, tb.epsilon, cfg)).collect::<Result<_>>()?;
    let carleson = carleson_functional(cache, dec)?;
    let left = cubes.iter().map(|c| carleson.scales[c.scale].values[dec.cube_index(c)]).fold(0.0, f64::max);
    let directions: Vec<DirectionValue> = tb
        .directions
        .iter()
        .map(|z| {
            let c = nalgebra::DVector::from_iterator(n, z.iter().map(|&v| C64::new(v, 0.0)));
            let (best, value) = grams
                .iter()
                .map(|g| (c.adjoint() * g * &c)[(0, 0)].re.max(0.0))
                .enumerate()
                .fold((0, 0.0), |m, (i, v)| if v > m.1 { (i, v) } else { m });
            DirectionValue { zeta: z.clone(), value, attaining: cubes[best] }
        })
        .collect();
    let right = directions.iter().map(|d| d.value).sum::<f64>() / directions.len() as f64;
    let top = directions.iter().fold(&directions[0], |m, d| if d.value > m.value { d } else { m });
    let constant = if right > 0.0 {
        left / right
    } else if left > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(TbReductionReport {
        left,
        right,
        constant,
        attaining_direction: top.zeta.clone(),
        directions,
        cubes_examined: cubes.len(),
    })
}

//! The operators `U_λ = λE_λdivₓ` and `R_λ`, the Carleson functional of
//! `U_λA` over parabolic dyadic cubes, and the Tb reduction.
//!
//! `U_λA` is the vector whose `i`-th entry is `λE_λdivₓ(A_i)`, `A_i` the
//! `i`-th column of `A`. With `D` normalized over the whole torus the columns
//! are periodic and integrable, so no cutoff sequence is needed.

mod tb;

pub use tb::{
    complex_direction, cutoff, default_directions, laa_eps_halving, refined_directions, tb_reduction_check,
    test_function, verify_laa, EpsHalving, LaaReport, TbConfig, TbReductionReport, TestFunction,
};

use crate::dyadic::{Cube, DyadicDecomposition};
use crate::error::{Error, Result};
use crate::lattice::{divx, dt, gradx, Field, GridSpec, VectorField};
use crate::lp::LambdaGrid;
use crate::offdiag::ParabolicCube;
use crate::operator::ParabolicOperator;
use crate::resolvent::{ShiftedSystem, SolverConfig};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Column `i` of `A` (or `A*`) as a vector field.
pub fn coefficient_column(op: &ParabolicOperator, i: usize) -> VectorField {
    let grid = *op.grid();
    let comps = (0..grid.n)
        .map(|k| {
            let vals = (0..grid.len()).map(|p| op.matrix(p)[k][i]).collect();
            Field::from_values(grid, vals).expect("finite coefficients")
        })
        .collect();
    VectorField::new(comps).expect("same grid")
}

fn ensure_normalized(op: &ParabolicOperator) -> Result<()> {
    let c = op.coeffs();
    let avg = c.d_average(&crate::coefficients::SpatialCube::full(&c.grid))?;
    let tol = 1e-12 * c.d_max().max(1.0);
    if avg.iter().flatten().flatten().any(|v| v.abs() > tol) {
        return Err(Error::InvalidParameter("D must be normalized over the whole torus".into()));
    }
    Ok(())
}

/// `U_λ F = λE_λdivₓF` for a prepared resolvent.
fn u_apply(sys: &ShiftedSystem, lambda: f64, f: &VectorField, cfg: &SolverConfig) -> Result<(Field, usize)> {
    let rhs = divx(f)?.scale(C64::new(lambda, 0.0));
    let r = sys.solve(&rhs, cfg)?;
    Ok((r.u, r.iterations))
}

/// `U_λA`, one field per column of `A`.
pub fn u_lambda_a(op: &ParabolicOperator, lambda: f64, cfg: &SolverConfig) -> Result<Vec<Field>> {
    ensure_normalized(op)?;
    let sys = ShiftedSystem::resolvent(op, lambda, cfg)?;
    (0..op.grid().n).map(|i| u_apply(&sys, lambda, &coefficient_column(op, i), cfg).map(|r| r.0)).collect()
}

/// `U_λA` on every node of a λ-grid, immutable once built.
#[derive(Debug, Clone)]
pub struct UCache {
    pub grid: GridSpec,
    pub lambdas: LambdaGrid,
    fields: Vec<Vec<Field>>,
    pub iterations: usize,
}

impl UCache {
    pub fn build(op: &ParabolicOperator, lambdas: &LambdaGrid, cfg: &SolverConfig) -> Result<Self> {
        ensure_normalized(op)?;
        let cols: Vec<VectorField> = (0..op.grid().n).map(|i| coefficient_column(op, i)).collect();
        let per_node: Vec<(Vec<Field>, usize)> = lambdas
            .values
            .par_iter()
            .map(|&l| {
                let sys = ShiftedSystem::resolvent(op, l, cfg)?;
                let mut its = 0;
                let mut out = Vec::with_capacity(cols.len());
                for c in &cols {
                    let (u, k) = u_apply(&sys, l, c, cfg)?;
                    its += k;
                    out.push(u);
                }
                Ok((out, its))
            })
            .collect::<Result<_>>()?;
        let iterations = per_node.iter().map(|p| p.1).sum();
        let fields = per_node.into_iter().map(|p| p.0).collect();
        Ok(Self { grid: *op.grid(), lambdas: lambdas.clone(), fields, iterations })
    }

    pub fn at(&self, node: usize) -> &[Field] {
        &self.fields[node]
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// `Σ_i |U_λA_i|²` at every lattice point for node `k`.
    pub fn density(&self, node: usize) -> Vec<f64> {
        let comps = &self.fields[node];
        (0..self.grid.len()).map(|p| comps.iter().map(|c| c.values()[p].norm_sqr()).sum()).collect()
    }
}

/// Per-cube values at one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleValues {
    pub scale: usize,
    pub side: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// `(1/|Δ|)∫₀^{ℓ(Δ)}∬_Δ|U_λA|² dx dt dλ/λ` per cube, scales `0..=j_max`.
    pub scales: Vec<ScaleValues>,
    pub supremum: f64,
    pub attaining: Cube,
    /// Supremum over scales `0..=J` for each `J`.
    pub running_supremum: Vec<f64>,
    /// Share of the attaining cube's value carried by the smallest λ-node.
    pub low_tail: f64,
    /// Nodes above the largest cube side, which never enter.
    pub unused_nodes: usize,
}

impl CarlesonReport {
    /// Largest value among scales `from..=j_max`.
    pub fn supremum_from(&self, from: usize) -> f64 {
        self.scales.iter().skip(from).flat_map(|s| s.values.iter().copied()).fold(0.0, f64::max)
    }
}

/// Per-cube sums of `density·cell volume` at scale `j`, in cube index order.
fn cube_sums(dec: &DyadicDecomposition, j: usize, density: &[f64]) -> Vec<f64> {
    let (cx, ct) = dec.counts(j);
    let mut sums = vec![0.0; cx.pow(dec.grid().n as u32) * ct];
    let vol = dec.grid().cell_volume();
    for (i, d) in density.iter().enumerate() {
        sums[dec.cube_id(j, i)] += d * vol;
    }
    sums
}

pub fn carleson_functional(cache: &UCache, dec: &DyadicDecomposition) -> Result<CarlesonReport> {
    if dec.grid() != &cache.grid {
        return Err(Error::GridMismatch);
    }
    let lg = &cache.lambdas;
    let scales: Vec<usize> = (0..=dec.j_max()).collect();
    // Per node and scale: weighted cube sums, or nothing when λ exceeds the side.
    let contributions: Vec<Vec<Option<Vec<f64>>>> = (0..cache.len())
        .into_par_iter()
        .map(|k| {
            let l = lg.values[k];
            let density = cache.density(k);
            scales
                .iter()
                .map(|&j| {
                    (l <= dec.side(j)).then(|| cube_sums(dec, j, &density).iter().map(|s| s * lg.weights[k]).collect())
                })
                .collect()
        })
        .collect();
    let mut per_scale = Vec::with_capacity(scales.len());
    for (si, &j) in scales.iter().enumerate() {
        let (cx, ct) = dec.counts(j);
        let mut acc = vec![0.0; cx.pow(dec.grid().n as u32) * ct];
        for node in &contributions {
            if let Some(v) = &node[si] {
                for (a, b) in acc.iter_mut().zip(v) {
                    *a += b;
                }
            }
        }
        let vol = dec.volume(j);
        per_scale.push(ScaleValues { scale: j, side: dec.side(j), values: acc.iter().map(|a| a / vol).collect() });
    }
    let mut supremum = 0.0;
    let mut attaining = (0, 0);
    let mut running = Vec::with_capacity(per_scale.len());
    for (si, s) in per_scale.iter().enumerate() {
        for (ci, &v) in s.values.iter().enumerate() {
            if v > supremum {
                supremum = v;
                attaining = (si, ci);
            }
        }
        running.push(supremum);
    }
    let cube = dec.cubes(scales[attaining.0])[attaining.1];
    let low_tail = match &contributions.first().and_then(|c| c[attaining.0].as_ref()) {
        Some(v) if supremum > 0.0 => v[attaining.1] / dec.volume(cube.scale) / supremum,
        _ => 0.0,
    };
    let unused_nodes = lg.values.iter().filter(|&&l| l > dec.side(0)).count();
    Ok(CarlesonReport {
        scales: per_scale,
        supremum,
        attaining: cube,
        running_supremum: running,
        low_tail,
        unused_nodes,
    })
}

/// Local norms of `U_λA` against dyadic averaging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaBounds {
    /// `sup_λ sup_Q (λ_max(∫_Q U U*)/|Q|)^{1/2}` over dyadic `Q` of the scale of `λ`.
    pub gamma: f64,
    /// `sup_λ sup_f ‖(U_λA)·A_λf‖₂` over the probes, `‖f‖₂ = 1`.
    pub gamma_prime: f64,
    /// `Γ′/Γ`.
    pub constant: f64,
    /// Largest value of `‖(U_λA)·A_λf‖₂` over the random probes alone.
    pub random_probe_max: f64,
}

/// Largest eigenvalue of `∫_Q U U*` per cube of scale `j`, with the maximizing direction.
fn cube_gram_tops(dec: &DyadicDecomposition, j: usize, u: &[Field]) -> Vec<(f64, Vec<C64>)> {
    let n = u.len();
    let (cx, ct) = dec.counts(j);
    let count = cx.pow(dec.grid().n as u32) * ct;
    let mut grams = vec![DMatrix::<C64>::zeros(n, n); count];
    let vol = dec.grid().cell_volume();
    for p in 0..dec.grid().len() {
        let g = &mut grams[dec.cube_id(j, p)];
        for a in 0..n {
            for b in 0..n {
                g[(a, b)] += u[a].values()[p].conj() * u[b].values()[p] * vol;
            }
        }
    }
    grams
        .into_iter()
        .map(|g| {
            let e = SymmetricEigen::new(g);
            let (k, top) =
                e.eigenvalues
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |m, (i, &v)| if v > m.1 { (i, v) } else { m });
            (top.max(0.0), e.eigenvectors.column(k).iter().copied().collect())
        })
        .collect()
}

/// `(U_λA)·A_λf` for a vector probe already averaged at scale `j`.
fn paired(u: &[Field], averaged: &[Field]) -> Field {
    let grid = *u[0].grid();
    let vals =
        (0..grid.len()).map(|p| u.iter().zip(averaged).map(|(a, b)| a.values()[p] * b.values()[p]).sum()).collect();
    Field::from_values(grid, vals).expect("finite")
}

fn average_or_identity(dec: &DyadicDecomposition, lambda: f64, f: &Field) -> Result<Field> {
    match dec.scale_for(lambda) {
        Ok(j) => Ok(dec.average_at(j, f)),
        Err(Error::BelowResolution(_)) => Ok(f.clone()),
        Err(e) => Err(e),
    }
}

/// `Γ` and `Γ′` over the resolved nodes of the cache.
///
/// The probes are the given vector fields plus, for each node and each dyadic
/// cube of its scale, the normalized indicator of the cube along the top
/// eigenvector of the local Gram matrix.
pub fn theta_ab_bounds(cache: &UCache, dec: &DyadicDecomposition, probes: &[VectorField]) -> Result<ThetaBounds> {
    let lg = &cache.lambdas;
    let resolved: Vec<(usize, usize)> =
        (0..cache.len()).filter_map(|k| dec.scale_for(lg.values[k]).ok().map(|j| (k, j))).collect();
    if resolved.is_empty() {
        return Err(Error::BelowResolution("no λ-node reaches a dyadic scale".into()));
    }
    let probes: Vec<VectorField> = probes
        .iter()
        .map(|p| {
            let nrm = p.norm();
            if nrm == 0.0 {
                Err(Error::InvalidParameter("probe must be nonzero".into()))
            } else {
                Ok(p.scale(C64::new(1.0 / nrm, 0.0)))
            }
        })
        .collect::<Result<_>>()?;
    let per_node: Vec<(f64, f64, f64)> = resolved
        .par_iter()
        .map(|&(k, j)| {
            let u = cache.at(k);
            let tops = cube_gram_tops(dec, j, u);
            let vol = dec.volume(j);
            let gamma_sq = tops.iter().map(|t| t.0 / vol).fold(0.0, f64::max);
            // Indicator probe of the attaining cube along its top direction.
            let (best, _) = tops.iter().enumerate().fold((0, -1.0), |m, (i, t)| if t.0 > m.1 { (i, t.0) } else { m });
            let cube = dec.cubes(j)[best];
            let mask = dec.mask(&cube);
            let h = 1.0 / vol.sqrt();
            let dir = &tops[best].1;
            let ind: Vec<Field> = dir
                .iter()
                .map(|d| {
                    let vals = mask.iter().map(|&m| if m { *d * h } else { C64::new(0.0, 0.0) }).collect();
                    Field::from_values(cache.grid, vals).expect("finite")
                })
                .collect();
            let ind_avg: Vec<Field> = ind.iter().map(|c| dec.average_at(j, c)).collect();
            let ind_val = paired(u, &ind_avg).norm();
            let mut rand_max: f64 = 0.0;
            for p in &probes {
                let avg: Vec<Field> = p.components().iter().map(|c| dec.average_at(j, c)).collect();
                rand_max = rand_max.max(paired(u, &avg).norm());
            }
            (gamma_sq.sqrt(), ind_val.max(rand_max), rand_max)
        })
        .collect();
    let gamma = per_node.iter().map(|p| p.0).fold(0.0, f64::max);
    let gamma_prime = per_node.iter().map(|p| p.1).fold(0.0, f64::max);
    let random_probe_max = per_node.iter().map(|p| p.2).fold(0.0, f64::max);
    let constant = if gamma > 0.0 { gamma_prime / gamma } else { 1.0 };
    Ok(ThetaBounds { gamma, gamma_prime, constant, random_probe_max })
}

/// `min_{Δ_λ(z,τ)} A_λ1_{2Δ_λ(z,τ)}`: the constant in `1_{Δ_λ(z,τ)} ≤ C·A_λ1_{2Δ_λ(z,τ)}` is its inverse.
pub fn indicator_floor(dec: &DyadicDecomposition, lambda: f64, center: &[usize], tcenter: usize) -> Result<f64> {
    let grid = *dec.grid();
    let small = ParabolicCube::new(&grid, center, tcenter, lambda)?;
    let double = small.dilate(2.0);
    if !double.fits(&grid) {
        return Err(Error::SupportOverflow("2Δ_λ exceeds the torus".into()));
    }
    let g = Field::from_values(
        grid,
        double.mask(&grid).iter().map(|&m| C64::new(if m { 1.0 } else { 0.0 }, 0.0)).collect(),
    )?;
    let a = average_or_identity(dec, lambda, &g)?;
    Ok(small.mask(&grid).iter().zip(a.values()).filter(|p| *p.0).map(|p| p.1.re).fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RReport {
    pub value: Field,
    /// `‖R_λ∇ₓg‖ / (‖λ∇ₓ∇ₓg‖ + ‖λ²∂t∇ₓg‖)`.
    pub ratio: f64,
}

/// `R_λ(∇ₓg) = U_λ(A∇ₓg) − (U_λA)·A_λ(∇ₓg)`.
pub fn r_lambda_apply(op: &ParabolicOperator, lambda: f64, g: &Field, cfg: &SolverConfig) -> Result<RReport> {
    let u = u_lambda_a(op, lambda, cfg)?;
    let grid = *op.grid();
    let dec = DyadicDecomposition::new(&grid);
    let grad = gradx(g)?;
    let n = grid.n;
    let flux_vals: Vec<Vec<C64>> = (0..n)
        .map(|k| {
            (0..grid.len())
                .map(|p| {
                    let a = op.matrix(p);
                    (0..n).map(|i| a[k][i] * grad.component(i).values()[p]).sum()
                })
                .collect()
        })
        .collect();
    let flux = VectorField::new(flux_vals.into_iter().map(|v| Field::from_values(grid, v)).collect::<Result<_>>()?)?;
    let sys = ShiftedSystem::resolvent(op, lambda, cfg)?;
    let (first, _) = u_apply(&sys, lambda, &flux, cfg)?;
    let averaged: Vec<Field> =
        grad.components().iter().map(|c| average_or_identity(&dec, lambda, c)).collect::<Result<_>>()?;
    let value = first.sub(&paired(&u, &averaged));
    let mut hess = 0.0;
    let mut dtg = 0.0;
    for c in grad.components() {
        hess += (lambda * gradx(c)?.norm()).powi(2);
        dtg += (lambda * lambda * dt(c)?.norm()).powi(2);
    }
    let den = hess.sqrt() + dtg.sqrt();
    let ratio = if den > 0.0 { value.norm() / den } else { 0.0 };
    Ok(RReport { value, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{generate, CoefficientField, Family, GeneratorSpec, SpatialCube};
    use crate::sampling;

    fn checker(g: &GridSpec) -> ParabolicOperator {
        let c = generate(&GeneratorSpec::new(Family::Checkerboard, 1.0, 0), g).unwrap();
        ParabolicOperator::new(c.normalize_d(&SpatialCube::full(g)).unwrap())
    }

    #[test]
    fn identity_gives_zero() {
        let g = GridSpec::unit(2, 8, 16).unwrap();
        let op = ParabolicOperator::new(CoefficientField::identity(&g));
        for u in u_lambda_a(&op, 0.1, &SolverConfig::default()).unwrap() {
            assert!(u.max_abs() < 1e-13);
        }
    }

    #[test]
    fn constant_antisymmetric_part_normalizes_away() {
        let g = GridSpec::unit(2, 8, 16).unwrap();
        let c = generate(&GeneratorSpec::new(Family::ConstantAntisym, 0.7, 0), &g).unwrap();
        let op = ParabolicOperator::new(c.clone());
        assert!(u_lambda_a(&op, 0.1, &SolverConfig::default()).is_err());
        let op = ParabolicOperator::new(c.normalize_d(&SpatialCube::full(&g)).unwrap());
        for u in u_lambda_a(&op, 0.1, &SolverConfig::default()).unwrap() {
            assert!(u.max_abs() < 1e-13);
        }
    }

    #[test]
    fn checkerboard_is_nonzero_and_linear_in_columns() {
        let g = GridSpec::unit(2, 8, 16).unwrap();
        let op = checker(&g);
        let cfg = SolverConfig::default();
        let u = u_lambda_a(&op, 0.2, &cfg).unwrap();
        assert!(u.iter().any(|c| c.norm() > 1e-3));
        let sys = ShiftedSystem::resolvent(&op, 0.2, &cfg).unwrap();
        let a = coefficient_column(&op, 0);
        let b = coefficient_column(&op, 1);
        let sum = VectorField::new(a.components().iter().zip(b.components()).map(|(x, y)| x.add(y)).collect()).unwrap();
        let lhs = u_apply(&sys, 0.2, &sum, &cfg).unwrap().0;
        let rhs = u[0].add(&u[1]);
        assert!(lhs.sub(&rhs).norm() < 1e-8 * rhs.norm());
    }

    #[test]
    fn carleson_is_zero_for_identity_and_running_sup_monotone() {
        let g = GridSpec::unit(2, 8, 16).unwrap();
        let dec = DyadicDecomposition::new(&g);
        let lg = LambdaGrid::geometric(1e-3, 1.0, 8).unwrap();
        let cfg = SolverConfig::default();
        let id = UCache::build(&ParabolicOperator::new(CoefficientField::identity(&g)), &lg, &cfg).unwrap();
        assert!(carleson_functional(&id, &dec).unwrap().supremum <= 1e-12);
        let cb = UCache::build(&checker(&g), &lg, &cfg).unwrap();
        let r = carleson_functional(&cb, &dec).unwrap();
        assert!(r.supremum > 0.0 && r.supremum.is_finite());
        assert!(r.running_supremum.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(r.scales.len(), dec.j_max() + 1);
    }

    #[test]
    fn gamma_and_gamma_prime_agree_on_dyadic_probes() {
        let g = GridSpec::unit(2, 8, 16).unwrap();
        let dec = DyadicDecomposition::new(&g);
        let lg = LambdaGrid::geometric(0.15, 0.6, 8).unwrap();
        let cache = UCache::build(&checker(&g), &lg, &SolverConfig::default()).unwrap();
        let probes: Vec<VectorField> = (0..3)
            .map(|s| {
                VectorField::new(vec![
                    sampling::generic(&g, 4, 2 * s, false),
                    sampling::generic(&g, 4, 2 * s + 1, false),
                ])
                .unwrap()
            })
            .collect();
        let b = theta_ab_bounds(&cache, &dec, &probes).unwrap();
        assert!(b.gamma > 0.0);
        assert!(b.gamma <= b.gamma_prime * (1.0 + 1e-12));
        assert!(b.gamma_prime <= b.gamma * (1.0 + 1e-12));
        assert!(b.random_probe_max <= b.gamma * (1.0 + 1e-12));
    }

    #[test]
    fn indicator_floor_is_positive() {
        let g = GridSpec::unit(2, 16, 64).unwrap();
        let dec = DyadicDecomposition::new(&g);
        let f = indicator_floor(&dec, 0.25, &[5, 9], 17).unwrap();
        assert!(f > 0.0 && f <= 1.0);
    }

    #[test]
    fn r_lambda_vanishes_on_constants() {
        let g = GridSpec::unit(2, 8, 16).unwrap();
        let op = checker(&g);
        let r = r_lambda_apply(&op, 0.2, &Field::constant(g, C64::new(2.0, 0.0)), &SolverConfig::default()).unwrap();
        assert!(r.value.max_abs() < 1e-12);
        assert_eq!(r.ratio, 0.0);
    }
}

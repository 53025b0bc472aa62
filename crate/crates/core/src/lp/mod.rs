//! Littlewood–Paley tools: mollifiers `P_λ`, dyadic averages `A_λ`, the
//! square-function norm `|||g|||₂ = (∫∬|g_λ|² dx dt dλ/λ)^{1/2}` on a finite
//! λ-window, and measured constants of the square-function estimates.

mod maximal;
mod mollifier;

pub use maximal::{composed_maximal, spatial_maximal, time_maximal};
pub use mollifier::{conv_p, conv_p1, conv_p2, Factors, MollifierSpec, MollifierSymbol, Profile};

use crate::dyadic::DyadicDecomposition;
use crate::error::{Error, Result};
use crate::lattice::{forward, norms_spectral, Field, Frequencies, GridSpec};
use crate::operator::ParabolicOperator;
use crate::reduce;
use crate::resolvent::{ShiftedSystem, SolverConfig};
use crate::sampling;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Geometric λ-nodes with midpoint-in-log weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub per_decade: usize,
}

impl LambdaGrid {
    pub fn geometric(lambda_min: f64, lambda_max: f64, per_decade: usize) -> Result<Self> {
        if !(lambda_min > 0.0 && lambda_max > lambda_min && lambda_max.is_finite()) || per_decade == 0 {
            return Err(Error::InvalidParameter(format!(
                "λ-grid [{lambda_min}, {lambda_max}] with {per_decade} nodes per decade"
            )));
        }
        let decades = (lambda_max / lambda_min).log10();
        let count = (decades * per_decade as f64).ceil().max(1.0) as usize;
        let step = (lambda_max / lambda_min).ln() / count as f64;
        let l0 = lambda_min.ln();
        let values = (0..count).map(|j| (l0 + (j as f64 + 0.5) * step).exp()).collect();
        Ok(Self { values, weights: vec![step; count], lambda_min, lambda_max, per_decade })
    }

    /// 64 nodes per decade over `[2.5·10⁻⁴·Lx, Lx/4]`.
    pub fn default_for(grid: &GridSpec) -> Self {
        Self::geometric(2.5e-4 * grid.lx, grid.lx / 4.0, 64).expect("valid default window")
    }

    /// Same window with twice the nodes per decade.
    pub fn refined(&self) -> Self {
        Self::geometric(self.lambda_min, self.lambda_max, 2 * self.per_decade).expect("valid window")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A square-function norm with the share of `|||·|||²` carried by each end node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleNorm {
    pub value: f64,
    pub low_tail: f64,
    pub high_tail: f64,
}

/// `(Σ_j w_j s_j)^{1/2}` from per-node squared norms `s_j`.
pub fn triple_norm_from_squares(squares: &[f64], grid: &LambdaGrid) -> TripleNorm {
    let terms: Vec<f64> = squares.iter().zip(&grid.weights).map(|(s, w)| s * w).collect();
    let total = reduce::sum_f64(&terms);
    let (low, high) = if total > 0.0 { (terms[0] / total, terms[terms.len() - 1] / total) } else { (0.0, 0.0) };
    TripleNorm { value: total.sqrt(), low_tail: low, high_tail: high }
}

/// `|||g|||₂` for a family evaluated at every node of `grid`.
pub fn triple_norm<F>(family: F, grid: &LambdaGrid) -> Result<TripleNorm>
where
    F: Fn(f64) -> Result<Field> + Sync,
{
    let squares: Vec<f64> = grid.values.par_iter().map(|&l| family(l).map(|g| g.norm_sqr())).collect::<Result<_>>()?;
    Ok(triple_norm_from_squares(&squares, grid))
}

/// `A_λ f`: averages over the dyadic parabolic cube of side in `[λ, 2λ)`.
pub fn dyadic_average(lambda: f64, f: &Field) -> Result<Field> {
    f.ensure_finite()?;
    let d = DyadicDecomposition::new(f.grid());
    let j = d.scale_for(lambda)?;
    Ok(d.average_at(j, f))
}

/// Largest ratio `|P_λf| / M⁽¹⁾(M⁽²⁾|f|)` over the lattice.
pub fn maximal_domination(spec: &MollifierSpec, lambda: f64, f: &Field) -> Result<f64> {
    let p = conv_p(spec, lambda, f)?;
    let m = composed_maximal(f);
    Ok(p.values().iter().zip(&m).map(|(v, b)| if *b > 0.0 { v.norm() / b } else { 0.0 }).fold(0.0, f64::max))
}

#[derive(Debug, Clone)]
pub struct LpSample {
    pub class: String,
    pub field: Field,
}

/// Measured constants of the three square-function estimates for one sample class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpConstants {
    /// `(|||λ∇ₓP_λf||| + |||λ²∂tP_λf||| + |||λDₜ^{1/2}P_λf|||) / ‖f‖`.
    pub smoothing: f64,
    /// `|||λ⁻¹(I−P_λ)f||| / ‖𝔻f‖`.
    pub approximation: f64,
    /// `|||(A_λ−P_λ)f||| / ‖f‖`.
    pub averaging: f64,
}

impl LpConstants {
    fn max(self, o: Self) -> Self {
        Self {
            smoothing: self.smoothing.max(o.smoothing),
            approximation: self.approximation.max(o.approximation),
            averaging: self.averaging.max(o.averaging),
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.smoothing, self.approximation, self.averaging]
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub samples: usize,
    pub constants: LpConstants,
    /// Largest end-node share of any square-function norm in this class.
    pub max_low_tail: f64,
    pub max_high_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSuiteReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub nodes: usize,
    pub classes: Vec<ClassReport>,
}

struct SampleResult {
    constants: LpConstants,
    low: f64,
    high: f64,
}

fn measure_sample(spec: &MollifierSpec, f: &Field, grid: &LambdaGrid) -> Result<SampleResult> {
    let g = *f.grid();
    let fnorm = f.norm();
    let d = norms_spectral(f)?.d_seminorm;
    if fnorm == 0.0 || d == 0.0 {
        return Err(Error::InvalidParameter("LP samples must be nonconstant".into()));
    }
    let freqs = Frequencies::new(&g);
    let spectrum = forward(f);
    let scale = g.cell_volume() / g.len() as f64;
    let nt = g.nt;
    let modes: Vec<(f64, f64, f64)> = spectrum
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let m = freqs.mode(i / nt, i % nt);
            (z.norm_sqr() * scale, m.xi_sqr(), m.tau.abs())
        })
        .collect();
    let dec = DyadicDecomposition::new(&g);
    let per_node: Vec<[f64; 5]> = grid
        .values
        .par_iter()
        .map(|&l| {
            let sym = MollifierSymbol::new(spec, &g, l, Factors::Both)?;
            let mut acc = [0.0; 4];
            let mut parts = [Vec::with_capacity(modes.len()), Vec::new(), Vec::new(), Vec::new()];
            for ((a, xi2, tau), p) in modes.iter().zip(&sym.values) {
                let p2 = p * p * a;
                parts[0].push(l * l * xi2 * p2);
                parts[1].push(l.powi(4) * tau * tau * p2);
                parts[2].push(l * l * tau * p2);
                parts[3].push((1.0 - p).powi(2) * a / (l * l));
            }
            for (s, v) in acc.iter_mut().zip(&parts) {
                *s = reduce::sum_f64(v);
            }
            let pf = sym.apply(f);
            let af = match dec.scale_for(l) {
                Ok(j) => dec.average_at(j, f),
                Err(Error::BelowResolution(_)) => f.clone(),
                Err(e) => return Err(e),
            };
            Ok([acc[0], acc[1], acc[2], acc[3], af.sub(&pf).norm_sqr()])
        })
        .collect::<Result<_>>()?;
    let column = |c: usize| -> Vec<f64> { per_node.iter().map(|r| r[c]).collect() };
    let norms: Vec<TripleNorm> = (0..5).map(|c| triple_norm_from_squares(&column(c), grid)).collect();
    let constants = LpConstants {
        smoothing: (norms[0].value + norms[1].value + norms[2].value) / fnorm,
        approximation: norms[3].value / d,
        averaging: norms[4].value / fnorm,
    };
    Ok(SampleResult {
        constants,
        low: norms.iter().map(|n| n.low_tail).fold(0.0, f64::max),
        high: norms.iter().map(|n| n.high_tail).fold(0.0, f64::max),
    })
}

/// Constants per sample class, each the largest ratio over the class.
pub fn verify_lp_suite(spec: &MollifierSpec, samples: &[LpSample], grid: &LambdaGrid) -> Result<LpSuiteReport> {
    let mut classes: Vec<ClassReport> = Vec::new();
    for s in samples {
        let r = measure_sample(spec, &s.field, grid)?;
        match classes.iter_mut().find(|c| c.class == s.class) {
            Some(c) => {
                c.samples += 1;
                c.constants = c.constants.max(r.constants);
                c.max_low_tail = c.max_low_tail.max(r.low);
                c.max_high_tail = c.max_high_tail.max(r.high);
            }
            None => classes.push(ClassReport {
                class: s.class.clone(),
                samples: 1,
                constants: r.constants,
                max_low_tail: r.low,
                max_high_tail: r.high,
            }),
        }
    }
    Ok(LpSuiteReport { lambda_min: grid.lambda_min, lambda_max: grid.lambda_max, nodes: grid.len(), classes })
}

/// Sample families for the suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpSampleSpec {
    pub rough: usize,
    pub smooth: usize,
    /// Excess decay exponent of the rough spectra.
    pub eps: f64,
    pub seed: u64,
}

impl Default for LpSampleSpec {
    fn default() -> Self {
        Self { rough: 4, smooth: 4, eps: 0.25, seed: 0 }
    }
}

pub fn lp_samples(grid: &GridSpec, spec: &LpSampleSpec) -> Vec<LpSample> {
    let rough = (0..spec.rough)
        .map(|i| LpSample { class: "rough".into(), field: sampling::rough(grid, spec.seed, i as u64, spec.eps, true) });
    let smooth = (0..spec.smooth).map(|i| LpSample {
        class: "smooth".into(),
        field: sampling::smooth(grid, spec.seed, 1000 + i as u64, 2, 4, true),
    });
    rough.chain(smooth).collect()
}

/// Largest factor by which any constant differs between two reports of the same classes.
pub fn max_growth(a: &LpSuiteReport, b: &LpSuiteReport) -> f64 {
    let mut worst: f64 = 1.0;
    for ca in &a.classes {
        if let Some(cb) = b.classes.iter().find(|c| c.class == ca.class) {
            for (x, y) in ca.constants.as_array().iter().zip(cb.constants.as_array()) {
                worst = worst.max(growth(*x, y));
            }
        }
    }
    worst
}

pub(crate) fn growth(x: f64, y: f64) -> f64 {
    if !(x.is_finite() && y.is_finite()) {
        return f64::INFINITY;
    }
    if x == y {
        return 1.0;
    }
    if x <= 0.0 || y <= 0.0 {
        return f64::INFINITY;
    }
    (x / y).max(y / x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpStability {
    pub base: LpSuiteReport,
    pub lambda_refined: LpSuiteReport,
    pub lattice_refined: LpSuiteReport,
    pub lambda_growth: f64,
    pub lattice_growth: f64,
    /// Set when a constant is not finite or grows by more than a factor 2.
    pub unbounded: bool,
}

/// The suite on `coarse`, on `coarse` with a doubled λ-grid, and on `fine`.
pub fn lp_stability(
    mollifier: &MollifierSpec,
    coarse: &GridSpec,
    fine: &GridSpec,
    samples: &LpSampleSpec,
) -> Result<LpStability> {
    if coarse.lx != fine.lx || coarse.n != fine.n {
        return Err(Error::GridMismatch);
    }
    let lg = LambdaGrid::default_for(coarse);
    let base = verify_lp_suite(mollifier, &lp_samples(coarse, samples), &lg)?;
    let lambda_refined = verify_lp_suite(mollifier, &lp_samples(coarse, samples), &lg.refined())?;
    let lattice_refined = verify_lp_suite(mollifier, &lp_samples(fine, samples), &lg)?;
    let lambda_growth = max_growth(&base, &lambda_refined);
    let lattice_growth = max_growth(&base, &lattice_refined);
    let finite =
        [&base, &lambda_refined, &lattice_refined].iter().all(|r| r.classes.iter().all(|c| c.constants.is_finite()));
    Ok(LpStability {
        unbounded: !finite || lambda_growth > 2.0 || lattice_growth > 2.0,
        base,
        lambda_refined,
        lattice_refined,
        lambda_growth,
        lattice_growth,
    })
}

/// `|||λE_λHf||| / ‖𝔻f‖` per sample, with the identity `λE_λH = λ⁻¹(I−E_λ)` as a cross-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeeReport {
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Largest `|||λE_λHf − λ⁻¹(I−E_λ)f||| / |||λE_λHf|||` over the samples.
    pub identity_defect: f64,
    pub max_low_tail: f64,
    pub max_high_tail: f64,
    pub iterations: usize,
}

/// Smallest residual target used for the cancelling solve of the identity cross-check.
pub const KEE_TOL_FLOOR: f64 = 1e-14;

pub fn verify_kee(
    op: &ParabolicOperator,
    samples: &[Field],
    grid: &LambdaGrid,
    cfg: &SolverConfig,
) -> Result<KeeReport> {
    cfg.validate()?;
    let mut ratios = Vec::with_capacity(samples.len());
    let mut defect: f64 = 0.0;
    let mut low: f64 = 0.0;
    let mut high: f64 = 0.0;
    let mut iterations = 0;
    for f in samples {
        let d = norms_spectral(f)?.d_seminorm;
        if d == 0.0 {
            return Err(Error::InvalidParameter("constant sample".into()));
        }
        let hf = op.apply(f)?;
        let gain = hf.norm() / f.norm();
        let per_node: Vec<(f64, f64, usize)> = grid
            .values
            .par_iter()
            .map(|&l| {
                let sys = ShiftedSystem::resolvent(op, l, cfg)?;
                let a = sys.solve(&hf, cfg)?;
                // λ⁻¹(I−E_λ)f loses a factor ‖f‖/(λ²‖Hf‖) to cancellation.
                let tight =
                    SolverConfig { rel_tol: (cfg.rel_tol * l * l * gain).clamp(KEE_TOL_FLOOR, cfg.rel_tol), ..*cfg };
                let e = sys.solve(f, &tight)?;
                let lhs = a.u.scale(C64::new(l, 0.0));
                let rhs = f.sub(&e.u).scale(C64::new(1.0 / l, 0.0));
                Ok((lhs.norm_sqr(), lhs.sub(&rhs).norm_sqr(), a.iterations + e.iterations))
            })
            .collect::<Result<_>>()?;
        let a: Vec<f64> = per_node.iter().map(|p| p.0).collect();
        let diff: Vec<f64> = per_node.iter().map(|p| p.1).collect();
        iterations += per_node.iter().map(|p| p.2).sum::<usize>();
        let ta = triple_norm_from_squares(&a, grid);
        let td = triple_norm_from_squares(&diff, grid);
        ratios.push(ta.value / d);
        if ta.value > 0.0 {
            defect = defect.max(td.value / ta.value);
        }
        low = low.max(ta.low_tail);
        high = high.max(ta.high_tail);
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    Ok(KeeReport { ratios, max_ratio, identity_defect: defect, max_low_tail: low, max_high_tail: high, iterations })
}

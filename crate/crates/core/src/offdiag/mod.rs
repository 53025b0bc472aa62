//! Off-diagonal decay of the resolvents `E_λ`: exponentially weighted bounds,
//! bounds between time-separated sets, annuli around parabolic cubes, and
//! fitted decay constants.
//!
//! The weight `e^{x·χ/λ}` is not periodic. It is replaced by `e^{|χ|w(x)/λ}`
//! with `w(x) = Σ_a χ̂_a |x_a|` (toroidal `|x_a|`), whose gradient has unit
//! length wherever it exists and which equals `x·χ̂` on the positive orthant
//! of the half-period box.

mod sets;

pub use sets::{ParabolicCube, SeparatedSets};

use crate::error::{Error, Result};
use crate::lattice::{divx, gradx, Field, GridSpec, VectorField};
use crate::operator::ParabolicOperator;
use crate::reduce;
use crate::resolvent::{ShiftedSystem, SolverConfig};
use crate::sampling;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffDiagConfig {
    /// Largest admissible `|χ|`.
    pub theta: f64,
    pub k_max: usize,
    pub lambda_list: Vec<f64>,
}

impl Default for OffDiagConfig {
    fn default() -> Self {
        Self { theta: 0.1, k_max: 3, lambda_list: Vec::new() }
    }
}

impl OffDiagConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta {} outside (0, 1)", self.theta)));
        }
        if self.lambda_list.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("lambda values must be positive".into()));
        }
        Ok(())
    }
}

/// Least-squares line through `(separation/λ, log ratio)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub points: Vec<(f64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `c` in `ratio ≈ C·e^{−x/c}`, infinite when the slope is not negative.
    pub fitted_c: f64,
    pub decaying: bool,
}

pub fn fit_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    if points.len() < 4 {
        return Err(Error::InsufficientSpread(format!("got {} points", points.len())));
    }
    if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidParameter("fit points need positive separations and finite logs".into()));
    }
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if hi < 4.0 * lo {
        return Err(Error::InsufficientSpread(format!("separations span a factor {:.3}", hi / lo)));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let mx = reduce::sum_f64(&xs) / n;
    let my = reduce::sum_f64(&ys) / n;
    let sxx = reduce::sum_f64(&xs.iter().map(|x| (x - mx).powi(2)).collect::<Vec<_>>());
    let sxy = reduce::sum_f64(&points.iter().map(|(x, y)| (x - mx) * (y - my)).collect::<Vec<_>>());
    let syy = reduce::sum_f64(&ys.iter().map(|y| (y - my).powi(2)).collect::<Vec<_>>());
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { (sxy * sxy / (sxx * syy)).min(1.0) } else { 1.0 };
    let decaying = slope < 0.0;
    Ok(DecayFit {
        points: points.to_vec(),
        slope,
        intercept,
        r2,
        fitted_c: if decaying { -1.0 / slope } else { f64::INFINITY },
        decaying,
    })
}

/// `e^{|χ|w(x)/λ}` on the lattice.
pub fn tent_weight(grid: &GridSpec, lambda: f64, chi: &[f64]) -> Result<Vec<f64>> {
    if chi.len() != grid.n {
        return Err(Error::InvalidParameter(format!("chi has {} components for n = {}", chi.len(), grid.n)));
    }
    let mag = chi.iter().map(|c| c * c).sum::<f64>().sqrt();
    let unit: Vec<f64> = chi.iter().map(|c| if mag > 0.0 { c / mag } else { 0.0 }).collect();
    let w = Field::from_fn(*grid, |x, _| {
        let s: f64 = x
            .iter()
            .zip(&unit)
            .map(|(xa, u)| {
                let o = (xa + 0.5 * grid.lx).rem_euclid(grid.lx) - 0.5 * grid.lx;
                u * o.abs()
            })
            .sum();
        C64::new((mag * s / lambda).exp(), 0.0)
    });
    Ok(w.values().iter().map(|z| z.re).collect())
}

fn weighted(f: &Field, w: &[f64]) -> Field {
    let vals = f.values().iter().zip(w).map(|(z, a)| z * a).collect();
    Field::from_values(*f.grid(), vals).expect("finite weights")
}

fn weighted_vec(v: &VectorField, w: &[f64]) -> VectorField {
    VectorField::new(v.components().iter().map(|c| weighted(c, w)).collect()).expect("same grid")
}

/// The three weighted ratios at one `(λ, χ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpWeightReport {
    pub lambda: f64,
    pub chi: Vec<f64>,
    /// `‖wE_λf‖`, `‖wλ∇ₓE_λf‖`, `‖wλE_λdivₓF‖`.
    pub lhs: [f64; 3],
    /// `‖wf‖`, `‖wF‖`.
    pub rhs: [f64; 2],
    pub ratios: [f64; 3],
    /// Some ratio exceeds twice the largest earlier value of the same ratio in a sweep.
    pub flagged: bool,
}

fn weighted_ratios(
    op: &ParabolicOperator,
    lambda: f64,
    chi: &[f64],
    f: &Field,
    big_f: &VectorField,
    cfg: &SolverConfig,
) -> Result<ExpWeightReport> {
    let grid = *op.grid();
    let w = tent_weight(&grid, lambda, chi)?;
    let sys = ShiftedSystem::resolvent(op, lambda, cfg)?;
    let l = C64::new(lambda, 0.0);
    let u = sys.solve(f, cfg)?.u;
    let grad = gradx(&u)?.scale(l);
    let v = sys.solve(&divx(big_f)?.scale(l), cfg)?.u;
    let lhs = [weighted(&u, &w).norm(), weighted_vec(&grad, &w).norm(), weighted(&v, &w).norm()];
    let rhs = [weighted(f, &w).norm(), weighted_vec(big_f, &w).norm()];
    let ratios = [lhs[0] / rhs[0], lhs[1] / rhs[0], lhs[2] / rhs[1]];
    Ok(ExpWeightReport { lambda, chi: chi.to_vec(), lhs, rhs, ratios, flagged: false })
}

/// Weighted resolvent bounds with `|χ| ≤ θ`.
pub fn exp_weighted_check(
    op: &ParabolicOperator,
    lambda: f64,
    chi: &[f64],
    f: &Field,
    big_f: &VectorField,
    od: &OffDiagConfig,
    cfg: &SolverConfig,
) -> Result<ExpWeightReport> {
    od.validate()?;
    let mag = chi.iter().map(|c| c * c).sum::<f64>().sqrt();
    if mag > od.theta {
        return Err(Error::InvalidParameter(format!("|chi| = {mag} exceeds theta = {}", od.theta)));
    }
    weighted_ratios(op, lambda, chi, f, big_f, cfg)
}

/// [`exp_weighted_check`] over a list of `(λ, χ)`, flagging jumps against the running maximum.
pub fn exp_weight_sweep(
    op: &ParabolicOperator,
    entries: &[(f64, Vec<f64>)],
    f: &Field,
    big_f: &VectorField,
    od: &OffDiagConfig,
    cfg: &SolverConfig,
) -> Result<Vec<ExpWeightReport>> {
    let mut out: Vec<ExpWeightReport> =
        entries.par_iter().map(|(l, chi)| exp_weighted_check(op, *l, chi, f, big_f, od, cfg)).collect::<Result<_>>()?;
    let mut running = [0.0f64; 3];
    for (i, r) in out.iter_mut().enumerate() {
        if i > 0 {
            r.flagged = r.ratios.iter().zip(&running).any(|(v, m)| *v > 2.0 * m);
        }
        for (m, v) in running.iter_mut().zip(&r.ratios) {
            *m = m.max(*v);
        }
    }
    Ok(out)
}

/// Largest weighted ratio as `|χ|` grows along a fixed direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSweep {
    pub magnitudes: Vec<f64>,
    pub max_ratios: Vec<f64>,
    /// First magnitude whose largest ratio exceeds twice the unweighted one.
    pub degrades_at: Option<f64>,
}

pub fn theta_sweep(
    op: &ParabolicOperator,
    lambda: f64,
    direction: &[f64],
    magnitudes: &[f64],
    f: &Field,
    big_f: &VectorField,
    cfg: &SolverConfig,
) -> Result<ThetaSweep> {
    let norm = direction.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidParameter("direction must be nonzero".into()));
    }
    let base = weighted_ratios(op, lambda, &vec![0.0; direction.len()], f, big_f, cfg)?;
    let base_max = base.ratios.iter().copied().fold(0.0, f64::max);
    let max_ratios: Vec<f64> = magnitudes
        .par_iter()
        .map(|m| {
            let chi: Vec<f64> = direction.iter().map(|d| d / norm * m).collect();
            weighted_ratios(op, lambda, &chi, f, big_f, cfg).map(|r| r.ratios.iter().copied().fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let degrades_at = magnitudes.iter().zip(&max_ratios).find(|(_, r)| !(**r <= 2.0 * base_max)).map(|(m, _)| *m);
    Ok(ThetaSweep { magnitudes: magnitudes.to_vec(), max_ratios, degrades_at })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `‖E_λ(f·1)‖`.
    Scalar,
    /// `‖λ∇ₓE_λ(f·1)‖`.
    GradientSource,
    /// `‖λE_λdivₓ(F·1)‖`.
    DivSource,
}

impl SourceKind {
    pub const ALL: [SourceKind; 3] = [SourceKind::Scalar, SourceKind::GradientSource, SourceKind::DivSource];

    pub fn name(&self) -> &'static str {
        match self {
            SourceKind::Scalar => "scalar",
            SourceKind::GradientSource => "gradient_source",
            SourceKind::DivSource => "div_source",
        }
    }
}

/// Norm on `target` of the response to the source restricted to `source`, over the source norm.
#[allow(clippy::too_many_arguments)]
fn restricted_response(
    sys: &ShiftedSystem,
    lambda: f64,
    kind: SourceKind,
    f: &Field,
    big_f: &VectorField,
    source: &[bool],
    target: &[bool],
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let l = C64::new(lambda, 0.0);
    match kind {
        SourceKind::Scalar | SourceKind::GradientSource => {
            let src = f.mask(source);
            let u = sys.solve(&src, cfg)?.u;
            let out = if kind == SourceKind::Scalar { u.norm_on(target) } else { gradx(&u)?.scale(l).norm_on(target) };
            Ok((out, src.norm()))
        }
        SourceKind::DivSource => {
            let src = big_f.mask(source);
            let v = sys.solve(&divx(&src)?.scale(l), cfg)?.u;
            Ok((v.norm_on(target), src.norm()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnulusRow {
    pub k: usize,
    /// `2^kℓ(Δ)/λ`.
    pub separation: f64,
    /// Source on the annulus, measured on `Δ`.
    pub inward: f64,
    /// Source on `Δ`, measured on the annulus.
    pub outward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnuliTable {
    pub kind: SourceKind,
    pub lambda: f64,
    pub side: f64,
    pub rows: Vec<AnnulusRow>,
    /// Ratios treated as zero when testing monotonicity.
    pub noise_floor: f64,
    pub monotone_inward: bool,
    pub monotone_outward: bool,
}

impl AnnuliTable {
    /// Fit of the inward (`true`) or outward ratios, using the rows above the noise floor.
    pub fn fit(&self, inward: bool) -> Result<DecayFit> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .map(|r| (r.separation, if inward { r.inward } else { r.outward }))
            .filter(|(_, v)| *v > self.noise_floor)
            .map(|(x, v)| (x, v.ln()))
            .collect();
        fit_decay(&pts)
    }
}

/// Non-increasing from `k = 1` on, up to 5% or the noise floor.
pub fn monotone_beyond_first(values: &[f64], noise_floor: f64) -> bool {
    values.iter().skip(1).collect::<Vec<_>>().windows(2).all(|w| *w[1] <= (1.05 * w[0]).max(noise_floor))
}

/// Annuli ratios for `k = 0..=k_max` in both support directions.
#[allow(clippy::too_many_arguments)]
pub fn annuli_decay(
    op: &ParabolicOperator,
    cube: &ParabolicCube,
    lambda: f64,
    kind: SourceKind,
    k_max: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<AnnuliTable> {
    let grid = *op.grid();
    let annuli: Vec<Vec<bool>> = (0..=k_max).map(|k| cube.annulus(&grid, k)).collect::<Result<_>>()?;
    let inner = cube.mask(&grid);
    let f = sampling::generic(&grid, seed, 0, false);
    let big_f = VectorField::new((0..grid.n).map(|a| sampling::generic(&grid, seed, 1 + a as u64, false)).collect())?;
    let sys = ShiftedSystem::resolvent(op, lambda, cfg)?;
    let rows: Vec<AnnulusRow> = annuli
        .par_iter()
        .enumerate()
        .map(|(k, ann)| {
            let (a, an) = restricted_response(&sys, lambda, kind, &f, &big_f, ann, &inner, cfg)?;
            let (b, bn) = restricted_response(&sys, lambda, kind, &f, &big_f, &inner, ann, cfg)?;
            Ok(AnnulusRow { k, separation: 2f64.powi(k as i32) * cube.side / lambda, inward: a / an, outward: b / bn })
        })
        .collect::<Result<_>>()?;
    let noise_floor = 10.0 * cfg.rel_tol;
    let inward: Vec<f64> = rows.iter().map(|r| r.inward).collect();
    let outward: Vec<f64> = rows.iter().map(|r| r.outward).collect();
    Ok(AnnuliTable {
        kind,
        lambda,
        side: cube.side,
        monotone_inward: monotone_beyond_first(&inward, noise_floor),
        monotone_outward: monotone_beyond_first(&outward, noise_floor),
        rows,
        noise_floor,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeparatedResult {
    pub lambda: f64,
    pub d: f64,
    /// `∬_F (|E_λf|² + |λ∇ₓE_λf|²) / ∬_E |f|²`, or `∬_F |λE_λdivₓF|² / ∬_E |F|²`.
    pub ratio: f64,
}

/// Energy reaching `F` from a source supported in `E`.
pub fn time_separated_check(
    op: &ParabolicOperator,
    sets: &SeparatedSets,
    lambda: f64,
    kind: SourceKind,
    f: &Field,
    big_f: &VectorField,
    cfg: &SolverConfig,
) -> Result<TimeSeparatedResult> {
    if !(sets.time_distance > 0.0) {
        return Err(Error::NotSeparated("time projections intersect".into()));
    }
    let sys = ShiftedSystem::resolvent(op, lambda, cfg)?;
    let l = C64::new(lambda, 0.0);
    let ratio = match kind {
        SourceKind::DivSource => {
            let src = big_f.mask(&sets.e);
            let v = sys.solve(&divx(&src)?.scale(l), cfg)?.u;
            (v.norm_on(&sets.f) / src.norm()).powi(2)
        }
        _ => {
            let src = f.mask(&sets.e);
            let u = sys.solve(&src, cfg)?.u;
            let g = gradx(&u)?.scale(l);
            (u.norm_on(&sets.f).powi(2) + g.norm_on(&sets.f).powi(2)) / src.norm_sqr()
        }
    };
    Ok(TimeSeparatedResult { lambda, d: sets.time_distance, ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeparatedSweep {
    pub kind: SourceKind,
    pub results: Vec<TimeSeparatedResult>,
    pub fit: DecayFit,
    /// `e^{−d/(ĉλ)}` per λ with the fitted `ĉ`.
    pub bounds: Vec<f64>,
}

pub fn time_separated_sweep(
    op: &ParabolicOperator,
    sets: &SeparatedSets,
    lambdas: &[f64],
    kind: SourceKind,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<TimeSeparatedSweep> {
    let grid = *op.grid();
    let f = sampling::generic(&grid, seed, 0, false);
    let big_f = VectorField::new((0..grid.n).map(|a| sampling::generic(&grid, seed, 1 + a as u64, false)).collect())?;
    let results: Vec<TimeSeparatedResult> =
        lambdas.par_iter().map(|&l| time_separated_check(op, sets, l, kind, &f, &big_f, cfg)).collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = results.iter().map(|r| (r.d / r.lambda, r.ratio.ln())).collect();
    let fit = fit_decay(&pts)?;
    let bounds = results.iter().map(|r| (-r.d / (fit.fitted_c * r.lambda)).exp()).collect();
    Ok(TimeSeparatedSweep { kind, results, fit, bounds })
}

/// One row of a decay table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub family: String,
    pub variant: String,
    pub lambda: f64,
    pub k_or_d: f64,
    #[serde(with = "crate::float_serde")]
    pub norm_ratio: f64,
    #[serde(with = "crate::float_serde")]
    pub fitted_c: f64,
}

impl AnnuliTable {
    /// Rows for both directions, with the fitted constant or `NaN` when no fit exists.
    pub fn decay_rows(&self, family: &str) -> Vec<DecayRow> {
        let mut out = Vec::with_capacity(2 * self.rows.len());
        for (inward, dir) in [(true, "inward"), (false, "outward")] {
            let c = self.fit(inward).map(|f| f.fitted_c).unwrap_or(f64::NAN);
            for r in &self.rows {
                out.push(DecayRow {
                    family: family.to_string(),
                    variant: format!("{}/{dir}", self.kind.name()),
                    lambda: self.lambda,
                    k_or_d: r.k as f64,
                    norm_ratio: if inward { r.inward } else { r.outward },
                    fitted_c: c,
                });
            }
        }
        out
    }
}

impl TimeSeparatedSweep {
    pub fn decay_rows(&self, family: &str) -> Vec<DecayRow> {
        self.results
            .iter()
            .map(|r| DecayRow {
                family: family.to_string(),
                variant: format!("{}/time_separated", self.kind.name()),
                lambda: r.lambda,
                k_or_d: r.d,
                norm_ratio: r.ratio,
                fitted_c: self.fit.fitted_c,
            })
            .collect()
    }
}

pub fn write_decay_csv<W: Write>(w: W, rows: &[DecayRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_decay_csv<R: Read>(r: R) -> Result<Vec<DecayRow>> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientField;

    #[test]
    fn exact_exponential_is_recovered() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 0.3 - x / 2.5)).collect();
        let f = fit_decay(&pts).unwrap();
        assert!((f.slope + 0.4).abs() < 1e-12);
        assert!((f.fitted_c - 2.5).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_points_do_not_decay() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 4.0].iter().map(|&x| (x, -1.0)).collect();
        let f = fit_decay(&pts).unwrap();
        assert_eq!(f.slope, 0.0);
        assert!(!f.decaying);
        assert!(f.fitted_c.is_infinite());
    }

    #[test]
    fn spread_is_required() {
        assert!(matches!(fit_decay(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]), Err(Error::InsufficientSpread(_))));
        let narrow: Vec<(f64, f64)> = [1.0, 2.0, 3.0, 3.9].iter().map(|&x| (x, -x)).collect();
        assert!(matches!(fit_decay(&narrow), Err(Error::InsufficientSpread(_))));
    }

    #[test]
    fn zero_chi_is_the_plain_resolvent() {
        let g = GridSpec::unit(2, 8, 8).unwrap();
        let op = ParabolicOperator::new(CoefficientField::identity(&g));
        let f = sampling::generic(&g, 1, 0, false);
        let big_f =
            VectorField::new(vec![sampling::generic(&g, 1, 1, false), sampling::generic(&g, 1, 2, false)]).unwrap();
        let cfg = SolverConfig::default();
        let r = exp_weighted_check(&op, 0.1, &[0.0, 0.0], &f, &big_f, &OffDiagConfig::default(), &cfg).unwrap();
        let u = crate::resolvent::resolvent(&op, 0.1, &f, &cfg).unwrap().u;
        assert_eq!(r.lhs[0], u.norm());
        assert_eq!(r.rhs[0], f.norm());
        assert!(r.ratios[0] <= 1.0);
        assert!(exp_weighted_check(&op, 0.1, &[0.2, 0.0], &f, &big_f, &OffDiagConfig::default(), &cfg).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![DecayRow {
            family: "identity".into(),
            variant: "scalar/inward".into(),
            lambda: 1.0 / 128.0,
            k_or_d: 2.0,
            norm_ratio: 1.234_567_890_123_456_7e-7,
            fitted_c: f64::NAN,
        }];
        let mut buf = Vec::new();
        write_decay_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("family,variant,lambda,k_or_d,norm_ratio,fitted_c"));
        let back = read_decay_csv(&buf[..]).unwrap();
        assert_eq!(back[0].norm_ratio, rows[0].norm_ratio);
        assert!(back[0].fitted_c.is_nan());
    }
}

//! Kato ratios `‖√H u‖ / (‖∇ₓu‖ + ‖Dₜ^{1/2}u‖)` over sample families.

use super::{sqrt_apply, QuadratureSpec};
use crate::error::{Error, Result};
use crate::lattice::{gradx, half_dt, time_symbol, Field, Frequencies, GridSpec, MAX_DIM};
use crate::operator::ParabolicOperator;
use crate::resolvent::SolverConfig;
use crate::sampling;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// A pure lattice mode given by integer frequencies, so that it means the same
/// function on every grid resolving it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureMode {
    pub kx: [i64; MAX_DIM],
    pub kt: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// Number of random band-limited fields.
    pub count: usize,
    /// Spatial band limit of the random fields.
    pub kx_max: i64,
    /// Time band limit of the random fields.
    pub kt_max: i64,
    pub seed: u64,
    #[serde(default)]
    pub modes: Vec<PureMode>,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            count: 44,
            kx_max: 2,
            kt_max: 4,
            seed: 0,
            modes: vec![
                PureMode { kx: [1, 0, 0], kt: 0 },
                PureMode { kx: [0, 0, 0], kt: 1 },
                PureMode { kx: [1, 1, 0], kt: 1 },
                PureMode { kx: [0, 1, 0], kt: -3 },
                PureMode { kx: [2, -1, 0], kt: 2 },
                PureMode { kx: [1, 0, 0], kt: 4 },
            ],
        }
    }
}

impl SampleSpec {
    pub fn total(&self) -> usize {
        self.count + self.modes.len()
    }

    /// Samples on `grid`, random fields first and pure modes after.
    pub fn fields(&self, grid: &GridSpec) -> Result<Vec<Field>> {
        let nyq_x = grid.nx as i64 / 2;
        let nyq_t = grid.nt as i64 / 2;
        if self.count > 0 && (self.kx_max < 1 || self.kt_max < 0 || self.kx_max >= nyq_x || self.kt_max >= nyq_t) {
            return Err(Error::InvalidParameter(format!(
                "band limits ({}, {}) not resolved by the grid",
                self.kx_max, self.kt_max
            )));
        }
        let mut out = Vec::with_capacity(self.total());
        for i in 0..self.count {
            let f = sampling::smooth(grid, self.seed, i as u64, self.kx_max, self.kt_max, false);
            out.push(sampling::normalized(sampling::without_mean(&f)));
        }
        for m in &self.modes {
            let used = &m.kx[..grid.n];
            if m.kx[grid.n..].iter().any(|&k| k != 0) {
                return Err(Error::InvalidParameter(format!("mode {:?} has more axes than the grid", m.kx)));
            }
            if used.iter().all(|&k| k == 0) && m.kt == 0 {
                return Err(Error::InvalidParameter("the constant mode has no Kato ratio".into()));
            }
            if used.iter().any(|k| k.abs() >= nyq_x) || m.kt.abs() >= nyq_t {
                return Err(Error::InvalidParameter(format!("mode {m:?} not resolved by the grid")));
            }
            let tau = 2.0 * std::f64::consts::PI * m.kt as f64 / grid.lt;
            let xi: Vec<f64> = used.iter().map(|&k| 2.0 * std::f64::consts::PI * k as f64 / grid.lx).collect();
            let f = Field::from_fn(*grid, |x, t| {
                let ph: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + tau * t;
                C64::from_polar(1.0, ph)
            });
            out.push(sampling::normalized(f));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KatoReport {
    pub ratios: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// Whether any quadrature evaluation flagged truncation.
    pub truncation_warning: bool,
    pub iterations: usize,
}

/// Parabolic energy `‖∇ₓu‖ + ‖Dₜ^{1/2}u‖`.
pub fn parabolic_energy(u: &Field) -> Result<f64> {
    Ok(gradx(u)?.norm() + half_dt(u)?.norm())
}

pub fn kato_ratio_sweep(
    op: &ParabolicOperator,
    samples: &SampleSpec,
    quad: &QuadratureSpec,
    cfg: &SolverConfig,
) -> Result<KatoReport> {
    let fields = samples.fields(op.grid())?;
    let mut ratios = Vec::with_capacity(fields.len());
    let mut warn = false;
    let mut iterations = 0;
    for u in &fields {
        let den = parabolic_energy(u)?;
        if den <= 0.0 {
            return Err(Error::InvalidParameter("sample is constant".into()));
        }
        let r = sqrt_apply(op, u, quad, cfg)?;
        warn |= r.truncation_warning;
        iterations += r.iterations;
        ratios.push(r.value.norm() / den);
    }
    let min = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(KatoReport { ratios, min, max, truncation_warning: warn, iterations })
}

/// Extremes of the squared per-mode ratio `|iτ + |ξ|²| / (|ξ| + |τ|^{1/2})²` of the heat operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRatioBounds {
    pub min_sq: f64,
    pub max_sq: f64,
    pub modes: usize,
}

/// Enumerates the heat-operator symbol over the lattice spectrum.
///
/// The zero mode has no ratio. On the time-Nyquist line the discrete time
/// symbol vanishes while `Dₜ^{1/2}` does not, so that line is left out.
pub fn identity_mode_ratios(grid: &GridSpec) -> Result<ModeRatioBounds> {
    grid.validate()?;
    let freqs = Frequencies::new(grid);
    let mut min_sq = f64::INFINITY;
    let mut max_sq = f64::NEG_INFINITY;
    let mut modes = 0;
    for m in freqs.modes() {
        if m.time_nyquist || (m.kt == 0 && m.kx.iter().all(|&k| k == 0)) {
            continue;
        }
        let sym = time_symbol(&m) + m.xi_sqr();
        let r = sym.norm() / m.parabolic_size().powi(2);
        min_sq = min_sq.min(r);
        max_sq = max_sq.max(r);
        modes += 1;
    }
    Ok(ModeRatioBounds { min_sq, max_sq, modes })
}

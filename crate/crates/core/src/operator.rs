//! The operator `H = ∂t − divₓ(A∇ₓ)`, its adjoint, and its sesquilinear forms.
//!
//! The time part uses the factorized symbol of `Dₜ^{1/2}HₜDₜ^{1/2}`, which
//! vanishes on the time-Nyquist line. With that choice the strong form and the
//! weak form coincide exactly under torus quadrature.

use crate::coefficients::{CMat, CoefficientField};
use crate::error::{Error, Result};
use crate::lattice::{
    forward_in_place, gradx, half_dt, hilbert_t, inverse_in_place, time_symbol, Field, Frequencies, GridSpec,
    VectorField,
};
use crate::reduce;
use crate::sampling;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, OnceLock};

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct ParabolicOperator {
    coeffs: Arc<CoefficientField>,
    adjoint: bool,
    dealias: bool,
    tables: Arc<OnceLock<Tables>>,
}

/// Per-operator lookup tables built on first use.
#[derive(Debug)]
struct Tables {
    /// `A` (or `A*`) per lattice point.
    amat: Vec<CMat>,
    /// `±D` per lattice point.
    dmat: Vec<CMat>,
    /// `iξ_j` per flat spectral index, zeroed outside the kept band.
    ixi: Vec<Vec<C64>>,
    /// Time-part symbol per flat spectral index.
    tsym: Vec<C64>,
}

impl ParabolicOperator {
    pub fn new(coeffs: CoefficientField) -> Self {
        Self::from_shared(Arc::new(coeffs))
    }

    pub fn from_shared(coeffs: Arc<CoefficientField>) -> Self {
        Self { coeffs, adjoint: false, dealias: false, tables: Arc::new(OnceLock::new()) }
    }

    /// `H*` sharing the same coefficients.
    pub fn adjoint(&self) -> Self {
        Self {
            coeffs: self.coeffs.clone(),
            adjoint: !self.adjoint,
            dealias: self.dealias,
            tables: Arc::new(OnceLock::new()),
        }
    }

    /// Truncate gradient and flux spectra to `|k| ≤ Nx/3` around the pointwise product.
    pub fn with_dealiasing(mut self, on: bool) -> Self {
        self.dealias = on;
        self.tables = Arc::new(OnceLock::new());
        self
    }

    fn tables(&self) -> &Tables {
        self.tables.get_or_init(|| {
            let grid = *self.grid();
            let len = grid.len();
            let freqs = Frequencies::new(&grid);
            let amat = (0..len).into_par_iter().map(|p| self.matrix(p)).collect();
            let dmat = (0..len).into_par_iter().map(|p| self.d_matrix(p)).collect();
            let modes: Vec<crate::lattice::Mode> = freqs.modes().collect();
            let ixi = (0..grid.n)
                .map(|j| modes.iter().map(|m| if self.keep(m) { I * m.xi[j] } else { C64::new(0.0, 0.0) }).collect())
                .collect();
            let tsym = modes.iter().map(|m| self.time_symbol(m)).collect();
            Tables { amat, dmat, ixi, tsym }
        })
    }

    pub fn is_adjoint(&self) -> bool {
        self.adjoint
    }

    pub fn coeffs(&self) -> &CoefficientField {
        &self.coeffs
    }

    pub fn shared_coeffs(&self) -> Arc<CoefficientField> {
        self.coeffs.clone()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.coeffs.grid
    }

    fn sign(&self) -> f64 {
        if self.adjoint {
            -1.0
        } else {
            1.0
        }
    }

    /// The matrix acting on gradients at lattice point `p` (`A` or `A*`).
    #[inline]
    pub fn matrix(&self, p: usize) -> CMat {
        if self.adjoint {
            self.coeffs.a_adjoint(p)
        } else {
            self.coeffs.a(p)
        }
    }

    /// Time-part symbol of this operator at a mode.
    #[inline]
    pub fn time_symbol(&self, m: &crate::lattice::Mode) -> C64 {
        time_symbol(m) * self.sign()
    }

    /// Mean of `S` (or `S*`) over the lattice, used by constant-coefficient preconditioners.
    pub fn mean_s(&self) -> CMat {
        let n = self.coeffs.n();
        let mut m = crate::coefficients::ZERO_C;
        for i in 0..n {
            for j in 0..n {
                let vals: Vec<C64> =
                    self.coeffs.s.iter().map(|s| if self.adjoint { s[j][i].conj() } else { s[i][j] }).collect();
                m[i][j] = reduce::sum_c64(&vals) / vals.len() as f64;
            }
        }
        m
    }

    fn keep(&self, m: &crate::lattice::Mode) -> bool {
        !self.dealias || m.kx.iter().all(|k| 3 * k.unsigned_abs() as usize <= self.grid().nx)
    }

    /// Pointwise flux `A·g` for gradient samples `g`.
    fn flux(&self, grads: &[Vec<C64>], use_d_only: bool) -> Vec<Vec<C64>> {
        let t = self.tables();
        let mats = if use_d_only { &t.dmat } else { &t.amat };
        (0..self.coeffs.n())
            .map(|i| {
                (0..self.grid().len())
                    .into_par_iter()
                    .with_min_len(4096)
                    .map(|p| {
                        let a = &mats[p][i];
                        let mut f = C64::new(0.0, 0.0);
                        for (j, g) in grads.iter().enumerate() {
                            f += a[j] * g[p];
                        }
                        f
                    })
                    .collect()
            })
            .collect()
    }

    fn d_matrix(&self, p: usize) -> CMat {
        let mut m = crate::coefficients::ZERO_C;
        let s = self.sign();
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = C64::new(self.coeffs.d[p][i][j] * s, 0.0);
            }
        }
        m
    }

    fn check(&self, u: &Field) -> Result<()> {
        if u.grid() != self.grid() {
            return Err(Error::GridMismatch);
        }
        u.ensure_finite()
    }

    /// Strong-form application: `±(time part)u − divₓ(A∇ₓu)`.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        Ok(self.apply_parts(u, true, false))
    }

    /// Only the anti-symmetric contribution `−divₓ(D∇ₓu)` (with `−D` for the adjoint).
    pub fn apply_d_part(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        Ok(self.apply_parts(u, false, true))
    }

    fn apply_parts(&self, u: &Field, with_time: bool, d_only: bool) -> Field {
        let mut spec = u.values().to_vec();
        forward_in_place(self.grid(), &mut spec);
        let time = if with_time { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        self.combine_spectral(spec, C64::new(0.0, 0.0), time, 1.0, d_only)
    }

    /// `(α + βH)z` for `z` given by its unnormalized spectrum.
    pub(crate) fn shifted_from_spectrum(&self, spec: Vec<C64>, alpha: C64, beta: f64) -> Field {
        self.combine_spectral(spec, alpha, C64::new(beta, 0.0), beta, false)
    }

    /// Inverse transform of `α ẑ + τ_w·(time symbol)ẑ − β Σ iξ_i (A∇z)^_i`.
    fn combine_spectral(&self, spec: Vec<C64>, alpha: C64, time_weight: C64, beta: f64, d_only: bool) -> Field {
        let grid = *self.grid();
        let t = self.tables();
        let grads: Vec<Vec<C64>> = t
            .ixi
            .iter()
            .map(|ixi| {
                let mut g: Vec<C64> = spec.par_iter().zip(ixi.par_iter()).map(|(z, s)| z * s).collect();
                inverse_in_place(&grid, &mut g);
                g
            })
            .collect();
        let mut flux = self.flux(&grads, d_only);
        let mut acc = spec;
        acc.par_iter_mut().zip(t.tsym.par_iter()).for_each(|(z, s)| *z *= alpha + time_weight * s);
        for (f, ixi) in flux.iter_mut().zip(&t.ixi) {
            forward_in_place(&grid, f);
            acc.par_iter_mut().zip(f.par_iter().zip(ixi.par_iter())).for_each(|(z, (fv, s))| *z -= s * fv * beta);
        }
        inverse_in_place(&grid, &mut acc);
        Field::from_values(grid, acc).expect("finite input gives finite output")
    }

    /// `⟨A∇ₓu, ∇ₓv⟩ ± ⟨HₜDₜ^{1/2}u, Dₜ^{1/2}v⟩`.
    pub fn form_value(&self, u: &Field, v: &Field) -> Result<C64> {
        self.check(u)?;
        self.check(v)?;
        let gu = gradx(u)?;
        let gv = gradx(v)?;
        let spatial = self.flux_field(&gu, false).inner(&gv);
        let hu = hilbert_t(&half_dt(u)?)?;
        let time = hu.inner(&half_dt(v)?) * self.sign();
        Ok(spatial + time)
    }

    fn flux_field(&self, g: &VectorField, d_only: bool) -> VectorField {
        let grads: Vec<Vec<C64>> = g.components().iter().map(|c| c.values().to_vec()).collect();
        let grid = *self.grid();
        let comps =
            self.flux(&grads, d_only).into_iter().map(|v| Field::from_values(grid, v).expect("finite")).collect();
        VectorField::new(comps).expect("n components")
    }

    /// The D-part of the form, `Σᵢⱼ ⟨Dᵢⱼ ∂ⱼu, ∂ᵢv⟩`, evaluated directly.
    pub fn d_form(&self, u: &Field, v: &Field) -> Result<C64> {
        let gu = gradx(u)?;
        let gv = gradx(v)?;
        Ok(self.flux_field(&gu, true).inner(&gv))
    }

    /// The D-part of the form through the anti-symmetrized integrand
    /// `½ Σᵢⱼ Dᵢⱼ (∂ⱼu ∂ᵢv̄ − ∂ᵢu ∂ⱼv̄)`.
    pub fn d_form_antisymmetrized(&self, u: &Field, v: &Field) -> Result<C64> {
        let gu = gradx(u)?;
        let gv = gradx(v)?;
        let n = self.coeffs.n();
        let s = self.sign();
        let vals: Vec<C64> = (0..self.grid().len())
            .into_par_iter()
            .map(|p| {
                let d = &self.coeffs.d[p];
                let mut acc = C64::new(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let a = gu.component(j).values()[p] * gv.component(i).values()[p].conj();
                        let b = gu.component(i).values()[p] * gv.component(j).values()[p].conj();
                        acc += (a - b) * (0.5 * d[i][j] * s);
                    }
                }
                acc
            })
            .collect();
        Ok(reduce::sum_c64(&vals) * self.grid().cell_volume())
    }

    /// `B_{δ,σ}(u, v) = (Hu)((1+δHₜ)v) + σ⟨u, (1+δHₜ)v⟩`.
    pub fn modified_form_value(&self, u: &Field, v: &Field, p: &FormParams) -> Result<C64> {
        let hv = hilbert_t(v)?;
        let mut w = v.clone();
        w.axpy(C64::new(p.delta, 0.0), &hv);
        Ok(self.form_value(u, &w)? + p.sigma * u.inner(&w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormParams {
    pub delta: f64,
    pub sigma: C64,
}

impl FormParams {
    pub fn new(delta: f64, sigma: C64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) || !(sigma.re > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need delta in [0, 1) and Re sigma > 0, got {delta}, {sigma}"
            )));
        }
        Ok(Self { delta, sigma })
    }
}

/// `δ = min{c1/(c2+c3+1), Re σ/(|Im σ|+1)}`.
pub fn delta_star(c1: f64, c2: f64, c3: f64, sigma: C64) -> f64 {
    (c1 / (c2 + c3 + 1.0)).min(sigma.re / (sigma.im.abs() + 1.0))
}

/// One sample of the hidden-coercivity inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivitySample {
    pub lhs: f64,
    pub rhs: f64,
    /// `|⟨D∇ₓv, ∇ₓHₜv⟩| / ‖∇ₓv‖²` for this sample.
    pub d_form_ratio: f64,
}

/// Terms of `Re B_{δ,σ}(v,v)` and the lower bound
/// `δ‖HₜDₜ^{1/2}v‖² + (c1−(c2+c3)δ)‖∇ₓv‖² + (Re σ − δ|Im σ|)‖v‖²`.
///
/// The half-derivative term omits the time-Nyquist line, where `Hₜ` vanishes.
pub fn coercivity_sample(
    op: &ParabolicOperator,
    v: &Field,
    p: &FormParams,
    c1: f64,
    c2: f64,
    c3: f64,
) -> Result<CoercivitySample> {
    let lhs = op.modified_form_value(v, v, p)?.re;
    let gv = gradx(v)?.norm_sqr();
    let hd = hilbert_t(&half_dt(v)?)?.norm_sqr();
    let l2 = v.norm_sqr();
    let rhs = p.delta * hd + (c1 - (c2 + c3) * p.delta) * gv + (p.sigma.re - p.delta * p.sigma.im.abs()) * l2;
    let hv = hilbert_t(v)?;
    let dr = if gv > 0.0 { op.d_form(v, &hv)?.norm() / gv } else { 0.0 };
    Ok(CoercivitySample { lhs, rhs, d_form_ratio: dr })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccretivityReport {
    pub samples: usize,
    pub c1_observed: f64,
    /// `min Re⟨Hu,u⟩ / ‖∇ₓu‖²`.
    pub min_ratio: f64,
    /// Largest `|Re D-part| / (‖D∇ₓu‖·‖∇ₓu‖)`.
    pub max_d_real_rel: f64,
    /// Largest `|Re (time part)| / ‖u‖²_energy`.
    pub max_time_real_rel: f64,
    /// Largest `c1·‖∇ₓu‖² − Re⟨Hu,u⟩` relative to `‖u‖²_energy` (negative when the bound holds with room).
    pub max_deficit_rel: f64,
}

/// Accretivity over `count` random fields drawn from `seed`.
pub fn accretivity_report(op: &ParabolicOperator, count: usize, seed: u64) -> Result<AccretivityReport> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be positive".into()));
    }
    let c1 = op.coeffs().validate().c1_observed;
    let grid = *op.grid();
    let mut rep = AccretivityReport {
        samples: count,
        c1_observed: c1,
        min_ratio: f64::INFINITY,
        max_d_real_rel: 0.0,
        max_time_real_rel: 0.0,
        max_deficit_rel: f64::NEG_INFINITY,
    };
    for k in 0..count {
        let u = sampling::generic(&grid, seed, k as u64, false);
        let hu = op.apply(&u)?;
        let re = hu.inner(&u).re;
        let gu = gradx(&u)?;
        let g2 = gu.norm_sqr();
        let energy = crate::lattice::norms(&u)?.energy.powi(2);
        rep.min_ratio = rep.min_ratio.min(re / g2);
        rep.max_deficit_rel = rep.max_deficit_rel.max((c1 * g2 - re) / energy);
        let dpart = op.apply_d_part(&u)?.inner(&u);
        let scale = op.flux_field(&gu, true).norm() * gu.norm();
        if scale > 0.0 {
            rep.max_d_real_rel = rep.max_d_real_rel.max(dpart.re.abs() / scale);
        }
        let tu = crate::lattice::apply_symbol(&u, |m| op.time_symbol(m));
        rep.max_time_real_rel = rep.max_time_real_rel.max(tu.inner(&u).re.abs() / energy);
    }
    Ok(rep)
}

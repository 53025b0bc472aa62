//! Solves of `(α + βH)u = b`: shifted systems `(σ+H)u = f` and the scaled
//! resolvents `E_λ = (1+λ²H)⁻¹`, with divergence and half-derivative sources.
//!
//! The solver is restarted GMRES with right preconditioning by the exact
//! inverse of the constant-coefficient operator `α + β(∂t − divₓ(S̄∇ₓ))`, `S̄`
//! the lattice mean of `S`, applied spectrally.

use crate::error::{Error, Result};
use crate::lattice::{divx, forward_in_place, gradx, half_dt, inverse_in_place, Field, Frequencies, VectorField};
use crate::operator::ParabolicOperator;
use crate::reduce;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    ConstantCoefficient,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_iter: 500, restart: 40, preconditioner: Preconditioner::ConstantCoefficient }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-4) {
            return Err(Error::InvalidParameter(format!("rel_tol {} outside (0, 1e-4]", self.rel_tol)));
        }
        if self.max_iter == 0 || self.restart == 0 {
            return Err(Error::InvalidParameter("max_iter and restart must be positive".into()));
        }
        Ok(())
    }
}

/// `‖u‖₂`, `λ‖∇ₓu‖₂`, `λ‖Dₜ^{1/2}u‖₂` and `λ‖𝔻u‖₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledNorms {
    pub l2: f64,
    pub lambda_grad: f64,
    pub lambda_half_dt: f64,
    pub lambda_d: f64,
}

pub fn scaled_norms(lambda: f64, u: &Field) -> Result<ScaledNorms> {
    let g = lambda * gradx(u)?.norm();
    let h = lambda * half_dt(u)?.norm();
    Ok(ScaledNorms { l2: u.norm(), lambda_grad: g, lambda_half_dt: h, lambda_d: g.hypot(h) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolventResult {
    pub u: Field,
    /// `‖(α+βH)u − b‖₂`.
    pub residual: f64,
    /// `residual / ‖b‖₂`.
    pub relative_residual: f64,
    pub iterations: usize,
}

/// The system `(α + βH)u = b` with its preconditioner symbol cached.
#[derive(Debug, Clone)]
pub struct ShiftedSystem {
    op: ParabolicOperator,
    alpha: C64,
    beta: f64,
    precond: Option<Vec<C64>>,
}

impl ShiftedSystem {
    pub fn new(op: &ParabolicOperator, alpha: C64, beta: f64, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if !(alpha.re > 0.0) || !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("need Re alpha > 0 and beta >= 0, got {alpha}, {beta}")));
        }
        let precond = match cfg.preconditioner {
            Preconditioner::None => None,
            Preconditioner::ConstantCoefficient => {
                let grid = *op.grid();
                let freqs = Frequencies::new(&grid);
                let sbar = op.mean_s();
                let n = grid.n;
                let mut sym = vec![C64::new(0.0, 0.0); grid.len()];
                freqs.for_each_mut(&mut sym, |z, m| {
                    let mut q = C64::new(0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            q += sbar[i][j] * (m.xi[i] * m.xi[j]);
                        }
                    }
                    *z = 1.0 / (alpha + beta * (op.time_symbol(m) + q));
                });
                Some(sym)
            }
        };
        Ok(Self { op: op.clone(), alpha, beta, precond })
    }

    /// `E_λ` (or `E*_λ` when `op` is an adjoint).
    pub fn resolvent(op: &ParabolicOperator, lambda: f64, cfg: &SolverConfig) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda {lambda} must be positive")));
        }
        Self::new(op, C64::new(1.0, 0.0), lambda * lambda, cfg)
    }

    pub fn operator(&self) -> &ParabolicOperator {
        &self.op
    }

    fn apply_system(&self, u: &Field) -> Result<Field> {
        let mut out = self.op.apply(u)?.scale(C64::new(self.beta, 0.0));
        out.axpy(self.alpha, u);
        Ok(out)
    }

    /// `(α + βH)Mv` with `M` the preconditioner, sharing one forward transform.
    fn apply_system_precond(&self, v: &Field) -> Field {
        let grid = *v.grid();
        let mut data = v.values().to_vec();
        forward_in_place(&grid, &mut data);
        if let Some(sym) = &self.precond {
            data.par_iter_mut().zip(sym.par_iter()).for_each(|(z, s)| *z *= s);
        }
        self.op.shifted_from_spectrum(data, self.alpha, self.beta)
    }

    fn apply_precond(&self, v: &Field) -> Field {
        match &self.precond {
            None => v.clone(),
            Some(sym) => {
                let grid = *v.grid();
                let mut data = v.values().to_vec();
                forward_in_place(&grid, &mut data);
                data.par_iter_mut().zip(sym.par_iter()).for_each(|(z, s)| *z *= s);
                inverse_in_place(&grid, &mut data);
                Field::from_values(grid, data).expect("finite")
            }
        }
    }

    pub fn solve(&self, b: &Field, cfg: &SolverConfig) -> Result<ResolventResult> {
        cfg.validate()?;
        if b.grid() != self.op.grid() {
            return Err(Error::GridMismatch);
        }
        b.ensure_finite()?;
        let bnorm = b.norm();
        if bnorm == 0.0 {
            return Ok(ResolventResult {
                u: Field::zeros(*b.grid()),
                residual: 0.0,
                relative_residual: 0.0,
                iterations: 0,
            });
        }
        gmres(self, b, bnorm, cfg)
    }
}

fn norm(v: &[C64]) -> f64 {
    reduce::norm_sqr(v).sqrt()
}

fn gmres(sys: &ShiftedSystem, b: &Field, bnorm: f64, cfg: &SolverConfig) -> Result<ResolventResult> {
    let grid = *b.grid();
    let target = cfg.rel_tol * bnorm;
    let mut x = Field::zeros(grid);
    let mut r = b.clone();
    let mut rnorm = bnorm;
    let mut iterations = 0;
    let m = cfg.restart;
    let raw = |f: &Field| norm(f.values()) * grid.cell_volume().sqrt();
    loop {
        if rnorm <= target {
            return Ok(ResolventResult { u: x, residual: rnorm, relative_residual: rnorm / bnorm, iterations });
        }
        if iterations >= cfg.max_iter {
            return Err(Error::NonConvergence { iterations, residual: rnorm / bnorm });
        }
        let start_norm = rnorm;
        let beta0 = raw(&r);
        let mut basis: Vec<Field> = vec![r.scale(C64::new(1.0 / beta0, 0.0))];
        let mut h: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut rot: Vec<(f64, C64)> = Vec::with_capacity(m);
        let mut g = vec![C64::new(beta0, 0.0)];
        // Stop the inner cycle slightly below the target so the true residual clears it.
        let inner_target = 0.5 * target;
        for j in 0..m {
            let mut w = sys.apply_system_precond(&basis[j]);
            let mut col = vec![C64::new(0.0, 0.0); j + 2];
            for pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let hij = reduce::dot(w.values(), v.values()) * grid.cell_volume();
                    col[i] += hij;
                    w.axpy(-hij, v);
                }
                if pass == 0 && raw(&w) > 0.5 * col.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt() {
                    break;
                }
            }
            let wn = raw(&w);
            col[j + 1] = C64::new(wn, 0.0);
            for (i, &(c, s)) in rot.iter().enumerate() {
                let a = col[i];
                let bb = col[i + 1];
                col[i] = a * c + s * bb;
                col[i + 1] = -s.conj() * a + bb * c;
            }
            let a = col[j];
            let bb = col[j + 1];
            let rr = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if a.norm() == 0.0 {
                (0.0, C64::new(1.0, 0.0))
            } else {
                (a.norm() / rr, (a / a.norm()) * bb.conj() / rr)
            };
            col[j] = a * c + s * bb;
            col[j + 1] = C64::new(0.0, 0.0);
            rot.push((c, s));
            let gj = g[j];
            g[j] = gj * c;
            g.push(-s.conj() * gj);
            h.push(col);
            iterations += 1;
            let est = g[j + 1].norm();
            let breakdown = wn <= 1e-14 * beta0;
            if !breakdown {
                basis.push(w.scale(C64::new(1.0 / wn, 0.0)));
            }
            if est <= inner_target || breakdown || iterations >= cfg.max_iter {
                break;
            }
        }
        let k = h.len();
        let mut y = vec![C64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (l, yl) in y.iter().enumerate().skip(i + 1) {
                acc -= h[l][i] * yl;
            }
            y[i] = acc / h[i][i];
        }
        let mut update = Field::zeros(grid);
        for (yi, v) in y.iter().zip(&basis) {
            update.axpy(*yi, v);
        }
        x = x.add(&sys.apply_precond(&update));
        r = b.sub(&sys.apply_system(&x)?);
        rnorm = r.norm();
        if !rnorm.is_finite() {
            return Err(Error::NonFinite);
        }
        if rnorm > target && rnorm >= 0.999 * start_norm {
            return Err(Error::NonConvergence { iterations, residual: rnorm / bnorm });
        }
    }
}

/// `(σ+H)u = f`.
pub fn solve_shifted(op: &ParabolicOperator, sigma: C64, f: &Field, cfg: &SolverConfig) -> Result<ResolventResult> {
    ShiftedSystem::new(op, sigma, 1.0, cfg)?.solve(f, cfg)
}

/// `E_λ f`; pass `op.adjoint()` for `E*_λ f`.
pub fn resolvent(op: &ParabolicOperator, lambda: f64, f: &Field, cfg: &SolverConfig) -> Result<ResolventResult> {
    ShiftedSystem::resolvent(op, lambda, cfg)?.solve(f, cfg)
}

/// `λE_λ divₓ F`.
pub fn resolvent_div(
    op: &ParabolicOperator,
    lambda: f64,
    f: &VectorField,
    cfg: &SolverConfig,
) -> Result<ResolventResult> {
    let rhs = divx(f)?.scale(C64::new(lambda, 0.0));
    resolvent(op, lambda, &rhs, cfg)
}

/// `λE_λ Dₜ^{1/2} f`.
pub fn resolvent_halfdt(op: &ParabolicOperator, lambda: f64, f: &Field, cfg: &SolverConfig) -> Result<ResolventResult> {
    let rhs = half_dt(f)?.scale(C64::new(lambda, 0.0));
    resolvent(op, lambda, &rhs, cfg)
}

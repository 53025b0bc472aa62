//! One runner per verification suite.

use super::{Assertion, ExperimentConfig, Suite, SuiteResult};
use crate::carleson::{
    carleson_functional, complex_direction, default_directions, laa_eps_halving, refined_directions,
    tb_reduction_check, theta_ab_bounds, TbConfig, UCache,
};
use crate::coefficients::{generate, CoefficientField, Family, SpatialCube};
use crate::dyadic::DyadicDecomposition;
use crate::error::Result;
use crate::lattice::{GridSpec, VectorField};
use crate::lp::{lp_samples, verify_kee, verify_lp_suite, LambdaGrid, LpSampleSpec, MollifierSpec};
use crate::offdiag::{annuli_decay, ParabolicCube, SourceKind};
use crate::operator::{accretivity_report, ParabolicOperator};
use crate::resolvent::solve_shifted;
use crate::sampling;
use crate::sqrt::{
    identity_mode_ratios, kato_ratio_sweep, sqrt_apply, sqrt_dense_oracle, PureMode, SampleSpec, ORACLE_DOF_CAP,
};
use crate::C64;

/// Largest `|Re D-part|` relative to `‖D∇ₓu‖·‖∇ₓu‖`.
pub const D_REAL_TOL: f64 = 1e-12;
/// Accretivity slack relative to the parabolic energy.
pub const ACCRETIVITY_SLACK: f64 = 1e-8;
/// Width of the ε-halving window around the factor 4.
pub const HALVING_WINDOW: f64 = 0.3;
/// Allowed growth of the ε-stable ratios.
pub const EPS_STABILITY: f64 = 1.3;
/// Allowed relative change of the reduction constant under doubling `|W|`.
pub const W_STABILITY: f64 = 0.2;

pub(crate) fn run_suite(s: Suite, c: &ExperimentConfig) -> Result<SuiteResult> {
    let coeffs = generate(&c.coefficients, &c.grid)?;
    let mut r = SuiteResult::new(s);
    match s {
        Suite::Accretivity => accretivity(c, coeffs, &mut r)?,
        Suite::Resolvent => resolvent(c, coeffs, &mut r)?,
        Suite::Lp => lp(c, coeffs, &mut r)?,
        Suite::Offdiag => offdiag(c, coeffs, &mut r)?,
        Suite::Carleson => carleson(c, coeffs, &mut r)?,
        Suite::Tb => tb(c, coeffs, &mut r)?,
        Suite::Kato => kato(c, coeffs, &mut r)?,
        Suite::SqrtOracle => sqrt_oracle(c, coeffs, &mut r)?,
    }
    Ok(r)
}

/// `H` and `H*` with their report prefixes.
fn both(coeffs: CoefficientField) -> [(&'static str, ParabolicOperator); 2] {
    let op = ParabolicOperator::new(coeffs);
    let adj = op.adjoint();
    [("h", op), ("h_adjoint", adj)]
}

fn is_constant(c: &ExperimentConfig) -> bool {
    c.coefficients.family == Family::Identity || c.coefficients.magnitude == 0.0
}

fn finite(name: String, v: f64) -> Assertion {
    Assertion::le(name, if v.is_finite() { 0.0 } else { 1.0 }, 0.0, 0.0)
}

fn accretivity(c: &ExperimentConfig, coeffs: CoefficientField, r: &mut SuiteResult) -> Result<()> {
    for (p, op) in both(coeffs) {
        let rep = accretivity_report(&op, c.params.samples, c.seed)?;
        r.measure(format!("{p}/c1_observed"), rep.c1_observed);
        r.measure(format!("{p}/min_ratio"), rep.min_ratio);
        r.measure(format!("{p}/max_time_real_rel"), rep.max_time_real_rel);
        r.assert(Assertion::le(format!("{p}/deficit"), rep.max_deficit_rel, 0.0, ACCRETIVITY_SLACK));
        r.assert(Assertion::le(format!("{p}/d_real_pairing"), rep.max_d_real_rel, 0.0, D_REAL_TOL));
    }
    Ok(())
}

fn resolvent(c: &ExperimentConfig, coeffs: CoefficientField, r: &mut SuiteResult) -> Result<()> {
    let sigmas = [C64::new(1.0, 0.0), C64::new(2.0, 3.0), C64::new(0.1, 10.0)];
    let tol = 10.0 * c.solver.rel_tol;
    for (p, op) in both(coeffs) {
        for (si, &sigma) in sigmas.iter().enumerate() {
            let mut worst: f64 = 0.0;
            let mut iterations = 0;
            for k in 0..c.params.samples {
                let f = sampling::generic(&c.grid, c.seed, (si * c.params.samples + k) as u64, false);
                let sol = solve_shifted(&op, sigma, &f, &c.solver)?;
                iterations += sol.iterations;
                worst = worst.max(sigma.re * sol.u.norm() / f.norm());
            }
            r.measure(format!("{p}/sigma{si}/iterations"), iterations as f64);
            r.assert(Assertion::le(format!("{p}/sigma{si}/contraction"), worst, 1.0, tol));
        }
    }
    Ok(())
}

fn lambda_grid(c: &ExperimentConfig, top: f64) -> Result<LambdaGrid> {
    LambdaGrid::geometric(2.5e-4 * c.grid.lx, top * c.grid.lx, c.params.lambda_per_decade)
}

fn lp(c: &ExperimentConfig, coeffs: CoefficientField, r: &mut SuiteResult) -> Result<()> {
    let lg = lambda_grid(c, 0.25)?;
    let spec = LpSampleSpec { seed: c.seed, ..LpSampleSpec::default() };
    let rep = verify_lp_suite(&MollifierSpec::default(), &lp_samples(&c.grid, &spec), &lg)?;
    for cl in &rep.classes {
        let k = &cl.constants;
        for (name, v) in [("smoothing", k.smoothing), ("approximation", k.approximation), ("averaging", k.averaging)] {
            r.measure(format!("{}/{name}", cl.class), v);
            r.assert(finite(format!("{}/{name}/finite", cl.class), v));
        }
        r.measure(format!("{}/low_tail", cl.class), cl.max_low_tail);
        r.measure(format!("{}/high_tail", cl.class), cl.max_high_tail);
    }
    let samples: Vec<_> =
        (0..2).map(|k| sampling::without_mean(&sampling::smooth(&c.grid, c.seed, 2000 + k, 2, 2, false))).collect();
    for (p, op) in both(coeffs) {
        let kee = verify_kee(&op, &samples, &lg, &c.solver)?;
        r.measure(format!("{p}/kee_max_ratio"), kee.max_ratio);
        r.assert(finite(format!("{p}/kee_finite"), kee.max_ratio));
        r.assert(Assertion::le(format!("{p}/kee_identity"), kee.identity_defect, 0.0, 10.0 * c.solver.rel_tol));
    }
    Ok(())
}

/// Cube of side `Lx/2^{k_max+1}` at the centre of the lattice.
fn centre_cube(grid: &GridSpec, k_max: usize) -> Result<ParabolicCube> {
    let side = grid.lx / 2f64.powi(k_max as i32 + 1);
    let centre = vec![grid.nx / 2; grid.n];
    ParabolicCube::new(grid, &centre, grid.nt / 2, side)
}

fn offdiag(c: &ExperimentConfig, coeffs: CoefficientField, r: &mut SuiteResult) -> Result<()> {
    let family = c.coefficients.family.name();
    let op = ParabolicOperator::new(coeffs);
    let cube = centre_cube(&c.grid, c.params.k_max)?;
    let lambda = cube.side / 8.0;
    for kind in SourceKind::ALL {
        let t = annuli_decay(&op, &cube, lambda, kind, c.params.k_max, c.seed, &c.solver)?;
        for (inward, dir) in [(true, "inward"), (false, "outward")] {
            let v: Vec<f64> = t.rows.iter().map(|row| if inward { row.inward } else { row.outward }).collect();
            let ks: Vec<f64> = t.rows.iter().map(|row| row.k as f64).collect();
            for k in 2..v.len() {
                let slack = (0.05 * v[k - 1]).max(t.noise_floor - v[k - 1]).max(0.0);
                r.assert(Assertion::le(format!("{}/{dir}/monotone_k{k}", kind.name()), v[k], v[k - 1], slack));
            }
            r.series(format!("{}/{dir}", kind.name()), ks, v);
        }
        r.decay_rows.extend(t.decay_rows(family));
    }
    r.measure("lambda", lambda);
    r.measure("side", cube.side);
    let fit_cube = centre_cube(&c.grid, c.params.fit_k_max)?;
    let fit_lambda = fit_cube.side / 8.0;
    let t = annuli_decay(&op, &fit_cube, fit_lambda, SourceKind::Scalar, c.params.fit_k_max, c.seed, &c.solver)?;
    let fit = t.fit(true)?;
    r.measure("fit/lambda", fit_lambda);
    r.measure("fit/side", fit_cube.side);
    r.measure("fit/slope", fit.slope);
    r.measure("fit/r2", fit.r2);
    r.measure("fit/fitted_c", fit.fitted_c);
    r.assert(Assertion::le("fit/slope_negative", fit.slope, 0.0, 0.0));
    if is_constant(c) {
        r.assert(Assertion::ge("fit/r2", fit.r2, 0.9, 0.0));
    }
    let (x, y) = fit.points.iter().copied().unzip();
    r.series("fit/points", x, y);
    r.decay_rows.extend(t.decay_rows(family).into_iter().filter(|d| d.variant.ends_with("inward")).map(|mut d| {
        d.variant = format!("fit/{}", d.variant);
        d
    }));
    Ok(())
}

fn normalized(coeffs: &CoefficientField, grid: &GridSpec) -> Result<ParabolicOperator> {
    Ok(ParabolicOperator::new(coeffs.normalize_d(&SpatialCube::full(grid))?))
}

fn carleson(c: &ExperimentConfig, coeffs: CoefficientField, r: &mut SuiteResult) -> Result<()> {
    let op = normalized(&coeffs, &c.grid)?;
    let dec = DyadicDecomposition::new(&c.grid);
    let cache = UCache::build(&op, &lambda_grid(c, 1.0)?, &c.solver)?;
    let rep = carleson_functional(&cache, &dec)?;
    r.measure("supremum", rep.supremum);
    r.measure("low_tail", rep.low_tail);
    r.measure("unused_nodes", rep.unused_nodes as f64);
    r.measure("iterations", cache.iterations as f64);
    let least = rep.scales.iter().flat_map(|s| s.values.iter().copied()).fold(f64::INFINITY, f64::min);
    r.assert(finite("supremum_finite".into(), rep.supremum));
    r.assert(Assertion::ge("values_nonnegative", least, 0.0, 0.0));
    if is_constant(c) {
        r.assert(Assertion::le("identity_supremum", rep.supremum, 0.0, 1e-12));
    }
    let scales: Vec<f64> = rep.scales.iter().map(|s| s.scale as f64).collect();
    let sups: Vec<f64> = rep.scales.iter().map(|s| s.values.iter().copied().fold(0.0, f64::max)).collect();
    r.series("per_scale_supremum", scales.clone(), sups);
    r.series("running_supremum", scales, rep.running_supremum.clone());
    let probes: Vec<VectorField> = (0..4)
        .map(|k| {
            let comps =
                (0..c.grid.n).map(|a| sampling::generic(&c.grid, c.seed, 100 + (k * c.grid.n + a) as u64, false));
            VectorField::new(comps.collect())
        })
        .collect::<Result<_>>()?;
    let th = theta_ab_bounds(&cache, &dec, &probes)?;
    r.measure("gamma", th.gamma);
    r.measure("gamma_prime", th.gamma_prime);
    r.measure("random_probe_max", th.random_probe_max);
    r.assert(Assertion::le("gamma_le_gamma_prime", th.gamma, th.gamma_prime, 1e-9 * th.gamma_prime.max(1e-300)));
    Ok(())
}

fn tb(c: &ExperimentConfig, coeffs: CoefficientField, r: &mut SuiteResult) -> Result<()> {
    let n = c.grid.n;
    let dec = DyadicDecomposition::new(&c.grid);
    let op = normalized(&coeffs, &c.grid)?;
    let cube = dec.cubes(1)[2 % dec.cubes(1).len()];
    let mut dir = vec![0.0; n];
    dir[0] = 0.6;
    dir[n - 1] += 0.8;
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let zeta = complex_direction(&dir.iter().map(|v| v / norm).collect::<Vec<_>>());
    for (p, o) in [("h", op.clone()), ("h_adjoint", op.adjoint())] {
        let h = laa_eps_halving(&o, &dec, &cube, &zeta, c.params.tb_epsilon, &c.solver)?;
        r.measure(format!("{p}/factor_i"), h.factor_i);
        r.measure(format!("{p}/ratio_ii"), h.fine.ratio_ii);
        r.measure(format!("{p}/ratio_iii"), h.fine.ratio_iii);
        r.measure(format!("{p}/profile_energy"), h.fine.profile_energy);
        for a in Assertion::within(&format!("{p}/halving_factor"), h.factor_i, 4.0, 4.0 * HALVING_WINDOW) {
            r.assert(a);
        }
        r.assert(Assertion::le(format!("{p}/drift_ii"), h.drift_ii, EPS_STABILITY, 0.0));
        r.assert(Assertion::le(
            format!("{p}/ratio_iii_bounded"),
            h.fine.ratio_iii,
            EPS_STABILITY * h.fine.profile_energy,
            0.0,
        ));
    }
    let cache = UCache::build(&op, &lambda_grid(c, 1.0)?, &c.solver)?;
    let base = TbConfig {
        epsilon: c.params.tb_epsilon,
        directions: default_directions(n),
        max_cubes_per_scale: c.params.tb_cubes_per_scale,
    };
    let rep = tb_reduction_check(&op, &dec, &cache, &base, &c.solver)?;
    r.measure("reduction/left", rep.left);
    r.measure("reduction/right", rep.right);
    r.measure("reduction/constant", rep.constant);
    r.measure("reduction/cubes", rep.cubes_examined as f64);
    r.assert(Assertion::le(
        "reduction/left_le_c_right",
        rep.left,
        rep.constant * rep.right,
        1e-12 * rep.left.max(1e-300),
    ));
    if n == 2 {
        let doubled = TbConfig { directions: refined_directions(2 * base.directions.len()), ..base };
        let rep2 = tb_reduction_check(&op, &dec, &cache, &doubled, &c.solver)?;
        r.measure("reduction/constant_doubled", rep2.constant);
        r.assert(Assertion::le(
            "reduction/w_doubling_change",
            (rep2.constant - rep.constant).abs(),
            W_STABILITY * rep.constant,
            1e-12,
        ));
    }
    Ok(())
}

/// Default Kato samples with band limits and modes cut to what `grid` resolves.
pub fn kato_samples(grid: &GridSpec, count: usize, seed: u64) -> SampleSpec {
    let d = SampleSpec::default();
    let nyq_x = grid.nx as i64 / 2;
    let nyq_t = grid.nt as i64 / 2;
    let modes: Vec<PureMode> = d
        .modes
        .iter()
        .copied()
        .filter(|m| m.kx[grid.n..].iter().all(|&k| k == 0))
        .filter(|m| m.kx.iter().all(|k| k.abs() < nyq_x) && m.kt.abs() < nyq_t)
        .collect();
    SampleSpec { count, kx_max: d.kx_max.min(nyq_x - 1), kt_max: d.kt_max.min(nyq_t - 1), seed, modes }
}

fn kato(c: &ExperimentConfig, coeffs: CoefficientField, r: &mut SuiteResult) -> Result<()> {
    let b = identity_mode_ratios(&c.grid)?;
    r.measure("identity/min_sq", b.min_sq);
    r.measure("identity/max_sq", b.max_sq);
    r.assert(Assertion::ge("identity/min_sq", b.min_sq, 2f64.powf(-1.5), 1e-12));
    r.assert(Assertion::le("identity/max_sq", b.max_sq, 1.0, 1e-12));
    let samples = kato_samples(&c.grid, c.params.kato_samples, c.seed);
    for (p, op) in both(coeffs) {
        let rep = kato_ratio_sweep(&op, &samples, &c.quadrature, &c.solver)?;
        r.measure(format!("{p}/min"), rep.min);
        r.measure(format!("{p}/max"), rep.max);
        r.measure(format!("{p}/truncation_warning"), if rep.truncation_warning { 1.0 } else { 0.0 });
        r.assert(finite(format!("{p}/max_finite"), rep.max));
        r.assert(Assertion::ge(format!("{p}/min_positive"), rep.min, 0.0, 0.0));
        let idx = (0..rep.ratios.len()).map(|i| i as f64).collect();
        r.series(format!("{p}/ratios"), idx, rep.ratios);
    }
    Ok(())
}

/// Relative deviation allowed between the quadrature root and the dense oracle.
pub const ORACLE_TOL: f64 = 1e-3;
/// Relative residual `‖O² − H‖/‖H‖` required of the oracle.
pub const ORACLE_RESIDUAL: f64 = 1e-10;

fn sqrt_oracle(c: &ExperimentConfig, coeffs: CoefficientField, r: &mut SuiteResult) -> Result<()> {
    let dof = c.grid.len();
    if dof > ORACLE_DOF_CAP {
        return Err(crate::Error::SizeCap { dof, cap: ORACLE_DOF_CAP });
    }
    for (p, op) in both(coeffs) {
        let o = sqrt_dense_oracle(&op)?;
        r.measure(format!("{p}/min_re_eigenvalue"), o.min_re_eigenvalue);
        r.assert(Assertion::le(format!("{p}/oracle_residual"), o.residual, 0.0, ORACLE_RESIDUAL));
        let mut worst: f64 = 0.0;
        for k in 0..c.params.oracle_samples {
            let u = sampling::generic(&c.grid, c.seed, 500 + k as u64, false);
            let reference = o.apply(&u)?;
            let q = sqrt_apply(&op, &u, &c.quadrature, &c.solver)?;
            worst = worst.max(q.value.sub(&reference).norm() / reference.norm());
        }
        r.assert(Assertion::le(format!("{p}/quadrature_vs_oracle"), worst, 0.0, ORACLE_TOL));
    }
    Ok(())
}

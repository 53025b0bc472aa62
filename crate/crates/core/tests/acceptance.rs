//! Acceptance battery. Criteria run in order inside one test so that the total
//! runtime can be checked, and each prints one PASS or FAIL line.

use katolab::carleson::{carleson_functional, UCache};
use katolab::coefficients::{generate, CoefficientField, Family, GeneratorSpec, SpatialCube};
use katolab::dyadic::DyadicDecomposition;
use katolab::lattice::{forward, inverse, Field, Frequencies, GridSpec};
use katolab::lp::{lp_stability, verify_kee, LambdaGrid, LpSampleSpec, MollifierSpec};
use katolab::operator::{accretivity_report, ParabolicOperator};
use katolab::report::{envelope_to_json, run, run_with_workers, ExperimentConfig, Status, Suite, SuiteResult};
use katolab::resolvent::SolverConfig;
use katolab::sampling;
use katolab::sqrt::{
    identity_mode_ratios, kato_ratio_sweep, project_off_kernel, sqrt_apply, QuadratureSpec, SampleSpec,
};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// Off-diagonal decay slope for `A = I`, scalar source, inward, on 16×16×32 with `ℓ = 1/16`, `λ = ℓ/8`.
const PINNED_SLOPE: f64 = -0.16344;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Collects named checks into one verdict.
#[derive(Default)]
struct Checks {
    failed: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let w = what.into();
        if !ok {
            self.failed.push(w.clone());
        }
        self.notes.push(w);
    }

    fn suite(&mut self, label: &str, r: &SuiteResult) {
        let bad: Vec<&str> = r.assertions.iter().filter(|a| !a.verdict).map(|a| a.name.as_str()).collect();
        let ok = r.status == Status::Passed && bad.is_empty();
        let msg = r.message.as_deref().unwrap_or("");
        self.check(ok, format!("{label}: {} {:?} {msg} {bad:?}", r.suite.name(), r.status));
    }

    fn verdict(self, summary: String) -> Verdict {
        if self.failed.is_empty() {
            Verdict::new(true, summary)
        } else {
            Verdict::new(false, format!("{summary}; failed: {}", self.failed.join("; ")))
        }
    }
}

fn emit(line: &str) {
    // Written past the libtest capture so that the lines always reach the log.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn grid(nx: usize, nt: usize) -> GridSpec {
    GridSpec::unit(2, nx, nt).unwrap()
}

/// Every family at the magnitude used by the battery.
fn families() -> Vec<GeneratorSpec> {
    Family::ALL
        .into_iter()
        .map(|f| {
            let m = match f {
                Family::Identity => 0.0,
                Family::RandomSmooth => 0.5,
                _ => 1.0,
            };
            GeneratorSpec::new(f, m, 0)
        })
        .collect()
}

fn suite_config(g: GridSpec, spec: GeneratorSpec, suite: Suite) -> ExperimentConfig {
    ExperimentConfig::new(g, spec, vec![suite])
}

fn accretivity() -> Verdict {
    let g = grid(16, 32);
    let mut c = Checks::default();
    let mut worst = (f64::NEG_INFINITY, 0.0f64);
    for spec in families() {
        let op = ParabolicOperator::new(generate(&spec, &g).unwrap());
        for (p, o) in [("H", op.clone()), ("H*", op.adjoint())] {
            let r = accretivity_report(&o, 100, 1).unwrap();
            worst = (worst.0.max(r.max_deficit_rel), worst.1.max(r.max_d_real_rel));
            c.check(r.max_deficit_rel <= 1e-8, format!("{} {p} deficit {:.2e}", spec.family.name(), r.max_deficit_rel));
            c.check(
                r.max_d_real_rel <= 1e-12,
                format!("{} {p} D pairing {:.2e}", spec.family.name(), r.max_d_real_rel),
            );
        }
    }
    c.verdict(format!("6 families x 100 fields, H and H*: max deficit {:.2e}, max D pairing {:.2e}", worst.0, worst.1))
}

fn resolvent() -> Verdict {
    let g = grid(16, 32);
    let mut c = Checks::default();
    let mut worst: f64 = 0.0;
    for spec in families() {
        let mut cfg = suite_config(g, spec.clone(), Suite::Resolvent);
        cfg.params.samples = 20;
        let (env, _) = run(&cfg).unwrap();
        let r = &env.suites[0];
        for a in &r.assertions {
            worst = worst.max(a.lhs);
        }
        c.suite(spec.family.name(), r);
    }
    c.verdict(format!("sigma in {{1, 2+3i, 0.1+10i}}, 20 fields, H and H*: largest Re(sigma)|u|/|f| = {worst:.12}"))
}

fn heat_root_symbol(u: &Field, op: &ParabolicOperator) -> Field {
    let freqs = Frequencies::new(u.grid());
    let mut spec = forward(u);
    freqs.for_each_mut(&mut spec, |z, m| *z *= (op.time_symbol(m) + m.xi_sqr()).sqrt());
    project_off_kernel(&inverse(u.grid(), spec))
}

fn heat_square_root() -> Verdict {
    let start = Instant::now();
    let g = grid(16, 32);
    let op = ParabolicOperator::new(CoefficientField::identity(&g));
    let q = QuadratureSpec::default();
    let cfg = SolverConfig::default();
    let mut c = Checks::default();
    let (mut err, mut drift) = (0.0f64, 0.0f64);
    for k in 0..3 {
        let u = sampling::generic(&g, 5, k, false);
        let exact = heat_root_symbol(&u, &op);
        let got = sqrt_apply(&op, &u, &q, &cfg).unwrap().value;
        let fine = sqrt_apply(&op, &u, &q.doubled(), &cfg).unwrap().value;
        err = err.max(got.sub(&exact).norm() / exact.norm());
        drift = drift.max(fine.sub(&got).norm() / got.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(err <= 1e-6, format!("error {err:.2e}"));
    c.check(drift <= 1e-7, format!("doubling {drift:.2e}"));
    c.check(secs <= 60.0, format!("runtime {secs:.1}s"));
    c.verdict(format!("200 nodes on [1e-4, 1e4], 16x16x32: rel error {err:.2e}, node doubling {drift:.2e}, {secs:.1}s"))
}

fn oracle() -> Verdict {
    let start = Instant::now();
    let mut c = Checks::default();
    let mut worst = String::new();
    for f in [Family::Checkerboard, Family::LogSingular] {
        let mut cfg = suite_config(grid(8, 8), GeneratorSpec::new(f, 0.5, 0), Suite::SqrtOracle);
        cfg.params.oracle_samples = 10;
        let (env, _) = run(&cfg).unwrap();
        let r = &env.suites[0];
        for a in &r.assertions {
            worst.push_str(&format!(" {}:{}={:.2e}", f.name(), a.name, a.lhs));
        }
        c.suite(f.name(), r);
    }
    let secs = start.elapsed().as_secs_f64();
    c.check(secs <= 600.0, format!("runtime {secs:.1}s"));
    c.verdict(format!("8x8x8, kappa 0.5, 10 fields, H and H*:{worst}, {secs:.1}s"))
}

fn kato() -> Verdict {
    let mut c = Checks::default();
    let mut notes = Vec::new();
    for (nx, nt) in [(16, 32), (32, 32), (16, 16), (32, 16)] {
        let b = identity_mode_ratios(&grid(nx, nt)).unwrap();
        c.check(
            b.min_sq >= 2f64.powf(-1.5) - 1e-12 && b.max_sq <= 1.0 + 1e-12,
            format!("{nx}x{nx}x{nt} heat band [{}, {}]", b.min_sq, b.max_sq),
        );
    }
    let quad = QuadratureSpec::new(1e-3, 10.0, 20).unwrap();
    let cfg = SolverConfig { rel_tol: 1e-4, ..SolverConfig::default() };
    let samples = SampleSpec::default();
    for f in [Family::Checkerboard, Family::LogSingular, Family::TimeModulated] {
        let spec = GeneratorSpec::new(f, 1.0, 0);
        let ops: Vec<[ParabolicOperator; 2]> = [16, 32]
            .into_iter()
            .map(|nx| {
                let op = ParabolicOperator::new(generate(&spec, &grid(nx, 16)).unwrap());
                let adj = op.adjoint();
                [op, adj]
            })
            .collect();
        for (i, p) in ["H", "H*"].into_iter().enumerate() {
            let coarse = kato_ratio_sweep(&ops[0][i], &samples, &quad, &cfg).unwrap();
            let fine = kato_ratio_sweep(&ops[1][i], &samples, &quad, &cfg).unwrap();
            let dmin = (fine.min / coarse.min - 1.0).abs();
            let dmax = (fine.max / coarse.max - 1.0).abs();
            let finite = [coarse.min, coarse.max, fine.min, fine.max].iter().all(|v| v.is_finite() && *v > 0.0);
            c.check(finite, format!("{} {p} finite", f.name()));
            c.check(dmin <= 0.2 && dmax <= 0.2, format!("{} {p} change min {dmin:.3} max {dmax:.3}", f.name()));
            notes.push(format!(
                "{} {p} [{:.3},{:.3}]->[{:.3},{:.3}]",
                f.name(),
                coarse.min,
                coarse.max,
                fine.min,
                fine.max
            ));
        }
    }
    c.verdict(format!("heat band exact; {} samples, Nx 16 -> 32: {}", samples.total(), notes.join(", ")))
}

fn offdiag() -> Verdict {
    let g = grid(16, 32);
    let mut c = Checks::default();
    let mut slope = f64::NAN;
    let mut r2 = f64::NAN;
    for spec in families() {
        let (env, _) = run(&suite_config(g, spec.clone(), Suite::Offdiag)).unwrap();
        let r = &env.suites[0];
        c.suite(spec.family.name(), r);
        if spec.family == Family::Identity {
            let get = |n: &str| r.measurements.iter().find(|m| m.name == n).map_or(f64::NAN, |m| m.value);
            slope = get("fit/slope");
            r2 = get("fit/r2");
        }
    }
    c.check(slope < 0.0 && r2 >= 0.9, format!("A = I fit slope {slope:.5} r2 {r2:.4}"));
    c.check((slope / PINNED_SLOPE - 1.0).abs() <= 0.1, format!("slope {slope:.5} vs pinned {PINNED_SLOPE}"));
    c.verdict(format!("annuli monotone for 6 families x 3 sources x 2 directions; A = I slope {slope:.5} (pinned {PINNED_SLOPE}), r2 {r2:.4}"))
}

fn growth(a: f64, b: f64) -> f64 {
    (a / b).max(b / a)
}

fn littlewood_paley() -> Verdict {
    let mut c = Checks::default();
    let coarse = grid(16, 32);
    let fine = grid(32, 64);
    let st = lp_stability(&MollifierSpec::default(), &coarse, &fine, &LpSampleSpec::default()).unwrap();
    c.check(!st.unbounded, format!("LP growth lambda {:.3} lattice {:.3}", st.lambda_growth, st.lattice_growth));
    let cfg = SolverConfig::default();
    let spec = GeneratorSpec::new(Family::Checkerboard, 1.0, 0);
    let lg = LambdaGrid::geometric(2.5e-4, 0.25, 16).unwrap();
    let kee = |g: &GridSpec, lg: &LambdaGrid| {
        let op = ParabolicOperator::new(generate(&spec, g).unwrap());
        let samples: Vec<Field> =
            (0..2).map(|k| sampling::without_mean(&sampling::smooth(g, 0, 2000 + k, 2, 2, false))).collect();
        verify_kee(&op, &samples, lg, &cfg).unwrap()
    };
    let base = kee(&coarse, &lg);
    let refined = kee(&coarse, &lg.refined());
    let lattice = kee(&fine, &lg);
    for (name, r) in [("base", &base), ("lambda-doubled", &refined), ("lattice-refined", &lattice)] {
        c.check(r.max_ratio.is_finite(), format!("kee {name} finite"));
        c.check(
            r.identity_defect <= 10.0 * cfg.rel_tol,
            format!("kee {name} identity defect {:.2e}", r.identity_defect),
        );
    }
    let gl = growth(base.max_ratio, refined.max_ratio);
    let gf = growth(base.max_ratio, lattice.max_ratio);
    c.check(gl <= 2.0 && gf <= 2.0, format!("kee growth lambda {gl:.3} lattice {gf:.3}"));
    let defect = [&base, &refined, &lattice].iter().map(|r| r.identity_defect).fold(0.0, f64::max);
    c.verdict(format!(
        "LP growth lambda {:.3} lattice {:.3}; kee growth lambda {gl:.3} lattice {gf:.3}; identity defect {defect:.2e} <= {:.0e}",
        st.lambda_growth,
        st.lattice_growth,
        10.0 * cfg.rel_tol
    ))
}

fn carleson_sup(coeffs: &CoefficientField, g: &GridSpec) -> f64 {
    let op = ParabolicOperator::new(coeffs.normalize_d(&SpatialCube::full(g)).unwrap());
    let lg = LambdaGrid::geometric(2.5e-4 * g.lx, g.lx, 16).unwrap();
    let cache = UCache::build(&op, &lg, &SolverConfig::default()).unwrap();
    carleson_functional(&cache, &DyadicDecomposition::new(g)).unwrap().supremum
}

fn carleson() -> Verdict {
    let mut c = Checks::default();
    let coarse = grid(16, 32);
    let fine = grid(32, 64);
    let id = carleson_sup(&CoefficientField::identity(&coarse), &coarse);
    c.check(id <= 1e-12, format!("identity supremum {id:.2e}"));
    let mut alpha = Vec::new();
    for f in [Family::Checkerboard, Family::LogSingular] {
        let base = generate(&GeneratorSpec::new(f, 1.0, 0), &coarse).unwrap();
        let ratio = carleson_sup(&base.scale_d(0.2), &coarse) / carleson_sup(&base.scale_d(0.1), &coarse);
        c.check((ratio / 4.0 - 1.0).abs() <= 0.05, format!("{} alpha^2 ratio {ratio:.4}", f.name()));
        alpha.push(format!("{} {ratio:.3}", f.name()));
    }
    let mut refine = Vec::new();
    let mut fine_secs = 0.0;
    for f in [Family::Checkerboard, Family::LogSingular, Family::TimeModulated] {
        let spec = GeneratorSpec::new(f, 1.0, 0);
        let a = carleson_sup(&generate(&spec, &coarse).unwrap(), &coarse);
        let t = Instant::now();
        let b = carleson_sup(&generate(&spec, &fine).unwrap(), &fine);
        fine_secs += t.elapsed().as_secs_f64();
        let change = b / a - 1.0;
        c.check(change.abs() <= 0.2, format!("{} refinement {a:.4} -> {b:.4}", f.name()));
        refine.push(format!("{} {a:.4}->{b:.4} ({:+.1}%)", f.name(), 100.0 * change));
    }
    c.check(fine_secs <= 900.0, format!("Nx = 32 runtime {fine_secs:.1}s"));
    c.verdict(format!(
        "identity {id:.1e}; alpha^2 ratios {}; 16x16x32 -> 32x32x64: {}; Nx = 32 took {fine_secs:.0}s",
        alpha.join(", "),
        refine.join(", ")
    ))
}

fn tb() -> Verdict {
    let g = grid(16, 32);
    let mut c = Checks::default();
    let mut notes = Vec::new();
    for spec in families() {
        let (env, _) = run(&suite_config(g, spec.clone(), Suite::Tb)).unwrap();
        let r = &env.suites[0];
        c.suite(spec.family.name(), r);
        let get = |n: &str| r.measurements.iter().find(|m| m.name == n).map_or(f64::NAN, |m| m.value);
        notes.push(format!(
            "{} factor {:.2}/{:.2} C {:.3}->{:.3}",
            spec.family.name(),
            get("h/factor_i"),
            get("h_adjoint/factor_i"),
            get("reduction/constant"),
            get("reduction/constant_doubled")
        ));
    }
    c.verdict(format!("eps 0.2 -> 0.1 on scale-1 cubes, |W| 8 -> 16: {}", notes.join(", ")))
}

fn determinism() -> Verdict {
    let mut c = Checks::default();
    let suites =
        vec![Suite::Accretivity, Suite::Resolvent, Suite::Lp, Suite::Offdiag, Suite::Carleson, Suite::Tb, Suite::Kato];
    let mut cfg = ExperimentConfig::new(grid(16, 32), GeneratorSpec::new(Family::LogSingular, 1.0, 0), suites);
    cfg.quadrature = QuadratureSpec::new(1e-3, 10.0, 20).unwrap();
    cfg.params.kato_samples = 2;
    cfg.params.samples = 5;
    let serial = envelope_to_json(&run_with_workers(&cfg, 1).unwrap().0).unwrap();
    let parallel = envelope_to_json(&run_with_workers(&cfg, 4).unwrap().0).unwrap();
    let again = envelope_to_json(&run_with_workers(&cfg, 1).unwrap().0).unwrap();
    c.check(serial == parallel, "serial vs 4 workers");
    c.check(serial == again, "repeated serial run");
    c.verdict(format!("7 suites, log_singular 16x16x32: {} bytes identical across 1/4/1 workers", serial.len()))
}

#[test]
fn acceptance_battery() {
    let start = Instant::now();
    let criteria: [Criterion; 9] = [
        ("accretivity", accretivity),
        ("resolvent contraction", resolvent),
        ("heat square root", heat_square_root),
        ("oracle equivalence", oracle),
        ("kato equivalence", kato),
        ("off-diagonal decay", offdiag),
        ("littlewood-paley", littlewood_paley),
        ("carleson", carleson),
        ("tb", tb),
    ];
    let mut passed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Verdict::new(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let tag = if v.pass { "PASS" } else { "FAIL" };
        emit(&format!("criterion {:>2} [{tag}] {name} ({:.1}s): {}", i + 1, t.elapsed().as_secs_f64(), v.detail));
        passed.push(v.pass);
    }
    let t = Instant::now();
    let mut v = catch_unwind(determinism).unwrap_or_else(|_| Verdict::new(false, "panicked"));
    let total = start.elapsed();
    let limit = Duration::from_secs(45 * 60);
    if total > limit {
        v.pass = false;
    }
    let tag = if v.pass { "PASS" } else { "FAIL" };
    emit(&format!(
        "criterion 10 [{tag}] infrastructure ({:.1}s): {}; battery {:.1} min (limit 45)",
        t.elapsed().as_secs_f64(),
        v.detail,
        total.as_secs_f64() / 60.0
    ));
    passed.push(v.pass);
    let failed: Vec<usize> = passed.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}

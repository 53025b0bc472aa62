use katolab::coefficients::{Family, GeneratorSpec};
use katolab::lattice::GridSpec;
use katolab::offdiag::read_decay_csv;
use katolab::report::*;
use katolab::sqrt::QuadratureSpec;
use proptest::prelude::*;
use std::fs::File;

fn config(family: Family, magnitude: f64, nx: usize, nt: usize, suites: Vec<Suite>) -> ExperimentConfig {
    let mut c =
        ExperimentConfig::new(GridSpec::unit(2, nx, nt).unwrap(), GeneratorSpec::new(family, magnitude, 0), suites);
    c.quadrature = QuadratureSpec::new(1e-3, 10.0, 20).unwrap();
    c.params.samples = 4;
    c.params.kato_samples = 2;
    c
}

fn json(env: &ReportEnvelope) -> String {
    envelope_to_json(env).unwrap()
}

#[test]
fn empty_suite_list_echoes_the_config() {
    let c = config(Family::Checkerboard, 0.5, 8, 16, vec![]);
    let (env, timing) = run(&c).unwrap();
    assert!(env.suites.is_empty());
    assert!(timing.suites.is_empty());
    assert_eq!(env.schema, REPORT_SCHEMA);
    assert_eq!(env.config, c);
    assert_eq!(env.environment.dof, 8 * 8 * 16);
    assert!(env.passed());
    assert_eq!(envelope_from_json(&json(&env)).unwrap(), env);
}

#[test]
fn config_round_trips_and_rejects_bad_input() {
    let mut c = config(Family::LogSingular, 0.75, 16, 32, Suite::ALL.to_vec());
    c.seed = 11;
    c.workers = Some(3);
    c.params.tb_epsilon = 0.15;
    let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
    assert_eq!(back, c);

    let text = c.to_json().unwrap();
    let unknown = text.replace("\"sqrt-oracle\"", "\"spectral\"");
    assert!(ExperimentConfig::from_json(&unknown).is_err());
    let duplicate = text.replace("\"sqrt-oracle\"", "\"kato\"");
    assert!(ExperimentConfig::from_json(&duplicate).is_err());
    let extra = text.replacen("\"seed\": 11", "\"seed\": 11, \"colour\": 1", 1);
    assert!(ExperimentConfig::from_json(&extra).is_err());
    let bad_tol = text.replace("\"rel_tol\": 1e-10", "\"rel_tol\": 0.1");
    assert!(matches!(ExperimentConfig::from_json(&bad_tol), Err(katolab::Error::InvalidParameter(_))));
    assert!(matches!(Suite::parse("nope"), Err(katolab::Error::UnknownSuite(_))));
    for s in Suite::ALL {
        assert_eq!(Suite::parse(s.name()).unwrap(), s);
    }
}

#[test]
fn minimal_config_takes_defaults() {
    let text = r#"{"grid": {"n": 2, "nx": 8, "nt": 8, "lx": 1.0, "lt": 1.0}, "coefficients": {"family": "identity"}}"#;
    let c = ExperimentConfig::from_json(text).unwrap();
    assert_eq!(c.schema, CONFIG_SCHEMA);
    assert!(c.suites.is_empty());
    assert_eq!(c.params, SuiteParams::default());
    assert_eq!(c.quadrature, QuadratureSpec::default());
}

#[test]
fn identity_coefficients_pass_every_suite() {
    let mut c = config(Family::Identity, 0.0, 16, 32, Suite::ALL.to_vec());
    c.quadrature = QuadratureSpec::default();
    let (env, _) = run(&c).unwrap();
    for s in &env.suites {
        assert!(s.passed(), "{}: {:?} {:?}", s.suite.name(), s.status, s.message);
        assert!(s.assertions.iter().all(|a| a.verdict));
    }
    let carleson = env.suite(Suite::Carleson).unwrap();
    let sup = carleson.measurements.iter().find(|m| m.name == "supremum").unwrap();
    assert_eq!(sup.value, 0.0);
    let oracle = env.suite(Suite::SqrtOracle).unwrap();
    assert_eq!(oracle.status, Status::Skipped);
    assert!(oracle.message.as_deref().unwrap().contains("4096"));
}

#[test]
fn reports_are_bitwise_reproducible_across_worker_counts() {
    let suites = vec![Suite::Accretivity, Suite::Resolvent, Suite::Lp, Suite::Carleson, Suite::Kato];
    let c = config(Family::Checkerboard, 1.0, 8, 16, suites);
    let (a, ta) = run_with_workers(&c, 1).unwrap();
    let (b, tb) = run_with_workers(&c, 3).unwrap();
    let (again, _) = run_with_workers(&c, 1).unwrap();
    assert_eq!(json(&a), json(&b));
    assert_eq!(json(&a), json(&again));
    assert_eq!((ta.workers, tb.workers), (1, 3));
    assert_eq!(ta.suites.len(), 5);
}

#[test]
fn a_failing_suite_does_not_stop_the_others() {
    // An 8-cell lattice cannot hold the decay-fit cube, so offdiag errors.
    let c = config(Family::Checkerboard, 0.5, 8, 16, vec![Suite::Offdiag, Suite::Accretivity]);
    let (env, timing) = run(&c).unwrap();
    assert_eq!(env.suites.len(), 2);
    assert_eq!(env.suites[0].status, Status::Error);
    assert!(env.suites[0].message.is_some());
    assert_eq!(env.suites[1].status, Status::Passed);
    assert!(!env.passed());
    assert_eq!(timing.suites.len(), 2);
}

#[test]
fn assertion_failures_mark_the_suite() {
    let mut c = config(Family::Checkerboard, 0.5, 8, 8, vec![Suite::SqrtOracle]);
    c.params.oracle_samples = 1;
    let (env, _) = run(&c).unwrap();
    let s = &env.suites[0];
    assert_eq!(s.status, Status::Failed);
    assert!(s.assertions.iter().any(|a| !a.verdict && a.name.ends_with("quadrature_vs_oracle")));
    assert!(s.assertions.iter().filter(|a| a.name.ends_with("oracle_residual")).all(|a| a.verdict));
}

#[test]
fn json_csv_json_round_trip_is_exact() {
    let c = config(Family::LogSingular, 1.0, 16, 32, vec![Suite::Accretivity, Suite::Offdiag, Suite::Carleson]);
    let (mut env, timing) = run(&c).unwrap();
    env.suites[0].measurements.push(Measurement { name: "edge/nan".into(), value: f64::NAN });
    env.suites[0].measurements.push(Measurement { name: "edge/inf".into(), value: f64::NEG_INFINITY });
    env.suites[0].measurements.push(Measurement { name: "edge/tiny".into(), value: 4.9e-324 });
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("nested/report");
    let paths = write_outputs(&env, Some(&timing), &prefix, &Format::ALL).unwrap();
    let from_json = envelope_from_json(&std::fs::read_to_string(paths.json.as_ref().unwrap()).unwrap()).unwrap();
    let suites = read_csv_outputs(paths.csv.as_ref().unwrap(), paths.decay_csv.as_deref()).unwrap();
    let back = ReportEnvelope { suites, ..from_json.clone() };
    assert_eq!(json(&back), json(&env));
    assert_eq!(json(&from_json), json(&env));
    assert!(paths.timing.unwrap().exists());
    let plot = read_plot_rows(File::open(paths.plotdata.unwrap()).unwrap()).unwrap();
    assert_eq!(plot, plot_rows(&env));
}

#[test]
fn offdiag_csv_uses_the_decay_table_schema() {
    let c = config(Family::TimeModulated, 1.0, 16, 32, vec![Suite::Offdiag]);
    let (env, _) = run(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_outputs(&env, None, &dir.path().join("r"), &[Format::Csv]).unwrap();
    assert!(paths.json.is_none() && paths.timing.is_none());
    let decay = paths.decay_csv.unwrap();
    let header = std::fs::read_to_string(&decay).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "family,variant,lambda,k_or_d,norm_ratio,fitted_c");
    let rows = read_decay_csv(File::open(&decay).unwrap()).unwrap();
    assert_eq!(rows.len(), env.suites[0].decay_rows.len());
    assert!(rows.iter().all(|r| r.family == "time_modulated"));
    assert!(rows.iter().any(|r| r.variant == "div_source/outward"));
    assert!(rows.iter().any(|r| r.variant == "fit/scalar/inward"));
}

#[test]
fn unwritable_output_is_an_error() {
    let env = run(&config(Family::Identity, 0.0, 8, 8, vec![])).unwrap().0;
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    assert!(matches!(write_outputs(&env, None, &blocker.join("r"), &[Format::Json]), Err(katolab::Error::Io(_))));
}

#[test]
fn sweep_has_one_envelope_per_magnitude_and_monotone_suprema() {
    let c = config(Family::Checkerboard, 0.0, 8, 16, vec![Suite::Carleson]);
    let (rep, timing) = sweep(&c, &[1.0, 0.25, 0.5], 1).unwrap();
    assert_eq!(rep.magnitudes, vec![0.25, 0.5, 1.0]);
    assert_eq!(rep.envelopes.len(), 3);
    assert_eq!(timing.suites.len(), 3);
    for (m, e) in rep.magnitudes.iter().zip(&rep.envelopes) {
        assert_eq!(e.config.coefficients.magnitude, *m);
    }
    let sups = rep.carleson_suprema();
    assert!(sups.windows(2).all(|w| w[1] > w[0]), "{sups:?}");
    assert_eq!(rep.assertions.len(), 2);
    assert!(rep.passed());
    assert!(sweep(&c, &[], 1).is_err());
}

proptest! {
    #[test]
    fn assertion_verdicts_follow_their_relation(lhs in -10.0..10.0f64, rhs in -10.0..10.0f64, tol in 0.0..1.0f64) {
        let le = Assertion::le("x", lhs, rhs, tol);
        prop_assert_eq!(le.verdict, lhs <= rhs + tol);
        let ge = Assertion::ge("x", lhs, rhs, tol);
        prop_assert_eq!(ge.verdict, lhs >= rhs - tol);
        let [up, down] = Assertion::within("x", lhs, rhs, tol);
        prop_assert_eq!(up.verdict && down.verdict, (lhs - rhs).abs() <= tol);
    }

    #[test]
    fn csv_rows_round_trip(values in proptest::collection::vec(proptest::num::f64::ANY, 1..20)) {
        let c = config(Family::Identity, 0.0, 8, 8, vec![]);
        let mut env = run(&c).unwrap().0;
        let xs: Vec<f64> = (0..values.len()).map(|i| i as f64 * 0.1).collect();
        let suite: SuiteResult = serde_json::from_value(serde_json::json!({
            "suite": "lp", "status": "passed", "measurements": [], "assertions": [],
        })).unwrap();
        env.suites.push(suite);
        env.suites[0].series.push(Series { name: "s".into(), x: xs, y: values.clone() });
        for (i, v) in values.iter().enumerate() {
            env.suites[0].measurements.push(Measurement { name: format!("m{i}"), value: *v });
            env.suites[0].assertions.push(Assertion::le(format!("a{i}"), *v, 1.0, 0.5));
        }
        let mut buf = Vec::new();
        write_csv_rows(&mut buf, &rows_from_envelope(&env)).unwrap();
        let back = suites_from_rows(&read_csv_rows(buf.as_slice()).unwrap(), &[]).unwrap();
        let again = ReportEnvelope { suites: back, ..env.clone() };
        prop_assert_eq!(json(&again), json(&env));
    }
}

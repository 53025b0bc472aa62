use katolab::lp::LambdaGrid;
use katolab::offdiag::{fit_decay, monotone_beyond_first, read_decay_csv, write_decay_csv, DecayRow};
use proptest::prelude::*;

proptest! {
    #[test]
    fn decay_fit_recovers_an_exact_exponential(c in 0.05f64..5.0, amp in -3.0f64..3.0, n in 4usize..12) {
        let pts: Vec<(f64, f64)> = (1..=n).map(|k| (k as f64, amp - k as f64 / c)).collect();
        let fit = fit_decay(&pts).unwrap();
        prop_assert!((fit.fitted_c / c - 1.0).abs() <= 1e-10);
        prop_assert!((fit.intercept - amp).abs() <= 1e-9 * (1.0 + amp.abs() + n as f64 / c));
        prop_assert!(fit.decaying && fit.r2 > 1.0 - 1e-12);
    }

    #[test]
    fn decay_fit_rejects_short_or_narrow_tables(n in 0usize..4, x0 in 0.5f64..2.0) {
        let few: Vec<(f64, f64)> = (0..n).map(|k| (x0 + k as f64, -(k as f64))).collect();
        prop_assert!(fit_decay(&few).is_err());
        let narrow: Vec<(f64, f64)> = (0..6).map(|k| (x0 * (1.0 + 0.1 * k as f64), -(k as f64))).collect();
        prop_assert!(fit_decay(&narrow).is_err());
    }

    #[test]
    fn decreasing_sequences_are_monotone(mut v in proptest::collection::vec(1e-8f64..1.0, 2..10)) {
        v.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(monotone_beyond_first(&v, 0.0));
        let first_free: Vec<f64> = std::iter::once(1e3).chain(v.iter().copied()).collect();
        prop_assert!(monotone_beyond_first(&first_free, 0.0));
    }

    #[test]
    fn lambda_grid_nodes_cover_the_window(lo in 1e-5f64..1e-2, decades in 0.5f64..5.0, per in 1usize..64) {
        let hi = lo * 10f64.powf(decades);
        let g = LambdaGrid::geometric(lo, hi, per).unwrap();
        prop_assert!(g.values.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(g.values[0] > lo && *g.values.last().unwrap() < hi);
        let total: f64 = g.weights.iter().sum();
        prop_assert!((total / (hi / lo).ln() - 1.0).abs() <= 1e-12);
        prop_assert!(g.refined().len() >= 2 * g.len() - 1);
    }

    #[test]
    fn decay_rows_round_trip_through_csv(vals in proptest::collection::vec((1e-6f64..1.0, -5.0f64..5.0, proptest::num::f64::ANY), 1..20)) {
        let rows: Vec<DecayRow> = vals
            .iter()
            .enumerate()
            .map(|(i, &(lambda, k, r))| DecayRow {
                family: "checkerboard".into(),
                variant: format!("scalar/{}", if i % 2 == 0 { "inward" } else { "outward" }),
                lambda,
                k_or_d: k,
                norm_ratio: r,
                fitted_c: if i % 3 == 0 { f64::NAN } else { 1.0 / lambda },
            })
            .collect();
        let mut buf = Vec::new();
        write_decay_csv(&mut buf, &rows).unwrap();
        let back = read_decay_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            prop_assert_eq!((&a.family, &a.variant, a.lambda, a.k_or_d), (&b.family, &b.variant, b.lambda, b.k_or_d));
            prop_assert_eq!(a.norm_ratio.to_bits() == b.norm_ratio.to_bits() || (a.norm_ratio.is_nan() && b.norm_ratio.is_nan()), true);
            prop_assert_eq!(a.fitted_c.is_nan(), b.fitted_c.is_nan());
        }
    }
}

mod common;

use common::*;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use robustdp::dp::forward_verify;
use robustdp::scenario::load_config;
use robustdp::Finite;

fn binomial(preset: &str, up: f64, down: f64, p: f64, q: f64, kappa: f64) -> String {
    format!(
        "{}[model]\npreset = \"{preset}\"\nd = 1\nx = 1.0\nkappa = {kappa}\nutility = {{ kind = \"exponential\", gamma = 1.0 }}\n",
        lattice_doc(1, &[1.0], &[vec![up], vec![down]], &[vec![p, 1.0 - p], vec![q, 1.0 - q]])
    )
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, rng_seed: RngSeed::Fixed(5), ..ProptestConfig::default() })]

    #[test]
    fn two_sided_markets_solve_and_verify(up in 1.05f64..2.0, down in 0.3f64..0.95, p in 0.05f64..0.95, q in 0.05f64..0.95) {
        let cfg = load_config(&binomial("frictionless", up, down, p, q, 0.0)).unwrap();
        let parts = parts(&cfg);
        prop_assert!(parts.na.pass());
        let r = solve(&cfg);
        prop_assert!(r.value <= r.bound);
        prop_assert!(r.value >= r.certificate_value - 1e-9);
        let v = forward_verify(&cfg.tree, &parts.compiled, r.value, &r.policy, 1e-6, 1000).unwrap();
        prop_assert!(v.pass(), "{v:?}");
    }

    #[test]
    fn one_sided_markets_fail_with_up_ray(up in 1.05f64..2.0, p in 0.05f64..0.95) {
        let cfg = load_config(&binomial("frictionless", up, 1.0, p, p, 0.0)).unwrap();
        let na = parts(&cfg).na;
        prop_assert!(!na.pass());
        let h = na.nodes[0].linearity.certificate.clone().unwrap();
        prop_assert!(h[0] > 0.0);
    }

    #[test]
    fn costs_above_drift_restore_na(up in 1.01f64..1.2, kappa in 0.25f64..0.9) {
        // moves are flat or up by less than the cost of buying
        let cfg = load_config(&binomial("proportional_tc", up, 1.0, 0.5, 0.5, kappa)).unwrap();
        prop_assert!(parts(&cfg).na.pass());
    }

    #[test]
    fn transaction_cost_payoffs_are_concave(kappa in 0.0f64..0.9, a in -5.0f64..5.0, b in -5.0f64..5.0, lambda in 0.0f64..1.0) {
        let cfg = load_config(&binomial("proportional_tc", 1.4, 0.7, 0.5, 0.5, kappa)).unwrap();
        let c = compiled(&cfg);
        for payoff in &c.payoffs {
            let mix = lambda * a + (1.0 - lambda) * b;
            let lhs = payoff.eval(&[mix]).to_f64();
            let rhs = lambda * payoff.eval(&[a]).to_f64() + (1.0 - lambda) * payoff.eval(&[b]).to_f64();
            prop_assert!(lhs >= rhs - 1e-9 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn horizons_are_positively_homogeneous(h in -10.0f64..10.0, scale in 0.01f64..100.0, kappa in 0.0f64..0.9) {
        let cfg = load_config(&binomial("proportional_tc", 1.4, 0.7, 0.5, 0.5, kappa)).unwrap();
        let c = compiled(&cfg);
        for horizon in &c.horizons {
            match (horizon.eval(&[h]), horizon.eval(&[scale * h])) {
                (Finite(x), Finite(y)) => prop_assert!((y - scale * x).abs() <= 1e-9 * (1.0 + y.abs())),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }
}

mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use robustdp::dp::{leaf_decisions, policy_worst_case, SolveReport};
use robustdp::oracle::{brute_force_value, compare, compare_report, GridSpec, OracleError, OracleResult};
use robustdp::scenario::{enumerate_product_measures, load_config};

const QUADRATIC: &str = r#"
[[tree.nodes]]
id = "root"
children = ["a"]
prices = [1.0]
measures = [[1.0]]

[[tree.nodes]]
id = "a"
prices = [1.0]

[model]
preset = "custom_expr"
d = 1
certificate = { h = [0.0], eps = 0.5, c = 1.0 }

[model.payoffs.a]
op = "sum"
args = [{ op = "affine", a = [0.0], b = 1.0 }, { op = "neg_quadratic", q = [[1.0]] }]
"#;

#[test]
fn quadratic_peak() {
    let cfg = load_config(QUADRATIC).unwrap();
    let c = compiled(&cfg);
    let o = brute_force_value(&cfg.tree, &c, &GridSpec::new(-2.0, 2.0, 1e-3, 0), 1000, None).unwrap();
    assert!((o.value - 1.0).abs() < 1e-12);
    assert!(o.policy[0].1[0].abs() <= 1e-3);
    assert_eq!(o.passes.len(), 1);
    assert_eq!(o.passes[0].points, 4001);
}

#[test]
fn two_resolutions_agree() {
    let cfg = load("binomial2");
    let c = compiled(&cfg);
    let fine = brute_force_value(&cfg.tree, &c, &GridSpec::new(-10.0, 10.0, 0.1, 3), 1000, None).unwrap();
    let coarse = brute_force_value(&cfg.tree, &c, &GridSpec::new(-10.0, 10.0, 0.25, 2), 1000, None).unwrap();
    assert!((fine.value - coarse.value).abs() <= 1e-6, "{} vs {}", fine.value, coarse.value);
}

#[test]
fn liquidation_closed_form() {
    // Deterministic flat price: selling 1/3 per period costs 3·η/9.
    for (t, eta) in [(1usize, 0.2), (2, 0.1), (3, 0.05)] {
        let doc = format!(
            "{}[model]\npreset = \"liquidation\"\nd = 1\nX = 1.0\neta = {eta}\nutility = {{ kind = \"exponential\", gamma = 1.0 }}\n",
            chain_doc(t, &[1.0])
        );
        let cfg = load_config(&doc).unwrap();
        let c = compiled(&cfg);
        let o = brute_force_value(&cfg.tree, &c, &GridSpec::new(-1.0, 2.0, 0.01, 2), 1000, None).unwrap();
        let n = (t + 1) as f64;
        let revenue = 1.0 - eta * n / (n * n);
        assert!((o.value - -(-revenue).exp()).abs() < 1e-9, "T={t}");
        for (k, (_, h)) in o.policy.iter().enumerate() {
            assert!((h[0] - (1.0 - (k + 1) as f64 / n)).abs() <= 1e-4, "T={t}: {:?}", o.policy);
        }
    }
}

#[test]
fn identical_inputs_have_zero_gap() {
    let cfg = load("tc2");
    let c = compiled(&cfg);
    let r = solve(&cfg);
    let cmp = compare_report(&cfg.tree, &c, &r, &as_oracle(&r), 1e-5);
    assert_eq!(cmp.value_gap, 0.0);
    assert_eq!(cmp.policy_gap, 0.0);
    assert!(cmp.distances.iter().all(|(_, d)| *d == 0.0));
}

/// The solver's own answer dressed up as an oracle result.
fn as_oracle(r: &SolveReport) -> OracleResult {
    OracleResult {
        value: r.value,
        policy: r.policy.entries.iter().map(|e| (e.node, e.h.clone())).collect(),
        worst_choice: Vec::new(),
        passes: Vec::new(),
    }
}

#[test]
fn corrupted_value_fails() {
    let cfg = load("binomial2");
    let c = compiled(&cfg);
    let r = solve(&cfg);
    let o = oracle(&cfg);
    assert!(compare_report(&cfg.tree, &c, &r, &o, 1e-5).pass());
    let cmp = compare(&cfg.tree, &c, r.value + 0.01, &r.policy, &o, 1e-5);
    assert!(!cmp.pass());
    assert!((cmp.value_gap - 0.01).abs() < 1e-8);
}

#[test]
fn nested_min_equals_product_min() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for name in ["binomial2", "binomial2_capped", "tc2", "liquidation_flat"] {
        let cfg = load(name);
        let c = compiled(&cfg);
        for _ in 0..20 {
            let mut dec = vec![None; cfg.tree.nodes().len()];
            for &n in cfg.tree.internal_nodes() {
                dec[n] = Some((0..cfg.model.d).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>());
            }
            let nested = policy_worst_case(&cfg.tree, &c, &dec).to_f64();
            let leaves = leaf_decisions(&cfg.tree, &dec);
            let payoffs: Vec<f64> = leaves
                .iter()
                .enumerate()
                .map(|(k, z)| z.as_ref().map_or(0.0, |z| c.payoffs[k].eval(z).to_f64()))
                .collect();
            let product = enumerate_product_measures(&cfg.tree, 1000)
                .unwrap()
                .map(|m| m.leaf_probs.iter().zip(&payoffs).filter(|(p, _)| **p > 0.0).map(|(p, v)| p * v).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            assert!((nested - product).abs() <= 1e-12 * (1.0 + product.abs()), "{name}: {nested} vs {product}");
        }
    }
}

#[test]
fn refinement_never_decreases() {
    let o = oracle(&load("tc2"));
    assert!(o.passes.len() >= 2);
    for w in o.passes.windows(2) {
        assert!(w[1].value >= w[0].value);
        assert!(w[1].step <= w[0].step);
    }
    let last = o.passes.last().unwrap();
    assert!((last.step - 0.1 * 0.01f64.powi(3)).abs() < 1e-15);
}

#[test]
fn grid_cap_is_enforced() {
    let cfg = load("binomial2");
    let c = compiled(&cfg);
    let spec = GridSpec { cap: 1_000, ..GridSpec::new(-10.0, 10.0, 0.1, 0) };
    match brute_force_value(&cfg.tree, &c, &spec, 1000, None) {
        Err(OracleError::GridCap { points, cap }) => {
            assert_eq!(cap, 1_000);
            assert_eq!(points, 201u128.pow(3));
        }
        other => panic!("{other:?}"),
    }
}

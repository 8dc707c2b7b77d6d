mod common;

use common::*;
use robustdp::dp::{forward_verify, policy_worst_case, solve_with, worst_case_measures, DpError, DpOptions, Solver};
use robustdp::one_step::{Evaluator, OneStepProblem};
use robustdp::scenario::{load_config, OffPathPoint, PathPrefix};
use robustdp::Finite;

#[test]
fn one_period_equals_one_step_solver() {
    for name in ["frictionless1", "tc_branch3", "frictionless_2d", "liquidation_eta0"] {
        let cfg = load(name);
        let p = parts(&cfg);
        let report = solve(&cfg);
        let root = cfg.tree.root();
        let children: Vec<Evaluator<'_>> = cfg
            .tree
            .node(root)
            .children
            .iter()
            .map(|&c| {
                let payoff = &p.compiled.payoffs[cfg.tree.leaf_position(c).unwrap()];
                Box::new(move |h: &[f64]| payoff.eval(h)) as Evaluator<'_>
            })
            .collect();
        let problem = OneStepProblem::new(
            cfg.model.d,
            children,
            cfg.tree.ambiguity(root).unwrap().measures().to_vec(),
            p.cert.block(0, cfg.model.d).to_vec(),
        )
        .with_linearity(p.na.verdict(root).unwrap().linearity.clone());
        let direct = problem.robust_maximize(cfg.solver.tol).unwrap();
        assert!((direct.value.to_f64() - report.value).abs() <= 1e-9, "{name}");
    }
}

#[test]
fn single_measure_nodes_pick_index_zero() {
    let cfg = load("liquidation_flat");
    let p = parts(&cfg);
    let r = solve(&cfg);
    let w = worst_case_measures(&cfg.tree, &p.compiled, &r.policy).unwrap();
    assert_eq!(w.len(), 2);
    assert!(w.iter().all(|(_, k)| *k == 0));
}

#[test]
fn duplicated_measures_tie_to_lowest_index() {
    let doc = format!(
        "{}[model]\npreset = \"frictionless\"\nd = 1\nx = 1.0\nutility = {{ kind = \"exponential\", gamma = 1.0 }}\n",
        lattice_doc(1, &[1.0], &[vec![1.5], vec![0.5]], &[vec![0.5, 0.5], vec![0.5, 0.5]])
    );
    let cfg = load_config(&doc).unwrap();
    let p = parts(&cfg);
    let r = solve(&cfg);
    assert!(r.policy.entries[0].h[0].abs() < 1e-6);
    assert_eq!(worst_case_measures(&cfg.tree, &p.compiled, &r.policy).unwrap(), vec![(0, 0)]);
}

#[test]
fn worst_measures_match_oracle_choice() {
    for name in ["binomial2", "tc2", "binomial2_capped"] {
    let cfg = load(name);
    let p = parts(&cfg);
    let r = solve(&cfg);
    let o = oracle(&cfg);
    let w: Vec<usize> = worst_case_measures(&cfg.tree, &p.compiled, &r.policy).unwrap().into_iter().map(|(_, k)| k).collect();
    assert_eq!(w, o.worst_choice, "{name}");
    }
}

#[test]
fn liquidation_sells_evenly() {
    let r = solve(&load("liquidation_flat"));
    let h: Vec<f64> = r.policy.entries.iter().map(|e| e.h[0]).collect();
    assert!((h[0] - 2.0 / 3.0).abs() < 1e-5 && (h[1] - 1.0 / 3.0).abs() < 1e-5, "{h:?}");
    let revenue: f64 = 1.0 - 0.1 * 3.0 / 9.0;
    assert!((r.value - -(-revenue).exp()).abs() < 1e-7);
}

#[test]
fn verification_passes_and_reports_margins() {
    let cfg = load("binomial2");
    let p = parts(&cfg);
    let r = solve(&cfg);
    let v = forward_verify(&cfg.tree, &p.compiled, r.value, &r.policy, 1e-6, cfg.solver.measure_cap).unwrap();
    assert!(v.pass());
    assert_eq!(v.measures_checked, 8);
    assert!(!v.measures_sampled);
    assert!(v.attainment_margin.abs() < 1e-9);
}

#[test]
fn corrupted_policy_is_caught() {
    let cfg = load("binomial2");
    let p = parts(&cfg);
    let mut r = solve(&cfg);
    r.policy.entries[0].h[0] += 0.5;
    let v = forward_verify(&cfg.tree, &p.compiled, r.value, &r.policy, 1e-6, cfg.solver.measure_cap).unwrap();
    assert!(!v.attainment_pass());
    assert!(!v.pass());
    assert_eq!(v.attainment_witness.len(), 3);
}

#[test]
fn off_path_solve_matches_one_dimensional_scan() {
    let cfg = load("binomial2");
    let p = parts(&cfg);
    let node = cfg.tree.find("a").unwrap();
    let x = vec![0.7];
    let solver = Solver::new(&cfg.tree, &p.compiled, &p.na, &p.cert, DpOptions::from_settings(&cfg.solver)).unwrap();
    let entries = solver.solve_off_path(&[OffPathPoint { path: PathPrefix(vec![0]), x: x.clone() }]).unwrap();
    assert_eq!(entries[0].id, "a");

    // independent scan of min_P E^P[Ψ(x, h)] over h at node a
    let leaves: Vec<usize> = cfg.tree.node(node).children.iter().map(|&c| cfg.tree.leaf_position(c).unwrap()).collect();
    let measures = cfg.tree.ambiguity(node).unwrap().measures().to_vec();
    let f = |h: f64| -> f64 {
        let vals: Vec<f64> = leaves.iter().map(|&l| p.compiled.payoffs[l].eval(&[x[0], h]).to_f64()).collect();
        measures.iter().map(|m| m.iter().zip(&vals).map(|(a, b)| a * b).sum::<f64>()).fold(f64::INFINITY, f64::min)
    };
    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=200_000 {
        let h = -10.0 + i as f64 * 1e-4;
        if f(h) > best.0 {
            best = (f(h), h);
        }
    }
    assert!((entries[0].value - best.0).abs() < 1e-7);
    assert!((entries[0].h[0] - best.1).abs() < 1e-3);
}

#[test]
fn off_path_points_land_in_report() {
    let mut cfg = load("binomial2");
    cfg.solver.off_path = vec![OffPathPoint { path: PathPrefix(vec![1]), x: vec![-0.2] }];
    let r = solve(&cfg);
    assert_eq!(r.off_path.len(), 1);
    assert_eq!(r.off_path[0].id, "b");
    assert!((r.off_path[0].x[0] + 0.2).abs() < 1e-12);
}

#[test]
fn policy_value_equals_dp_value() {
    for name in ["binomial2", "tc2", "binomial2_capped"] {
        let cfg = load(name);
        let p = parts(&cfg);
        let r = solve(&cfg);
        let mut dec = vec![None; cfg.tree.nodes().len()];
        for e in &r.policy.entries {
            dec[e.node] = Some(e.h.clone());
        }
        let w = policy_worst_case(&cfg.tree, &p.compiled, &dec).to_f64();
        assert!((w - r.value).abs() < 1e-9, "{name}: {w} vs {}", r.value);
    }
}

#[test]
fn parallel_jobs_give_identical_values() {
    let cfg = load("binomial2");
    let p = parts(&cfg);
    let opts = DpOptions::from_settings(&cfg.solver);
    let one = solve_with(&cfg.tree, &p.compiled, p.na.clone(), p.cert.clone(), &opts).unwrap();
    let four = solve_with(&cfg.tree, &p.compiled, p.na.clone(), p.cert.clone(), &DpOptions { jobs: 4, ..opts }).unwrap();
    assert_eq!(one.value, four.value);
    assert_eq!(one.policy, four.policy);
}

#[test]
fn arbitrage_blocks_the_solve() {
    let cfg = load("onesided");
    let err = backward(&cfg).unwrap_err();
    match err {
        DpError::NaFailed { node, ray, .. } => {
            assert_eq!(node, "root");
            assert_eq!(ray, vec![1.0]);
        }
        other => panic!("{other}"),
    }
}

#[test]
fn memo_cap_is_enforced() {
    let cfg = load("binomial2");
    let p = parts(&cfg);
    let opts = DpOptions { memo_cap: 1, ..DpOptions::from_settings(&cfg.solver) };
    let err = solve_with(&cfg.tree, &p.compiled, p.na, p.cert, &opts).unwrap_err();
    assert!(matches!(err, DpError::MemoCap { cap: 1 }), "{err}");
}

#[test]
fn value_sits_between_certificate_and_bound() {
    for name in ORACLE_FIXTURES {
        let r = solve(&load(name));
        assert!(r.value <= r.bound, "{name}");
        assert!(r.value >= r.certificate_value - 1e-9, "{name}");
        assert!(Finite(r.value) > Finite(f64::NEG_INFINITY));
    }
}

#[test]
fn prefix_length_is_checked() {
    let cfg = load("binomial2");
    let p = parts(&cfg);
    let solver = Solver::new(&cfg.tree, &p.compiled, &p.na, &p.cert, DpOptions::default()).unwrap();
    let a = cfg.tree.find("a").unwrap();
    assert!(matches!(solver.value_at(a, &[]), Err(DpError::PrefixLength { expected: 1, got: 0, .. })));
}

fn backward(cfg: &robustdp::scenario::Config) -> Result<robustdp::dp::SolveReport, DpError> {
    robustdp::dp::backward_solve(&cfg.tree, &cfg.model, &DpOptions::from_settings(&cfg.solver))
}

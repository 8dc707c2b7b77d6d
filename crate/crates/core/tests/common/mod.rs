#![allow(dead_code)]

use std::path::PathBuf;

use robustdp::dp::{backward_solve, DpOptions, SolveReport};
use robustdp::na::{check_global_na, NaReport};
use robustdp::oracle::{brute_force_value, GridSpec, OracleResult};
use robustdp::payoff::{resolve_certificate, CompiledModel, InteriorityCertificate};
use robustdp::scenario::{load_config, Config};

/// Fixtures compared against the grid oracle.
pub const ORACLE_FIXTURES: &[&str] = &[
    "frictionless1",
    "binomial2",
    "binomial2_capped",
    "tc_branch3",
    "tc2",
    "frictionless_2d",
    "liquidation_flat",
    "liquidation_eta0",
    "twin_assets",
];

/// Every fixture with a built-in preset.
pub const ALL_FIXTURES: &[&str] = &[
    "frictionless1",
    "binomial2",
    "binomial2_capped",
    "tc_branch3",
    "tc2",
    "frictionless_2d",
    "liquidation_flat",
    "liquidation_eta0",
    "twin_assets",
    "onesided",
    "symmetric",
    "tc1",
];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.cfg"))
}

pub fn load(name: &str) -> Config {
    let text = std::fs::read_to_string(fixture_path(name)).unwrap();
    load_config(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn compiled(cfg: &Config) -> CompiledModel {
    CompiledModel::new(&cfg.model, &cfg.tree).unwrap()
}

pub fn solve(cfg: &Config) -> SolveReport {
    backward_solve(&cfg.tree, &cfg.model, &DpOptions::from_settings(&cfg.solver)).unwrap()
}

pub fn oracle(cfg: &Config) -> OracleResult {
    let g = cfg.solver.grid.as_ref().expect("fixture has a grid");
    let compiled = compiled(cfg);
    brute_force_value(&cfg.tree, &compiled, &GridSpec::from_settings(g, cfg.solver.grid_cap), cfg.solver.measure_cap, None)
        .unwrap()
}

pub struct Parts {
    pub compiled: CompiledModel,
    pub na: NaReport,
    pub cert: InteriorityCertificate,
}

pub fn parts(cfg: &Config) -> Parts {
    let compiled = compiled(cfg);
    let na = check_global_na(&cfg.tree, &compiled, cfg.solver.sign_pattern_cap).unwrap();
    let cert = resolve_certificate(&cfg.model, &cfg.tree, &compiled).unwrap();
    Parts { compiled, na, cert }
}

/// Chain (single-path) tree of depth `t` with constant prices `s0`.
pub fn chain_doc(t: usize, s0: &[f64]) -> String {
    let prices = format!("{s0:?}");
    let mut out = String::new();
    for i in 0..=t {
        out += &format!("[[tree.nodes]]\nid = \"n{i}\"\nprices = {prices}\n");
        if i < t {
            out += &format!("children = [\"n{}\"]\nmeasures = [[1.0]]\n", i + 1);
        }
        out.push('\n');
    }
    out
}

/// Unit vectors drawn from a standard normal.
pub fn unit_rays(n: usize, count: usize, rng: &mut impl rand::Rng) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..count)
        .map(|_| {
            let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Recombining-free tree of depth `t`: every node has one child per entry of
/// `moves`, whose prices are the parent's times the move (per asset).
pub fn lattice_doc(t: usize, s0: &[f64], moves: &[Vec<f64>], measures: &[Vec<f64>]) -> String {
    fn go(out: &mut String, id: &str, level: usize, t: usize, s: &[f64], moves: &[Vec<f64>], measures: &[Vec<f64>]) {
        out.push_str(&format!("[[tree.nodes]]\nid = \"{id}\"\nprices = {s:?}\n"));
        if level == t {
            out.push('\n');
            return;
        }
        let ids: Vec<String> = (0..moves.len()).map(|k| format!("{id}{k}")).collect();
        out.push_str(&format!("children = {ids:?}\nmeasures = {measures:?}\n\n"));
        for (k, m) in moves.iter().enumerate() {
            let next: Vec<f64> = s.iter().zip(m).map(|(a, b)| a * b).collect();
            go(out, &ids[k], level + 1, t, &next, moves, measures);
        }
    }
    let mut out = String::new();
    go(&mut out, "n", 0, t, s0, moves, measures);
    out
}

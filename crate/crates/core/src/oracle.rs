//! Exhaustive grid search over adapted policies, used to cross-check the
//! backward recursion on small trees.
//!
//! Every charged non-terminal node gets one decision from a common grid; the
//! objective at a grid point is the exact minimum over all product measures
//! of the path expectation of the leaf payoffs. Refinement passes shrink the
//! step around the incumbent.

use rayon::prelude::*;
use thiserror::Error;

use crate::dp::{policy_worst_case, Policy, SolveReport};
use crate::ext::{ExtReal, Finite, NegInf};
use crate::na::charged_internal_nodes;
use crate::payoff::{CompiledModel, InteriorityCertificate};
use crate::scenario::{enumerate_product_measures, GridSettings, NodeId, ScenarioError, ScenarioTree};

/// Step reduction per refinement pass when the point budget allows it.
pub const SHRINK: f64 = 0.01;
const MAX_RECENTER: usize = 50;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("grid has {points} assignments, cap is {cap}")]
    GridCap { points: u128, cap: u128 },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("bad grid: {0}")]
    Grid(String),
    #[error("every grid point has value −∞")]
    NoFinitePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub refine: usize,
    /// Cap on the assignments of the first pass.
    pub cap: u128,
    /// Points per refinement pass; the shrink factor is relaxed to fit.
    pub pass_budget: u128,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, step: f64, refine: usize) -> Self {
        Self { lo, hi, step, refine, cap: 100_000_000, pass_budget: 20_000_000 }
    }

    pub fn from_settings(g: &GridSettings, cap: u128) -> Self {
        Self { cap, ..Self::new(g.lo, g.hi, g.step, g.refine) }
    }

    fn axis_len(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassRecord {
    pub step: f64,
    pub points: u128,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: f64,
    /// Decision per charged non-terminal node, in preorder.
    pub policy: Vec<(NodeId, Vec<f64>)>,
    /// Measure choice attaining the minimum at the incumbent.
    pub worst_choice: Vec<usize>,
    pub passes: Vec<PassRecord>,
}

impl OracleResult {
    pub fn decisions(&self, tree: &ScenarioTree) -> Vec<Option<Vec<f64>>> {
        let mut dec = vec![None; tree.nodes().len()];
        for (n, h) in &self.policy {
            dec[*n] = Some(h.clone());
        }
        dec
    }
}

/// Grid-point evaluation with per-leaf payoff tables.
struct Problem<'a> {
    compiled: &'a CompiledModel,
    /// Coordinates (indices into the joint point) each leaf depends on.
    leaf_coords: Vec<Vec<usize>>,
    /// Supported leaves only; others carry zero mass under every measure.
    leaves: Vec<usize>,
    /// Nonzero `(leaf slot, probability)` pairs per product measure.
    measures: Vec<Vec<(usize, f64)>>,
    choices: Vec<Vec<usize>>,
}

impl<'a> Problem<'a> {
    fn new(tree: &ScenarioTree, compiled: &'a CompiledModel, nodes: &[NodeId], cap: u128) -> Result<Self, OracleError> {
        let d = compiled.d;
        let slot = |n: NodeId| nodes.iter().position(|&m| m == n);
        let mut leaves = Vec::new();
        let mut leaf_coords = Vec::new();
        for (k, &l) in tree.leaves().iter().enumerate() {
            let path = tree.path_nodes(l);
            let Some(coords) = path[..path.len() - 1]
                .iter()
                .map(|&n| slot(n).map(|s| (s * d..(s + 1) * d).collect::<Vec<_>>()))
                .collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            leaves.push(k);
            leaf_coords.push(coords.concat());
        }
        let mut measures = Vec::new();
        let mut choices = Vec::new();
        for m in enumerate_product_measures(tree, cap)? {
            measures.push(
                leaves
                    .iter()
                    .enumerate()
                    .filter(|(_, &k)| m.leaf_probs[k] > 0.0)
                    .map(|(s, &k)| (s, m.leaf_probs[k]))
                    .collect(),
            );
            choices.push(m.choice);
        }
        Ok(Self { compiled, leaf_coords, leaves, measures, choices })
    }

    /// Payoff tables over the axes, one per supported leaf, indexed in mixed
    /// radix with the last coordinate fastest.
    fn tables(&self, axes: &[Vec<f64>]) -> Vec<Vec<ExtReal>> {
        self.leaf_coords
            .par_iter()
            .zip(&self.leaves)
            .map(|(coords, &leaf)| {
                let sizes: Vec<usize> = coords.iter().map(|&c| axes[c].len()).collect();
                let total: usize = sizes.iter().product();
                let mut z = vec![0.0; coords.len()];
                (0..total)
                    .map(|mut idx| {
                        for i in (0..coords.len()).rev() {
                            z[i] = axes[coords[i]][idx % sizes[i]];
                            idx /= sizes[i];
                        }
                        self.compiled.payoffs[leaf].eval(&z)
                    })
                    .collect()
            })
            .collect()
    }

    fn table_index(&self, leaf_slot: usize, point: &[usize], axes: &[Vec<f64>]) -> usize {
        self.leaf_coords[leaf_slot].iter().fold(0, |acc, &c| acc * axes[c].len() + point[c])
    }

    /// `(min over measures, argmin measure)` at a joint grid point.
    fn value(&self, tables: &[Vec<ExtReal>], point: &[usize], axes: &[Vec<f64>], vals: &mut [ExtReal]) -> (ExtReal, usize) {
        for (s, v) in vals.iter_mut().enumerate() {
            *v = tables[s][self.table_index(s, point, axes)];
        }
        let mut best = (Finite(f64::INFINITY), 0);
        for (k, m) in self.measures.iter().enumerate() {
            let mut e = 0.0;
            let mut neg_inf = false;
            for &(s, p) in m {
                match vals[s] {
                    Finite(v) => e += p * v,
                    NegInf => {
                        neg_inf = true;
                        break;
                    }
                }
            }
            let e = if neg_inf { NegInf } else { Finite(e) };
            if e < best.0 {
                best = (e, k);
            }
        }
        best
    }

    /// Exact maximum over the product grid; ties keep the lowest index.
    fn search(&self, axes: &[Vec<f64>]) -> (ExtReal, Vec<usize>, usize) {
        let tables = self.tables(axes);
        let k = axes.len();
        let outer = axes[0].len();
        let inner: usize = axes[1..].iter().map(Vec::len).product();
        let best = (0..outer)
            .into_par_iter()
            .map(|i0| {
                let mut point = vec![0usize; k];
                let mut vals = vec![Finite(0.0); self.leaves.len()];
                point[0] = i0;
                let mut best: (ExtReal, Vec<usize>, usize) = (NegInf, point.clone(), 0);
                let mut first = true;
                for mut idx in 0..inner {
                    for c in (1..k).rev() {
                        point[c] = idx % axes[c].len();
                        idx /= axes[c].len();
                    }
                    let (v, m) = self.value(&tables, &point, axes, &mut vals);
                    if first || v > best.0 {
                        best = (v, point.clone(), m);
                        first = false;
                    }
                }
                best
            })
            .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a })
            .expect("nonempty grid");
        best
    }
}

fn axis(lo: f64, n: usize, step: f64) -> Vec<f64> {
    (0..n).map(|i| lo + i as f64 * step).collect()
}

/// Maximizes the worst-case expected payoff over adapted grid policies.
pub fn brute_force_value(
    tree: &ScenarioTree,
    compiled: &CompiledModel,
    grid: &GridSpec,
    measure_cap: u128,
    cert: Option<&InteriorityCertificate>,
) -> Result<OracleResult, OracleError> {
    if !(grid.step > 0.0) || !(grid.hi >= grid.lo) {
        return Err(OracleError::Grid("need step > 0 and lo <= hi".into()));
    }
    if let Some(c) = cert {
        if let Some(v) = c.center.iter().find(|v| **v < grid.lo || **v > grid.hi) {
            return Err(OracleError::Grid(format!("box [{}, {}] misses certificate coordinate {v}", grid.lo, grid.hi)));
        }
    }
    let nodes = charged_internal_nodes(tree);
    let d = compiled.d;
    let k = nodes.len() * d;
    let n0 = grid.axis_len();
    let points = (n0 as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if points > grid.cap {
        return Err(OracleError::GridCap { points, cap: grid.cap });
    }
    let problem = Problem::new(tree, compiled, &nodes, measure_cap)?;
    let mut axes: Vec<Vec<f64>> = vec![axis(grid.lo, n0, grid.step); k];
    let (mut value, mut point, mut worst) = problem.search(&axes);
    if value.is_neg_inf() {
        return Err(OracleError::NoFinitePoint);
    }
    let mut x: Vec<f64> = point.iter().enumerate().map(|(c, &i)| axes[c][i]).collect();
    let mut passes = vec![PassRecord { step: grid.step, points, value: value.to_f64() }];

    let target = grid.step * SHRINK.powi(grid.refine as i32);
    let mut step = grid.step;
    let per_axis = ((grid.pass_budget as f64).powf(1.0 / k.max(1) as f64).floor() as usize).max(3);
    while step > target * (1.0 + 1e-9) {
        // Window [x − step, x + step] with as many points as the budget allows.
        let half = (((1.0 / SHRINK) as usize).min((per_axis - 1) / 2)).max(1);
        let new_step = (step / half as f64).max(target);
        let half = (step / new_step).round() as usize;
        let mut recenters = 0;
        loop {
            axes = x
                .iter()
                .map(|&c| axis(c - half as f64 * new_step, 2 * half + 1, new_step))
                .collect();
            let (v, p, m) = problem.search(&axes);
            let pts = ((2 * half + 1) as u128).pow(k as u32);
            let improved = v > value;
            if improved {
                value = v;
                point = p;
                worst = m;
                x = point.iter().enumerate().map(|(c, &i)| axes[c][i]).collect();
            }
            passes.push(PassRecord { step: new_step, points: pts, value: value.to_f64() });
            let on_edge = improved && point.iter().any(|&i| i == 0 || i == 2 * half);
            recenters += 1;
            if !on_edge || recenters >= MAX_RECENTER {
                break;
            }
        }
        step = new_step;
    }

    let policy = nodes.iter().enumerate().map(|(s, &n)| (n, x[s * d..(s + 1) * d].to_vec())).collect();
    Ok(OracleResult { value: value.to_f64(), policy, worst_choice: problem.choices[worst].clone(), passes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub value_gap: f64,
    /// `|worst case of the solver's policy − oracle value|`.
    pub policy_gap: f64,
    /// Euclidean distance between decisions, per node id.
    pub distances: Vec<(String, f64)>,
    pub tol: f64,
}

impl Comparison {
    pub fn pass(&self) -> bool {
        self.value_gap <= self.tol && self.policy_gap <= self.tol
    }
}

/// Value-based comparison; decisions may differ where maximizers are not
/// unique, so distances are informational.
pub fn compare(
    tree: &ScenarioTree,
    compiled: &CompiledModel,
    value: f64,
    policy: &Policy,
    oracle: &OracleResult,
    tol: f64,
) -> Comparison {
    let mut dec = vec![None; tree.nodes().len()];
    for e in &policy.entries {
        dec[e.node] = Some(e.h.clone());
    }
    let complete = charged_internal_nodes(tree).iter().all(|&n| dec[n].is_some());
    let policy_value = if complete { policy_worst_case(tree, compiled, &dec).to_f64() } else { f64::NEG_INFINITY };
    let distances = oracle
        .policy
        .iter()
        .map(|(n, h)| {
            let dist = dec[*n]
                .as_ref()
                .map_or(f64::INFINITY, |g: &Vec<f64>| g.iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
            (tree.node(*n).id.clone(), dist)
        })
        .collect();
    Comparison {
        value_gap: (value - oracle.value).abs(),
        policy_gap: (policy_value - oracle.value).abs(),
        distances,
        tol,
    }
}

/// [`compare`] against a finished solve.
pub fn compare_report(
    tree: &ScenarioTree,
    compiled: &CompiledModel,
    report: &SolveReport,
    oracle: &OracleResult,
    tol: f64,
) -> Comparison {
    compare(tree, compiled, report.value, &report.policy, oracle, tol)
}

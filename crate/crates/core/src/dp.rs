//! Backward recursion over the scenario tree.
//!
//! `Ψ_T` is the leaf payoff; at a node of depth `t`,
//! `Ψ_t(x^t) = sup_h min_k Σ_i p_k(i) Ψ_{t+1}(child_i, (x^t, h))`.
//! Value functions are evaluated lazily at the prefixes requested by the
//! parent's optimizer and memoized on a quantized key. Decisions handed to
//! non-terminal children are snapped to the quantization grid, so every
//! memoized value is exactly the value at its key.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dashmap::DashMap;
use rand::Rng;
use thiserror::Error;

use crate::ext::{expectation, ExtReal, Finite, NegInf};
use crate::na::{check_global_na, Linearity, NaError, NaReport};
use crate::one_step::{Evaluator, OneStepError, OneStepProblem};
use crate::payoff::{resolve_certificate, CompiledModel, InteriorityCertificate, PayoffError};
use crate::scenario::{
    enumerate_product_measures, product_measure_count, sample_product_measures, ModelSpec, NodeId, OffPathPoint,
    PathPrefix, ScenarioError, ScenarioTree, SolverSettings,
};
use crate::seed;

/// Values below this are treated as a blown-up recursion.
pub const VALUE_FLOOR: f64 = -1e9;
/// Product measures sampled by the forward check when enumeration is capped.
pub const VERIFY_MEASURE_SAMPLES: usize = 256;
pub const VERIFY_POLICY_SAMPLES: usize = 100;
pub const ENVELOPE_SAMPLES: usize = 50;

#[derive(Debug, Clone, Error)]
pub enum DpError {
    #[error("no-arbitrage check failed at node {node}: ray {ray:?}")]
    NaFailed { node: String, ray: Vec<f64>, report: Box<NaReport> },
    #[error(transparent)]
    Na(#[from] NaError),
    #[error(transparent)]
    Payoff(#[from] PayoffError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("one-step solve at node {node}: {source}")]
    OneStep { node: String, source: OneStepError },
    #[error("memo table reached its cap of {cap} entries")]
    MemoCap { cap: usize },
    #[error("value {value} at node {node} is outside [{VALUE_FLOOR:e}, C]")]
    OutOfRange { node: String, value: String },
    #[error("node {0} is not reachable through supported children")]
    Uncharged(String),
    #[error("policy has no decision at node {0}")]
    MissingPolicy(String),
    #[error("prefix at node {node} has {got} decisions, expected {expected}")]
    PrefixLength { node: String, expected: usize, got: usize },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpOptions {
    pub tol: f64,
    pub quantization: f64,
    pub memo_cap: usize,
    pub measure_cap: u128,
    pub sign_pattern_cap: usize,
    pub memoize: bool,
    /// Worker threads; 1 runs everything on the calling thread.
    pub jobs: usize,
    /// Extra prefixes solved in addition to the optimal trajectory.
    pub off_path: Vec<OffPathPoint>,
}

impl DpOptions {
    pub fn from_settings(s: &SolverSettings) -> Self {
        Self {
            tol: s.tol,
            quantization: s.quantization,
            memo_cap: s.memo_cap,
            measure_cap: s.measure_cap,
            sign_pattern_cap: s.sign_pattern_cap,
            memoize: true,
            jobs: 1,
            off_path: s.off_path.clone(),
        }
    }
}

impl Default for DpOptions {
    fn default() -> Self {
        Self::from_settings(&SolverSettings::default())
    }
}

/// Optimal decision at one node for one prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSolution {
    pub value: ExtReal,
    pub argmax: Vec<f64>,
    pub radius: f64,
    /// Measures attaining the minimum at the argmax.
    pub active: Vec<usize>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub node: NodeId,
    pub id: String,
    pub prefix: PathPrefix,
    /// Earlier decisions `x^t` the node was solved at.
    pub x: Vec<f64>,
    pub h: Vec<f64>,
    pub value: f64,
    /// Lowest-index worst-case measure at `h`.
    pub worst_measure: usize,
    pub radius: f64,
}

/// Decisions on the optimal trajectory, one per charged non-terminal node,
/// in preorder.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Policy {
    pub entries: Vec<PolicyEntry>,
}

impl Policy {
    pub fn get(&self, node: NodeId) -> Option<&PolicyEntry> {
        self.entries.iter().find(|e| e.node == node)
    }

    pub fn decision(&self, node: NodeId) -> Option<&[f64]> {
        self.get(node).map(|e| e.h.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SolveStats {
    pub one_step_solves: usize,
    pub memo_hits: usize,
    pub memo_entries: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub value: f64,
    pub bound: f64,
    pub policy: Policy,
    pub off_path: Vec<PolicyEntry>,
    pub na: NaReport,
    pub certificate: InteriorityCertificate,
    /// `min_P E^P[Ψ(h°)]` at the certificate center.
    pub certificate_value: f64,
    pub stats: SolveStats,
    pub tol: f64,
}

/// Lazily evaluated value functions of one model.
pub struct Solver<'a> {
    tree: &'a ScenarioTree,
    compiled: &'a CompiledModel,
    cert: &'a InteriorityCertificate,
    lin: Vec<Option<Linearity>>,
    opts: DpOptions,
    memo: DashMap<(NodeId, Vec<i64>), NodeSolution>,
    error: Mutex<Option<DpError>>,
    solves: AtomicUsize,
    hits: AtomicUsize,
    evals: AtomicUsize,
}

impl<'a> Solver<'a> {
    /// Requires a passing no-arbitrage report.
    pub fn new(
        tree: &'a ScenarioTree,
        compiled: &'a CompiledModel,
        na: &NaReport,
        cert: &'a InteriorityCertificate,
        opts: DpOptions,
    ) -> Result<Self, DpError> {
        if let Some(f) = na.failures().next() {
            return Err(DpError::NaFailed {
                node: f.id.clone(),
                ray: f.linearity.certificate.clone().unwrap_or_default(),
                report: Box::new(na.clone()),
            });
        }
        let mut lin = vec![None; tree.nodes().len()];
        for v in &na.nodes {
            lin[v.node] = Some(v.linearity.clone());
        }
        Ok(Self {
            tree,
            compiled,
            cert,
            lin,
            opts,
            memo: DashMap::new(),
            error: Mutex::new(None),
            solves: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
            evals: AtomicUsize::new(0),
        })
    }

    pub fn options(&self) -> &DpOptions {
        &self.opts
    }

    pub fn stats(&self) -> SolveStats {
        SolveStats {
            one_step_solves: self.solves.load(Ordering::Relaxed),
            memo_hits: self.hits.load(Ordering::Relaxed),
            memo_entries: self.memo.len(),
            evaluations: self.evals.load(Ordering::Relaxed),
        }
    }

    fn snap(&self, v: f64) -> f64 {
        (v / self.opts.quantization).round() * self.opts.quantization
    }

    fn record(&self, e: DpError) {
        let mut slot = self.error.lock().expect("error slot");
        if slot.is_none() {
            *slot = Some(e);
        }
    }

    fn take_error(&self) -> Result<(), DpError> {
        match self.error.lock().expect("error slot").take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// `Ψ` at a child for the full prefix `z`; errors go to the error slot.
    fn child_value(&self, child: NodeId, z: &[f64]) -> ExtReal {
        if let Some(pos) = self.tree.leaf_position(child) {
            return self.compiled.payoffs[pos].eval(z);
        }
        match self.value_at(child, z) {
            Ok(s) => s.value,
            Err(e) => {
                self.record(e);
                NegInf
            }
        }
    }

    /// Solves the one-step problem at `node` for earlier decisions `x`
    /// (snapped to the quantization grid).
    pub fn value_at(&self, node: NodeId, x: &[f64]) -> Result<NodeSolution, DpError> {
        let tree = self.tree;
        let d = self.compiled.d;
        let t = tree.node(node).depth;
        if x.len() != t * d {
            return Err(DpError::PrefixLength { node: tree.node(node).id.clone(), expected: t * d, got: x.len() });
        }
        let Some(lin) = self.lin[node].clone() else {
            return Err(DpError::Uncharged(tree.node(node).id.clone()));
        };
        let q = self.opts.quantization;
        let key: Vec<i64> = x.iter().map(|v| (v / q).round() as i64).collect();
        if self.opts.memoize {
            if let Some(s) = self.memo.get(&(node, key.clone())) {
                self.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(s.clone());
            }
        }
        let xs: Vec<f64> = key.iter().map(|k| *k as f64 * q).collect();
        let snap_children = t + 1 < tree.depth();
        let amb = tree.ambiguity(node).expect("non-terminal");
        let children: Vec<Evaluator<'_>> = tree
            .node(node)
            .children
            .iter()
            .map(|&c| {
                let xs = xs.clone();
                Box::new(move |h: &[f64]| {
                    let mut z = xs.clone();
                    if snap_children {
                        z.extend(h.iter().map(|v| self.snap(*v)));
                    } else {
                        z.extend_from_slice(h);
                    }
                    self.child_value(c, &z)
                }) as Evaluator<'_>
            })
            .collect();
        let problem = OneStepProblem::new(d, children, amb.measures().to_vec(), self.cert.block(t, d).to_vec())
            .with_linearity(lin)
            .parallel(self.opts.jobs > 1);
        let solved = problem.robust_maximize(self.opts.tol);
        self.solves.fetch_add(1, Ordering::Relaxed);
        self.take_error()?;
        let sol = solved.map_err(|source| DpError::OneStep { node: tree.node(node).id.clone(), source })?;
        self.evals.fetch_add(sol.iterations, Ordering::Relaxed);
        let argmax = if snap_children { sol.argmax.iter().map(|v| self.snap(*v)).collect() } else { sol.argmax };
        let out = NodeSolution { value: sol.value, argmax, radius: sol.radius, active: sol.active, iterations: sol.iterations };
        if let Finite(v) = out.value {
            if v > self.compiled.bound + self.opts.tol.max(1e-12) * (1.0 + self.compiled.bound.abs()) || v < VALUE_FLOOR {
                return Err(DpError::OutOfRange { node: tree.node(node).id.clone(), value: v.to_string() });
            }
        }
        if self.opts.memoize {
            if self.memo.len() >= self.opts.memo_cap {
                return Err(DpError::MemoCap { cap: self.opts.memo_cap });
            }
            self.memo.entry((node, key)).or_insert_with(|| out.clone());
        }
        Ok(out)
    }

    fn entry(&self, node: NodeId, x: &[f64]) -> Result<PolicyEntry, DpError> {
        let s = self.value_at(node, x)?;
        let value = match s.value {
            Finite(v) => v,
            NegInf => {
                return Err(DpError::OutOfRange { node: self.tree.node(node).id.clone(), value: NegInf.to_string() })
            }
        };
        let q = self.opts.quantization;
        Ok(PolicyEntry {
            node,
            id: self.tree.node(node).id.clone(),
            prefix: self.tree.prefix_of(node),
            x: x.iter().map(|v| (v / q).round() * q).collect(),
            h: s.argmax,
            value,
            worst_measure: s.active.first().copied().unwrap_or(0),
            radius: s.radius,
        })
    }

    /// Root value and the policy along the optimal trajectory.
    pub fn solve_root(&self) -> Result<(f64, Policy), DpError> {
        let mut entries = Vec::new();
        let mut stack = vec![(self.tree.root(), Vec::new())];
        while let Some((node, x)) = stack.pop() {
            let e = self.entry(node, &x)?;
            let mut next = e.x.clone();
            next.extend_from_slice(&e.h);
            for k in self.tree.union_support(node).into_iter().rev() {
                let c = self.tree.node(node).children[k];
                if !self.tree.node(c).is_terminal() {
                    stack.push((c, next.clone()));
                }
            }
            entries.push(e);
        }
        entries.sort_by_key(|e| e.node);
        let value = entries[0].value;
        Ok((value, Policy { entries }))
    }

    /// Solves at each requested off-trajectory prefix.
    pub fn solve_off_path(&self, points: &[OffPathPoint]) -> Result<Vec<PolicyEntry>, DpError> {
        points
            .iter()
            .map(|p| {
                let node = self.tree.node_at(&p.path)?;
                self.entry(node, &p.x)
            })
            .collect()
    }

    /// `Φ_t(x, h)` at a node.
    pub fn phi(&self, node: NodeId, x: &[f64], h: &[f64]) -> Result<ExtReal, DpError> {
        let tree = self.tree;
        let snap_children = tree.node(node).depth + 1 < tree.depth();
        let mut z = x.to_vec();
        if snap_children {
            z.extend(h.iter().map(|v| self.snap(*v)));
        } else {
            z.extend_from_slice(h);
        }
        let amb = tree.ambiguity(node).expect("non-terminal");
        let charged = amb.union_support();
        let vals: Vec<ExtReal> = tree
            .node(node)
            .children
            .iter()
            .enumerate()
            .map(|(i, &c)| if charged.contains(&i) { self.child_value(c, &z) } else { Finite(0.0) })
            .collect();
        self.take_error()?;
        Ok(amb.measures().iter().map(|p| expectation(p, &vals)).fold(Finite(f64::INFINITY), ExtReal::min))
    }

    /// Memoized points, sorted by key.
    pub fn memo_entries(&self) -> Vec<((NodeId, Vec<i64>), NodeSolution)> {
        let mut v: Vec<_> = self.memo.iter().map(|r| (r.key().clone(), r.value().clone())).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    /// Checks `Ψ_t(x) ≥ Φ_t(x, h) − tol` at every memoized point for
    /// `samples` random `h` in the bracketing box around the argmax.
    pub fn envelope_check(&self, samples: usize) -> Result<EnvelopeRecord, DpError> {
        let mut rng = seed::rng(seed::ENVELOPE);
        let q = self.opts.quantization;
        let d = self.compiled.d;
        let mut rec = EnvelopeRecord { points: 0, probes: 0, violations: 0, worst_margin: f64::INFINITY };
        for ((node, key), sol) in self.memo_entries() {
            let Finite(value) = sol.value else { continue };
            let x: Vec<f64> = key.iter().map(|k| *k as f64 * q).collect();
            let r = sol.radius.max(1.0);
            rec.points += 1;
            for _ in 0..samples {
                let h: Vec<f64> = (0..d).map(|j| sol.argmax[j] + rng.gen_range(-r..=r)).collect();
                rec.probes += 1;
                if let Finite(p) = self.phi(node, &x, &h)? {
                    let margin = value - p;
                    rec.worst_margin = rec.worst_margin.min(margin);
                    if margin < -self.opts.tol {
                        rec.violations += 1;
                    }
                }
            }
        }
        Ok(rec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeRecord {
    pub points: usize,
    pub probes: usize,
    pub violations: usize,
    /// Smallest `Ψ_t(x) − Φ_t(x, h)` seen.
    pub worst_margin: f64,
}

fn run_in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T, DpError> {
    if jobs <= 1 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| DpError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Worst-case value `min_P E^P[Ψ(z(leaf))]` of a fixed adapted policy, by
/// nested per-node minimization. `decisions[node]` is the decision at each
/// charged non-terminal node.
pub fn policy_worst_case(tree: &ScenarioTree, compiled: &CompiledModel, decisions: &[Option<Vec<f64>>]) -> ExtReal {
    nested_value(tree, compiled, decisions, tree.root(), &mut Vec::new())
}

fn nested_value(tree: &ScenarioTree, compiled: &CompiledModel, dec: &[Option<Vec<f64>>], node: NodeId, z: &mut Vec<f64>) -> ExtReal {
    if let Some(pos) = tree.leaf_position(node) {
        return compiled.payoffs[pos].eval(z);
    }
    let amb = tree.ambiguity(node).expect("non-terminal");
    let len = z.len();
    z.extend_from_slice(dec[node].as_ref().expect("decision at charged node"));
    let charged = amb.union_support();
    let vals: Vec<ExtReal> = tree
        .node(node)
        .children
        .iter()
        .enumerate()
        .map(|(i, &c)| if charged.contains(&i) { nested_value(tree, compiled, dec, c, z) } else { Finite(0.0) })
        .collect();
    z.truncate(len);
    amb.measures().iter().map(|p| expectation(p, &vals)).fold(Finite(f64::INFINITY), ExtReal::min)
}

/// Full decision vector `z` on the path to each leaf (`None` when a node on
/// the path has no decision).
pub fn leaf_decisions(tree: &ScenarioTree, decisions: &[Option<Vec<f64>>]) -> Vec<Option<Vec<f64>>> {
    tree.leaves()
        .iter()
        .map(|&l| {
            let path = tree.path_nodes(l);
            let mut z = Vec::new();
            for &n in &path[..path.len() - 1] {
                z.extend_from_slice(decisions[n].as_ref()?);
            }
            Some(z)
        })
        .collect()
}

fn policy_table(tree: &ScenarioTree, policy: &Policy) -> Vec<Option<Vec<f64>>> {
    let mut dec = vec![None; tree.nodes().len()];
    for e in &policy.entries {
        dec[e.node] = Some(e.h.clone());
    }
    dec
}

/// Lowest-index worst-case measure per policy node.
pub fn worst_case_measures(
    tree: &ScenarioTree,
    compiled: &CompiledModel,
    policy: &Policy,
) -> Result<Vec<(NodeId, usize)>, DpError> {
    let dec = policy_table(tree, policy);
    let mut out = Vec::new();
    for &node in &crate::na::charged_internal_nodes(tree) {
        if dec[node].is_none() {
            return Err(DpError::MissingPolicy(tree.node(node).id.clone()));
        }
        let amb = tree.ambiguity(node).expect("non-terminal");
        let charged = amb.union_support();
        let vals: Vec<ExtReal> = tree
            .node(node)
            .children
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if !charged.contains(&i) {
                    return Finite(0.0);
                }
                subtree_value(tree, compiled, &dec, c)
            })
            .collect();
        let exps: Vec<ExtReal> = amb.measures().iter().map(|p| expectation(p, &vals)).collect();
        out.push((node, crate::one_step::near_minimal(&exps).first().copied().unwrap_or(0)));
    }
    Ok(out)
}

/// Nested worst-case value of the subtree at `node` under a fixed policy.
fn subtree_value(tree: &ScenarioTree, compiled: &CompiledModel, dec: &[Option<Vec<f64>>], node: NodeId) -> ExtReal {
    let path = tree.path_nodes(node);
    let mut z = Vec::new();
    for &n in &path[..path.len() - 1] {
        z.extend_from_slice(dec[n].as_ref().expect("decision on path"));
    }
    nested_value(tree, compiled, dec, node, &mut z)
}

/// Leaf payoffs of a policy, `None` at leaves no measure reaches.
fn leaf_payoffs(tree: &ScenarioTree, compiled: &CompiledModel, dec: &[Option<Vec<f64>>]) -> Vec<Option<ExtReal>> {
    leaf_decisions(tree, dec)
        .into_iter()
        .enumerate()
        .map(|(k, z)| z.map(|z| compiled.payoffs[k].eval(&z)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verification {
    /// Product measures checked and whether they were sampled.
    pub measures_checked: usize,
    pub measures_sampled: bool,
    /// `min_P E^P[Ψ(Ĥ)] − Ψ_0` over the checked measures.
    pub attainment_margin: f64,
    /// Measure choice attaining that margin.
    pub attainment_witness: Vec<usize>,
    pub alternatives_checked: usize,
    /// `max_alt worst_case(alt) − Ψ_0`.
    pub optimality_margin: f64,
    /// Decisions of the best alternative, by node id.
    pub optimality_witness: Vec<(String, Vec<f64>)>,
    pub threshold: f64,
}

impl Verification {
    pub fn attainment_pass(&self) -> bool {
        self.attainment_margin >= -self.threshold
    }

    pub fn optimality_pass(&self) -> bool {
        self.optimality_margin <= self.threshold
    }

    pub fn pass(&self) -> bool {
        self.attainment_pass() && self.optimality_pass()
    }
}

/// Checks the policy against every product measure and against sampled
/// alternative policies. `eps` is the allowed slack on both sides.
pub fn forward_verify(
    tree: &ScenarioTree,
    compiled: &CompiledModel,
    value: f64,
    policy: &Policy,
    eps: f64,
    measure_cap: u128,
) -> Result<Verification, DpError> {
    let dec = policy_table(tree, policy);
    for &n in &crate::na::charged_internal_nodes(tree) {
        if dec[n].is_none() {
            return Err(DpError::MissingPolicy(tree.node(n).id.clone()));
        }
    }
    let payoffs = leaf_payoffs(tree, compiled, &dec);
    let mut rng = seed::rng(seed::VERIFY);
    let sampled = product_measure_count(tree) > measure_cap;
    let measures: Box<dyn Iterator<Item = _>> = if sampled {
        Box::new(sample_product_measures(tree, VERIFY_MEASURE_SAMPLES, &mut rng).into_iter())
    } else {
        Box::new(enumerate_product_measures(tree, measure_cap)?)
    };
    let mut checked = 0;
    let mut margin = f64::INFINITY;
    let mut witness = Vec::new();
    for m in measures {
        checked += 1;
        let e: ExtReal = m
            .leaf_probs
            .iter()
            .zip(&payoffs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, v)| v.unwrap_or(NegInf).scale_nonneg(*p))
            .sum();
        let g = e.to_f64() - value;
        if g < margin {
            margin = g;
            witness = m.choice.clone();
        }
    }

    let nodes = crate::na::charged_internal_nodes(tree);
    let mut best = f64::NEG_INFINITY;
    let mut best_alt = Vec::new();
    for k in 0..VERIFY_POLICY_SAMPLES {
        let mut alt = dec.clone();
        for &n in &nodes {
            let e = policy.get(n).expect("checked above");
            let r = if k % 2 == 0 { e.radius.max(1.0) } else { 0.01 };
            alt[n] = Some(e.h.iter().map(|v| v + rng.gen_range(-r..=r)).collect());
        }
        let w = policy_worst_case(tree, compiled, &alt).to_f64() - value;
        if w > best {
            best = w;
            best_alt = nodes.iter().map(|&n| (tree.node(n).id.clone(), alt[n].clone().unwrap_or_default())).collect();
        }
    }
    Ok(Verification {
        measures_checked: checked,
        measures_sampled: sampled,
        attainment_margin: margin,
        attainment_witness: witness,
        alternatives_checked: VERIFY_POLICY_SAMPLES,
        optimality_margin: best,
        optimality_witness: best_alt,
        threshold: eps,
    })
}

/// `min_P E^P[Ψ(h°)]` for the deterministic certificate strategy.
pub fn certificate_value(tree: &ScenarioTree, compiled: &CompiledModel, cert: &InteriorityCertificate) -> ExtReal {
    let d = compiled.d;
    let mut dec = vec![None; tree.nodes().len()];
    for &n in tree.internal_nodes() {
        dec[n] = Some(cert.block(tree.node(n).depth, d).to_vec());
    }
    policy_worst_case(tree, compiled, &dec)
}

/// NA gate, certificate, recursion and policy extraction.
pub fn backward_solve(tree: &ScenarioTree, model: &ModelSpec, opts: &DpOptions) -> Result<SolveReport, DpError> {
    let compiled = CompiledModel::new(model, tree)?;
    let na = check_global_na(tree, &compiled, opts.sign_pattern_cap)?;
    let cert = resolve_certificate(model, tree, &compiled)?;
    solve_with(tree, &compiled, na, cert, opts)
}

/// As [`backward_solve`] with the model already compiled and checked.
pub fn solve_with(
    tree: &ScenarioTree,
    compiled: &CompiledModel,
    na: NaReport,
    cert: InteriorityCertificate,
    opts: &DpOptions,
) -> Result<SolveReport, DpError> {
    let solver = Solver::new(tree, compiled, &na, &cert, opts.clone())?;
    let (value, policy, off_path) = run_in_pool(opts.jobs, || -> Result<_, DpError> {
        let (v, p) = solver.solve_root()?;
        let off = solver.solve_off_path(&opts.off_path)?;
        Ok((v, p, off))
    })??;
    let stats = solver.stats();
    let certificate_value = certificate_value(tree, compiled, &cert).to_f64();
    Ok(SolveReport {
        value,
        bound: compiled.bound,
        policy,
        off_path,
        na,
        certificate: cert,
        certificate_value,
        stats,
        tol: opts.tol,
    })
}

//! Local no-arbitrage cones and their linearity.
//!
//! At a node of depth `t`, the cone `K` collects the directions `h ∈ R^d`
//! for the period-`t` decision (earlier decisions fixed at zero) along which
//! the horizon of the continuation value stays `≥ 0` at every supported
//! child. The continuation value itself maximizes over later decisions, so
//! for polyhedral horizons `K` is the projection of a polyhedral cone in the
//! lifted variables `w = (h, c)`, with one block of `c` per non-terminal
//! descendant reachable through supported children.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::ext::{ExtReal, Finite};
use crate::lp::{Cmp, Lp, LpError, LpOutcome};
use crate::optim;
use crate::payoff::{CompiledModel, PolyhedralRep};
use crate::scenario::{NodeId, PathPrefix, ScenarioTree};
use crate::seed;

/// Optimum threshold below which a row is considered identically zero on
/// the cone.
pub const LINEARITY_TOL: f64 = 1e-9;
/// Directions probed for non-polyhedral cones with `d ≥ 2`.
pub const SPHERE_DIRECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NaError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("certificate at node {0} failed re-verification")]
    Certificate(String),
}

/// Polyhedral cone `{h : ∃c, M·(h, c) ≥ 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCone {
    pub d: usize,
    /// Number of continuation variables.
    pub aux: usize,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Clone)]
pub struct OracleCone {
    pub d: usize,
    member: Arc<dyn Fn(&[f64]) -> bool + Send + Sync>,
}

impl OracleCone {
    pub fn new(d: usize, member: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Self { d, member: Arc::new(member) }
    }
}

impl fmt::Debug for OracleCone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OracleCone").field("d", &self.d).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Cone {
    Polyhedral(PolyCone),
    Oracle(OracleCone),
}

/// Result of a linearity test.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearity {
    pub linear: bool,
    /// False when the verdict rests on sampled directions.
    pub exact: bool,
    /// A ray `h*` in the cone whose negative is not.
    pub certificate: Option<Vec<f64>>,
    /// Orthonormal basis of the largest subspace inside the cone.
    pub lineality: Vec<Vec<f64>>,
    /// Continuation `c*` with `M·(h*, c*) ≥ 0` (polyhedral cones only).
    pub witness: Vec<f64>,
    /// Nonnegative row weights `λ` with `λᵀM_c = 0` and `λᵀM_h h* > 0`.
    pub multipliers: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_scale(rows: &[Vec<f64>]) -> f64 {
    rows.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()))
}

impl Cone {
    pub fn dim(&self) -> usize {
        match self {
            Cone::Polyhedral(p) => p.d,
            Cone::Oracle(o) => o.d,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Cone::Polyhedral(_) => "polyhedral",
            Cone::Oracle(_) => "oracle",
        }
    }

    pub fn contains(&self, h: &[f64]) -> Result<bool, LpError> {
        match self {
            Cone::Oracle(o) => Ok((o.member)(h)),
            Cone::Polyhedral(p) => {
                let tol = 1e-12 * row_scale(&p.rows) * (1.0 + h.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                if p.aux == 0 {
                    return Ok(p.rows.iter().all(|r| dot(r, h) >= -tol));
                }
                let mut lp = Lp::new(p.aux);
                for j in 0..p.aux {
                    lp = lp.free(j);
                }
                for r in &p.rows {
                    lp.add_row(r[p.d..].to_vec(), Cmp::Ge, -dot(&r[..p.d], h) - tol);
                }
                Ok(!matches!(lp.maximize()?, LpOutcome::Infeasible))
            }
        }
    }

    pub fn is_linear(&self) -> Result<Linearity, LpError> {
        match self {
            Cone::Polyhedral(p) => poly_linearity(p),
            Cone::Oracle(o) => Ok(oracle_linearity(o)),
        }
    }
}

/// Rows that survive projection onto `h`: those carrying weight in some
/// `λ ≥ 0` with `λᵀM_c = 0`. Also returns the sum of the weight vectors found.
fn projected_rows(p: &PolyCone) -> Result<(Vec<bool>, Vec<f64>), LpError> {
    let m = p.rows.len();
    if p.aux == 0 {
        return Ok((vec![true; m], vec![1.0; m]));
    }
    let mut active = vec![false; m];
    let mut lambda = vec![0.0; m];
    loop {
        let objective: Vec<f64> = active.iter().map(|a| if *a { 0.0 } else { 1.0 }).collect();
        if objective.iter().all(|v| *v == 0.0) {
            break;
        }
        let mut lp = Lp::new(m).objective(objective);
        for i in 0..m {
            lp = lp.bounds(i, 0.0, 1.0);
        }
        for k in 0..p.aux {
            lp.add_row(p.rows.iter().map(|r| r[p.d + k]).collect(), Cmp::Eq, 0.0);
        }
        let LpOutcome::Optimal { x, value } = lp.maximize()? else { break };
        if value <= LINEARITY_TOL {
            break;
        }
        let mut grew = false;
        for i in 0..m {
            if x[i] > LINEARITY_TOL {
                lambda[i] += x[i];
                if !active[i] {
                    active[i] = true;
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    Ok((active, lambda))
}

fn poly_linearity(p: &PolyCone) -> Result<Linearity, LpError> {
    let n = p.d + p.aux;
    let (active, lambda) = projected_rows(p)?;
    let tol = LINEARITY_TOL * row_scale(&p.rows);
    let mut objective = vec![0.0; n];
    for (r, a) in p.rows.iter().zip(&active) {
        if *a {
            for (o, v) in objective.iter_mut().zip(r) {
                *o += v;
            }
        }
    }
    let mut lp = Lp::new(n).objective(objective);
    for j in 0..n {
        lp = if j < p.d { lp.bounds(j, -1.0, 1.0) } else { lp.free(j) };
    }
    for r in &p.rows {
        lp.add_row(r.clone(), Cmp::Ge, 0.0);
    }
    match lp.maximize()? {
        LpOutcome::Optimal { x, value } if value > tol => {
            let mut ray = x[..p.d].to_vec();
            for v in &mut ray {
                if v.abs() < 1e-15 {
                    *v = 0.0;
                }
            }
            Ok(Linearity {
                linear: false,
                exact: true,
                certificate: Some(ray),
                lineality: Vec::new(),
                witness: x[p.d..].to_vec(),
                multipliers: lambda,
            })
        }
        LpOutcome::Unbounded => Err(LpError::Malformed("linearity program unbounded".into())),
        _ => {
            let kept: Vec<Vec<f64>> = p.rows.iter().zip(&active).filter(|(_, a)| **a).map(|(r, _)| r.clone()).collect();
            let kernel = null_space(&kept, n);
            let projected: Vec<Vec<f64>> = kernel.iter().map(|v| v[..p.d].to_vec()).collect();
            Ok(Linearity {
                linear: true,
                exact: true,
                certificate: None,
                lineality: orth_span(&projected, p.d, 1e-9),
                witness: Vec::new(),
                multipliers: lambda,
            })
        }
    }
}

fn oracle_linearity(o: &OracleCone) -> Linearity {
    sampled_linearity(o.d, |h| (o.member)(h))
}

/// Linearity of a cone known only through membership: exact for `d = 1`
/// (tests `±1`), sampled on quasi-uniform sphere directions otherwise.
pub fn sampled_linearity(d: usize, member: impl Fn(&[f64]) -> bool) -> Linearity {
    let dirs = if d == 1 { vec![vec![1.0], vec![-1.0]] } else { sphere_directions(d, SPHERE_DIRECTIONS) };
    let mut members = Vec::new();
    for u in &dirs {
        if member(u) {
            let neg: Vec<f64> = u.iter().map(|v| -v).collect();
            if !member(&neg) {
                return Linearity {
                    linear: false,
                    exact: d == 1,
                    certificate: Some(u.clone()),
                    lineality: Vec::new(),
                    witness: Vec::new(),
                    multipliers: Vec::new(),
                };
            }
            members.push(u.clone());
        }
    }
    Linearity {
        linear: true,
        exact: d == 1,
        certificate: None,
        lineality: orth_span(&members, d, 1e-6),
        witness: Vec::new(),
        multipliers: Vec::new(),
    }
}

/// Deterministic quasi-uniform unit vectors: an even circle for `d = 2`, a
/// Fibonacci spiral for `d = 3`, normalized Halton points pushed through the
/// normal quantile otherwise.
pub fn sphere_directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    match d {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - y * y).sqrt();
                    let th = golden * k as f64;
                    vec![r * th.cos(), y, r * th.sin()]
                })
                .collect()
        }
        _ => {
            const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
            (1..=n)
                .map(|k| {
                    let v: Vec<f64> = (0..d)
                        .map(|j| {
                            let u = halton(k as u64, PRIMES[j % PRIMES.len()] + (j / PRIMES.len()) as u64 * 41);
                            normal_quantile(u)
                        })
                        .collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect()
        }
    }
}

fn halton(mut k: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while k > 0 {
        f /= base as f64;
        r += f * (k % base) as f64;
        k /= base;
    }
    r
}

/// Acklam's rational approximation of the standard normal quantile.
fn normal_quantile(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Orthonormal basis of `{x : Ax = 0}` for `A` given by rows over `R^n`.
pub fn null_space(rows: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    if n == 0 {
        return Vec::new();
    }
    if rows.is_empty() {
        return (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    }
    let m = rows.len().max(n);
    let a = DMatrix::from_fn(m, n, |i, j| rows.get(i).map_or(0.0, |r| r[j]));
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let cut = 1e-10 * smax.max(f64::MIN_POSITIVE);
    (0..n)
        .filter(|&k| svd.singular_values[k] <= cut)
        .map(|k| vt.row(k).iter().copied().collect())
        .collect()
}

/// Orthonormal basis of the span of `vectors` in `R^n`, dropping singular
/// values at or below `cutoff`.
pub fn orth_span(vectors: &[Vec<f64>], n: usize, cutoff: f64) -> Vec<Vec<f64>> {
    if vectors.is_empty() || n == 0 {
        return Vec::new();
    }
    let k = vectors.len();
    let cols = k.max(n);
    let a = DMatrix::from_fn(n, cols, |i, j| vectors.get(j).map_or(0.0, |v| v[i]));
    let svd = a.svd(true, false);
    let u = svd.u.expect("requested U");
    let scale = svd.singular_values.max().max(1.0);
    (0..n.min(cols))
        .filter(|&i| svd.singular_values[i] > cutoff * scale)
        .map(|i| {
            let mut v: Vec<f64> = u.column(i).iter().copied().collect();
            // fix the sign so that the first sizeable entry is positive
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            v
        })
        .collect()
}

/// Non-terminal nodes reachable from the root through supported children.
pub fn charged_internal_nodes(tree: &ScenarioTree) -> Vec<NodeId> {
    let mut out = Vec::new();
    let mut stack = vec![tree.root()];
    while let Some(n) = stack.pop() {
        if tree.node(n).is_terminal() {
            continue;
        }
        out.push(n);
        for k in tree.union_support(n).into_iter().rev() {
            stack.push(tree.node(n).children[k]);
        }
    }
    out.sort_unstable();
    out
}

/// Leaf horizons of a compiled model together with their polyhedral forms.
pub struct ConeBuilder<'a> {
    tree: &'a ScenarioTree,
    compiled: &'a CompiledModel,
    reps: Vec<Option<PolyhedralRep>>,
}

/// How the decision blocks of one supported leaf are read off `w`.
struct LeafLayout {
    leaf: usize,
    /// Block index into `w` for each depth `s ≥ t`.
    blocks: Vec<usize>,
}

impl<'a> ConeBuilder<'a> {
    pub fn new(tree: &'a ScenarioTree, compiled: &'a CompiledModel, sign_pattern_cap: usize) -> Self {
        let reps = compiled.horizons.iter().map(|h| h.polyhedral_rep(sign_pattern_cap)).collect();
        Self { tree, compiled, reps }
    }

    pub fn is_polyhedral(&self) -> bool {
        self.reps.iter().all(Option::is_some)
    }

    fn layout(&self, node: NodeId) -> (Vec<LeafLayout>, usize) {
        let tree = self.tree;
        let t = tree.node(node).depth;
        let mut block_of = std::collections::HashMap::new();
        let mut next_block = 1;
        let mut layouts = Vec::new();
        for leaf in tree.supported_leaves(node) {
            let path = tree.path_nodes(leaf);
            let mut blocks = Vec::with_capacity(tree.depth() - t);
            for s in t..tree.depth() {
                let u = path[s];
                if s == t {
                    blocks.push(0);
                } else {
                    let b = *block_of.entry(u).or_insert_with(|| {
                        next_block += 1;
                        next_block - 1
                    });
                    blocks.push(b);
                }
            }
            layouts.push(LeafLayout { leaf: tree.leaf_position(leaf).expect("leaf"), blocks });
        }
        (layouts, next_block - 1)
    }

    fn leaf_z(&self, layout: &LeafLayout, node_depth: usize, w: &[f64]) -> Vec<f64> {
        let d = self.compiled.d;
        let mut z = vec![0.0; self.compiled.dim];
        for (k, &b) in layout.blocks.iter().enumerate() {
            let s = node_depth + k;
            z[s * d..(s + 1) * d].copy_from_slice(&w[b * d..(b + 1) * d]);
        }
        z
    }

    /// Polyhedral lifted cone, or `None` when some supported leaf horizon has
    /// no polyhedral form within the cap.
    pub fn polyhedral_cone(&self, node: NodeId) -> Option<PolyCone> {
        let d = self.compiled.d;
        let t = self.tree.node(node).depth;
        let (layouts, aux_blocks) = self.layout(node);
        let n = d * (1 + aux_blocks);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for lay in &layouts {
            let rep = self.reps[lay.leaf].as_ref()?;
            for r in rep.nonneg_rows() {
                let mut w = vec![0.0; n];
                for (k, &b) in lay.blocks.iter().enumerate() {
                    let s = t + k;
                    for j in 0..d {
                        w[b * d + j] += r[s * d + j];
                    }
                }
                if w.iter().any(|v| *v != 0.0) && !rows.contains(&w) {
                    rows.push(w);
                }
            }
        }
        Some(PolyCone { d, aux: aux_blocks * d, rows })
    }

    /// Horizon of the continuation value at `node` for the decision prefix
    /// `z` (blocks of depth `< depth(node)` set). Exact for leaves; for
    /// non-terminal nodes the supremum over later decisions is searched
    /// numerically.
    pub fn continuation_horizon(&self, node: NodeId, z: &mut Vec<f64>) -> ExtReal {
        let tree = self.tree;
        if let Some(pos) = tree.leaf_position(node) {
            return self.compiled.horizons[pos].eval(z);
        }
        let d = self.compiled.d;
        let s = tree.node(node).depth;
        let amb = tree.ambiguity(node).expect("internal");
        let support = tree.union_support(node);
        let radius = 10.0 * (1.0 + z[..s * d].iter().fold(0.0f64, |m, v| m.max(v.abs())));
        let base = z.clone();
        let f = |h: &[f64]| -> ExtReal {
            let mut zz = base.clone();
            zz[s * d..(s + 1) * d].copy_from_slice(h);
            let vals: Vec<ExtReal> = (0..tree.node(node).children.len())
                .map(|k| {
                    if support.contains(&k) {
                        self.continuation_horizon(tree.node(node).children[k], &mut zz.clone())
                    } else {
                        Finite(0.0)
                    }
                })
                .collect();
            amb.measures()
                .iter()
                .map(|p| crate::ext::expectation(p, &vals))
                .fold(Finite(0.0), ExtReal::min)
        };
        let lo = vec![-radius; d];
        let hi = vec![radius; d];
        let start = vec![0.0; d];
        let mut rng = seed::rng(seed::RESTARTS);
        let best = optim::maximize_box(&f, &lo, &hi, &start, 1e-9 * radius, 1e-12, 4, &mut rng);
        best.value
    }

    /// Representation-free membership test: evaluates horizons at the
    /// supported children (numerically maximized over later decisions when
    /// the children are not leaves).
    pub fn member(&self, node: NodeId, h: &[f64]) -> bool {
        let d = self.compiled.d;
        let t = self.tree.node(node).depth;
        let scale = 1.0 + h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut z = vec![0.0; self.compiled.dim];
        z[t * d..(t + 1) * d].copy_from_slice(h);
        self.tree.union_support(node).into_iter().all(|k| {
            let child = self.tree.node(node).children[k];
            self.continuation_horizon(child, &mut z.clone()) >= Finite(-1e-9 * scale)
        })
    }

    /// Oracle form of the local cone, over owned copies of the horizons.
    pub fn oracle_cone(&self, node: NodeId) -> OracleCone {
        let tree = self.tree.clone();
        let compiled = self.compiled.clone();
        let reps = self.reps.clone();
        OracleCone::new(self.compiled.d, move |h| {
            ConeBuilder { tree: &tree, compiled: &compiled, reps: reps.clone() }.member(node, h)
        })
    }

    /// The local cone at `node`: polyhedral when every supported leaf horizon
    /// has a polyhedral form within the cap, otherwise an oracle.
    pub fn local_cone(&self, node: NodeId) -> Cone {
        match self.polyhedral_cone(node) {
            Some(p) => Cone::Polyhedral(p),
            None => Cone::Oracle(self.oracle_cone(node)),
        }
    }

    /// Checks `h* ∈ K` and `−h* ∉ K` by evaluating leaf horizons directly,
    /// using the witness continuation and the multipliers of the test.
    pub fn reverify(&self, node: NodeId, cone: &Cone, lin: &Linearity) -> bool {
        let Some(ray) = &lin.certificate else { return true };
        let neg: Vec<f64> = ray.iter().map(|v| -v).collect();
        match cone {
            Cone::Oracle(o) => (o.member)(ray) && !(o.member)(&neg),
            Cone::Polyhedral(p) => {
                let t = self.tree.node(node).depth;
                let (layouts, _) = self.layout(node);
                let mut w = ray.clone();
                w.extend_from_slice(&lin.witness);
                let scale = row_scale(&p.rows);
                let member = layouts.iter().all(|lay| {
                    let z = self.leaf_z(lay, t, &w);
                    self.compiled.horizons[lay.leaf].eval(&z) >= Finite(-1e-9 * scale)
                });
                if !member {
                    return false;
                }
                if p.aux == 0 {
                    layouts.iter().any(|lay| {
                        let z = self.leaf_z(lay, t, &neg);
                        self.compiled.horizons[lay.leaf].eval(&z) < Finite(-1e-12 * scale)
                    })
                } else {
                    let lam = &lin.multipliers;
                    let cancels = (p.d..p.d + p.aux).all(|j| {
                        let s: f64 = p.rows.iter().zip(lam).map(|(r, l)| r[j] * l).sum();
                        s.abs() <= 1e-9 * scale * (1.0 + lam.iter().sum::<f64>())
                    });
                    let value: f64 = p.rows.iter().zip(lam).map(|(r, l)| l * dot(&r[..p.d], &neg)).sum();
                    cancels && value < 0.0
                }
            }
        }
    }
}

/// Linearity verdict at one node.
#[derive(Debug, Clone)]
pub struct NodeVerdict {
    pub node: NodeId,
    pub id: String,
    pub prefix: PathPrefix,
    pub cone: Cone,
    pub linearity: Linearity,
}

#[derive(Debug, Clone)]
pub struct NaReport {
    pub nodes: Vec<NodeVerdict>,
}

impl NaReport {
    pub fn pass(&self) -> bool {
        self.nodes.iter().all(|n| n.linearity.linear)
    }

    pub fn exact(&self) -> bool {
        self.nodes.iter().all(|n| n.linearity.exact)
    }

    pub fn failures(&self) -> impl Iterator<Item = &NodeVerdict> {
        self.nodes.iter().filter(|n| !n.linearity.linear)
    }

    pub fn verdict(&self, node: NodeId) -> Option<&NodeVerdict> {
        self.nodes.iter().find(|n| n.node == node)
    }
}

/// Local cone and linearity at every non-terminal node reachable through
/// supported children. Every certificate is re-verified.
pub fn check_global_na(tree: &ScenarioTree, compiled: &CompiledModel, sign_pattern_cap: usize) -> Result<NaReport, NaError> {
    let builder = ConeBuilder::new(tree, compiled, sign_pattern_cap);
    let nodes = charged_internal_nodes(tree);
    let verdicts = nodes
        .par_iter()
        .map(|&n| {
            let cone = builder.local_cone(n);
            let linearity = cone.is_linear()?;
            if !builder.reverify(n, &cone, &linearity) {
                return Err(NaError::Certificate(tree.node(n).id.clone()));
            }
            Ok(NodeVerdict { node: n, id: tree.node(n).id.clone(), prefix: tree.prefix_of(n), cone, linearity })
        })
        .collect::<Result<Vec<_>, NaError>>()?;
    Ok(NaReport { nodes: verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly(d: usize, rows: Vec<Vec<f64>>) -> Cone {
        Cone::Polyhedral(PolyCone { d, aux: 0, rows })
    }

    #[test]
    fn point_cone_is_linear() {
        let l = poly(1, vec![vec![1.0], vec![-1.0]]).is_linear().unwrap();
        assert!(l.linear && l.exact && l.certificate.is_none() && l.lineality.is_empty());
    }

    #[test]
    fn half_line_is_not_linear() {
        let l = poly(1, vec![vec![1.0]]).is_linear().unwrap();
        assert!(!l.linear);
        assert_eq!(l.certificate, Some(vec![1.0]));
    }

    #[test]
    fn wedge_with_equality_pair_is_not_linear() {
        let c = poly(2, vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![-1.0, -1.0]]);
        let l = c.is_linear().unwrap();
        assert!(!l.linear);
        let h = l.certificate.unwrap();
        assert!(c.contains(&h).unwrap());
        assert!(!c.contains(&[-h[0], -h[1]]).unwrap());
        // brute-force sign patterns on the integer grid
        let mut one_sided = false;
        for a in -3..=3 {
            for b in -3..=3 {
                let (x, y) = (a as f64, b as f64);
                let inside = x >= 0.0 && x + y >= 0.0 && -x - y >= 0.0;
                let neg_inside = -x >= 0.0 && -x - y >= 0.0 && x + y >= 0.0;
                one_sided |= inside && !neg_inside;
            }
        }
        assert!(one_sided);
    }

    #[test]
    fn line_cone_has_lineality() {
        // {h : h_1 − h_2 = 0}
        let l = poly(2, vec![vec![1.0, -1.0], vec![-1.0, 1.0]]).is_linear().unwrap();
        assert!(l.linear);
        assert_eq!(l.lineality.len(), 1);
        let v = &l.lineality[0];
        assert!((v[0] - v[1]).abs() < 1e-12 && (v[0] * v[0] + v[1] * v[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projection_with_continuation() {
        // K = {h : ∃c, c − h ≥ 0, −c ≥ 0} = {h ≤ 0}: not linear, ray −1.
        let c = Cone::Polyhedral(PolyCone { d: 1, aux: 1, rows: vec![vec![-1.0, 1.0], vec![0.0, -1.0]] });
        let l = c.is_linear().unwrap();
        assert!(!l.linear);
        assert!(l.certificate.as_ref().unwrap()[0] < 0.0);
        assert!(c.contains(&[-1.0]).unwrap() && !c.contains(&[1.0]).unwrap());
        // K = {h : ∃c, c − h ≥ 0, h − c ≥ 0} = R: linear with full lineality.
        let c = Cone::Polyhedral(PolyCone { d: 1, aux: 1, rows: vec![vec![-1.0, 1.0], vec![1.0, -1.0]] });
        let l = c.is_linear().unwrap();
        assert!(l.linear);
        assert_eq!(l.lineality.len(), 1);
    }

    #[test]
    fn oracle_cone_one_dimensional() {
        let o = Cone::Oracle(OracleCone::new(1, |h: &[f64]| h[0] >= 0.0));
        let l = o.is_linear().unwrap();
        assert!(!l.linear && l.exact);
        assert_eq!(l.certificate, Some(vec![1.0]));
    }

    #[test]
    fn oracle_cone_sampled_in_two_dimensions() {
        let o = Cone::Oracle(OracleCone::new(2, |h: &[f64]| h[0].abs() < 1e-12 || h[0] == 0.0));
        let l = o.is_linear().unwrap();
        assert!(l.linear && !l.exact);
    }

    #[test]
    fn sphere_directions_are_unit() {
        for d in 2..6 {
            let dirs = sphere_directions(d, 500);
            assert_eq!(dirs.len(), 500);
            for v in dirs {
                assert!((v.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

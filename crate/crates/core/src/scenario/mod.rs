//! Finite scenario trees with per-node ambiguity sets, plus the market model
//! and solver settings that come with them in a configuration document.

mod config;
mod measures;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::payoff::{ConcaveExpr, InteriorityCertificate, UtilityAtom};

pub use config::{load_config, Config, GridSettings, OffPathPoint, SolverSettings};
pub use measures::{enumerate_product_measures, product_measure_count, sample_product_measures, ProductMeasure};

pub type NodeId = usize;

/// Absolute tolerance on probability-vector sums.
pub const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("{detail} at node {node} (rule: {rule})")]
    Invariant { node: String, rule: &'static str, detail: String },
    #[error("model: {0}")]
    Model(String),
}

impl ConfigError {
    pub(crate) fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Field { path: path.into(), message: message.into() }
    }

    fn invariant(node: &str, rule: &'static str, detail: impl Into<String>) -> Self {
        Self::Invariant { node: node.to_string(), rule, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("product-measure count {count} exceeds cap {cap}")]
    TooManyMeasures { count: u128, cap: u128 },
    #[error("invalid path prefix {0}")]
    BadPrefix(String),
    #[error("node {0} is terminal")]
    Terminal(String),
}

/// Finite list of one-step laws over a node's children.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySet {
    measures: Vec<Vec<f64>>,
}

impl AmbiguitySet {
    /// Validates and wraps; inputs are never renormalized.
    pub fn new(measures: Vec<Vec<f64>>, n_children: usize) -> Result<Self, (&'static str, String)> {
        if measures.is_empty() {
            return Err(("nonempty-ambiguity", "ambiguity set is empty".into()));
        }
        for (k, m) in measures.iter().enumerate() {
            if m.len() != n_children {
                return Err((
                    "measure-length",
                    format!("measure {k} has {} entries for {n_children} children", m.len()),
                ));
            }
            if let Some(p) = m.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(("probability-range", format!("probability {p} outside [0,1] in measure {k}")));
            }
            let s: f64 = m.iter().sum();
            if (s - 1.0).abs() > PROB_TOL {
                return Err(("measure-normalized", format!("probabilities sum to {s} ≠ 1")));
            }
        }
        Ok(Self { measures })
    }

    pub fn measures(&self) -> &[Vec<f64>] {
        &self.measures
    }

    pub fn len(&self) -> usize {
        self.measures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    /// Children charged by at least one measure.
    pub fn union_support(&self) -> Vec<usize> {
        let n = self.measures[0].len();
        (0..n).filter(|&i| self.measures.iter().any(|m| m[i] > 0.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: String,
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub prices: Vec<f64>,
    pub ambiguity: Option<AmbiguitySet>,
}

impl TreeNode {
    pub fn is_terminal(&self) -> bool {
        self.children.is_empty()
    }
}

/// Sequence of child indices from the root, identifying one node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PathPrefix(pub Vec<usize>);

impl PathPrefix {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for PathPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("root");
        }
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

impl std::str::FromStr for PathPrefix {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "root" {
            return Ok(Self(Vec::new()));
        }
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|_| ScenarioError::BadPrefix(s.to_string())))
            .collect::<Result<Vec<_>, _>>()
            .map(PathPrefix)
    }
}

/// Event tree of depth `T`. Nodes are stored in depth-first preorder.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTree {
    nodes: Vec<TreeNode>,
    depth: usize,
    market_dim: usize,
    leaves: Vec<NodeId>,
    internal: Vec<NodeId>,
    leaf_index: Vec<Option<usize>>,
    internal_index: Vec<Option<usize>>,
}

/// Node description as it appears in a configuration document.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: String,
    pub children: Vec<String>,
    pub prices: Vec<f64>,
    pub measures: Vec<Vec<f64>>,
}

impl ScenarioTree {
    pub fn from_specs(specs: &[NodeSpec]) -> Result<Self, ConfigError> {
        if specs.is_empty() {
            return Err(ConfigError::field("tree.nodes", "no nodes"));
        }
        let mut by_id: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, s) in specs.iter().enumerate() {
            if by_id.insert(s.id.as_str(), i).is_some() {
                return Err(ConfigError::invariant(&s.id, "unique-ids", "duplicate node id"));
            }
        }
        let mut parent: Vec<Option<usize>> = vec![None; specs.len()];
        for (i, s) in specs.iter().enumerate() {
            for c in &s.children {
                let &j = by_id.get(c.as_str()).ok_or_else(|| {
                    ConfigError::invariant(&s.id, "children-exist", format!("unknown child {c}"))
                })?;
                if parent[j].is_some() || j == i {
                    return Err(ConfigError::invariant(c, "single-parent", "node has more than one parent"));
                }
                parent[j] = Some(i);
            }
        }
        let roots: Vec<usize> = (0..specs.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            let ids: Vec<&str> = roots.iter().map(|&i| specs[i].id.as_str()).collect();
            return Err(ConfigError::invariant(
                ids.first().copied().unwrap_or("?"),
                "single-root",
                format!("expected exactly one root, found {:?}", ids),
            ));
        }
        let market_dim = specs[roots[0]].prices.len();

        // Preorder traversal.
        let mut order = Vec::with_capacity(specs.len());
        let mut depth_of = vec![0usize; specs.len()];
        let mut stack = vec![roots[0]];
        while let Some(i) = stack.pop() {
            order.push(i);
            for c in specs[i].children.iter().rev() {
                let j = by_id[c.as_str()];
                depth_of[j] = depth_of[i] + 1;
                stack.push(j);
            }
        }
        if order.len() != specs.len() {
            return Err(ConfigError::invariant(&specs[roots[0]].id, "connected", "unreachable nodes present"));
        }
        let mut new_index = vec![0usize; specs.len()];
        for (k, &i) in order.iter().enumerate() {
            new_index[i] = k;
        }

        let mut nodes = Vec::with_capacity(specs.len());
        for &i in &order {
            let s = &specs[i];
            if s.prices.len() != market_dim {
                return Err(ConfigError::invariant(
                    &s.id,
                    "price-dimension",
                    format!("{} prices, expected {market_dim}", s.prices.len()),
                ));
            }
            if s.prices.iter().any(|p| !p.is_finite()) {
                return Err(ConfigError::invariant(&s.id, "finite-prices", "non-finite price"));
            }
            let ambiguity = if s.children.is_empty() {
                if !s.measures.is_empty() {
                    return Err(ConfigError::invariant(&s.id, "terminal-no-measures", "terminal node carries measures"));
                }
                None
            } else {
                Some(
                    AmbiguitySet::new(s.measures.clone(), s.children.len())
                        .map_err(|(rule, detail)| ConfigError::invariant(&s.id, rule, detail))?,
                )
            };
            nodes.push(TreeNode {
                id: s.id.clone(),
                depth: depth_of[i],
                parent: parent[i].map(|p| new_index[p]),
                children: s.children.iter().map(|c| new_index[by_id[c.as_str()]]).collect(),
                prices: s.prices.clone(),
                ambiguity,
            });
        }

        let leaves: Vec<NodeId> = (0..nodes.len()).filter(|&i| nodes[i].is_terminal()).collect();
        let depth = nodes[leaves[0]].depth;
        if depth == 0 {
            return Err(ConfigError::invariant(&nodes[0].id, "positive-depth", "tree has no periods"));
        }
        if let Some(&bad) = leaves.iter().find(|&&l| nodes[l].depth != depth) {
            return Err(ConfigError::invariant(
                &nodes[bad].id,
                "uniform-depth",
                format!("leaf at depth {} but tree depth is {depth}", nodes[bad].depth),
            ));
        }
        let internal: Vec<NodeId> = (0..nodes.len()).filter(|&i| !nodes[i].is_terminal()).collect();
        let mut leaf_index = vec![None; nodes.len()];
        for (k, &l) in leaves.iter().enumerate() {
            leaf_index[l] = Some(k);
        }
        let mut internal_index = vec![None; nodes.len()];
        for (k, &n) in internal.iter().enumerate() {
            internal_index[n] = Some(k);
        }
        Ok(Self { nodes, depth, market_dim, leaves, internal, leaf_index, internal_index })
    }

    pub fn root(&self) -> NodeId {
        0
    }

    /// Number of periods `T`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn market_dim(&self) -> usize {
        self.market_dim
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn leaves(&self) -> &[NodeId] {
        &self.leaves
    }

    /// Non-terminal nodes in preorder.
    pub fn internal_nodes(&self) -> &[NodeId] {
        &self.internal
    }

    pub fn leaf_position(&self, id: NodeId) -> Option<usize> {
        self.leaf_index[id]
    }

    pub fn internal_position(&self, id: NodeId) -> Option<usize> {
        self.internal_index[id]
    }

    pub fn find(&self, id: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn ambiguity(&self, id: NodeId) -> Option<&AmbiguitySet> {
        self.nodes[id].ambiguity.as_ref()
    }

    /// Children assigned positive probability by some measure; empty for leaves.
    pub fn union_support(&self, id: NodeId) -> Vec<usize> {
        self.ambiguity(id).map(|a| a.union_support()).unwrap_or_default()
    }

    pub fn prefix_of(&self, id: NodeId) -> PathPrefix {
        let mut path = Vec::new();
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            let k = self.nodes[p].children.iter().position(|&c| c == cur).expect("child listed");
            path.push(k);
            cur = p;
        }
        path.reverse();
        PathPrefix(path)
    }

    pub fn node_at(&self, prefix: &PathPrefix) -> Result<NodeId, ScenarioError> {
        let mut cur = self.root();
        for &k in &prefix.0 {
            cur = *self.nodes[cur]
                .children
                .get(k)
                .ok_or_else(|| ScenarioError::BadPrefix(prefix.to_string()))?;
        }
        Ok(cur)
    }

    /// Nodes on the path from the root to `id`, including both ends.
    pub fn path_nodes(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Prices `S_0, …, S_t` along the path to `id`.
    pub fn price_path(&self, id: NodeId) -> Vec<&[f64]> {
        self.path_nodes(id).into_iter().map(|n| self.nodes[n].prices.as_slice()).collect()
    }

    /// Leaves below `id` reachable through supported children only.
    pub fn supported_leaves(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            if self.nodes[n].is_terminal() {
                out.push(n);
                continue;
            }
            for k in self.union_support(n).into_iter().rev() {
                stack.push(self.nodes[n].children[k]);
            }
        }
        out
    }

    pub fn to_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id.clone(),
                children: n.children.iter().map(|&c| self.nodes[c].id.clone()).collect(),
                prices: n.prices.clone(),
                measures: n.ambiguity.as_ref().map(|a| a.measures.clone()).unwrap_or_default(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Frictionless,
    ProportionalTc,
    Liquidation,
    CustomExpr,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Frictionless => "frictionless",
            Preset::ProportionalTc => "proportional_tc",
            Preset::Liquidation => "liquidation",
            Preset::CustomExpr => "custom_expr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "frictionless" => Preset::Frictionless,
            "proportional_tc" => Preset::ProportionalTc,
            "liquidation" => Preset::Liquidation,
            "custom_expr" => Preset::CustomExpr,
            _ => return None,
        })
    }
}

/// Market model and payoff description.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub preset: Preset,
    /// Decision dimension `d`.
    pub d: usize,
    /// Initial capital `x` (frictionless / transaction costs) or inventory `X`
    /// (liquidation).
    pub capital: f64,
    pub kappa: f64,
    pub eta: f64,
    pub utility: Option<UtilityAtom>,
    pub price_floor: f64,
    /// Custom payoff per leaf id.
    pub payoffs: BTreeMap<String, ConcaveExpr>,
    pub certificate: Option<InteriorityCertificate>,
}

impl ModelSpec {
    pub(crate) fn validate_against(&self, tree: &ScenarioTree) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::Model(m));
        if self.d == 0 {
            return err("decision dimension d must be positive".into());
        }
        match self.preset {
            Preset::Frictionless | Preset::ProportionalTc => {
                if tree.market_dim() != self.d {
                    return err(format!("market has {} assets but d = {}", tree.market_dim(), self.d));
                }
                if !(self.capital > 0.0) {
                    return err(format!("initial capital x must be > 0, got {}", self.capital));
                }
                if !(0.0..1.0).contains(&self.kappa) {
                    return err(format!("kappa must lie in [0,1), got {}", self.kappa));
                }
                if self.preset == Preset::Frictionless && self.kappa != 0.0 {
                    return err("frictionless preset takes no kappa".into());
                }
                if let Some(n) = tree.nodes().iter().find(|n| n.prices.iter().any(|p| *p < 0.0)) {
                    return Err(ConfigError::invariant(&n.id, "nonnegative-prices", "negative price"));
                }
                if tree.node(tree.root()).prices.iter().any(|p| *p <= 0.0) {
                    return Err(ConfigError::invariant(
                        &tree.node(tree.root()).id,
                        "positive-initial-price",
                        "S_0 must be > 0",
                    ));
                }
            }
            Preset::Liquidation => {
                if self.d != 1 || tree.market_dim() != 1 {
                    return err("liquidation preset requires d = 1 and a single asset".into());
                }
                if !(self.capital > 0.0) {
                    return err(format!("inventory X must be > 0, got {}", self.capital));
                }
                if !(self.eta >= 0.0) || !self.eta.is_finite() {
                    return err(format!("impact slope eta must be >= 0, got {}", self.eta));
                }
                if !(self.price_floor <= 0.0) {
                    return err(format!("price floor must be <= 0, got {}", self.price_floor));
                }
                if let Some(n) = tree.nodes().iter().find(|n| n.prices.iter().any(|p| *p < self.price_floor)) {
                    return Err(ConfigError::invariant(&n.id, "price-floor", "price below floor"));
                }
            }
            Preset::CustomExpr => {
                let n = self.d * tree.depth();
                for &l in tree.leaves() {
                    let id = &tree.node(l).id;
                    let e = self
                        .payoffs
                        .get(id)
                        .ok_or_else(|| ConfigError::Model(format!("no custom payoff for leaf {id}")))?;
                    let dim = e.validate().map_err(|e| ConfigError::Model(format!("payoff {id}: {e}")))?;
                    if dim != n {
                        return err(format!("payoff {id} is over R^{dim}, expected R^{n}"));
                    }
                    if !e.is_bounded_above() {
                        return err(format!("payoff {id} is not bounded above"));
                    }
                }
                if let Some(extra) = self.payoffs.keys().find(|k| tree.find(k).and_then(|i| tree.leaf_position(i)).is_none()) {
                    return err(format!("custom payoff for unknown leaf {extra}"));
                }
                match &self.certificate {
                    Some(c) if c.center.len() == n && c.radius > 0.0 && c.lower > 0.0 => {}
                    Some(_) => return err("certificate must have center in R^{dT}, radius > 0, c > 0".into()),
                    None => return err("custom_expr preset needs a certificate".into()),
                }
            }
        }
        if self.preset != Preset::CustomExpr && self.utility.is_none() {
            return err("utility is required".into());
        }
        Ok(())
    }

    /// Upper bound `C` on every leaf payoff.
    pub fn upper_bound(&self) -> Option<f64> {
        match self.preset {
            Preset::CustomExpr => self.payoffs.values().map(|e| e.upper_bound()).reduce(|a, b| match (a, b) {
                (Some(a), Some(b)) => Some(a.max(b)),
                _ => None,
            })?,
            _ => self.utility.as_ref().map(|u| u.upper_bound()),
        }
    }
}

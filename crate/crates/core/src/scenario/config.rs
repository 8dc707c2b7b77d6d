//! TOML configuration documents: parsing with field-path errors and a
//! canonical serializer (sorted keys, 17 significant digits).

use std::collections::BTreeMap;

use toml::{Table, Value};

use super::{ConfigError, ModelSpec, NodeSpec, PathPrefix, Preset, ScenarioTree};
use crate::canon;
use crate::payoff::{ConcaveExpr, InteriorityCertificate, PiecewiseLinear, PsdMatrix, UtilityAtom};

/// Numerical settings read from the `solver` table.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub quantization: f64,
    pub memo_cap: usize,
    pub measure_cap: u128,
    pub grid_cap: u128,
    pub sign_pattern_cap: usize,
    pub grid: Option<GridSettings>,
    pub off_path: Vec<OffPathPoint>,
}

/// A node together with the earlier decisions `x^t` at which to solve it.
#[derive(Debug, Clone, PartialEq)]
pub struct OffPathPoint {
    pub path: PathPrefix,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSettings {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub refine: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            quantization: 1e-6,
            memo_cap: 10_000_000,
            measure_cap: 1_000_000,
            grid_cap: 100_000_000,
            sign_pattern_cap: 4096,
            grid: None,
            off_path: Vec::new(),
        }
    }
}

/// A fully validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub tree: ScenarioTree,
    pub model: ModelSpec,
    pub solver: SolverSettings,
}

pub fn load_config(text: &str) -> Result<Config, ConfigError> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string().trim().to_string()))?;
    for key in doc.keys() {
        if !matches!(key.as_str(), "tree" | "model" | "solver") {
            return Err(ConfigError::field(key.as_str(), "unknown top-level key"));
        }
    }
    let tree_t = table(&doc, "tree", "")?;
    let nodes = array(tree_t, "nodes", "tree")?;
    let mut specs = Vec::with_capacity(nodes.len());
    for (i, n) in nodes.iter().enumerate() {
        let path = format!("tree.nodes[{i}]");
        let t = as_table(n, &path)?;
        specs.push(NodeSpec {
            id: string(t, "id", &path)?.to_string(),
            children: opt_array(t, "children", &path)?
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| ConfigError::field(format!("{path}.children[{k}]"), "expected string"))
                })
                .collect::<Result<_, _>>()?,
            prices: float_vec(t, "prices", &path)?,
            measures: opt_array(t, "measures", &path)?
                .iter()
                .enumerate()
                .map(|(k, v)| float_list(v, &format!("{path}.measures[{k}]")))
                .collect::<Result<_, _>>()?,
        });
    }
    let tree = ScenarioTree::from_specs(&specs)?;
    let model = parse_model(table(&doc, "model", "")?)?;
    model.validate_against(&tree)?;
    let solver = match doc.get("solver") {
        None => SolverSettings::default(),
        Some(v) => parse_solver(as_table(v, "solver")?)?,
    };
    for (k, p) in solver.off_path.iter().enumerate() {
        let at = format!("solver.off_path[{k}]");
        let id = tree.node_at(&p.path).map_err(|e| ConfigError::field(&at, e.to_string()))?;
        if tree.node(id).is_terminal() {
            return Err(ConfigError::field(&at, format!("prefix {} is a leaf", p.path)));
        }
        let want = tree.node(id).depth * model.d;
        if p.x.len() != want {
            return Err(ConfigError::field(&format!("{at}.x"), format!("expected {want} decisions, got {}", p.x.len())));
        }
    }
    Ok(Config { tree, model, solver })
}

fn parse_model(t: &Table) -> Result<ModelSpec, ConfigError> {
    let p = "model";
    let preset_name = string(t, "preset", p)?;
    let preset = Preset::parse(preset_name)
        .ok_or_else(|| ConfigError::field("model.preset", format!("unknown preset {preset_name:?}")))?;
    let d = integer(t, "d", p)? as usize;
    let capital = match (t.get("x"), t.get("X")) {
        (Some(_), Some(_)) => return Err(ConfigError::field(p, "give either x or X, not both")),
        (Some(v), None) => number(v, "model.x")?,
        (None, Some(v)) => number(v, "model.X")?,
        (None, None) if preset == Preset::CustomExpr => 0.0,
        (None, None) => return Err(ConfigError::field("model.x", "missing")),
    };
    let utility = match t.get("utility") {
        Some(v) => Some(parse_utility(as_table(v, "model.utility")?, "model.utility")?),
        None => None,
    };
    let mut payoffs = BTreeMap::new();
    if let Some(v) = t.get("payoffs") {
        for (leaf, e) in as_table(v, "model.payoffs")? {
            payoffs.insert(leaf.clone(), parse_expr(e, &format!("model.payoffs.{leaf}"))?);
        }
    }
    let certificate = match t.get("certificate") {
        None => None,
        Some(v) => {
            let ct = as_table(v, "model.certificate")?;
            Some(InteriorityCertificate {
                center: float_vec(ct, "h", "model.certificate")?,
                radius: opt_number(ct, "eps", "model.certificate")?.unwrap_or(0.0),
                lower: opt_number(ct, "c", "model.certificate")?.unwrap_or(0.0),
            })
        }
    };
    for key in t.keys() {
        if !matches!(
            key.as_str(),
            "preset" | "d" | "x" | "X" | "kappa" | "eta" | "utility" | "price_floor" | "payoffs" | "certificate"
        ) {
            return Err(ConfigError::field(format!("model.{key}"), "unknown key"));
        }
    }
    Ok(ModelSpec {
        preset,
        d,
        capital,
        kappa: opt_number(t, "kappa", p)?.unwrap_or(0.0),
        eta: opt_number(t, "eta", p)?.unwrap_or(0.0),
        utility,
        price_floor: opt_number(t, "price_floor", p)?.unwrap_or(0.0),
        payoffs,
        certificate,
    })
}

fn parse_utility(t: &Table, path: &str) -> Result<UtilityAtom, ConfigError> {
    let kind = string(t, "kind", path)?;
    let res = match kind {
        "exponential" => UtilityAtom::exponential(req_number(t, "gamma", path)?),
        "capped_linear" => UtilityAtom::capped_linear(req_number(t, "cap", path)?),
        "piecewise_linear" => {
            let pts = array(t, "breakpoints", path)?
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    let p = float_list(v, &format!("{path}.breakpoints[{k}]"))?;
                    if p.len() != 2 {
                        return Err(ConfigError::field(format!("{path}.breakpoints[{k}]"), "expected [y, u]"));
                    }
                    Ok((p[0], p[1]))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let left = opt_number(t, "left_slope", path)?.unwrap_or(f64::INFINITY);
            PiecewiseLinear::new(pts, left).map(UtilityAtom::PiecewiseLinear)
        }
        other => return Err(ConfigError::field(format!("{path}.kind"), format!("unknown utility {other:?}"))),
    };
    res.map_err(|e| ConfigError::field(path, e.to_string()))
}

fn parse_expr(v: &Value, path: &str) -> Result<ConcaveExpr, ConfigError> {
    let t = as_table(v, path)?;
    let op = string(t, "op", path)?;
    let args = |key: &str| -> Result<Vec<ConcaveExpr>, ConfigError> {
        array(t, key, path)?
            .iter()
            .enumerate()
            .map(|(k, a)| parse_expr(a, &format!("{path}.{key}[{k}]")))
            .collect()
    };
    let sub = || parse_expr(t.get("arg").ok_or_else(|| ConfigError::field(format!("{path}.arg"), "missing"))?, &format!("{path}.arg"));
    let expr = match op {
        "affine" => ConcaveExpr::affine(float_vec(t, "a", path)?, opt_number(t, "b", path)?.unwrap_or(0.0)),
        "neg_abs_affine" => ConcaveExpr::neg_abs_affine(float_vec(t, "a", path)?, opt_number(t, "b", path)?.unwrap_or(0.0)),
        "neg_quadratic" => {
            let rows = array(t, "q", path)?
                .iter()
                .enumerate()
                .map(|(k, r)| float_list(r, &format!("{path}.q[{k}]")))
                .collect::<Result<Vec<_>, _>>()?;
            ConcaveExpr::NegQuadratic(PsdMatrix::from_rows(&rows).map_err(|e| ConfigError::field(format!("{path}.q"), e.to_string()))?)
        }
        "sum" => ConcaveExpr::Sum(args("args")?),
        "min" => ConcaveExpr::Min(args("args")?),
        "scale_nonneg" => ConcaveExpr::scale(req_number(t, "lambda", path)?, sub()?)
            .map_err(|e| ConfigError::field(format!("{path}.lambda"), e.to_string()))?,
        "compose" => {
            let u = parse_utility(table(t, "utility", path)?, &format!("{path}.utility"))?;
            ConcaveExpr::compose(u, sub()?)
        }
        other => return Err(ConfigError::field(format!("{path}.op"), format!("unknown op {other:?}"))),
    };
    expr.validate().map_err(|e| ConfigError::field(path, e.to_string()))?;
    Ok(expr)
}

fn parse_solver(t: &Table) -> Result<SolverSettings, ConfigError> {
    let p = "solver";
    let mut s = SolverSettings::default();
    if let Some(v) = opt_number(t, "tol", p)? {
        s.tol = v;
    }
    if let Some(v) = opt_number(t, "quantization", p)? {
        s.quantization = v;
    }
    if !(s.tol > 0.0) || !(s.quantization > 0.0) {
        return Err(ConfigError::field(p, "tol and quantization must be > 0"));
    }
    if let Some(v) = t.get("memo_cap") {
        s.memo_cap = int_value(v, "solver.memo_cap")? as usize;
    }
    if let Some(v) = t.get("measure_cap") {
        s.measure_cap = int_value(v, "solver.measure_cap")? as u128;
    }
    if let Some(v) = t.get("grid_cap") {
        s.grid_cap = int_value(v, "solver.grid_cap")? as u128;
    }
    if let Some(v) = t.get("sign_pattern_cap") {
        s.sign_pattern_cap = int_value(v, "solver.sign_pattern_cap")? as usize;
    }
    if let Some(v) = t.get("grid") {
        let g = as_table(v, "solver.grid")?;
        let gp = "solver.grid";
        let grid = GridSettings {
            lo: req_number(g, "lo", gp)?,
            hi: req_number(g, "hi", gp)?,
            step: req_number(g, "step", gp)?,
            refine: match g.get("refine") {
                Some(v) => int_value(v, "solver.grid.refine")? as usize,
                None => 2,
            },
        };
        if !(grid.step > 0.0) || !(grid.hi >= grid.lo) {
            return Err(ConfigError::field(gp, "need step > 0 and lo <= hi"));
        }
        s.grid = Some(grid);
    }
    if let Some(v) = t.get("off_path") {
        let arr = v.as_array().ok_or_else(|| ConfigError::field("solver.off_path", "expected array"))?;
        for (k, e) in arr.iter().enumerate() {
            let path = format!("solver.off_path[{k}]");
            let et = as_table(e, &path)?;
            let pp = join(&path, "path");
            let txt = et
                .get("path")
                .and_then(Value::as_str)
                .ok_or_else(|| ConfigError::field(&pp, "expected string like \"0,1\""))?;
            let prefix = txt.parse().map_err(|e: super::ScenarioError| ConfigError::field(&pp, e.to_string()))?;
            let x = match et.get("x") {
                Some(v) => float_list(v, &join(&path, "x"))?,
                None => Vec::new(),
            };
            s.off_path.push(OffPathPoint { path: prefix, x });
        }
    }
    Ok(s)
}

fn as_table<'a>(v: &'a Value, path: &str) -> Result<&'a Table, ConfigError> {
    v.as_table().ok_or_else(|| ConfigError::field(path, "expected table"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn table<'a>(t: &'a Table, key: &str, path: &str) -> Result<&'a Table, ConfigError> {
    let p = join(path, key);
    as_table(t.get(key).ok_or_else(|| ConfigError::field(&p, "missing"))?, &p)
}

fn array<'a>(t: &'a Table, key: &str, path: &str) -> Result<&'a [Value], ConfigError> {
    let p = join(path, key);
    t.get(key)
        .ok_or_else(|| ConfigError::field(&p, "missing"))?
        .as_array()
        .map(Vec::as_slice)
        .ok_or_else(|| ConfigError::field(&p, "expected array"))
}

fn opt_array<'a>(t: &'a Table, key: &str, path: &str) -> Result<&'a [Value], ConfigError> {
    match t.get(key) {
        None => Ok(&[]),
        Some(_) => array(t, key, path),
    }
}

fn string<'a>(t: &'a Table, key: &str, path: &str) -> Result<&'a str, ConfigError> {
    let p = join(path, key);
    t.get(key)
        .ok_or_else(|| ConfigError::field(&p, "missing"))?
        .as_str()
        .ok_or_else(|| ConfigError::field(&p, "expected string"))
}

fn number(v: &Value, path: &str) -> Result<f64, ConfigError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(ConfigError::field(path, "expected number")),
    }
}

fn req_number(t: &Table, key: &str, path: &str) -> Result<f64, ConfigError> {
    let p = join(path, key);
    number(t.get(key).ok_or_else(|| ConfigError::field(&p, "missing"))?, &p)
}

fn opt_number(t: &Table, key: &str, path: &str) -> Result<Option<f64>, ConfigError> {
    t.get(key).map(|v| number(v, &join(path, key))).transpose()
}

fn int_value(v: &Value, path: &str) -> Result<i64, ConfigError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i),
        _ => Err(ConfigError::field(path, "expected nonnegative integer")),
    }
}

fn integer(t: &Table, key: &str, path: &str) -> Result<i64, ConfigError> {
    let p = join(path, key);
    int_value(t.get(key).ok_or_else(|| ConfigError::field(&p, "missing"))?, &p)
}

fn float_list(v: &Value, path: &str) -> Result<Vec<f64>, ConfigError> {
    v.as_array()
        .ok_or_else(|| ConfigError::field(path, "expected array of numbers"))?
        .iter()
        .enumerate()
        .map(|(k, x)| number(x, &format!("{path}[{k}]")))
        .collect()
}

fn float_vec(t: &Table, key: &str, path: &str) -> Result<Vec<f64>, ConfigError> {
    let p = join(path, key);
    float_list(t.get(key).ok_or_else(|| ConfigError::field(&p, "missing"))?, &p)
}

// ---------------------------------------------------------------------------
// Serialization

fn utility_value(u: &UtilityAtom) -> Value {
    let mut t = Table::new();
    match u {
        UtilityAtom::Exponential { gamma } => {
            t.insert("kind".into(), "exponential".into());
            t.insert("gamma".into(), Value::Float(*gamma));
        }
        UtilityAtom::CappedLinear { cap } => {
            t.insert("kind".into(), "capped_linear".into());
            t.insert("cap".into(), Value::Float(*cap));
        }
        UtilityAtom::PiecewiseLinear(pl) => {
            t.insert("kind".into(), "piecewise_linear".into());
            t.insert(
                "breakpoints".into(),
                Value::Array(pl.points().iter().map(|(y, u)| canon::floats(&[*y, *u])).collect()),
            );
            t.insert("left_slope".into(), Value::Float(pl.left_slope()));
        }
    }
    Value::Table(t)
}

fn expr_value(e: &ConcaveExpr) -> Value {
    let mut t = Table::new();
    let mut op = |name: &str| {
        t.insert("op".into(), name.into());
    };
    match e {
        ConcaveExpr::Affine { a, b } | ConcaveExpr::NegAbsAffine { a, b } => {
            op(if matches!(e, ConcaveExpr::Affine { .. }) { "affine" } else { "neg_abs_affine" });
            t.insert("a".into(), canon::floats(a));
            t.insert("b".into(), Value::Float(*b));
        }
        ConcaveExpr::NegQuadratic(q) => {
            op("neg_quadratic");
            let m = q.matrix();
            let rows = (0..m.nrows())
                .map(|i| canon::floats(&m.row(i).iter().copied().collect::<Vec<_>>()))
                .collect();
            t.insert("q".into(), Value::Array(rows));
        }
        ConcaveExpr::Sum(xs) | ConcaveExpr::Min(xs) => {
            op(if matches!(e, ConcaveExpr::Sum(_)) { "sum" } else { "min" });
            t.insert("args".into(), Value::Array(xs.iter().map(expr_value).collect()));
        }
        ConcaveExpr::ScaleNonneg { lambda, inner } => {
            op("scale_nonneg");
            t.insert("lambda".into(), Value::Float(*lambda));
            t.insert("arg".into(), expr_value(inner));
        }
        ConcaveExpr::Compose { utility, inner } => {
            op("compose");
            t.insert("utility".into(), utility_value(utility));
            t.insert("arg".into(), expr_value(inner));
        }
    }
    Value::Table(t)
}

impl Config {
    /// Canonical document; parses back to an identical configuration.
    pub fn to_toml(&self) -> String {
        canon::document(&self.to_table())
    }

    pub fn to_table(&self) -> Table {
        let mut root = Table::new();

        let nodes = self
            .tree
            .to_specs()
            .into_iter()
            .map(|s| {
                let mut n = Table::new();
                n.insert("id".into(), s.id.into());
                n.insert("children".into(), Value::Array(s.children.into_iter().map(Value::from).collect()));
                n.insert("prices".into(), canon::floats(&s.prices));
                if !s.measures.is_empty() {
                    n.insert("measures".into(), Value::Array(s.measures.iter().map(|m| canon::floats(m)).collect()));
                }
                Value::Table(n)
            })
            .collect();
        let mut tree = Table::new();
        tree.insert("nodes".into(), Value::Array(nodes));
        root.insert("tree".into(), Value::Table(tree));

        let m = &self.model;
        let mut model = Table::new();
        model.insert("preset".into(), m.preset.name().into());
        model.insert("d".into(), Value::Integer(m.d as i64));
        match m.preset {
            Preset::Liquidation => {
                model.insert("X".into(), Value::Float(m.capital));
                model.insert("eta".into(), Value::Float(m.eta));
                model.insert("price_floor".into(), Value::Float(m.price_floor));
            }
            Preset::ProportionalTc => {
                model.insert("x".into(), Value::Float(m.capital));
                model.insert("kappa".into(), Value::Float(m.kappa));
            }
            Preset::Frictionless => {
                model.insert("x".into(), Value::Float(m.capital));
            }
            Preset::CustomExpr => {}
        }
        if let Some(u) = &m.utility {
            model.insert("utility".into(), utility_value(u));
        }
        if !m.payoffs.is_empty() {
            let p: Table = m.payoffs.iter().map(|(k, e)| (k.clone(), expr_value(e))).collect();
            model.insert("payoffs".into(), Value::Table(p));
        }
        if let Some(c) = &m.certificate {
            let mut ct = Table::new();
            ct.insert("h".into(), canon::floats(&c.center));
            ct.insert("eps".into(), Value::Float(c.radius));
            ct.insert("c".into(), Value::Float(c.lower));
            model.insert("certificate".into(), Value::Table(ct));
        }
        root.insert("model".into(), Value::Table(model));

        let s = &self.solver;
        let mut solver = Table::new();
        solver.insert("tol".into(), Value::Float(s.tol));
        solver.insert("quantization".into(), Value::Float(s.quantization));
        solver.insert("memo_cap".into(), Value::Integer(s.memo_cap as i64));
        solver.insert("measure_cap".into(), Value::Integer(s.measure_cap as i64));
        solver.insert("grid_cap".into(), Value::Integer(s.grid_cap as i64));
        solver.insert("sign_pattern_cap".into(), Value::Integer(s.sign_pattern_cap as i64));
        if let Some(g) = &s.grid {
            let mut gt = Table::new();
            gt.insert("lo".into(), Value::Float(g.lo));
            gt.insert("hi".into(), Value::Float(g.hi));
            gt.insert("step".into(), Value::Float(g.step));
            gt.insert("refine".into(), Value::Integer(g.refine as i64));
            solver.insert("grid".into(), Value::Table(gt));
        }
        if !s.off_path.is_empty() {
            solver.insert(
                "off_path".into(),
                Value::Array(
                    s.off_path
                        .iter()
                        .map(|p| {
                            let mut t = Table::new();
                            t.insert("path".into(), p.path.to_string().into());
                            t.insert("x".into(), canon::floats(&p.x));
                            Value::Table(t)
                        })
                        .collect(),
                ),
            );
        }
        root.insert("solver".into(), Value::Table(solver));
        root
    }
}

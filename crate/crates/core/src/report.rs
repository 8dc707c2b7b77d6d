//! Run reports: one canonical TOML document per configuration, one section
//! per command, rewritten in place so the latest result of each command is
//! kept side by side.

use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::canon;
use crate::dp::{Policy, PolicyEntry, SolveReport, Verification};
use crate::ext::ExtReal;
use crate::na::{NaReport, NodeVerdict};
use crate::oracle::{Comparison, OracleResult};
use crate::payoff::InteriorityCertificate;
use crate::scenario::ScenarioTree;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of the configuration bytes.
pub fn config_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn ext(v: ExtReal) -> Value {
    Value::Float(v.to_f64())
}

fn table(pairs: impl IntoIterator<Item = (&'static str, Value)>) -> Table {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn meta_section(command: &str, digest: &str) -> Table {
    table([
        ("command", Value::from(command)),
        ("config_digest", Value::from(digest)),
        ("tool_version", Value::from(TOOL_VERSION)),
    ])
}

pub fn validate_section(tree: &ScenarioTree) -> Table {
    table([
        ("verdict", Value::from("PASS")),
        ("depth", Value::Integer(tree.depth() as i64)),
        ("nodes", Value::Integer(tree.nodes().len() as i64)),
        ("leaves", Value::Integer(tree.leaves().len() as i64)),
        ("market_dim", Value::Integer(tree.market_dim() as i64)),
    ])
}

fn verdict_value(v: &NodeVerdict) -> Value {
    let l = &v.linearity;
    let mut t = table([
        ("node", Value::from(v.id.as_str())),
        ("path", Value::from(v.prefix.to_string())),
        ("cone", Value::from(v.cone.kind())),
        ("linear", Value::Boolean(l.linear)),
        ("exact", Value::Boolean(l.exact)),
        ("lineality_dim", Value::Integer(l.lineality.len() as i64)),
    ]);
    if let Some(c) = &l.certificate {
        t.insert("certificate".into(), canon::floats(c));
    }
    Value::Table(t)
}

pub fn na_section(na: &NaReport) -> Table {
    table([
        ("verdict", Value::from(if na.pass() { "PASS" } else { "FAIL" })),
        ("exact", Value::Boolean(na.exact())),
        ("nodes", Value::Array(na.nodes.iter().map(verdict_value).collect())),
    ])
}

pub fn certificate_section(c: &InteriorityCertificate) -> Table {
    table([
        ("center", canon::floats(&c.center)),
        ("radius", Value::Float(c.radius)),
        ("lower", Value::Float(c.lower)),
    ])
}

fn entry_value(e: &PolicyEntry) -> Value {
    Value::Table(table([
        ("node", Value::from(e.id.as_str())),
        ("path", Value::from(e.prefix.to_string())),
        ("x", canon::floats(&e.x)),
        ("h", canon::floats(&e.h)),
        ("value", Value::Float(e.value)),
        ("worst_measure", Value::Integer(e.worst_measure as i64)),
    ]))
}

pub fn verification_value(v: &Verification) -> Value {
    let witness = v
        .optimality_witness
        .iter()
        .map(|(id, h)| Value::Table(table([("node", Value::from(id.as_str())), ("h", canon::floats(h))])))
        .collect();
    Value::Table(table([
        ("pass", Value::Boolean(v.pass())),
        ("threshold", Value::Float(v.threshold)),
        ("measures_checked", Value::Integer(v.measures_checked as i64)),
        ("measures_sampled", Value::Boolean(v.measures_sampled)),
        ("attainment_margin", Value::Float(v.attainment_margin)),
        ("attainment_witness", Value::Array(v.attainment_witness.iter().map(|k| Value::Integer(*k as i64)).collect())),
        ("alternatives_checked", Value::Integer(v.alternatives_checked as i64)),
        ("optimality_margin", Value::Float(v.optimality_margin)),
        ("optimality_witness", Value::Array(witness)),
    ]))
}

pub fn solve_section(r: &SolveReport, verification: Option<&Verification>) -> Table {
    let mut t = table([
        ("value", Value::Float(r.value)),
        ("bound", Value::Float(r.bound)),
        ("certificate_value", Value::Float(r.certificate_value)),
        ("tol", Value::Float(r.tol)),
        ("na_exact", Value::Boolean(r.na.exact())),
        ("policy", Value::Array(r.policy.entries.iter().map(entry_value).collect())),
        (
            "stats",
            Value::Table(table([
                ("one_step_solves", Value::Integer(r.stats.one_step_solves as i64)),
                ("memo_hits", Value::Integer(r.stats.memo_hits as i64)),
                ("memo_entries", Value::Integer(r.stats.memo_entries as i64)),
            ])),
        ),
    ]);
    if !r.off_path.is_empty() {
        t.insert("off_path".into(), Value::Array(r.off_path.iter().map(entry_value).collect()));
    }
    if let Some(v) = verification {
        t.insert("verification".into(), verification_value(v));
    }
    t
}

pub fn oracle_section(tree: &ScenarioTree, o: &OracleResult, cmp: Option<&Comparison>) -> Table {
    let policy = o
        .policy
        .iter()
        .map(|(n, h)| Value::Table(table([("node", Value::from(tree.node(*n).id.as_str())), ("h", canon::floats(h))])))
        .collect();
    let passes = o
        .passes
        .iter()
        .map(|p| {
            Value::Table(table([
                ("step", Value::Float(p.step)),
                ("points", Value::Integer(p.points.min(i64::MAX as u128) as i64)),
                ("value", Value::Float(p.value)),
            ]))
        })
        .collect();
    let mut t = table([
        ("value", Value::Float(o.value)),
        ("policy", Value::Array(policy)),
        ("passes", Value::Array(passes)),
        ("worst_choice", Value::Array(o.worst_choice.iter().map(|k| Value::Integer(*k as i64)).collect())),
    ]);
    if let Some(c) = cmp {
        let distances =
            c.distances.iter().map(|(id, d)| Value::Table(table([("node", Value::from(id.as_str())), ("distance", Value::Float(*d))]))).collect();
        t.insert(
            "comparison".into(),
            Value::Table(table([
                ("pass", Value::Boolean(c.pass())),
                ("tol", Value::Float(c.tol)),
                ("value_gap", Value::Float(c.value_gap)),
                ("policy_gap", Value::Float(c.policy_gap)),
                ("distances", Value::Array(distances)),
            ])),
        );
    }
    t
}

pub fn horizon_section(leaf: &str, ray: &[f64], value: ExtReal) -> Table {
    table([("leaf", Value::from(leaf)), ("ray", canon::floats(ray)), ("value", ext(value))])
}

/// Replaces the named sections of `existing` (ignored when it does not
/// parse) and renders the canonical document.
pub fn merge(existing: Option<&str>, sections: Vec<(&str, Table)>) -> String {
    let mut root: Table = existing.and_then(|s| s.parse().ok()).unwrap_or_default();
    for (name, t) in sections {
        root.insert(name.to_string(), Value::Table(t));
    }
    canon::document(&root)
}

/// Value and policy of a `[solve]` section, for comparison against a later
/// oracle run.
pub fn read_solve(doc: &str, tree: &ScenarioTree) -> Option<(f64, Policy)> {
    let root: Table = doc.parse().ok()?;
    let solve = root.get("solve")?.as_table()?;
    let value = solve.get("value")?.as_float()?;
    let mut entries = Vec::new();
    for e in solve.get("policy")?.as_array()? {
        let e = e.as_table()?;
        let id = e.get("node")?.as_str()?;
        let node = tree.find(id)?;
        let floats = |k: &str| -> Option<Vec<f64>> { e.get(k)?.as_array()?.iter().map(Value::as_float).collect() };
        entries.push(PolicyEntry {
            node,
            id: id.to_string(),
            prefix: tree.prefix_of(node),
            x: floats("x")?,
            h: floats("h")?,
            value: e.get("value")?.as_float()?,
            worst_measure: e.get("worst_measure")?.as_integer()? as usize,
            radius: 0.0,
        });
    }
    Some((value, Policy { entries }))
}

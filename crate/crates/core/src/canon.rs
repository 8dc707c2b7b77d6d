//! Canonical TOML emitter: keys sorted, floats with 17 significant digits.
//! Used for configuration round-trips and for run reports so that repeated
//! runs diff cleanly.

use std::fmt::Write;
use toml::Value;

pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

fn format_key(k: &str) -> String {
    if !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        k.to_string()
    } else {
        format_str(k)
    }
}

fn format_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04X}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Inline rendering of a value; tables become `{ k = v, ... }` with sorted keys.
pub fn inline(v: &Value) -> String {
    match v {
        Value::String(s) => format_str(s),
        Value::Integer(i) => i.to_string(),
        Value::Float(x) => format_float(*x),
        Value::Boolean(b) => b.to_string(),
        Value::Datetime(d) => d.to_string(),
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(inline).collect();
            format!("[{}]", parts.join(", "))
        }
        Value::Table(t) => {
            let mut keys: Vec<&String> = t.keys().collect();
            keys.sort();
            if keys.is_empty() {
                return "{}".into();
            }
            let parts: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{} = {}", format_key(k), inline(&t[k])))
                .collect();
            format!("{{ {} }}", parts.join(", "))
        }
    }
}

/// Document rendering: scalar top-level keys first, then one `[section]` per
/// top-level table. Arrays of tables are written one element per line.
pub fn document(root: &toml::Table) -> String {
    let mut keys: Vec<&String> = root.keys().collect();
    keys.sort();
    let mut out = String::new();
    for k in keys.iter().filter(|k| !root[k.as_str()].is_table()) {
        let _ = writeln!(out, "{} = {}", format_key(k), inline(&root[k.as_str()]));
    }
    for k in keys.iter().filter(|k| root[k.as_str()].is_table()) {
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "[{}]", format_key(k));
        let table = root[k.as_str()].as_table().expect("checked above");
        let mut inner: Vec<&String> = table.keys().collect();
        inner.sort();
        for ik in inner {
            let v = &table[ik];
            match v {
                Value::Array(items) if items.iter().any(|i| i.is_table() || i.is_array()) => {
                    let _ = writeln!(out, "{} = [", format_key(ik));
                    for item in items {
                        let _ = writeln!(out, "  {},", inline(item));
                    }
                    out.push_str("]\n");
                }
                _ => {
                    let _ = writeln!(out, "{} = {}", format_key(ik), inline(v));
                }
            }
        }
    }
    out
}

/// Convenience for building tables in report code.
pub fn floats(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| Value::Float(*x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_keep_seventeen_digits_and_reparse() {
        let x = 0.1f64 + 0.2;
        let s = format_float(x);
        assert_eq!(s, "3.0000000000000004e-1");
        let doc: toml::Table = toml::from_str(&format!("v = {s}")).unwrap();
        assert_eq!(doc["v"].as_float().unwrap(), x);
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn document_sorts_keys_and_parses_back() {
        let src = r#"
            z = 1
            [b]
            y = [ { q = 1.5, p = "x" }, { p = "y", q = -2.0 } ]
            a = { m = 3, l = [1.0, 2.0] }
            [a]
            k = "v"
        "#;
        let table: toml::Table = toml::from_str(src).unwrap();
        let text = document(&table);
        let back: toml::Table = toml::from_str(&text).unwrap();
        assert_eq!(back, table);
        assert!(text.find("[a]").unwrap() < text.find("[b]").unwrap());
        assert_eq!(document(&back), text);
    }
}

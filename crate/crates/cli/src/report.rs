//! The versioned report envelope and its text rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const REPORT_FORMAT: &str = "polychar-report/1";

/// A measured value with the tolerance it was judged against.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Checked {
    pub value: f64,
    pub tol: f64,
    pub passed: bool,
}

impl Checked {
    pub fn at_most(value: f64, tol: f64) -> Self {
        Checked { value, tol, passed: value <= tol }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub format: &'static str,
    pub command: String,
    pub inputs_digest: String,
    pub tolerances: BTreeMap<String, f64>,
    pub results: Value,
    pub passed: bool,
    pub wall_time_ms: f64,
}

pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    format!("sha256:{:x}", h.finalize())
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} ({})", self.command, self.format);
        let _ = writeln!(out, "inputs: {}", self.inputs_digest);
        let tols: Vec<String> = self.tolerances.iter().map(|(k, v)| format!("{k}={v:e}")).collect();
        let _ = writeln!(out, "tolerances: {}", tols.join(", "));
        render(&mut out, &self.results, 0);
        let _ = writeln!(out, "status: {}", if self.passed { "ok" } else { "FAILED" });
        let _ = writeln!(out, "wall time: {:.1} ms", self.wall_time_ms);
        out
    }
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("none".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(match n.as_f64() {
            Some(x) if n.is_f64() => format_float(x),
            _ => n.to_string(),
        }),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn format_float(x: f64) -> String {
    if x == 0.0 || (1e-3..1e4).contains(&x.abs()) {
        format!("{x:.6}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.3e}")
    }
}

fn as_checked(v: &Value) -> Option<String> {
    let o = v.as_object()?;
    if o.len() != 3 {
        return None;
    }
    let value = o.get("value")?.as_f64()?;
    let tol = o.get("tol")?.as_f64()?;
    let passed = o.get("passed")?.as_bool()?;
    Some(format!("{} (tol {tol:e}) {}", format_float(value), if passed { "ok" } else { "FAIL" }))
}

fn render(out: &mut String, v: &Value, depth: usize) {
    let pad = "  ".repeat(depth);
    let Value::Object(map) = v else {
        let _ = writeln!(out, "{pad}{}", scalar(v).unwrap_or_else(|| v.to_string()));
        return;
    };
    for (k, val) in map {
        if k == "coefficient_norms" {
            coefficient_table(out, val, &pad);
            continue;
        }
        if k == "table" {
            check_table(out, val, &pad);
            continue;
        }
        if let Some(s) = scalar(val).or_else(|| as_checked(val)) {
            let _ = writeln!(out, "{pad}{k}: {s}");
            continue;
        }
        match val {
            Value::Array(items) if items.iter().all(|x| scalar(x).is_some()) => {
                let parts: Vec<String> = items.iter().filter_map(scalar).collect();
                let _ = writeln!(out, "{pad}{k}: [{}]", parts.join(", "));
            }
            Value::Array(items) => {
                let _ = writeln!(out, "{pad}{k}:");
                for (i, x) in items.iter().enumerate() {
                    let _ = writeln!(out, "{pad}  [{i}]");
                    render(out, x, depth + 2);
                }
            }
            _ => {
                let _ = writeln!(out, "{pad}{k}:");
                render(out, val, depth + 1);
            }
        }
    }
}

/// The `‖θ_α‖` column: largest coefficient norm for each total degree.
fn coefficient_table(out: &mut String, v: &Value, pad: &str) {
    let _ = writeln!(out, "{pad}coefficient norms:");
    let _ = writeln!(out, "{pad}  |alpha|  max ||theta_alpha||");
    for (k, x) in v.as_array().into_iter().flatten().enumerate() {
        let _ = writeln!(out, "{pad}  {k:>7}  {:.6e}", x.as_f64().unwrap_or(f64::NAN));
    }
}

fn check_table(out: &mut String, v: &Value, pad: &str) {
    let rows: Vec<&Value> = v.as_array().into_iter().flatten().collect();
    let _ = writeln!(out, "{pad}{:<16} {:<28} {:>6} {:>12} {:>10} {:>6}", "suite", "check", "count", "worst", "tol", "status");
    for r in rows {
        let get = |k: &str| r.get(k).and_then(scalar).unwrap_or_default();
        let _ = writeln!(
            out,
            "{pad}{:<16} {:<28} {:>6} {:>12} {:>10} {:>6}",
            get("suite"),
            get("check"),
            get("count"),
            get("worst"),
            get("tol"),
            if r.get("failed").and_then(Value::as_u64).unwrap_or(0) == 0 { "ok" } else { "FAIL" }
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_separates_parts() {
        assert_ne!(digest(&[b"ab", b"c"]), digest(&[b"a", b"bc"]));
        assert!(digest(&[b"x"]).starts_with("sha256:"));
    }

    #[test]
    fn text_rendering_shows_tolerances_and_table() {
        let r = Report {
            format: REPORT_FORMAT,
            command: "analyze".into(),
            inputs_digest: digest(&[b"x"]),
            tolerances: BTreeMap::from([("tol".into(), 1e-9)]),
            results: serde_json::json!({
                "residual": Checked::at_most(1e-12, 1e-9),
                "coefficient_norms": [1.0, 0.5],
            }),
            passed: true,
            wall_time_ms: 1.0,
        };
        let text = r.to_text();
        assert!(text.contains("residual: 1.000e-12 (tol 1e-9) ok"), "{text}");
        assert!(text.contains("max ||theta_alpha||"));
    }
}

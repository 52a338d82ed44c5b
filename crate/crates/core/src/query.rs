//! Dotted-path lookups into device snapshots.

use serde_json::Value;
use thiserror::Error;

/// Absolute tolerance for numeric comparisons in assertions.
pub const NUMERIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown query path `{0}`")]
pub struct QueryError(pub String);

/// Short names accepted for commonly asserted fields.
const ALIASES: &[(&str, &str)] = &[
    ("door", "security.door"),
    ("traffic.green", "traffic.green_road"),
    ("now_ms", "kernel.now_ms"),
];

fn expand(path: &str) -> String {
    for (short, long) in ALIASES {
        if path == *short {
            return long.to_string();
        }
        if let Some(rest) = path.strip_prefix(short).and_then(|r| r.strip_prefix('.')) {
            return format!("{long}.{rest}");
        }
    }
    path.to_string()
}

/// Walks `root` along `path`. Segments index objects by key and arrays by
/// zero-based position; `len` on an array or object yields its size.
pub fn resolve(root: &Value, path: &str) -> Result<Value, QueryError> {
    let full = expand(path.trim());
    if full.is_empty() {
        return Err(QueryError(path.to_string()));
    }
    let mut cur = root;
    let segments: Vec<&str> = full.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        cur = match cur {
            Value::Object(map) => match map.get(*seg) {
                Some(v) => v,
                None if *seg == "len" && last => return Ok(Value::from(map.len())),
                None => return Err(QueryError(path.to_string())),
            },
            Value::Array(items) => {
                if *seg == "len" && last {
                    return Ok(Value::from(items.len()));
                }
                seg.parse::<usize>()
                    .ok()
                    .and_then(|idx| items.get(idx))
                    .ok_or_else(|| QueryError(path.to_string()))?
            }
            _ => return Err(QueryError(path.to_string())),
        };
    }
    Ok(cur.clone())
}

/// Structural equality with numeric tolerance.
pub fn values_match(expected: &Value, actual: &Value) -> bool {
    match (expected, actual) {
        (Value::Number(a), Value::Number(b)) => match (a.as_f64(), b.as_f64()) {
            (Some(x), Some(y)) => (x - y).abs() <= NUMERIC_TOLERANCE,
            _ => a == b,
        },
        (Value::Array(a), Value::Array(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_match(x, y)),
        (Value::Object(a), Value::Object(b)) => {
            a.len() == b.len() && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| values_match(v, w)))
        }
        _ => expected == actual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn state() -> Value {
        json!({
            "parking": {"available": 4, "indicators": ["RED", "RED"]},
            "security": {"door": {"state": "CLOSED"}},
            "traffic": {"green_road": 0, "green_sequence": [1, 4]},
            "kernel": {"now_ms": 7}
        })
    }

    #[test]
    fn plain_and_aliased() {
        let s = state();
        assert_eq!(resolve(&s, "parking.available").unwrap(), 4);
        assert_eq!(resolve(&s, "door.state").unwrap(), "CLOSED");
        assert_eq!(resolve(&s, "traffic.green").unwrap(), 0);
        assert_eq!(resolve(&s, "now_ms").unwrap(), 7);
    }

    #[test]
    fn arrays() {
        let s = state();
        assert_eq!(resolve(&s, "traffic.green_sequence.1").unwrap(), 4);
        assert_eq!(resolve(&s, "traffic.green_sequence.len").unwrap(), 2);
        assert!(resolve(&s, "traffic.green_sequence.2").is_err());
    }

    #[test]
    fn unknown_paths() {
        let s = state();
        for p in ["parking.nope", "nope", "", "parking.available.x", "doors.state"] {
            assert!(resolve(&s, p).is_err(), "{p}");
        }
    }

    #[test]
    fn matching() {
        assert!(values_match(&json!(2), &json!(2.0)));
        assert!(values_match(&json!(0.1), &json!(0.1 + 1e-12)));
        assert!(!values_match(&json!(0.1), &json!(0.2)));
        assert!(values_match(&json!([1, 4]), &json!([1.0, 4])));
        assert!(!values_match(&json!("ON"), &json!("OFF")));
    }
}

//! Report helpers: fixed 4-decimal rounding and aligned text tables.

use serde_json::Value;

pub fn round4(x: f64) -> f64 {
    if x.is_finite() {
        (x * 1e4).round() / 1e4
    } else {
        x
    }
}

/// Rounds every float in a JSON tree to 4 decimals.
pub fn rounded(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|x| serde_json::Number::from_f64(round4(x)))
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(a) => Value::Array(a.into_iter().map(rounded).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, rounded(v))).collect()),
        other => other,
    }
}

pub fn to_rounded_json<T: serde::Serialize>(value: &T) -> anyhow::Result<Value> {
    Ok(rounded(serde_json::to_value(value)?))
}

/// First column left-aligned, the rest right-aligned.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let mut out = String::new();
        for (k, cell) in cells.iter().enumerate().take(cols) {
            if k == 0 {
                out.push_str(&format!("{:<w$}", cell, w = width[0]));
            } else {
                out.push_str(&format!("  {:>w$}", cell, w = width[k]));
            }
        }
        out.trim_end().to_string()
    };
    let mut out = line(&header.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

pub fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_nested() {
        let v = serde_json::json!({"a": 0.123456, "b": [1.00005, 2], "c": {"d": -0.33333}});
        assert_eq!(rounded(v), serde_json::json!({"a": 0.1235, "b": [1.0001, 2], "c": {"d": -0.3333}}));
    }

    #[test]
    fn table_alignment() {
        let t = table(&["name", "v"], &[vec!["a".into(), "1.5".into()], vec!["long".into(), "10.25".into()]]);
        assert_eq!(t, "name      v\na       1.5\nlong  10.25\n");
    }
}

use serde::Serialize;
use serde_json::Value;

use crate::ReportFormat;

pub fn render<T: Serialize>(value: &T, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(value).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Text => {
            let value = serde_json::to_value(value).expect("report serializes");
            let mut out = String::new();
            flatten("", &value, &mut out);
            out
        }
    }
}

pub fn print<T: Serialize>(value: &T, format: ReportFormat) {
    print!("{}", render(value, format));
}

// Dotted `key: value` lines; short scalar arrays stay on one line.
fn flatten(prefix: &str, value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        Value::Array(items) if items.iter().any(|v| v.is_object() || v.is_array()) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), v, out);
            }
        }
        Value::String(s) => out.push_str(&format!("{prefix}: {s}\n")),
        other => out.push_str(&format!("{prefix}: {other}\n")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn text_flattens_nested_objects() {
        let v = json!({"a": {"b": 1, "c": [1, 2]}, "d": "x", "e": [{"f": true}]});
        assert_eq!(
            render(&v, ReportFormat::Text),
            "a.b: 1\na.c: [1,2]\nd: x\ne[0].f: true\n"
        );
    }
}

//! The subset of JSON Schema used by the tool descriptors.
//!
//! Supported keywords: `type`, `properties`, `required`,
//! `additionalProperties` (boolean), `minLength`, `maxLength`, `pattern`,
//! `minimum`, `maximum`, `enum`, `items`. Anything else is ignored.

use regex::Regex;
use serde_json::Value;

fn type_matches(ty: &str, v: &Value) -> bool {
    match ty {
        "object" => v.is_object(),
        "array" => v.is_array(),
        "string" => v.is_string(),
        "boolean" => v.is_boolean(),
        "null" => v.is_null(),
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64() || v.as_f64().is_some_and(|f| f.fract() == 0.0),
        _ => false,
    }
}

/// Checks `value` against `schema`; the error names the offending path.
pub fn validate(schema: &Value, value: &Value) -> Result<(), String> {
    check(schema, value, "$")
}

fn check(schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    if let Some(ty) = schema.get("type").and_then(Value::as_str) {
        if !type_matches(ty, v) {
            return Err(format!("{path}: expected {ty}"));
        }
    }
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(v) {
            return Err(format!("{path}: must be one of {}", Value::Array(options.clone())));
        }
    }
    if let Some(s) = v.as_str() {
        let len = s.chars().count() as u64;
        if let Some(min) = schema.get("minLength").and_then(Value::as_u64) {
            if len < min {
                return Err(format!("{path}: shorter than {min} characters"));
            }
        }
        if let Some(max) = schema.get("maxLength").and_then(Value::as_u64) {
            if len > max {
                return Err(format!("{path}: longer than {max} characters"));
            }
        }
        if let Some(pat) = schema.get("pattern").and_then(Value::as_str) {
            let re = Regex::new(pat).map_err(|e| format!("{path}: bad schema pattern: {e}"))?;
            if !re.is_match(s) {
                return Err(format!("{path}: does not match {pat}"));
            }
        }
    }
    if let Some(n) = v.as_f64() {
        if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
            if n < min {
                return Err(format!("{path}: below minimum {min}"));
            }
        }
        if let Some(max) = schema.get("maximum").and_then(Value::as_f64) {
            if n > max {
                return Err(format!("{path}: above maximum {max}"));
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, item) in arr.iter().enumerate() {
            check(items, item, &format!("{path}[{i}]"))?;
        }
    }
    if let Some(obj) = v.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        if let Some(required) = schema.get("required").and_then(Value::as_array) {
            for name in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(name) {
                    return Err(format!("{path}: missing required property `{name}`"));
                }
            }
        }
        let closed = schema.get("additionalProperties") == Some(&Value::Bool(false));
        for (key, val) in obj {
            match props.and_then(|p| p.get(key)) {
                Some(sub) => check(sub, val, &format!("{path}.{key}"))?,
                None if closed => return Err(format!("{path}: unexpected property `{key}`")),
                None => {}
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn schema() -> Value {
        json!({
            "type": "object",
            "properties": {
                "query": {"type": "string", "minLength": 1},
                "wing": {"type": "string", "pattern": "^[a-z0-9_]+$"},
                "n": {"type": "integer", "minimum": 1, "maximum": 10},
                "mode": {"type": "string", "enum": ["a", "b"]},
                "tags": {"type": "array", "items": {"type": "string"}}
            },
            "required": ["query"],
            "additionalProperties": false
        })
    }

    #[test]
    fn accepts_valid() {
        let ok = json!({"query": "x", "wing": "dev_1", "n": 3, "mode": "a", "tags": ["t"]});
        assert_eq!(validate(&schema(), &ok), Ok(()));
    }

    #[test]
    fn rejects_each_violation() {
        let s = schema();
        for bad in [
            json!({}),
            json!("str"),
            json!({"query": ""}),
            json!({"query": 3}),
            json!({"query": "x", "wing": "Dev"}),
            json!({"query": "x", "n": 0}),
            json!({"query": "x", "n": 11}),
            json!({"query": "x", "n": 1.5}),
            json!({"query": "x", "mode": "c"}),
            json!({"query": "x", "tags": [1]}),
            json!({"query": "x", "extra": true}),
        ] {
            assert!(validate(&s, &bad).is_err(), "{bad} should fail");
        }
    }

    #[test]
    fn error_names_path() {
        let err = validate(&schema(), &json!({"query": "x", "wing": "Dev"})).unwrap_err();
        assert!(err.starts_with("$.wing"));
    }
}

//! Lenient JSON extraction from model text plus schema validation.

use serde::de::DeserializeOwned;
use serde_json::Value;

use super::GatewayError;

/// Finds the JSON value in a model response: the whole text, a fenced code
/// block, or the first balanced object/array embedded in prose.
pub fn extract_json(text: &str) -> Result<Value, String> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err("empty response".into());
    }
    if let Ok(v) = serde_json::from_str::<Value>(trimmed) {
        return Ok(v);
    }
    let unfenced = strip_code_fence(trimmed);
    if let Ok(v) = serde_json::from_str::<Value>(unfenced) {
        return Ok(v);
    }
    let fragment = first_balanced(unfenced).ok_or_else(|| "no JSON object found in response".to_string())?;
    serde_json::from_str(fragment).map_err(|e| format!("invalid JSON: {e}"))
}

fn strip_code_fence(s: &str) -> &str {
    let Some(start) = s.find("```") else { return s };
    let after = &s[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    match body.find("```") {
        Some(end) => body[..end].trim(),
        None => body.trim(),
    }
}

fn first_balanced(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut start = None;
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in s.char_indices() {
        if in_str {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' if start.is_some() => in_str = true,
            '{' | '[' => {
                start.get_or_insert(i);
                depth += 1;
            }
            '}' | ']' if start.is_some() => {
                depth -= 1;
                if depth == 0 {
                    return start.map(|st| &s[st..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Compiled object schema.
pub struct SchemaValidator {
    validator: jsonschema::Validator,
}

impl SchemaValidator {
    pub fn new(schema: &Value) -> Result<Self, GatewayError> {
        if schema.get("type").and_then(Value::as_str) != Some("object") {
            return Err(GatewayError::InvalidSchema("schema must describe an object".into()));
        }
        let validator =
            jsonschema::validator_for(schema).map_err(|e| GatewayError::InvalidSchema(e.to_string()))?;
        Ok(Self { validator })
    }

    pub fn validate(&self, value: &Value) -> Result<(), String> {
        let errors: Vec<String> = self
            .validator
            .iter_errors(value)
            .map(|e| {
                let path = e.instance_path().to_string();
                if path.is_empty() {
                    e.to_string()
                } else {
                    format!("{path}: {e}")
                }
            })
            .collect();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors.join("; "))
        }
    }

    pub fn parse<T: DeserializeOwned>(&self, raw: &str) -> Result<T, String> {
        let value = extract_json(raw)?;
        self.validate(&value)?;
        serde_json::from_value(value).map_err(|e| format!("unexpected shape: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn extracts_from_fences_and_prose() {
        assert_eq!(extract_json(r#"{"a":1}"#).unwrap(), json!({"a":1}));
        assert_eq!(extract_json("```json\n{\"a\":2}\n```").unwrap(), json!({"a":2}));
        assert_eq!(
            extract_json("Sure! Here it is: {\"a\": \"}{\", \"b\": [1]} hope that helps").unwrap(),
            json!({"a":"}{","b":[1]})
        );
        assert!(extract_json("no json here").is_err());
        assert!(extract_json("   ").is_err());
    }

    #[test]
    fn schema_errors_are_reported() {
        let v = SchemaValidator::new(&json!({
            "type":"object",
            "properties":{"score":{"type":"number","minimum":0}},
            "required":["score"]
        }))
        .unwrap();
        assert!(v.validate(&json!({"score": 0.3})).is_ok());
        let err = v.validate(&json!({"score": "x"})).unwrap_err();
        assert!(err.contains("/score"), "{err}");
        assert!(v.validate(&json!({})).is_err());
    }
}

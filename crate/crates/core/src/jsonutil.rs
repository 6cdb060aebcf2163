//! Lenient extraction of a JSON value from raw model output.
//!
//! Accepts a bare JSON document, optionally wrapped in a Markdown code
//! fence. Anything else (prose, prose around JSON) is a parse failure.

use serde_json::Value;

pub(crate) fn parse_model_json(raw: &str) -> Result<Value, String> {
    let body = strip_fence(raw.trim());
    serde_json::from_str::<Value>(body).map_err(|e| format!("invalid JSON: {e}"))
}

fn strip_fence(s: &str) -> &str {
    let Some(rest) = s.strip_prefix("```") else {
        return s;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_and_bare() {
        assert!(parse_model_json("{\"a\": 1}").is_ok());
        assert!(parse_model_json("```json\n{\"a\": 1}\n```").is_ok());
        assert!(parse_model_json("```\n[1,2]\n```").is_ok());
    }

    #[test]
    fn prose_rejected() {
        assert!(parse_model_json("Sure! Here is the JSON: {\"a\": 1}").is_err());
        assert!(parse_model_json("").is_err());
    }
}

//! Extracting structured verdicts from free-form model text.
//!
//! Models are asked for bare JSON but routinely wrap it in prose or code
//! fences. The extractor scans for the first balanced `{...}` region that
//! actually parses as a JSON object, tracking string and escape state so
//! braces inside string values do not confuse the balance count.

use crate::domain::{AgentVerdict, BloomLevel};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("no JSON object found in the response")]
    NoJsonFound,
    #[error("response JSON is missing key {0:?}")]
    MissingKey(&'static str),
    #[error("{key} = {value} outside [0, 100]")]
    RangeViolation { key: &'static str, value: f64 },
    #[error("{key} has the wrong type: expected {expected}")]
    TypeMismatch {
        key: &'static str,
        expected: &'static str,
    },
}

/// Find the first balanced, parseable JSON object anywhere in `text`.
///
/// Candidates are tried left to right; a balanced region that fails to
/// parse (stray text that merely looks brace-delimited) is skipped rather
/// than treated as fatal.
pub fn extract_first_json_object(text: &str) -> Option<Value> {
    for (start, c) in text.char_indices() {
        if c != '{' {
            continue;
        }
        if let Some(end) = balanced_object_end(text, start) {
            if let Ok(value) = serde_json::from_str::<Value>(&text[start..=end]) {
                if value.is_object() {
                    return Some(value);
                }
            }
        }
    }
    None
}

/// Byte index of the `}` closing the object opened at `start`, honoring
/// JSON string and escape rules. `None` if the object never closes.
fn balanced_object_end(text: &str, start: usize) -> Option<usize> {
    let mut depth: u32 = 0;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, c) in text[start..].char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + offset);
                }
            }
            _ => {}
        }
    }
    None
}

/// Pull a score out of the object, accepting a JSON number or a numeric
/// string ("85"), and enforce the [0, 100] range.
fn score_field(object: &Value, key: &'static str) -> Result<f64, ParseError> {
    let raw = object.get(key).ok_or(ParseError::MissingKey(key))?;
    let value = match raw {
        Value::Number(n) => n.as_f64().ok_or(ParseError::TypeMismatch {
            key,
            expected: "number in [0, 100]",
        })?,
        Value::String(s) => s.trim().parse::<f64>().map_err(|_| ParseError::TypeMismatch {
            key,
            expected: "number in [0, 100]",
        })?,
        _ => {
            return Err(ParseError::TypeMismatch {
                key,
                expected: "number in [0, 100]",
            })
        }
    };
    if !value.is_finite() {
        return Err(ParseError::TypeMismatch {
            key,
            expected: "finite number",
        });
    }
    if !(0.0..=100.0).contains(&value) {
        return Err(ParseError::RangeViolation { key, value });
    }
    Ok(value)
}

/// Suggestions may arrive as an array of strings or, leniently, a single
/// string. Blank entries are dropped.
fn suggestions_field(object: &Value) -> Result<Vec<String>, ParseError> {
    const KEY: &str = "improvement_suggestions";
    let raw = object.get(KEY).ok_or(ParseError::MissingKey(KEY))?;
    let items: Vec<String> = match raw {
        Value::Array(values) => values
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.trim().to_string()),
                _ => Err(ParseError::TypeMismatch {
                    key: KEY,
                    expected: "array of strings",
                }),
            })
            .collect::<Result<_, _>>()?,
        Value::String(s) => vec![s.trim().to_string()],
        _ => {
            return Err(ParseError::TypeMismatch {
                key: KEY,
                expected: "array of strings",
            })
        }
    };
    Ok(items.into_iter().filter(|s| !s.is_empty()).collect())
}

/// Parse a judge response into a verdict.
///
/// Level judges must provide both scores; the holistic judge must also
/// provide `improvement_suggestions`. A level judge that volunteers
/// suggestions anyway has them ignored — its result format does not carry
/// them, and they would violate the verdict invariant.
pub fn parse_verdict(level: BloomLevel, response: &str) -> Result<AgentVerdict, ParseError> {
    let object = extract_first_json_object(response).ok_or(ParseError::NoJsonFound)?;
    let performance_score = score_field(&object, "performance_score")?;
    let confidence_score = score_field(&object, "confidence_score")?;
    let improvement_suggestions = if level.is_holistic() {
        suggestions_field(&object)?
    } else {
        Vec::new()
    };
    AgentVerdict::new(
        level,
        performance_score,
        confidence_score,
        improvement_suggestions,
        response.to_string(),
    )
    .map_err(|_| ParseError::RangeViolation {
        // Ranges were checked above; this arm is unreachable in practice
        // but keeps the constructor's result handled.
        key: "performance_score",
        value: performance_score,
    })
}

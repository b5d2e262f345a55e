use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Highest frame index a verdict may name.
pub const MAX_COLLISION_FRAME: u32 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub collision_likely: bool,
    pub confidence: f64,
    pub first_collision_frame: u32,
    pub explanation: String,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum VerdictError {
    #[error("malformed verdict JSON: {0}")]
    Malformed(String),
    #[error("verdict must be a JSON object")]
    NotObject,
    #[error("verdict is missing field {0:?}")]
    MissingField(&'static str),
    #[error("verdict field {field:?} must be {expected}")]
    WrongType {
        field: &'static str,
        expected: &'static str,
    },
    #[error("confidence {0} is outside [0, 1]")]
    ConfidenceRange(f64),
    #[error("first_collision_frame {0} is outside [0, 7]")]
    FrameRange(String),
}

/// Removes one surrounding ``` fence (with optional language tag).
fn strip_fence(s: &str) -> Result<&str, VerdictError> {
    let Some(rest) = s.strip_prefix("```") else {
        return Ok(s);
    };
    let Some(nl) = rest.find('\n') else {
        return Err(VerdictError::Malformed("unterminated code fence".into()));
    };
    let tag = rest[..nl].trim();
    if !tag.chars().all(|c| c.is_ascii_alphanumeric()) {
        return Err(VerdictError::Malformed("text after opening fence".into()));
    }
    let body = rest[nl + 1..].trim_end();
    body.strip_suffix("```")
        .ok_or_else(|| VerdictError::Malformed("unterminated code fence".into()))
}

fn field<'a>(obj: &'a Map<String, Value>, name: &'static str) -> Result<&'a Value, VerdictError> {
    obj.get(name).ok_or(VerdictError::MissingField(name))
}

/// Strict parse of a judge reply. Whitespace and one enclosing code fence are
/// tolerated; any other surrounding text is an error. Extra keys are ignored.
pub fn parse_verdict(raw: &str) -> Result<JudgeVerdict, VerdictError> {
    let body = strip_fence(raw.trim())?;
    let value: Value =
        serde_json::from_str(body).map_err(|e| VerdictError::Malformed(e.to_string()))?;
    let obj = value.as_object().ok_or(VerdictError::NotObject)?;

    let collision_likely =
        field(obj, "collision_likely")?
            .as_bool()
            .ok_or(VerdictError::WrongType {
                field: "collision_likely",
                expected: "a boolean",
            })?;
    let confidence = field(obj, "confidence")?
        .as_f64()
        .ok_or(VerdictError::WrongType {
            field: "confidence",
            expected: "a number",
        })?;
    if !(0.0..=1.0).contains(&confidence) {
        return Err(VerdictError::ConfidenceRange(confidence));
    }
    let frame = field(obj, "first_collision_frame")?;
    let first_collision_frame = match frame {
        Value::Number(n) if n.is_i64() || n.is_u64() => match n.as_u64() {
            Some(f) if f <= u64::from(MAX_COLLISION_FRAME) => f as u32,
            _ => return Err(VerdictError::FrameRange(n.to_string())),
        },
        _ => {
            return Err(VerdictError::WrongType {
                field: "first_collision_frame",
                expected: "an integer",
            })
        }
    };
    let explanation = field(obj, "explanation")?
        .as_str()
        .ok_or(VerdictError::WrongType {
            field: "explanation",
            expected: "a string",
        })?
        .to_string();
    Ok(JudgeVerdict {
        collision_likely,
        confidence,
        first_collision_frame,
        explanation,
    })
}

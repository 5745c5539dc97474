//! Tool-call argument validation against the requesting `ToolSpec`.

use serde_json::{Map, Value};

use super::types::{ChatRequest, ChatResponse, ParamType, ToolSpec};

/// Why a tool call was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ToolCallViolation {
    UnknownTool(String),
    MissingForcedCall(String),
    MissingParam(String),
    UnknownParam(String),
    WrongType {
        param: String,
        expected: &'static str,
    },
    OutOfRange {
        param: String,
        value: i64,
    },
}

impl std::fmt::Display for ToolCallViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::UnknownTool(name) => write!(f, "call to undeclared tool '{name}'"),
            Self::MissingForcedCall(name) => {
                write!(f, "forced tool '{name}' was not called")
            }
            Self::MissingParam(p) => write!(f, "required parameter '{p}' missing"),
            Self::UnknownParam(p) => write!(f, "unexpected parameter '{p}'"),
            Self::WrongType { param, expected } => {
                write!(f, "parameter '{param}' is not a {expected}")
            }
            Self::OutOfRange { param, value } => {
                write!(f, "parameter '{param}' value {value} is out of range")
            }
        }
    }
}

fn check_value(spec_kind: &ParamType, name: &str, value: &Value) -> Result<(), ToolCallViolation> {
    match spec_kind {
        ParamType::Boolean => {
            if !value.is_boolean() {
                return Err(ToolCallViolation::WrongType {
                    param: name.into(),
                    expected: "boolean",
                });
            }
        }
        ParamType::Integer { min, max } => {
            // as_i64 is None for any float representation, so 4.0 fails like 4.2.
            let Some(n) = value.as_i64() else {
                return Err(ToolCallViolation::WrongType {
                    param: name.into(),
                    expected: "integer",
                });
            };
            if min.is_some_and(|m| n < m) || max.is_some_and(|m| n > m) {
                return Err(ToolCallViolation::OutOfRange {
                    param: name.into(),
                    value: n,
                });
            }
        }
        ParamType::String => {
            if !value.is_string() {
                return Err(ToolCallViolation::WrongType {
                    param: name.into(),
                    expected: "string",
                });
            }
        }
    }
    Ok(())
}

/// Validates an argument map against one tool's parameter schema.
pub fn validate_arguments(
    spec: &ToolSpec,
    args: &Map<String, Value>,
) -> Result<(), ToolCallViolation> {
    for p in spec.params() {
        match args.get(&p.name) {
            Some(v) => check_value(&p.kind, &p.name, v)?,
            None if p.required => return Err(ToolCallViolation::MissingParam(p.name.clone())),
            None => {}
        }
    }
    for key in args.keys() {
        if !spec.params().iter().any(|p| &p.name == key) {
            return Err(ToolCallViolation::UnknownParam(key.clone()));
        }
    }
    Ok(())
}

/// Validates a response's tool call, if any, against the request that
/// produced it. A forced tool that was not called is a violation.
pub fn validate_response(req: &ChatRequest, resp: &ChatResponse) -> Result<(), ToolCallViolation> {
    let Some(call) = &resp.tool_call else {
        if let Some(choice) = &req.tool_choice {
            return Err(ToolCallViolation::MissingForcedCall(choice.name.clone()));
        }
        return Ok(());
    };
    let Some(spec) = req.tools.iter().find(|t| t.name() == call.name) else {
        return Err(ToolCallViolation::UnknownTool(call.name.clone()));
    };
    if let Some(choice) = &req.tool_choice {
        if call.name != choice.name {
            return Err(ToolCallViolation::UnknownTool(call.name.clone()));
        }
    }
    validate_arguments(spec, &call.arguments)
}

//! Error and diagnostic types shared across the crate.

use std::fmt;

/// Library-level error. DSL parsing aggregates these into [`Diagnostic`]s
/// with source locations; later stages return them directly.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("division by the constant zero")]
    DivisionByZeroConstant,
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("unsupported function `{0}` in this operation")]
    UnsupportedFunction(String),
    #[error("assumption bounds for `{0}` have lower > upper")]
    InvalidAssumption(String),
    #[error("scalar expression syntax: {0}")]
    ScalarParse(String),

    #[error("inner product matrix is not symmetric")]
    NonSymmetricIPM,
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),
    #[error("multivectors belong to different frames: `{0}` vs `{1}`")]
    FrameMismatch(String, String),
    #[error("versor has zero quasi-norm")]
    NullVersor,
    #[error("coefficient on blade `{0}` falls outside the target class")]
    BladeOutsideClass(String),

    #[error("unknown frame `{0}`")]
    UnknownFrame(String),
    #[error("unknown multivector class `{0}`")]
    UnknownClass(String),
    #[error("unknown transform `{0}`")]
    UnknownTransform(String),
    #[error("unknown subspace `{0}`")]
    UnknownSubspace(String),
    #[error("unknown macro `{0}`")]
    UnknownMacroName(String),
    #[error("unknown constant `{0}`")]
    UnknownConstant(String),
    #[error("unknown basis blade `{0}` in frame `{1}`")]
    UnknownBlade(String, String),
    #[error("transform `{0}` is singular and cannot be inverted")]
    SingularTransform(String),
    #[error("macro call cycle through `{0}`")]
    CyclicMacroCall(String),
    #[error("callee input `{0}` is not bound at the call site")]
    UnboundCalleeInput(String),
    #[error("class mismatch for `{0}`: {1}")]
    ClassMismatch(String, String),
    #[error("transform `{0}` does not apply to this operand frame")]
    TransformDomainMismatch(String),

    #[error("malformed binding directive: {0}")]
    MalformedBinding(String),
    #[error("input coefficient `{0}` is not bound (strict mode)")]
    UnboundInputCoefficient(String),
    #[error("binding regions overlap near line {0}")]
    OverlappingRegions(usize),
    #[error("no mapping for function `{0}` in dialect `{1}`")]
    UnmappedFunction(String, String),
    #[error("operation not supported here: {0}")]
    UnsupportedOp(String),

    #[error("{0}")]
    Other(String),
}

/// A user-facing diagnostic with a source position.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub file: String,
    pub line: usize,
    pub col: usize,
    /// Stable machine-readable code, e.g. `SyntaxError`, `UnknownFrame`.
    pub code: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(
        file: impl Into<String>,
        line: usize,
        col: usize,
        code: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Diagnostic { file: file.into(), line, col, code: code.into(), message: message.into() }
    }

    /// One diagnostic as a JSON object on a single line.
    pub fn to_json_line(&self) -> String {
        format!(
            "{{\"file\":{},\"line\":{},\"col\":{},\"code\":{},\"message\":{}}}",
            json_str(&self.file),
            self.line,
            self.col,
            json_str(&self.code),
            json_str(&self.message)
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}: {}", self.file, self.line, self.col, self.code, self.message)
    }
}

pub(crate) fn json_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

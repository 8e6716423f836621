//! The annotated source language: lexing, parsing, printing and validation.
//!
//! Classes carry one of three placements: `@Trusted` (enclave), `@Untrusted`
//! (host) or neutral (the default, copied into both worlds). Source files use
//! the `.ep` extension and `#` line comments.

pub mod ast;
mod lexer;
mod parser;
mod printer;
pub mod typeck;
mod validate;

pub use ast::*;
pub use parser::parse_program;
pub use printer::{print_expr, print_program};
pub use validate::{validate, Rule, ValidationReport, Violation};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{line}:{col}: syntax error: expected {expected}, found {found}")]
    Syntax { line: usize, col: usize, expected: String, found: String },
    #[error("duplicate class `{0}`")]
    DuplicateClass(String),
    #[error("duplicate method `{class}.{method}`")]
    DuplicateMethod { class: String, method: String },
    #[error("duplicate field `{class}.{field}`")]
    DuplicateField { class: String, field: String },
    #[error("duplicate parameter `{param}` in `{class}.{method}`")]
    DuplicateParam { class: String, method: String, param: String },
    #[error("more than one `main` method (in {})", .0.join(", "))]
    MultipleMain(Vec<String>),
}

impl ParseError {
    pub(crate) fn syntax(line: usize, col: usize, expected: &str, found: &str) -> Self {
        ParseError::Syntax { line, col, expected: expected.to_string(), found: found.to_string() }
    }
}

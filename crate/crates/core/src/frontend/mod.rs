//! Lexing, parsing, and unparsing for the supported Python subset.
//!
//! The subset covers module-level statements and function definitions:
//! assignments (simple, annotated, augmented), expression statements,
//! `if`/`elif`/`else`, `while`, `for x in <expr>`, `return`, `break`,
//! `continue`, `pass`, and `def`. Expressions cover literals (int, float,
//! string, bool, `None`, list, tuple, dict), identifiers, attribute access,
//! subscripts, calls, unary `-`/`not`, the arithmetic operators, comparisons,
//! and `and`/`or`. The full node-kind table lives in `docs/grammar.md`.
//!
//! Everything here is pure: the same source always produces the same token
//! stream and tree, and trees round-trip through [`unparse`] and [`parse`].

mod lexer;
mod parser;
mod tree;
mod unparser;

pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;
pub use tree::{NodeId, NodeKind, Span, SyntaxNode, SyntaxTree};
pub use unparser::{unparse, unparse_expression, unparse_statement};

use thiserror::Error;

/// Lex or parse error pointing at the offending source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message} at line {line}, column {col}")]
pub struct ParseFailure {
    pub message: String,
    pub line: usize,
    pub col: usize,
}

impl ParseFailure {
    pub fn new(message: impl Into<String>, line: usize, col: usize) -> Self {
        Self { message: message.into(), line, col }
    }
}

/// Convenience: tokenize and parse in one step.
pub fn parse_source(source: &str) -> Result<SyntaxTree, ParseFailure> {
    parse(&tokenize(source)?)
}

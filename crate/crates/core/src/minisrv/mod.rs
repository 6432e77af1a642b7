//! MiniSrv: a toy service language for authoring analysis corpora.
//!
//! See `docs/minisrv.md` for the grammar. Parsing is strict (first error
//! wins); lowering turns the AST into [`crate::model::Service`] facts.

pub mod ast;
pub mod lexer;
mod lower;
mod parser;
mod printer;

use std::fmt;

pub use ast::MiniSrvAst;
pub use lower::{lower, lower_files, Lowered, LoweringError, UnresolvedCall};
pub use parser::Parser;
pub use printer::{pretty_print, quote};

use crate::model::Location;
use ast::{Expr, Item, Pos, Stmt};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub location: Location,
    pub message: String,
    pub expected: String,
}

impl ParseError {
    pub(crate) fn at(file: &str, pos: Pos, message: &str, expected: &str) -> ParseError {
        ParseError {
            location: Location::new(file, pos.line, pos.col),
            message: message.to_string(),
            expected: expected.to_string(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (expected {})", self.location, self.message, self.expected)
    }
}

impl std::error::Error for ParseError {}

/// Parses one `.msv` file. `service_name` is accepted for symmetry with the
/// facts readers; the AST itself is service-agnostic.
pub fn parse_source(text: &str, _service_name: &str, file: &str) -> Result<MiniSrvAst, ParseError> {
    let mut p = Parser::new(text, file, 1, 1)?;
    let items: Vec<Item> = p.items()?;
    Ok(MiniSrvAst {
        file: file.to_string(),
        text: text.to_string(),
        items,
    })
}

/// Parses a standalone expression snippet that starts at `(line, col)`.
pub fn parse_expr_at(text: &str, file: &str, line: u32, col: u32) -> Result<Expr, ParseError> {
    let mut p = Parser::new(text, file, line, col)?;
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a single statement snippet that starts at `(line, col)`.
pub fn parse_stmt_at(text: &str, file: &str, line: u32, col: u32) -> Result<Stmt, ParseError> {
    let mut p = Parser::new(text, file, line, col)?;
    let s = p.stmt()?;
    p.expect_eof()?;
    Ok(s)
}

/// Parses a single top-level item snippet (`const` or `fn`).
pub fn parse_item_at(text: &str, file: &str, line: u32, col: u32) -> Result<Item, ParseError> {
    let mut p = Parser::new(text, file, line, col)?;
    let it = p.item()?;
    p.expect_eof()?;
    Ok(it)
}

#[cfg(test)]
mod tests;

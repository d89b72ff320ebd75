//! The specification language: a typed WhyML subset with built-ins for
//! loading models and datasets, applying models (`@@`), and reasoning about
//! vectors.

pub mod ast;
mod lexer;
mod parser;
mod prelude;
mod pretty;
pub mod types;

use std::fmt;

use thiserror::Error;

pub use ast::{BuiltInKind, Decl, DeclKind, Expr, ExprKind, Goal, Item, SpecAst, SpecType};
pub use lexer::{tokenize, Tok, Token};
pub use parser::{parse, parse_expr};
pub use prelude::{prelude, PRELUDE_SOURCE};
pub use pretty::{pretty, pretty_expr};
pub use types::{typecheck, typecheck_expr, Type, TypeError};

/// Source position, 1-based line and column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub offset: usize,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{span}: {message}")]
pub struct SyntaxError {
    pub span: Span,
    pub message: String,
}

/// Either front-end failure; both carry a source position.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("syntax error: {0}")]
    Syntax(#[from] SyntaxError),
    #[error("type error: {0}")]
    Type(#[from] TypeError),
}

impl SpecError {
    pub fn span(&self) -> Span {
        match self {
            SpecError::Syntax(e) => e.span,
            SpecError::Type(e) => e.span(),
        }
    }

    pub fn message(&self) -> String {
        match self {
            SpecError::Syntax(e) => e.message.clone(),
            SpecError::Type(e) => e.to_string(),
        }
    }

    /// Renders `file:line:col: error: message`.
    pub fn diagnostic(&self, file: &str) -> String {
        let span = self.span();
        format!(
            "{file}:{}:{}: error: {}",
            span.line,
            span.col,
            self.message()
        )
    }
}

/// Parses and type-checks a specification file.
pub fn load(source: &str) -> Result<SpecAst, SpecError> {
    let ast = parse(source)?;
    Ok(typecheck(ast)?)
}

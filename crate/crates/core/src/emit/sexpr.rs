//! Minimal S-expression reader for VNN-LIB, SMT-LIB and counterexample text.

use std::fmt;

use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn as_atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(a) => Some(a),
            SExpr::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(items) => Some(items),
            SExpr::Atom(_) => None,
        }
    }

    /// Head symbol of a non-empty list.
    pub fn head(&self) -> Option<&str> {
        self.as_list()?.first()?.as_atom()
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom(a) => f.write_str(a),
            SExpr::List(items) => {
                write!(f, "(")?;
                for (i, x) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct SExprError {
    pub line: usize,
    pub message: String,
}

/// Parses a sequence of S-expressions; `;` starts a comment.
pub fn parse_sexprs(text: &str) -> Result<Vec<SExpr>, SExprError> {
    let mut stack: Vec<(usize, Vec<SExpr>)> = Vec::new();
    let mut top = Vec::new();
    let mut line = 1;
    let mut chars = text.chars().peekable();
    let push = |stack: &mut Vec<(usize, Vec<SExpr>)>, top: &mut Vec<SExpr>, e: SExpr| match stack
        .last_mut()
    {
        Some((_, items)) => items.push(e),
        None => top.push(e),
    };
    while let Some(c) = chars.next() {
        match c {
            '\n' => line += 1,
            c if c.is_whitespace() => {}
            ';' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    chars.next();
                }
            }
            '(' => stack.push((line, Vec::new())),
            ')' => {
                let (_, items) = stack.pop().ok_or_else(|| SExprError {
                    line,
                    message: "unbalanced `)`".into(),
                })?;
                push(&mut stack, &mut top, SExpr::List(items));
            }
            c => {
                let mut atom = c.to_string();
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' || n == ';' {
                        break;
                    }
                    atom.push(n);
                    chars.next();
                }
                push(&mut stack, &mut top, SExpr::Atom(atom));
            }
        }
    }
    if let Some((open, _)) = stack.last() {
        return Err(SExprError {
            line: *open,
            message: "unclosed `(`".into(),
        });
    }
    Ok(top)
}

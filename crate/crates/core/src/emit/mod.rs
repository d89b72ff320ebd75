//! Serialization of merged goals for external verifiers: VNN-LIB properties,
//! SMT-LIB (QF_LRA) scripts and the companion ONNX model.

mod sexpr;
mod smtlib;
mod vnnlib;

use std::path::{Path, PathBuf};

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::embed::MergedGoal;
use crate::interp::{Affine, Atom, Cmp, GoalFormula, Sym};
use crate::nir::linear::LowerError;
use crate::nir::onnx::{emit_onnx_with, Precision};
use crate::nir::NirError;
use crate::rational::{self, Rational};

pub use sexpr::{parse_sexprs, SExpr, SExprError};
pub use smtlib::emit_smtlib;
pub use vnnlib::{emit_vnnlib, parse_vnnlib, VnnLib, VnnLibOptions, VnnLibQuery};

/// First line of every emitted text file.
pub fn header() -> String {
    format!("; generated-by nnspec {}", env!("CARGO_PKG_VERSION"))
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EmitError {
    #[error("non-linear atom {0}")]
    NonLinearAtom(String),
    #[error("input `{0}` has no finite lower or upper bound")]
    UnboundedVariable(String),
    #[error("unsupported node: {0}")]
    UnsupportedNode(String),
    #[error("goal is not merged: it refers to model application {0}")]
    NotMerged(usize),
    #[error(transparent)]
    Model(#[from] NirError),
    #[error("{}: {message}", .path.display())]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<LowerError> for EmitError {
    fn from(e: LowerError) -> Self {
        match e {
            LowerError::UnsupportedNode { op, .. } => EmitError::UnsupportedNode(op.to_string()),
            LowerError::NonLinear { op, node } => EmitError::UnsupportedNode(format!(
                "{op} of two non-constant operands at node {node}"
            )),
            LowerError::Graph(g) => EmitError::Model(g),
        }
    }
}

impl From<SExprError> for EmitError {
    fn from(e: SExprError) -> Self {
        EmitError::Parse(e.to_string())
    }
}

/// A one-sided bound `x >= v` / `x <= v`; `strict` for `>` / `<`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bound {
    pub value: Rational,
    pub strict: bool,
}

/// Hypothesis split into per-input bounds and remaining constraints.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InputConstraints {
    pub lower: Vec<Option<Bound>>,
    pub upper: Vec<Option<Bound>>,
    pub others: Vec<Atom>,
}

impl InputConstraints {
    pub fn of(goal: &GoalFormula) -> Result<Self, EmitError> {
        let n = goal.input_vars.len();
        let mut c = InputConstraints {
            lower: vec![None; n],
            upper: vec![None; n],
            others: Vec::new(),
        };
        for atom in &goal.hypothesis {
            let diff = affine_difference(atom)?;
            if diff.coeffs.len() != 1 {
                c.others.push(atom.clone());
                continue;
            }
            let (&sym, coeff) = diff.coeffs.iter().next().expect("one coefficient");
            let Sym::Input(i) = sym else {
                c.others.push(atom.clone());
                continue;
            };
            let value = -&diff.constant / coeff;
            let cmp = if coeff.is_negative() {
                atom.cmp.flip()
            } else {
                atom.cmp
            };
            let tighten = |slot: &mut Option<Bound>, strict: bool, lower: bool| {
                let better = match slot {
                    None => true,
                    Some(b) if b.value == value => strict && !b.strict,
                    Some(b) => (value > b.value) == lower,
                };
                if better {
                    *slot = Some(Bound {
                        value: value.clone(),
                        strict,
                    });
                }
            };
            match cmp {
                Cmp::Ge => tighten(&mut c.lower[i], false, true),
                Cmp::Gt => tighten(&mut c.lower[i], true, true),
                Cmp::Le => tighten(&mut c.upper[i], false, false),
                Cmp::Lt => tighten(&mut c.upper[i], true, false),
                Cmp::Eq => {
                    tighten(&mut c.lower[i], false, true);
                    tighten(&mut c.upper[i], false, false);
                }
            }
        }
        Ok(c)
    }

    /// Name of the first input lacking a finite bound on either side.
    pub fn first_unbounded<'g>(&self, goal: &'g GoalFormula) -> Option<&'g str> {
        (0..self.lower.len())
            .find(|&i| self.lower[i].is_none() || self.upper[i].is_none())
            .map(|i| goal.input_vars[i].name.as_str())
    }
}

/// `lhs - rhs` as an affine form, rejecting non-linear terms.
pub fn affine_difference(atom: &Atom) -> Result<Affine, EmitError> {
    let nonlinear =
        || EmitError::NonLinearAtom(format!("{} {} {}", atom.lhs, atom.cmp.symbol(), atom.rhs));
    let l = atom.lhs.try_affine().ok_or_else(nonlinear)?;
    let r = atom.rhs.try_affine().ok_or_else(nonlinear)?;
    Ok(l.plus(&r, &-Rational::one()))
}

/// `X_i` for inputs and `Y_j` for outputs of the merged network.
pub(crate) fn sym_name(s: Sym) -> Result<String, EmitError> {
    match s {
        Sym::Input(i) => Ok(format!("X_{i}")),
        Sym::Output { app: 0, index } => Ok(format!("Y_{index}")),
        Sym::Output { app, .. } => Err(EmitError::NotMerged(app)),
    }
}

/// Renders `sum c*v + k` with `num` for numbers.
pub(crate) fn render_affine(
    a: &Affine,
    num: &mut impl FnMut(&Rational) -> String,
) -> Result<String, EmitError> {
    let mut parts = Vec::new();
    for (s, c) in &a.coeffs {
        let name = sym_name(*s)?;
        parts.push(if c.is_one() {
            name
        } else {
            format!("(* {} {name})", num(c))
        });
    }
    if !a.constant.is_zero() || parts.is_empty() {
        parts.push(num(&a.constant));
    }
    Ok(if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        format!("(+ {})", parts.join(" "))
    })
}

pub(crate) fn cmp_symbol(c: Cmp) -> &'static str {
    match c {
        Cmp::Lt => "<",
        Cmp::Le => "<=",
        Cmp::Gt => ">",
        Cmp::Ge => ">=",
        Cmp::Eq => "=",
    }
}

pub(crate) fn render_atom(
    atom: &Atom,
    num: &mut impl FnMut(&Rational) -> String,
) -> Result<String, EmitError> {
    // Validates linearity of both sides before rendering.
    affine_difference(atom)?;
    let l = atom.lhs.try_affine().expect("checked");
    let r = atom.rhs.try_affine().expect("checked");
    Ok(format!(
        "({} {} {})",
        cmp_symbol(atom.cmp),
        render_affine(&l, num)?,
        render_affine(&r, num)?
    ))
}

/// Writes the merged network as ONNX. `Precision::Strict` refuses constants
/// that a double cannot hold exactly. Returns the nodes whose constants were
/// rounded.
pub fn emit_model(
    m: &MergedGoal,
    path: &Path,
    precision: Precision,
) -> Result<Vec<usize>, EmitError> {
    let emitted = emit_onnx_with(&m.merged, precision)?;
    std::fs::write(path, &emitted.bytes).map_err(|e| EmitError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(emitted.rounded_nodes)
}

/// Shortest exact decimal, or the nearest double's shortest round-trip
/// decimal plus a warning.
pub(crate) fn vnn_number(r: &Rational, warnings: &mut Vec<String>) -> String {
    match rational::exact_decimal(r) {
        Some(d) => d,
        None => {
            let approx = rational::to_f64(r);
            warnings.push(format!(
                "{}/{} has no finite decimal expansion; emitted as {approx:?}",
                r.numer(),
                r.denom()
            ));
            format!("{approx:?}")
        }
    }
}

/// SMT-LIB real literal: `1.5`, `(- 2.0)`, `(/ 1.0 3.0)`.
pub(crate) fn smt_number(r: &Rational) -> String {
    let abs = r.abs();
    let body = match rational::exact_decimal(&abs) {
        Some(d) if d.contains('.') => d,
        Some(d) => format!("{d}.0"),
        None => format!("(/ {}.0 {}.0)", abs.numer(), abs.denom()),
    };
    if r.is_negative() {
        format!("(- {body})")
    } else {
        body
    }
}

/// Decodes `1.5`, `-2`, `(- 2.0)`, `(/ 1 3)` and `(* ...)` constant forms.
pub fn parse_number(e: &SExpr) -> Option<Rational> {
    match e {
        SExpr::Atom(a) => rational::parse_decimal(a),
        SExpr::List(items) => {
            let head = items.first()?.as_atom()?;
            let args = items[1..]
                .iter()
                .map(parse_number)
                .collect::<Option<Vec<_>>>()?;
            match (head, args.as_slice()) {
                ("-", [x]) => Some(-x),
                ("-", [x, rest @ ..]) => Some(rest.iter().fold(x.clone(), |acc, y| acc - y)),
                ("+", xs) => Some(xs.iter().fold(Rational::zero(), |acc, y| acc + y)),
                ("*", xs) => Some(xs.iter().fold(Rational::one(), |acc, y| acc * y)),
                ("/", [x, y]) if !y.is_zero() => Some(x / y),
                _ => None,
            }
        }
    }
}

//! VNN-LIB properties in the common subset: `declare-const ... Real`,
//! `assert`, `and`, `or` and comparison atoms.

use crate::embed::MergedGoal;
use crate::emit::{
    header, parse_number, parse_sexprs, render_atom, vnn_number, Bound, EmitError,
    InputConstraints, SExpr,
};
use crate::interp::{Atom, Cmp, Formula, Sym, Term};
use crate::rational::Rational;

/// Largest disjunctive normal form emitted for a property.
const DNF_LIMIT: usize = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VnnLibOptions {
    /// Emit the negated conclusion (a satisfying point is a counterexample).
    pub negate: bool,
    /// Accept inputs without finite bounds.
    pub allow_unbounded: bool,
}

impl Default for VnnLibOptions {
    fn default() -> Self {
        VnnLibOptions {
            negate: true,
            allow_unbounded: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VnnLib {
    pub text: String,
    /// Constants that had to be rounded to a decimal.
    pub warnings: Vec<String>,
}

pub fn emit_vnnlib(m: &MergedGoal, opts: VnnLibOptions) -> Result<VnnLib, EmitError> {
    let goal = &m.goal;
    let constraints = InputConstraints::of(goal)?;
    if !opts.allow_unbounded {
        if let Some(name) = constraints.first_unbounded(goal) {
            return Err(EmitError::UnboundedVariable(name.to_string()));
        }
    }
    let mut warnings = Vec::new();
    let mut num = |r: &Rational| vnn_number(r, &mut warnings);
    let mut lines = vec![header()];
    lines.push(format!("; goal {}", goal.name));
    for i in 0..m.n_inputs() {
        lines.push(format!("(declare-const X_{i} Real)"));
    }
    for j in 0..m.merged.output_dim() {
        lines.push(format!("(declare-const Y_{j} Real)"));
    }
    for (i, (lo, hi)) in constraints.lower.iter().zip(&constraints.upper).enumerate() {
        let mut bound = |b: &Bound, strict: &str, weak: &str| {
            let op = if b.strict { strict } else { weak };
            format!("(assert ({op} X_{i} {}))", num(&b.value))
        };
        if let Some(b) = lo {
            lines.push(bound(b, ">", ">="));
        }
        if let Some(b) = hi {
            lines.push(bound(b, "<", "<="));
        }
    }
    for a in &constraints.others {
        lines.push(format!("(assert {})", render_atom(a, &mut num)?));
    }
    let property = if opts.negate {
        Formula::not(goal.conclusion.clone())
    } else {
        goal.conclusion.clone()
    };
    let dnf = property.dnf(DNF_LIMIT).ok_or_else(|| {
        EmitError::UnsupportedNode("property too large for disjunctive normal form".into())
    })?;
    let mut parts = Vec::with_capacity(dnf.len());
    for c in &dnf {
        let atoms = c
            .iter()
            .map(|a| render_atom(a, &mut num))
            .collect::<Result<Vec<_>, _>>()?;
        parts.push(match atoms.len() {
            0 => "true".to_string(),
            1 => atoms.into_iter().next().expect("one atom"),
            _ => format!("(and {})", atoms.join(" ")),
        });
    }
    let body = match parts.len() {
        0 => "false".to_string(),
        1 => parts.pop().expect("one disjunct"),
        _ => format!("(or {})", parts.join(" ")),
    };
    lines.push(format!("(assert {body})"));
    let mut text = lines.join("\n");
    text.push('\n');
    Ok(VnnLib { text, warnings })
}

/// A parsed VNN-LIB file: declared names and assertions over
/// `Sym::Input(i)` (for `X_i`) and `Sym::Output { app: 0, index: j }` (for `Y_j`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VnnLibQuery {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub assertions: Vec<Formula>,
}

impl VnnLibQuery {
    /// Whether every assertion holds at the given point.
    pub fn holds(&self, x: &[Rational], y: &[Rational]) -> bool {
        let value = |s: Sym| match s {
            Sym::Input(i) => x[i].clone(),
            Sym::Output { index, .. } => y[index].clone(),
        };
        self.assertions.iter().all(|a| a.eval(&value))
    }
}

pub fn parse_vnnlib(text: &str) -> Result<VnnLibQuery, EmitError> {
    let mut q = VnnLibQuery {
        inputs: vec![],
        outputs: vec![],
        assertions: vec![],
    };
    let bad = |e: &SExpr| EmitError::Parse(format!("unexpected form {e}"));
    for e in parse_sexprs(text)? {
        let items = e.as_list().ok_or_else(|| bad(&e))?;
        match e.head() {
            Some("declare-const") => {
                let name = items
                    .get(1)
                    .and_then(SExpr::as_atom)
                    .ok_or_else(|| bad(&e))?;
                if name.starts_with('X') {
                    q.inputs.push(name.to_string());
                } else {
                    q.outputs.push(name.to_string());
                }
            }
            Some("assert") if items.len() == 2 => {
                let f = formula(&items[1], &q)?;
                q.assertions.push(f);
            }
            _ => return Err(bad(&e)),
        }
    }
    Ok(q)
}

fn formula(e: &SExpr, q: &VnnLibQuery) -> Result<Formula, EmitError> {
    let bad = || EmitError::Parse(format!("unexpected formula {e}"));
    if let SExpr::Atom(a) = e {
        return match a.as_str() {
            "true" => Ok(Formula::True),
            "false" => Ok(Formula::False),
            _ => Err(bad()),
        };
    }
    let items = e.as_list().ok_or_else(bad)?;
    let args = &items[1..];
    match e.head().ok_or_else(bad)? {
        "and" => Ok(Formula::and(
            args.iter()
                .map(|a| formula(a, q))
                .collect::<Result<Vec<_>, _>>()?,
        )),
        "or" => Ok(Formula::or(
            args.iter()
                .map(|a| formula(a, q))
                .collect::<Result<Vec<_>, _>>()?,
        )),
        "not" if args.len() == 1 => Ok(Formula::not(formula(&args[0], q)?)),
        op => {
            let cmp = match op {
                "<" => Cmp::Lt,
                "<=" => Cmp::Le,
                ">" => Cmp::Gt,
                ">=" => Cmp::Ge,
                "=" => Cmp::Eq,
                _ => return Err(bad()),
            };
            if args.len() != 2 {
                return Err(bad());
            }
            Ok(Formula::Atom(Atom::new(
                term(&args[0], q)?,
                cmp,
                term(&args[1], q)?,
            )))
        }
    }
}

fn term(e: &SExpr, q: &VnnLibQuery) -> Result<Term, EmitError> {
    let bad = || EmitError::Parse(format!("unexpected term {e}"));
    if let Some(c) = parse_number(e) {
        return Ok(Term::Const(c));
    }
    if let SExpr::Atom(name) = e {
        if let Some(i) = q.inputs.iter().position(|n| n == name) {
            return Ok(Term::input(i));
        }
        if let Some(j) = q.outputs.iter().position(|n| n == name) {
            return Ok(Term::output(0, j));
        }
        return Err(EmitError::Parse(format!("undeclared variable {name}")));
    }
    let items = e.as_list().ok_or_else(bad)?;
    let args = items[1..]
        .iter()
        .map(|a| term(a, q))
        .collect::<Result<Vec<_>, _>>()?;
    let nonlinear = |_| EmitError::NonLinearAtom(e.to_string());
    match (e.head().ok_or_else(bad)?, args.as_slice()) {
        ("+", [first, rest @ ..]) => Ok(rest.iter().cloned().fold(first.clone(), Term::add)),
        ("-", [x]) => Ok(Term::neg(x.clone())),
        ("-", [first, rest @ ..]) => Ok(rest.iter().cloned().fold(first.clone(), Term::sub)),
        ("*", [first, rest @ ..]) => rest
            .iter()
            .cloned()
            .try_fold(first.clone(), Term::mul)
            .map_err(nonlinear),
        ("/", [x, y]) => Term::div(x.clone(), y.clone()).map_err(nonlinear),
        _ => Err(bad()),
    }
}

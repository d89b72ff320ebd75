//! Goal normal form: universally quantified real inputs, a conjunction of
//! linear hypotheses over them, and a boolean conclusion over inputs and
//! model outputs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed, Zero};

use crate::nir::{forward, NirError, NirGraph, Tensor};
use crate::rational::{self, Rational};

/// A scalar symbol: an input variable or one output of a model application.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sym {
    Input(usize),
    Output { app: usize, index: usize },
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sym::Input(i) => write!(f, "x{i}"),
            Sym::Output { app, index } => write!(f, "Y{app}_{index}"),
        }
    }
}

/// Real-valued term. Products and quotients always have a constant operand,
/// so every term is affine in its symbols; the tree shape is kept so that
/// embedding can mirror the source arithmetic.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Const(Rational),
    Sym(Sym),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Div(Box<Term>, Box<Term>),
    Neg(Box<Term>),
}

/// Why a term could not be built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TermError {
    NonLinear(String),
    DivisionByZero,
}

// Smart constructors that fold constants; `mul` and `div` can fail, so
// they are not operator impls.
#[allow(clippy::should_implement_trait)]
impl Term {
    pub fn constant(value: Rational) -> Term {
        Term::Const(value)
    }

    pub fn input(i: usize) -> Term {
        Term::Sym(Sym::Input(i))
    }

    pub fn output(app: usize, index: usize) -> Term {
        Term::Sym(Sym::Output { app, index })
    }

    pub fn as_const(&self) -> Option<&Rational> {
        match self {
            Term::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn add(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Const(x), Term::Const(y)) => Term::Const(x + y),
            _ => Term::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Term, b: Term) -> Term {
        match (&a, &b) {
            (Term::Const(x), Term::Const(y)) => Term::Const(x - y),
            _ => Term::Sub(Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Term) -> Term {
        match a {
            Term::Const(x) => Term::Const(-x),
            other => Term::Neg(Box::new(other)),
        }
    }

    pub fn mul(a: Term, b: Term) -> Result<Term, TermError> {
        match (&a, &b) {
            (Term::Const(x), Term::Const(y)) => Ok(Term::Const(x * y)),
            (Term::Const(_), _) | (_, Term::Const(_)) => Ok(Term::Mul(Box::new(a), Box::new(b))),
            _ => Err(TermError::NonLinear(format!("{a} * {b}"))),
        }
    }

    pub fn div(a: Term, b: Term) -> Result<Term, TermError> {
        match &b {
            Term::Const(y) if y.is_zero() => Err(TermError::DivisionByZero),
            Term::Const(y) => match &a {
                Term::Const(x) => Ok(Term::Const(x / y)),
                _ => Ok(Term::Div(Box::new(a), Box::new(b))),
            },
            _ => Err(TermError::NonLinear(format!("{a} / {b}"))),
        }
    }

    /// Calls `f` on every symbol occurrence.
    pub fn visit_syms(&self, f: &mut impl FnMut(Sym)) {
        match self {
            Term::Const(_) => {}
            Term::Sym(s) => f(*s),
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) | Term::Div(a, b) => {
                a.visit_syms(f);
                b.visit_syms(f);
            }
            Term::Neg(a) => a.visit_syms(f),
        }
    }

    pub fn mentions_outputs(&self) -> bool {
        let mut found = false;
        self.visit_syms(&mut |s| found |= matches!(s, Sym::Output { .. }));
        found
    }

    pub fn is_constant(&self) -> bool {
        let mut found = false;
        self.visit_syms(&mut |_| found = true);
        !found
    }

    /// Rewrites every symbol.
    pub fn map_syms(&self, f: &impl Fn(Sym) -> Term) -> Term {
        match self {
            Term::Const(c) => Term::Const(c.clone()),
            Term::Sym(s) => f(*s),
            Term::Add(a, b) => Term::Add(Box::new(a.map_syms(f)), Box::new(b.map_syms(f))),
            Term::Sub(a, b) => Term::Sub(Box::new(a.map_syms(f)), Box::new(b.map_syms(f))),
            Term::Mul(a, b) => Term::Mul(Box::new(a.map_syms(f)), Box::new(b.map_syms(f))),
            Term::Div(a, b) => Term::Div(Box::new(a.map_syms(f)), Box::new(b.map_syms(f))),
            Term::Neg(a) => Term::Neg(Box::new(a.map_syms(f))),
        }
    }

    /// Normal form as a linear combination of symbols plus a constant.
    pub fn affine(&self) -> Affine {
        match self {
            Term::Const(c) => Affine::constant(c.clone()),
            Term::Sym(s) => Affine::sym(*s),
            Term::Add(a, b) => a.affine().plus(&b.affine(), &Rational::one()),
            Term::Sub(a, b) => a.affine().plus(&b.affine(), &-Rational::one()),
            Term::Neg(a) => a.affine().scale(&-Rational::one()),
            Term::Mul(a, b) => {
                let (a, b) = (a.affine(), b.affine());
                if a.is_constant() {
                    b.scale(&a.constant)
                } else {
                    a.scale(&b.constant)
                }
            }
            Term::Div(a, b) => a.affine().scale(&(Rational::one() / b.affine().constant)),
        }
    }

    /// Like [`Term::affine`], but `None` when a product has two non-constant
    /// factors or a divisor is not a non-zero constant.
    pub fn try_affine(&self) -> Option<Affine> {
        Some(match self {
            Term::Const(c) => Affine::constant(c.clone()),
            Term::Sym(s) => Affine::sym(*s),
            Term::Add(a, b) => a.try_affine()?.plus(&b.try_affine()?, &Rational::one()),
            Term::Sub(a, b) => a.try_affine()?.plus(&b.try_affine()?, &-Rational::one()),
            Term::Neg(a) => a.try_affine()?.scale(&-Rational::one()),
            Term::Mul(a, b) => {
                let (a, b) = (a.try_affine()?, b.try_affine()?);
                if a.is_constant() {
                    b.scale(&a.constant)
                } else if b.is_constant() {
                    a.scale(&b.constant)
                } else {
                    return None;
                }
            }
            Term::Div(a, b) => {
                let b = b.try_affine()?;
                if !b.is_constant() || b.constant.is_zero() {
                    return None;
                }
                a.try_affine()?.scale(&(Rational::one() / b.constant))
            }
        })
    }

    pub fn eval(&self, value: &impl Fn(Sym) -> Rational) -> Rational {
        match self {
            Term::Const(c) => c.clone(),
            Term::Sym(s) => value(*s),
            Term::Add(a, b) => a.eval(value) + b.eval(value),
            Term::Sub(a, b) => a.eval(value) - b.eval(value),
            Term::Mul(a, b) => a.eval(value) * b.eval(value),
            Term::Div(a, b) => a.eval(value) / b.eval(value),
            Term::Neg(a) => -a.eval(value),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(c) => write!(f, "{}", rational::display(c)),
            Term::Sym(s) => write!(f, "{s}"),
            Term::Add(a, b) => write!(f, "({a} + {b})"),
            Term::Sub(a, b) => write!(f, "({a} - {b})"),
            Term::Mul(a, b) => write!(f, "({a} * {b})"),
            Term::Div(a, b) => write!(f, "({a} / {b})"),
            Term::Neg(a) => write!(f, "-{a}"),
        }
    }
}

/// `sum(coeffs[s] * s) + constant`, with no zero coefficients stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Affine {
    pub coeffs: BTreeMap<Sym, Rational>,
    pub constant: Rational,
}

impl Affine {
    pub fn constant(c: Rational) -> Affine {
        Affine {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn sym(s: Sym) -> Affine {
        Affine {
            coeffs: BTreeMap::from([(s, Rational::one())]),
            constant: Rational::zero(),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `self + k * other`.
    pub fn plus(mut self, other: &Affine, k: &Rational) -> Affine {
        for (s, c) in &other.coeffs {
            let entry = self.coeffs.entry(*s).or_insert_with(Rational::zero);
            *entry += c * k;
            if entry.is_zero() {
                self.coeffs.remove(s);
            }
        }
        self.constant += &other.constant * k;
        self
    }

    pub fn scale(mut self, k: &Rational) -> Affine {
        if k.is_zero() {
            return Affine::constant(Rational::zero());
        }
        for c in self.coeffs.values_mut() {
            *c *= k;
        }
        self.constant *= k;
        self
    }

    pub fn eval(&self, value: &impl Fn(Sym) -> Rational) -> Rational {
        self.coeffs
            .iter()
            .fold(self.constant.clone(), |acc, (s, c)| acc + c * value(*s))
    }
}

impl fmt::Display for Affine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (s, c) in &self.coeffs {
            let sign = if c.is_negative() { "-" } else { "+" };
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mag = c.abs();
            if mag.is_one() {
                write!(f, "{s}")?;
            } else {
                write!(f, "{}*{s}", rational::display(&mag))?;
            }
            first = false;
        }
        if first {
            write!(f, "{}", rational::display(&self.constant))
        } else if !self.constant.is_zero() {
            let sign = if self.constant.is_negative() {
                "-"
            } else {
                "+"
            };
            write!(f, " {sign} {}", rational::display(&self.constant.abs()))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }

    pub fn holds(self, a: &Rational, b: &Rational) -> bool {
        match self {
            Cmp::Lt => a < b,
            Cmp::Le => a <= b,
            Cmp::Gt => a > b,
            Cmp::Ge => a >= b,
            Cmp::Eq => a == b,
        }
    }

    /// The comparator with operands swapped.
    pub fn flip(self) -> Cmp {
        match self {
            Cmp::Lt => Cmp::Gt,
            Cmp::Le => Cmp::Ge,
            Cmp::Gt => Cmp::Lt,
            Cmp::Ge => Cmp::Le,
            Cmp::Eq => Cmp::Eq,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Atom {
    pub lhs: Term,
    pub cmp: Cmp,
    pub rhs: Term,
}

impl Atom {
    pub fn new(lhs: Term, cmp: Cmp, rhs: Term) -> Atom {
        Atom { lhs, cmp, rhs }
    }

    pub fn mentions_outputs(&self) -> bool {
        self.lhs.mentions_outputs() || self.rhs.mentions_outputs()
    }

    pub fn visit_syms(&self, f: &mut impl FnMut(Sym)) {
        self.lhs.visit_syms(f);
        self.rhs.visit_syms(f);
    }

    /// The negation of the atom as a formula without `Not`.
    pub fn complement(&self) -> Formula {
        let with = |cmp| Formula::Atom(Atom::new(self.lhs.clone(), cmp, self.rhs.clone()));
        match self.cmp {
            Cmp::Lt => with(Cmp::Ge),
            Cmp::Le => with(Cmp::Gt),
            Cmp::Gt => with(Cmp::Le),
            Cmp::Ge => with(Cmp::Lt),
            Cmp::Eq => Formula::Or(vec![with(Cmp::Lt), with(Cmp::Gt)]),
        }
    }

    pub fn map_syms(&self, f: &impl Fn(Sym) -> Term) -> Atom {
        Atom::new(self.lhs.map_syms(f), self.cmp, self.rhs.map_syms(f))
    }

    pub fn eval(&self, value: &impl Fn(Sym) -> Rational) -> bool {
        self.cmp.holds(&self.lhs.eval(value), &self.rhs.eval(value))
    }

    /// `lhs - rhs` as an affine form, compared against zero with `cmp`.
    pub fn difference(&self) -> Affine {
        self.lhs
            .affine()
            .plus(&self.rhs.affine(), &-Rational::one())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.lhs, self.cmp.symbol(), self.rhs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
}

#[allow(clippy::should_implement_trait)]
impl Formula {
    pub fn bool(b: bool) -> Formula {
        if b {
            Formula::True
        } else {
            Formula::False
        }
    }

    /// Atom, folded to a constant when both sides are constant.
    pub fn atom(lhs: Term, cmp: Cmp, rhs: Term) -> Formula {
        if let (Some(a), Some(b)) = (lhs.as_const(), rhs.as_const()) {
            return Formula::bool(cmp.holds(a, b));
        }
        Formula::Atom(Atom::new(lhs, cmp, rhs))
    }

    pub fn not(f: Formula) -> Formula {
        match f {
            Formula::True => Formula::False,
            Formula::False => Formula::True,
            Formula::Not(inner) => *inner,
            other => Formula::Not(Box::new(other)),
        }
    }

    pub fn and(items: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for f in items {
            match f {
                Formula::True => {}
                Formula::False => return Formula::False,
                Formula::And(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::True,
            1 => out.pop().unwrap(),
            _ => Formula::And(out),
        }
    }

    pub fn or(items: impl IntoIterator<Item = Formula>) -> Formula {
        let mut out = Vec::new();
        for f in items {
            match f {
                Formula::False => {}
                Formula::True => return Formula::True,
                Formula::Or(inner) => out.extend(inner),
                other => out.push(other),
            }
        }
        match out.len() {
            0 => Formula::False,
            1 => out.pop().unwrap(),
            _ => Formula::Or(out),
        }
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        match (a, b) {
            (Formula::False, _) | (_, Formula::True) => Formula::True,
            (Formula::True, b) => b,
            (a, Formula::False) => Formula::not(a),
            (a, b) => Formula::Implies(Box::new(a), Box::new(b)),
        }
    }

    pub fn atoms(&self) -> Vec<&Atom> {
        let mut out = Vec::new();
        self.visit_atoms(&mut |a| out.push(a));
        out
    }

    pub fn visit_atoms<'a>(&'a self, f: &mut impl FnMut(&'a Atom)) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => f(a),
            Formula::Not(x) => x.visit_atoms(f),
            Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| x.visit_atoms(f)),
            Formula::Implies(a, b) => {
                a.visit_atoms(f);
                b.visit_atoms(f);
            }
        }
    }

    pub fn map_atoms(&self, f: &impl Fn(&Atom) -> Formula) -> Formula {
        match self {
            Formula::True => Formula::True,
            Formula::False => Formula::False,
            Formula::Atom(a) => f(a),
            Formula::Not(x) => Formula::Not(Box::new(x.map_atoms(f))),
            Formula::And(xs) => Formula::And(xs.iter().map(|x| x.map_atoms(f)).collect()),
            Formula::Or(xs) => Formula::Or(xs.iter().map(|x| x.map_atoms(f)).collect()),
            Formula::Implies(a, b) => {
                Formula::Implies(Box::new(a.map_atoms(f)), Box::new(b.map_atoms(f)))
            }
        }
    }

    /// Negation normal form: no `Not` or `Implies`; negated atoms are
    /// replaced by their complements (`a <> b` becomes `a < b \/ a > b`).
    pub fn nnf(&self) -> Formula {
        self.nnf_with(false)
    }

    fn nnf_with(&self, negate: bool) -> Formula {
        match (self, negate) {
            (Formula::True, _) | (Formula::False, _) => {
                Formula::bool(matches!(self, Formula::True) != negate)
            }
            (Formula::Atom(a), false) => Formula::Atom(a.clone()),
            (Formula::Atom(a), true) => a.complement(),
            (Formula::Not(x), _) => x.nnf_with(!negate),
            (Formula::And(xs), false) => Formula::and(xs.iter().map(|x| x.nnf_with(false))),
            (Formula::And(xs), true) => Formula::or(xs.iter().map(|x| x.nnf_with(true))),
            (Formula::Or(xs), false) => Formula::or(xs.iter().map(|x| x.nnf_with(false))),
            (Formula::Or(xs), true) => Formula::and(xs.iter().map(|x| x.nnf_with(true))),
            (Formula::Implies(a, b), false) => Formula::or([a.nnf_with(true), b.nnf_with(false)]),
            (Formula::Implies(a, b), true) => Formula::and([a.nnf_with(false), b.nnf_with(true)]),
        }
    }

    /// Disjunctive normal form as a list of conjunctions of atoms, or `None`
    /// when it would exceed `limit` conjunctions. `True` is `[[]]` and
    /// `False` is `[]`.
    pub fn dnf(&self, limit: usize) -> Option<Vec<Vec<Atom>>> {
        fn go(f: &Formula, limit: usize) -> Option<Vec<Vec<Atom>>> {
            match f {
                Formula::True => Some(vec![vec![]]),
                Formula::False => Some(vec![]),
                Formula::Atom(a) => Some(vec![vec![a.clone()]]),
                Formula::Or(xs) => {
                    let mut out = Vec::new();
                    for x in xs {
                        out.extend(go(x, limit)?);
                        if out.len() > limit {
                            return None;
                        }
                    }
                    Some(out)
                }
                Formula::And(xs) => {
                    let mut acc: Vec<Vec<Atom>> = vec![vec![]];
                    for x in xs {
                        let part = go(x, limit)?;
                        if acc.len().saturating_mul(part.len()) > limit {
                            return None;
                        }
                        acc = acc
                            .iter()
                            .flat_map(|c| {
                                part.iter().map(move |d| {
                                    let mut c = c.clone();
                                    c.extend(d.iter().cloned());
                                    c
                                })
                            })
                            .collect();
                    }
                    Some(acc)
                }
                Formula::Not(_) | Formula::Implies(..) => go(&f.nnf(), limit),
            }
        }
        go(&self.nnf(), limit)
    }

    pub fn eval(&self, value: &impl Fn(Sym) -> Rational) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => a.eval(value),
            Formula::Not(x) => !x.eval(value),
            Formula::And(xs) => xs.iter().all(|x| x.eval(value)),
            Formula::Or(xs) => xs.iter().any(|x| x.eval(value)),
            Formula::Implies(a, b) => !a.eval(value) || b.eval(value),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, xs: &[Formula], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, " {sep} ")?;
                }
                write!(f, "{x}")?;
            }
            write!(f, ")")
        };
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{a}"),
            Formula::Not(x) => write!(f, "not {x}"),
            Formula::And(xs) => join(f, xs, "/\\"),
            Formula::Or(xs) => join(f, xs, "\\/"),
            Formula::Implies(a, b) => write!(f, "({a} -> {b})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarRole {
    ModelInput,
    Auxiliary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputVar {
    pub name: String,
    pub role: VarRole,
}

/// One application `model @@ args`. Arguments may mention inputs and the
/// outputs of earlier applications only.
#[derive(Clone, Debug)]
pub struct ModelApp {
    pub model: Arc<NirGraph>,
    /// Where the model came from, for diagnostics.
    pub source: String,
    pub args: Vec<Term>,
}

impl ModelApp {
    pub fn n_outputs(&self) -> usize {
        self.model.output_dim()
    }
}

impl PartialEq for ModelApp {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.model, &other.model) && self.args == other.args
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GoalFormula {
    pub name: String,
    pub input_vars: Vec<InputVar>,
    pub hypothesis: Vec<Atom>,
    pub conclusion: Formula,
    pub model_apps: Vec<ModelApp>,
}

impl GoalFormula {
    /// Runs every model application on concrete inputs, in order.
    pub fn app_outputs(&self, inputs: &[Rational]) -> Result<Vec<Vec<Rational>>, NirError> {
        let mut outs: Vec<Vec<Rational>> = Vec::with_capacity(self.model_apps.len());
        for app in &self.model_apps {
            let args: Vec<Rational> = app
                .args
                .iter()
                .map(|t| t.eval(&|s| sym_value(s, inputs, &outs)))
                .collect();
            let result = forward(&app.model, &Tensor::vector(args))?;
            outs.push(result.into_iter().flat_map(Tensor::into_data).collect());
        }
        Ok(outs)
    }

    pub fn hypothesis_holds(&self, inputs: &[Rational]) -> bool {
        let value = |s: Sym| sym_value(s, inputs, &[]);
        self.hypothesis.iter().all(|a| a.eval(&value))
    }

    /// Truth of `hypothesis -> conclusion` at a concrete input.
    pub fn eval(&self, inputs: &[Rational]) -> Result<bool, NirError> {
        if !self.hypothesis_holds(inputs) {
            return Ok(true);
        }
        self.conclusion_holds(inputs)
    }

    pub fn conclusion_holds(&self, inputs: &[Rational]) -> Result<bool, NirError> {
        let outs = self.app_outputs(inputs)?;
        Ok(self.conclusion.eval(&|s| sym_value(s, inputs, &outs)))
    }

    /// Splits a conjunctive conclusion whose conjuncts carry their own
    /// input hypotheses into one goal per conjunct, named `<name>_<k>`.
    pub fn split(&self) -> Vec<GoalFormula> {
        let Formula::And(items) = &self.conclusion else {
            return vec![self.clone()];
        };
        let peelable = items
            .iter()
            .any(|c| matches!(c, Formula::Implies(h, _) if !peel(h).0.is_empty()));
        if !peelable {
            return vec![self.clone()];
        }
        items
            .iter()
            .enumerate()
            .map(|(k, item)| {
                let mut goal = GoalFormula {
                    name: format!("{}_{k}", self.name),
                    input_vars: self.input_vars.clone(),
                    hypothesis: self.hypothesis.clone(),
                    conclusion: item.clone(),
                    model_apps: self.model_apps.clone(),
                };
                goal.peel_hypotheses();
                goal.compact()
            })
            .collect()
    }

    /// Moves input-only atoms of leading antecedents into the hypothesis.
    pub fn peel_hypotheses(&mut self) {
        loop {
            let Formula::Implies(h, g) = &self.conclusion else {
                return;
            };
            let (atoms, rest) = peel(h);
            if atoms.is_empty() {
                return;
            }
            self.hypothesis.extend(atoms);
            self.conclusion = match rest {
                None => (**g).clone(),
                Some(r) => Formula::implies(r, (**g).clone()),
            };
        }
    }

    /// Drops unused variables and applications and renumbers the rest,
    /// preserving order.
    pub fn compact(&self) -> GoalFormula {
        let mut used_apps = vec![false; self.model_apps.len()];
        let mut used_vars = vec![false; self.input_vars.len()];
        let mark = |s: Sym, used_apps: &mut Vec<bool>, used_vars: &mut Vec<bool>| match s {
            Sym::Input(i) => used_vars[i] = true,
            Sym::Output { app, .. } => used_apps[app] = true,
        };
        self.conclusion
            .visit_atoms(&mut |a| a.visit_syms(&mut |s| mark(s, &mut used_apps, &mut used_vars)));
        for a in &self.hypothesis {
            a.visit_syms(&mut |s| mark(s, &mut used_apps, &mut used_vars));
        }
        // Arguments of used applications keep their dependencies alive.
        for i in (0..self.model_apps.len()).rev() {
            if used_apps[i] {
                for t in &self.model_apps[i].args {
                    t.visit_syms(&mut |s| mark(s, &mut used_apps, &mut used_vars));
                }
            }
        }
        let renumber = |used: &[bool]| -> Vec<Option<usize>> {
            let mut next = 0;
            used.iter()
                .map(|&u| {
                    u.then(|| {
                        next += 1;
                        next - 1
                    })
                })
                .collect()
        };
        let var_map = renumber(&used_vars);
        let app_map = renumber(&used_apps);
        let remap = |s: Sym| match s {
            Sym::Input(i) => Term::input(var_map[i].expect("used variable")),
            Sym::Output { app, index } => {
                Term::output(app_map[app].expect("used application"), index)
            }
        };
        GoalFormula {
            name: self.name.clone(),
            input_vars: self
                .input_vars
                .iter()
                .zip(&used_vars)
                .filter(|(_, &u)| u)
                .map(|(v, _)| v.clone())
                .collect(),
            hypothesis: self.hypothesis.iter().map(|a| a.map_syms(&remap)).collect(),
            conclusion: self
                .conclusion
                .map_atoms(&|a| Formula::Atom(a.map_syms(&remap))),
            model_apps: self
                .model_apps
                .iter()
                .zip(&used_apps)
                .filter(|(_, &u)| u)
                .map(|(app, _)| ModelApp {
                    model: app.model.clone(),
                    source: app.source.clone(),
                    args: app.args.iter().map(|t| t.map_syms(&remap)).collect(),
                })
                .collect(),
        }
    }

    /// Finite lower and upper bounds of every input implied by single-variable
    /// hypothesis atoms (`None` where a side is unbounded).
    pub fn input_box(&self) -> Vec<(Option<Rational>, Option<Rational>)> {
        let mut bounds = vec![(None::<Rational>, None::<Rational>); self.input_vars.len()];
        for atom in &self.hypothesis {
            let diff = atom.difference();
            if diff.coeffs.len() != 1 {
                continue;
            }
            let (&sym, coeff) = diff.coeffs.iter().next().unwrap();
            let Sym::Input(i) = sym else { continue };
            // coeff * x + constant (cmp) 0  =>  x (cmp') -constant / coeff
            let value = -&diff.constant / coeff;
            let cmp = if coeff.is_negative() {
                atom.cmp.flip()
            } else {
                atom.cmp
            };
            let (lo, hi) = &mut bounds[i];
            let tighten_lo = |lo: &mut Option<Rational>| {
                if lo.as_ref().is_none_or(|l| &value > l) {
                    *lo = Some(value.clone());
                }
            };
            let tighten_hi = |hi: &mut Option<Rational>| {
                if hi.as_ref().is_none_or(|h| &value < h) {
                    *hi = Some(value.clone());
                }
            };
            match cmp {
                Cmp::Ge | Cmp::Gt => tighten_lo(lo),
                Cmp::Le | Cmp::Lt => tighten_hi(hi),
                Cmp::Eq => {
                    tighten_lo(lo);
                    tighten_hi(hi);
                }
            }
        }
        bounds
    }
}

pub(crate) fn sym_value(s: Sym, inputs: &[Rational], outs: &[Vec<Rational>]) -> Rational {
    match s {
        Sym::Input(i) => inputs[i].clone(),
        Sym::Output { app, index } => outs[app][index].clone(),
    }
}

/// Splits an antecedent into its input-only atoms and the remainder.
fn peel(h: &Formula) -> (Vec<Atom>, Option<Formula>) {
    let conjuncts: Vec<Formula> = match h {
        Formula::And(xs) => xs.clone(),
        other => vec![other.clone()],
    };
    let mut atoms = Vec::new();
    let mut rest = Vec::new();
    for c in conjuncts {
        match c {
            Formula::Atom(a) if !a.mentions_outputs() => atoms.push(a),
            other => rest.push(other),
        }
    }
    let rest = if rest.is_empty() {
        None
    } else {
        Some(Formula::and(rest))
    };
    (atoms, rest)
}

impl fmt::Display for GoalFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "goal {}", self.name)?;
        for (i, v) in self.input_vars.iter().enumerate() {
            let role = match v.role {
                VarRole::ModelInput => "model-input",
                VarRole::Auxiliary => "auxiliary",
            };
            writeln!(f, "  var x{i} ({}, {role})", v.name)?;
        }
        for (i, app) in self.model_apps.iter().enumerate() {
            let args: Vec<String> = app.args.iter().map(|t| t.to_string()).collect();
            writeln!(
                f,
                "  app {i}: {} @@ [{}] -> {} outputs",
                app.source,
                args.join(", "),
                app.n_outputs()
            )?;
        }
        for a in &self.hypothesis {
            writeln!(f, "  hyp {a}")?;
        }
        write!(f, "  concl {}", self.conclusion)
    }
}

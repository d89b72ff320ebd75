//! The reducer: a symbolic evaluator over the typed AST.
//!
//! Booleans evaluate to formulas, reals to affine terms, and vectors to
//! lists of values. Quantified reals become input variables, which is only
//! sound when the quantifier is effectively universal, so every boolean
//! subexpression is reduced with a polarity. Integer quantifiers are
//! expanded over a finite range found by probing the body with a symbolic
//! integer.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::interp::formula::{
    Cmp, Formula, GoalFormula, InputVar, ModelApp, Sym, Term, TermError, VarRole,
};
use crate::interp::{Context, InterpError};
use crate::nir::NirGraph;
use crate::rational::Rational;
use crate::speclang::ast::{
    BinOp, Binder, BuiltInKind, CmpOp, Contract, Decl, DeclKind, Expr, ExprKind, Goal, SpecAst,
};
use crate::speclang::types::Type;
use crate::speclang::{prelude, Span};

type R<T> = Result<T, InterpError>;

/// Largest integer range a quantifier may be expanded over.
const MAX_EXPANSION: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Polarity {
    Pos,
    Neg,
    Mixed,
}

impl Polarity {
    fn flip(self) -> Polarity {
        match self {
            Polarity::Pos => Polarity::Neg,
            Polarity::Neg => Polarity::Pos,
            Polarity::Mixed => Polarity::Mixed,
        }
    }
}

#[derive(Clone)]
enum Value<'a> {
    Int(BigInt),
    /// `coef * i + offset` for the probe variable `var`.
    IntSym {
        var: usize,
        coef: BigInt,
        offset: BigInt,
    },
    Bool(Formula),
    Str(String),
    Real(Term),
    Vector(Arc<Vec<Value<'a>>>),
    /// Quantified vector whose length is not known yet.
    Pending(usize),
    Tuple(Vec<Value<'a>>),
    Model(Arc<NirGraph>, String),
    Closure(Arc<Closure<'a>>),
    /// Boolean expression evaluated at its use site.
    Thunk(Arc<Thunk<'a>>),
    /// Stand-in for variables that probing must not look into.
    Opaque,
}

struct Closure<'a> {
    params: Vec<&'a str>,
    body: &'a Expr,
    env: Env<'a>,
    applied: Vec<Value<'a>>,
}

struct Thunk<'a> {
    expr: &'a Expr,
    env: Env<'a>,
}

#[derive(Clone, Default)]
struct Env<'a>(Option<Arc<EnvNode<'a>>>);

struct EnvNode<'a> {
    name: &'a str,
    value: Value<'a>,
    next: Env<'a>,
}

impl<'a> Env<'a> {
    fn bind(&self, name: &'a str, value: Value<'a>) -> Env<'a> {
        Env(Some(Arc::new(EnvNode {
            name,
            value,
            next: self.clone(),
        })))
    }

    fn lookup(&self, name: &str) -> Option<&Value<'a>> {
        let mut cur = &self.0;
        while let Some(node) = cur {
            if node.name == name {
                return Some(&node.value);
            }
            cur = &node.next.0;
        }
        None
    }
}

struct VarInfo {
    name: String,
    key: (usize, usize),
}

struct PendingInfo {
    name: String,
    seq: usize,
    resolved: Option<Vec<usize>>,
}

/// Over-approximation of a set of integers by an interval.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Range {
    lo: Option<BigInt>,
    hi: Option<BigInt>,
    empty: bool,
}

impl Range {
    fn top() -> Range {
        Range {
            lo: None,
            hi: None,
            empty: false,
        }
    }

    fn empty() -> Range {
        Range {
            lo: None,
            hi: None,
            empty: true,
        }
    }

    fn point(v: BigInt) -> Range {
        Range {
            lo: Some(v.clone()),
            hi: Some(v),
            empty: false,
        }
    }

    fn normalized(self) -> Range {
        match (&self.lo, &self.hi) {
            (Some(l), Some(h)) if l > h => Range::empty(),
            _ => self,
        }
    }

    fn meet(self, other: Range) -> Range {
        if self.empty || other.empty {
            return Range::empty();
        }
        let lo = match (self.lo, other.lo) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        let hi = match (self.hi, other.hi) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        Range {
            lo,
            hi,
            empty: false,
        }
        .normalized()
    }

    fn join(self, other: Range) -> Range {
        if self.empty {
            return other;
        }
        if other.empty {
            return self;
        }
        let lo = match (self.lo, other.lo) {
            (Some(a), Some(b)) => Some(a.min(b)),
            _ => None,
        };
        let hi = match (self.hi, other.hi) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
        Range {
            lo,
            hi,
            empty: false,
        }
    }

    fn from_bool(b: bool) -> Range {
        if b {
            Range::top()
        } else {
            Range::empty()
        }
    }
}

struct Reducer<'a> {
    ctx: &'a Context,
    globals: HashMap<&'a str, &'a Decl>,
    global_values: HashMap<&'a str, Value<'a>>,
    vars: Vec<VarInfo>,
    pending: Vec<PendingInfo>,
    apps: Vec<ModelApp>,
    next_seq: usize,
    next_probe: usize,
    probing: bool,
}

fn int_value(v: i64) -> BigInt {
    BigInt::from(v)
}

fn shape_err(span: Span, detail: impl Into<String>) -> InterpError {
    InterpError::UnresolvedShape {
        span,
        detail: detail.into(),
    }
}

fn unsupported(span: Span, detail: impl Into<String>) -> InterpError {
    InterpError::Unsupported {
        span,
        detail: detail.into(),
    }
}

fn term_err(e: TermError, span: Span) -> InterpError {
    match e {
        TermError::NonLinear(term) => InterpError::NonLinearTerm { span, term },
        TermError::DivisionByZero => InterpError::DivisionByZeroConstant { span },
    }
}

fn is_bool(e: &Expr) -> bool {
    e.ty == Some(Type::Bool)
}

/// Goals for functions with `ensures` clauses:
/// `forall binders. requires -> let result = body in ensures`.
pub fn contract_goals(ast: &SpecAst) -> Vec<Goal> {
    let mut out = Vec::new();
    for d in ast.decls() {
        if d.kind != DeclKind::Function {
            continue;
        }
        let (mut reqs, mut ens) = (Vec::new(), Vec::new());
        for c in &d.contracts {
            match c {
                Contract::Requires(e) => reqs.push(e.clone()),
                Contract::Ensures(e) => ens.push(e.clone()),
            }
        }
        if ens.is_empty() {
            continue;
        }
        let span = d.span;
        let typed = |kind: ExprKind| Expr {
            kind,
            span,
            ty: Some(Type::Bool),
        };
        let conj = |items: Vec<Expr>| {
            items
                .into_iter()
                .rev()
                .reduce(|acc, e| typed(ExprKind::BinOp(BinOp::And, Box::new(e), Box::new(acc))))
                .expect("non-empty")
        };
        let body = d.body.clone().expect("function body");
        let mut goal = typed(ExprKind::Let {
            name: "result".into(),
            params: vec![],
            value: Box::new(body),
            body: Box::new(conj(ens)),
        });
        if !reqs.is_empty() {
            goal = typed(ExprKind::BinOp(
                BinOp::Implies,
                Box::new(conj(reqs)),
                Box::new(goal),
            ));
        }
        if !d.binders.is_empty() {
            goal = typed(ExprKind::Forall(d.binders.clone(), Box::new(goal)));
        }
        out.push(Goal {
            name: d.name.clone(),
            body: goal,
            span,
        });
    }
    out
}

/// Reduces one goal of a type-checked file.
pub fn reduce(goal: &Goal, ast: &SpecAst, ctx: &Context) -> R<GoalFormula> {
    let mut r = Reducer::new(ast, ctx);
    let f = r.reduce_formula(&goal.body, &Env::default(), Polarity::Pos)?;
    Ok(r.finish(&goal.name, f))
}

/// Reduces the goal (or contract goal) called `name`.
pub fn reduce_goal(ast: &SpecAst, name: &str, ctx: &Context) -> R<GoalFormula> {
    let contracts = contract_goals(ast);
    let goal = ast
        .goals()
        .chain(contracts.iter())
        .find(|g| g.name == name)
        .ok_or_else(|| InterpError::UnknownGoal(name.to_string()))?;
    reduce(goal, ast, ctx)
}

/// Reduces every goal, then every contract goal, in source order.
pub fn reduce_all(ast: &SpecAst, ctx: &Context) -> R<Vec<GoalFormula>> {
    let contracts = contract_goals(ast);
    ast.goals()
        .chain(contracts.iter())
        .map(|g| reduce(g, ast, ctx))
        .collect()
}

impl<'a> Reducer<'a> {
    fn new(ast: &'a SpecAst, ctx: &'a Context) -> Self {
        let mut globals = HashMap::new();
        for d in prelude().ast.decls().chain(ast.decls()) {
            if d.kind != DeclKind::TypeAlias {
                globals.insert(d.name.as_str(), d);
            }
        }
        Reducer {
            ctx,
            globals,
            global_values: HashMap::new(),
            vars: Vec::new(),
            pending: Vec::new(),
            apps: Vec::new(),
            next_seq: 0,
            next_probe: 0,
            probing: false,
        }
    }

    fn finish(self, name: &str, formula: Formula) -> GoalFormula {
        let mut order: Vec<usize> = (0..self.vars.len()).collect();
        order.sort_by_key(|&i| self.vars[i].key);
        let mut new_index = vec![0; self.vars.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let remap = |s: Sym| match s {
            Sym::Input(i) => Term::input(new_index[i]),
            out => Term::Sym(out),
        };
        let apps: Vec<ModelApp> = self
            .apps
            .iter()
            .map(|a| ModelApp {
                model: a.model.clone(),
                source: a.source.clone(),
                args: a.args.iter().map(|t| t.map_syms(&remap)).collect(),
            })
            .collect();
        let mut in_args = vec![false; self.vars.len()];
        for a in &apps {
            for t in &a.args {
                t.visit_syms(&mut |s| {
                    if let Sym::Input(i) = s {
                        in_args[i] = true;
                    }
                });
            }
        }
        let mut seen: HashMap<String, usize> = HashMap::new();
        let input_vars = order
            .iter()
            .enumerate()
            .map(|(new, &old)| {
                let base = self.vars[old].name.clone();
                let count = seen.entry(base.clone()).or_insert(0);
                let name = if *count == 0 {
                    base
                } else {
                    format!("{base}_{count}")
                };
                *count += 1;
                InputVar {
                    name,
                    role: if in_args[new] {
                        VarRole::ModelInput
                    } else {
                        VarRole::Auxiliary
                    },
                }
            })
            .collect();
        let mut goal = GoalFormula {
            name: name.to_string(),
            input_vars,
            hypothesis: vec![],
            conclusion: formula.map_atoms(&|a| Formula::Atom(a.map_syms(&remap))),
            model_apps: apps,
        };
        goal.peel_hypotheses();
        goal.compact()
    }

    fn new_var(&mut self, name: String, key: (usize, usize)) -> usize {
        self.vars.push(VarInfo { name, key });
        self.vars.len() - 1
    }

    fn materialize(&mut self, id: usize, n: usize) -> Vec<usize> {
        if let Some(v) = &self.pending[id].resolved {
            return v.clone();
        }
        let seq = self.pending[id].seq;
        let name = self.pending[id].name.clone();
        let vars: Vec<usize> = (0..n)
            .map(|k| self.new_var(format!("{name}[{k}]"), (seq, k)))
            .collect();
        self.pending[id].resolved = Some(vars.clone());
        vars
    }

    /// Replaces a pending vector by its elements once its length is known.
    fn resolve(&self, v: Value<'a>) -> Value<'a> {
        match v {
            Value::Pending(id) => match &self.pending[id].resolved {
                Some(vars) => Value::Vector(Arc::new(
                    vars.iter().map(|&i| Value::Real(Term::input(i))).collect(),
                )),
                None => Value::Pending(id),
            },
            other => other,
        }
    }

    fn pending_name(&self, id: usize) -> &str {
        &self.pending[id].name
    }

    fn reduce_formula(&mut self, e: &'a Expr, env: &Env<'a>, pol: Polarity) -> R<Formula> {
        let v = self.reduce(e, env, pol)?;
        self.to_formula(v, e.span)
    }

    fn to_formula(&self, v: Value<'a>, span: Span) -> R<Formula> {
        match v {
            Value::Bool(f) => Ok(f),
            _ => Err(unsupported(span, "expected a boolean value")),
        }
    }

    fn expect_int(&self, v: Value<'a>, span: Span) -> R<BigInt> {
        match v {
            Value::Int(i) => Ok(i),
            Value::IntSym { .. } => Err(unsupported(span, "symbolic integer")),
            _ => Err(unsupported(span, "expected an integer value")),
        }
    }

    fn force(&mut self, v: Value<'a>, pol: Polarity) -> R<Value<'a>> {
        match v {
            Value::Thunk(t) => self.reduce(t.expr, &t.env, pol),
            other => Ok(other),
        }
    }

    fn global(&mut self, name: &str, span: Span, pol: Polarity) -> R<Value<'a>> {
        let Some(&decl) = self.globals.get(name) else {
            return Err(unsupported(span, format!("unknown identifier `{name}`")));
        };
        let body = decl.body.as_ref().expect("function body");
        if !decl.binders.is_empty() {
            return Ok(Value::Closure(Arc::new(Closure {
                params: decl.binders.iter().map(|b| b.name.as_str()).collect(),
                body,
                env: Env::default(),
                applied: vec![],
            })));
        }
        if decl.kind == DeclKind::Predicate || is_bool(body) {
            return self.reduce(body, &Env::default(), pol);
        }
        if let Some(v) = self.global_values.get(decl.name.as_str()) {
            return Ok(v.clone());
        }
        let v = self.reduce(body, &Env::default(), Polarity::Mixed)?;
        if !self.probing {
            self.global_values.insert(decl.name.as_str(), v.clone());
        }
        Ok(v)
    }

    /// Argument values: booleans are passed unevaluated so that their
    /// quantifiers see the polarity of the place they are used.
    fn argument(&mut self, e: &'a Expr, env: &Env<'a>) -> R<Value<'a>> {
        if is_bool(e) {
            Ok(Value::Thunk(Arc::new(Thunk {
                expr: e,
                env: env.clone(),
            })))
        } else {
            self.reduce(e, env, Polarity::Mixed)
        }
    }

    fn apply(
        &mut self,
        f: Value<'a>,
        args: Vec<Value<'a>>,
        pol: Polarity,
        span: Span,
    ) -> R<Value<'a>> {
        let Value::Closure(c) = f else {
            return Err(unsupported(span, "application of a non-function value"));
        };
        let mut applied = c.applied.clone();
        let mut rest = args.into_iter();
        while applied.len() < c.params.len() {
            match rest.next() {
                Some(a) => applied.push(a),
                None => {
                    return Ok(Value::Closure(Arc::new(Closure {
                        params: c.params.clone(),
                        body: c.body,
                        env: c.env.clone(),
                        applied,
                    })))
                }
            }
        }
        let mut env = c.env.clone();
        for (p, v) in c.params.iter().zip(applied) {
            env = env.bind(p, v);
        }
        let result = self.reduce(c.body, &env, pol)?;
        let remaining: Vec<Value<'a>> = rest.collect();
        if remaining.is_empty() {
            Ok(result)
        } else {
            let result = self.force(result, pol)?;
            self.apply(result, remaining, pol, span)
        }
    }

    fn reduce(&mut self, e: &'a Expr, env: &Env<'a>, pol: Polarity) -> R<Value<'a>> {
        let span = e.span;
        match &e.kind {
            ExprKind::Var(name) => match env.lookup(name) {
                Some(v) => {
                    let v = v.clone();
                    let v = self.force(v, pol)?;
                    Ok(self.resolve(v))
                }
                None => self.global(name, span, pol),
            },
            ExprKind::IntLit(i) => Ok(Value::Int(i.clone())),
            ExprKind::FloatLit { value, .. } => Ok(Value::Real(Term::Const(value.clone()))),
            ExprKind::BoolLit(b) => Ok(Value::Bool(Formula::bool(*b))),
            ExprKind::StringLit(s) => Ok(Value::Str(s.clone())),
            ExprKind::Paren(inner) | ExprKind::Ascribe(inner, _) => self.reduce(inner, env, pol),
            ExprKind::Tuple(items) => {
                let vs = items
                    .iter()
                    .map(|i| self.reduce(i, env, Polarity::Mixed))
                    .collect::<R<Vec<_>>>()?;
                Ok(Value::Tuple(vs))
            }
            ExprKind::App(head, args) => {
                let f = self.reduce(head, env, Polarity::Mixed)?;
                let vs = args
                    .iter()
                    .map(|a| self.argument(a, env))
                    .collect::<R<Vec<_>>>()?;
                self.apply(f, vs, pol, span)
            }
            ExprKind::Let {
                name,
                params,
                value,
                body,
            } => {
                let v = if !params.is_empty() {
                    Value::Closure(Arc::new(Closure {
                        params: params.iter().map(|b| b.name.as_str()).collect(),
                        body: value,
                        env: env.clone(),
                        applied: vec![],
                    }))
                } else {
                    self.argument(value, env)?
                };
                let env = env.bind(name, v);
                self.reduce(body, &env, pol)
            }
            ExprKind::Fun(binders, body) => Ok(Value::Closure(Arc::new(Closure {
                params: binders.iter().map(|b| b.name.as_str()).collect(),
                body,
                env: env.clone(),
                applied: vec![],
            }))),
            ExprKind::If(c, t, f) => {
                let cond = self.reduce_formula(c, env, Polarity::Mixed)?;
                match cond {
                    Formula::True => self.reduce(t, env, pol),
                    Formula::False => self.reduce(f, env, pol),
                    cond if is_bool(e) => {
                        let tv = self.reduce_formula(t, env, pol)?;
                        let fv = self.reduce_formula(f, env, pol)?;
                        Ok(Value::Bool(Formula::and([
                            Formula::implies(cond.clone(), tv),
                            Formula::implies(Formula::not(cond), fv),
                        ])))
                    }
                    _ => Err(unsupported(
                        span,
                        "conditional expression on a non-constant condition",
                    )),
                }
            }
            ExprKind::Not(inner) => {
                let f = self.reduce_formula(inner, env, pol.flip())?;
                Ok(Value::Bool(Formula::not(f)))
            }
            ExprKind::BinOp(op, a, b) => self.binop(*op, a, b, env, pol, span),
            ExprKind::Compare { first, rest } => {
                let mut prev = self.reduce(first, env, Polarity::Mixed)?;
                let mut parts = Vec::new();
                for (op, operand) in rest {
                    let next = self.reduce(operand, env, Polarity::Mixed)?;
                    parts.push(self.compare(*op, prev, next.clone(), span)?);
                    prev = next;
                }
                Ok(Value::Bool(Formula::and(parts)))
            }
            ExprKind::Neg { operand, .. } => {
                let v = self.reduce(operand, env, Polarity::Mixed)?;
                self.negate(v, span)
            }
            ExprKind::Forall(binders, body) => Ok(Value::Bool(
                self.quantify(binders, body, env, pol, true, span)?,
            )),
            ExprKind::Exists(binders, body) => Ok(Value::Bool(
                self.quantify(binders, body, env, pol, false, span)?,
            )),
            ExprKind::BuiltIn { kind, args, .. } => self.builtin(*kind, args, env, pol, span),
        }
    }

    fn binop(
        &mut self,
        op: BinOp,
        a: &'a Expr,
        b: &'a Expr,
        env: &Env<'a>,
        pol: Polarity,
        span: Span,
    ) -> R<Value<'a>> {
        let logical = match op {
            BinOp::Implies => {
                let x = self.reduce_formula(a, env, pol.flip())?;
                let y = self.reduce_formula(b, env, pol)?;
                return Ok(Value::Bool(Formula::implies(x, y)));
            }
            BinOp::And | BinOp::AndAlso => true,
            BinOp::Or | BinOp::OrElse => false,
            _ => {
                let x = self.reduce(a, env, Polarity::Mixed)?;
                let y = self.reduce(b, env, Polarity::Mixed)?;
                return self.arith(op, x, y, span);
            }
        };
        let x = self.reduce_formula(a, env, pol)?;
        let y = self.reduce_formula(b, env, pol)?;
        Ok(Value::Bool(if logical {
            Formula::and([x, y])
        } else {
            Formula::or([x, y])
        }))
    }

    fn arith(&mut self, op: BinOp, x: Value<'a>, y: Value<'a>, span: Span) -> R<Value<'a>> {
        let (x, y) = (self.resolve(x), self.resolve(y));
        let (x, y) = self.match_lengths(x, y);
        match (x, y) {
            (Value::Int(a), Value::Int(b)) => Ok(Value::Int(match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                _ => {
                    if b.is_zero() {
                        return Err(InterpError::DivisionByZeroConstant { span });
                    }
                    // Euclidean division, as for mathematical integers.
                    let (q, r) = a.div_mod_floor(&b);
                    if b.is_negative() && !r.is_zero() {
                        q + 1
                    } else {
                        q
                    }
                }
            })),
            (Value::IntSym { var, coef, offset }, Value::Int(k)) => match op {
                BinOp::Add => Ok(Value::IntSym {
                    var,
                    coef,
                    offset: offset + k,
                }),
                BinOp::Sub => Ok(Value::IntSym {
                    var,
                    coef,
                    offset: offset - k,
                }),
                BinOp::Mul => Ok(Value::IntSym {
                    var,
                    coef: coef * &k,
                    offset: offset * k,
                }),
                _ => Err(unsupported(span, "division of a symbolic integer")),
            },
            (Value::Int(k), Value::IntSym { var, coef, offset }) => match op {
                BinOp::Add => Ok(Value::IntSym {
                    var,
                    coef,
                    offset: offset + k,
                }),
                BinOp::Sub => Ok(Value::IntSym {
                    var,
                    coef: -coef,
                    offset: k - offset,
                }),
                BinOp::Mul => Ok(Value::IntSym {
                    var,
                    coef: coef * &k,
                    offset: offset * k,
                }),
                _ => Err(unsupported(span, "division by a symbolic integer")),
            },
            (Value::Real(a), Value::Real(b)) => {
                let t = match op {
                    BinOp::Add | BinOp::FAdd => Ok(Term::add(a, b)),
                    BinOp::Sub | BinOp::FSub => Ok(Term::sub(a, b)),
                    BinOp::Mul | BinOp::FMul => Term::mul(a, b),
                    _ => Term::div(a, b),
                };
                Ok(Value::Real(t.map_err(|e| term_err(e, span))?))
            }
            (Value::Vector(a), Value::Vector(b)) => {
                if a.len() != b.len() {
                    return Err(InterpError::ShapeMismatch {
                        span,
                        detail: format!("vectors of lengths {} and {}", a.len(), b.len()),
                    });
                }
                let items = a
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| self.arith(op, x.clone(), y.clone(), span))
                    .collect::<R<Vec<_>>>()?;
                Ok(Value::Vector(Arc::new(items)))
            }
            (Value::Pending(id), _) | (_, Value::Pending(id)) => Err(shape_err(
                span,
                format!("length of `{}` is unknown", self.pending_name(id)),
            )),
            _ => Err(unsupported(
                span,
                format!("operator `{}` on these operands", op.symbol()),
            )),
        }
    }

    /// A pending vector next to a concrete one takes its length.
    fn match_lengths(&mut self, x: Value<'a>, y: Value<'a>) -> (Value<'a>, Value<'a>) {
        if self.probing {
            return (x, y);
        }
        match (&x, &y) {
            (Value::Pending(id), Value::Vector(v)) => {
                self.materialize(*id, v.len());
                (self.resolve(x), y)
            }
            (Value::Vector(v), Value::Pending(id)) => {
                self.materialize(*id, v.len());
                let y = self.resolve(y);
                (x, y)
            }
            _ => (x, y),
        }
    }

    fn negate(&mut self, v: Value<'a>, span: Span) -> R<Value<'a>> {
        match self.resolve(v) {
            Value::Int(i) => Ok(Value::Int(-i)),
            Value::IntSym { var, coef, offset } => Ok(Value::IntSym {
                var,
                coef: -coef,
                offset: -offset,
            }),
            Value::Real(t) => Ok(Value::Real(Term::neg(t))),
            Value::Vector(items) => {
                let items = items
                    .iter()
                    .map(|x| self.negate(x.clone(), span))
                    .collect::<R<Vec<_>>>()?;
                Ok(Value::Vector(Arc::new(items)))
            }
            Value::Pending(id) => Err(shape_err(
                span,
                format!("length of `{}` is unknown", self.pending_name(id)),
            )),
            _ => Err(unsupported(span, "negation of a non-numeric value")),
        }
    }

    fn compare(&mut self, op: CmpOp, x: Value<'a>, y: Value<'a>, span: Span) -> R<Formula> {
        match op {
            CmpOp::Eq => self.equal(x, y, span),
            CmpOp::Ne => Ok(Formula::not(self.equal(x, y, span)?)),
            CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
                let a = self.expect_int(x, span)?;
                let b = self.expect_int(y, span)?;
                Ok(Formula::bool(match op {
                    CmpOp::Lt => a < b,
                    CmpOp::Le => a <= b,
                    CmpOp::Gt => a > b,
                    _ => a >= b,
                }))
            }
            _ => {
                let (Value::Real(a), Value::Real(b)) = (x, y) else {
                    return Err(unsupported(span, "float comparison of non-real values"));
                };
                let cmp = match op {
                    CmpOp::FLt => Cmp::Lt,
                    CmpOp::FLe => Cmp::Le,
                    CmpOp::FGt => Cmp::Gt,
                    _ => Cmp::Ge,
                };
                Ok(Formula::atom(a, cmp, b))
            }
        }
    }

    fn equal(&mut self, x: Value<'a>, y: Value<'a>, span: Span) -> R<Formula> {
        let (x, y) = (self.resolve(x), self.resolve(y));
        let (x, y) = self.match_lengths(x, y);
        match (x, y) {
            (Value::Int(a), Value::Int(b)) => Ok(Formula::bool(a == b)),
            (Value::Real(a), Value::Real(b)) => Ok(Formula::atom(a, Cmp::Eq, b)),
            (Value::Str(a), Value::Str(b)) => Ok(Formula::bool(a == b)),
            (Value::Bool(a), Value::Bool(b)) => Ok(Formula::and([
                Formula::implies(a.clone(), b.clone()),
                Formula::implies(b, a),
            ])),
            (Value::Model(a, _), Value::Model(b, _)) => Ok(Formula::bool(Arc::ptr_eq(&a, &b))),
            (Value::Vector(a), Value::Vector(b)) => {
                if a.len() != b.len() {
                    return Ok(Formula::False);
                }
                let parts = a
                    .iter()
                    .zip(b.iter())
                    .map(|(p, q)| self.equal(p.clone(), q.clone(), span))
                    .collect::<R<Vec<_>>>()?;
                Ok(Formula::and(parts))
            }
            (Value::Tuple(a), Value::Tuple(b)) if a.len() == b.len() => {
                let parts = a
                    .into_iter()
                    .zip(b)
                    .map(|(p, q)| self.equal(p, q, span))
                    .collect::<R<Vec<_>>>()?;
                Ok(Formula::and(parts))
            }
            (Value::Pending(id), _) | (_, Value::Pending(id)) => Err(shape_err(
                span,
                format!("length of `{}` is unknown", self.pending_name(id)),
            )),
            _ => Err(unsupported(span, "equality on these values")),
        }
    }

    fn quantify(
        &mut self,
        binders: &'a [Binder],
        body: &'a Expr,
        env: &Env<'a>,
        pol: Polarity,
        forall: bool,
        span: Span,
    ) -> R<Formula> {
        let Some((b, rest)) = binders.split_first() else {
            return self.reduce_formula(body, env, pol);
        };
        let combine = |parts: Vec<Formula>| {
            if forall {
                Formula::and(parts)
            } else {
                Formula::or(parts)
            }
        };
        let universal = (forall && pol == Polarity::Pos) || (!forall && pol == Polarity::Neg);
        match &b.ty {
            Some(Type::Int) => {
                let range = self.probe_range(b, rest, body, env, forall)?;
                if range.empty {
                    return Ok(Formula::bool(forall));
                }
                let (Some(lo), Some(hi)) = (range.lo, range.hi) else {
                    return Err(InterpError::UnboundedQuantifier {
                        span,
                        name: b.name.clone(),
                    });
                };
                let count = (&hi - &lo + 1u32).to_u64().unwrap_or(u64::MAX);
                if count > MAX_EXPANSION {
                    return Err(InterpError::UnboundedQuantifier {
                        span,
                        name: b.name.clone(),
                    });
                }
                let mut parts = Vec::new();
                let mut k = lo;
                while k <= hi {
                    let env = env.bind(&b.name, Value::Int(k.clone()));
                    let f = self.quantify(rest, body, &env, pol, forall, span)?;
                    let stop = if forall {
                        f == Formula::False
                    } else {
                        f == Formula::True
                    };
                    parts.push(f);
                    if stop {
                        break;
                    }
                    k += 1;
                }
                Ok(combine(parts))
            }
            Some(Type::Bool) => {
                let mut parts = Vec::new();
                for v in [false, true] {
                    let env = env.bind(&b.name, Value::Bool(Formula::bool(v)));
                    parts.push(self.quantify(rest, body, &env, pol, forall, span)?);
                }
                Ok(combine(parts))
            }
            Some(Type::Float) | Some(Type::Vector(_)) => {
                if self.probing {
                    let env = env.bind(&b.name, Value::Opaque);
                    return self.quantify(rest, body, &env, pol, forall, span);
                }
                if !universal {
                    return Err(InterpError::AlternatingQuantifiers { span });
                }
                let seq = self.next_seq;
                self.next_seq += 1;
                let value = match &b.ty {
                    Some(Type::Float) => {
                        Value::Real(Term::input(self.new_var(b.name.clone(), (seq, 0))))
                    }
                    Some(Type::Vector(elem)) if **elem == Type::Float => {
                        self.pending.push(PendingInfo {
                            name: b.name.clone(),
                            seq,
                            resolved: None,
                        });
                        Value::Pending(self.pending.len() - 1)
                    }
                    _ => {
                        return Err(unsupported(
                            b.span,
                            format!("quantification over `{}` of this vector type", b.name),
                        ))
                    }
                };
                let env = env.bind(&b.name, value);
                self.quantify(rest, body, &env, pol, forall, span)
            }
            Some(other) => Err(unsupported(
                b.span,
                format!("quantification over `{}` of type {other}", b.name),
            )),
            None => Err(unsupported(b.span, format!("untyped binder `{}`", b.name))),
        }
    }

    /// Integers at which the quantifier body may matter: where it may be
    /// false for `forall`, where it may be true for `exists`.
    fn probe_range(
        &mut self,
        b: &'a Binder,
        rest: &'a [Binder],
        body: &'a Expr,
        env: &Env<'a>,
        forall: bool,
    ) -> R<Range> {
        let var = self.next_probe;
        self.next_probe += 1;
        let mut env = env.bind(
            &b.name,
            Value::IntSym {
                var,
                coef: BigInt::one(),
                offset: BigInt::zero(),
            },
        );
        for r in rest {
            env = env.bind(&r.name, Value::Opaque);
        }
        let was_probing = self.probing;
        self.probing = true;
        let range = self.may(body, &env, !forall, var);
        self.probing = was_probing;
        Ok(range)
    }

    /// Over-approximates the values of probe variable `var` for which `e`
    /// may evaluate to `want`. Anything not understood yields the full range.
    fn may(&mut self, e: &'a Expr, env: &Env<'a>, want: bool, var: usize) -> Range {
        match &e.kind {
            ExprKind::Paren(x) | ExprKind::Ascribe(x, _) => self.may(x, env, want, var),
            ExprKind::Not(x) => self.may(x, env, !want, var),
            ExprKind::BinOp(
                op @ (BinOp::And | BinOp::AndAlso | BinOp::Or | BinOp::OrElse),
                a,
                b,
            ) => {
                let conj = matches!(op, BinOp::And | BinOp::AndAlso) == want;
                let (x, y) = (self.may(a, env, want, var), self.may(b, env, want, var));
                if conj {
                    x.meet(y)
                } else {
                    x.join(y)
                }
            }
            ExprKind::BinOp(BinOp::Implies, a, b) => {
                if want {
                    let x = self.may(a, env, false, var);
                    x.join(self.may(b, env, true, var))
                } else {
                    let x = self.may(a, env, true, var);
                    x.meet(self.may(b, env, false, var))
                }
            }
            ExprKind::Compare { first, rest } => {
                let mut values = vec![self.reduce(first, env, Polarity::Mixed).ok()];
                for (_, operand) in rest {
                    values.push(self.reduce(operand, env, Polarity::Mixed).ok());
                }
                let mut acc = if want { Range::top() } else { Range::empty() };
                for (k, (op, _)) in rest.iter().enumerate() {
                    let r = match (&values[k], &values[k + 1]) {
                        (Some(a), Some(b)) => compare_range(*op, a, b, want, var),
                        _ => Range::top(),
                    };
                    acc = if want { acc.meet(r) } else { acc.join(r) };
                }
                acc
            }
            ExprKind::Let {
                name,
                params,
                value,
                body,
            } => {
                let v = if !params.is_empty() {
                    Value::Closure(Arc::new(Closure {
                        params: params.iter().map(|b| b.name.as_str()).collect(),
                        body: value,
                        env: env.clone(),
                        applied: vec![],
                    }))
                } else {
                    self.argument(value, env).unwrap_or(Value::Opaque)
                };
                let env = env.bind(name, v);
                self.may(body, &env, want, var)
            }
            ExprKind::Forall(bs, body) | ExprKind::Exists(bs, body) => {
                let mut env = env.clone();
                for b in bs {
                    env = env.bind(&b.name, Value::Opaque);
                }
                self.may(body, &env, want, var)
            }
            ExprKind::If(_, t, f) => {
                let x = self.may(t, env, want, var);
                x.join(self.may(f, env, want, var))
            }
            ExprKind::Var(name) => match env.lookup(name) {
                Some(Value::Thunk(t)) => {
                    let t = t.clone();
                    self.may(t.expr, &t.env, want, var)
                }
                Some(_) => self.constant_range(e, env, want),
                None => match self.globals.get(name.as_str()) {
                    Some(&d) if d.binders.is_empty() && d.body.as_ref().is_some_and(is_bool) => {
                        self.may(d.body.as_ref().unwrap(), &Env::default(), want, var)
                    }
                    _ => self.constant_range(e, env, want),
                },
            },
            ExprKind::App(head, args) => {
                let Ok(Value::Closure(c)) = self.reduce(head, env, Polarity::Mixed) else {
                    return self.constant_range(e, env, want);
                };
                let mut applied = c.applied.clone();
                for a in args {
                    applied.push(self.argument(a, env).unwrap_or(Value::Opaque));
                }
                if applied.len() != c.params.len() {
                    return self.constant_range(e, env, want);
                }
                let mut inner = c.env.clone();
                for (p, v) in c.params.iter().zip(applied) {
                    inner = inner.bind(p, v);
                }
                self.may(c.body, &inner, want, var)
            }
            _ => self.constant_range(e, env, want),
        }
    }

    fn constant_range(&mut self, e: &'a Expr, env: &Env<'a>, want: bool) -> Range {
        match self.reduce(e, env, Polarity::Mixed) {
            Ok(Value::Bool(Formula::True)) => Range::from_bool(want),
            Ok(Value::Bool(Formula::False)) => Range::from_bool(!want),
            _ => Range::top(),
        }
    }

    fn builtin(
        &mut self,
        kind: BuiltInKind,
        args: &'a [Expr],
        env: &Env<'a>,
        pol: Polarity,
        span: Span,
    ) -> R<Value<'a>> {
        match kind {
            BuiltInKind::ReadModel => {
                let Value::Str(path) = self.reduce(&args[0], env, Polarity::Mixed)? else {
                    return Err(unsupported(span, "read_model expects a string literal"));
                };
                let resolved = self.ctx.resolve(&path);
                let graph = self.ctx.cache.read_model(&resolved)?;
                Ok(Value::Model(graph, path))
            }
            BuiltInKind::ReadDataset => {
                let Value::Str(path) = self.reduce(&args[0], env, Polarity::Mixed)? else {
                    return Err(unsupported(span, "read_dataset expects a string literal"));
                };
                let data = self.ctx.cache.read_dataset(&self.ctx.resolve(&path))?;
                let rows = data
                    .rows
                    .iter()
                    .map(|(label, features)| {
                        Value::Tuple(vec![
                            Value::Int(int_value(*label)),
                            Value::Vector(Arc::new(
                                features
                                    .iter()
                                    .map(|f| Value::Real(Term::Const(f.clone())))
                                    .collect(),
                            )),
                        ])
                    })
                    .collect();
                Ok(Value::Vector(Arc::new(rows)))
            }
            BuiltInKind::Length => match self.reduce(&args[0], env, Polarity::Mixed)? {
                Value::Vector(v) => Ok(Value::Int(int_value(v.len() as i64))),
                Value::Pending(id) => Err(shape_err(
                    span,
                    format!("length of `{}` is unknown", self.pending_name(id)),
                )),
                _ => Err(unsupported(span, "length of a non-vector")),
            },
            BuiltInKind::HasLength => {
                let v = self.reduce(&args[0], env, Polarity::Mixed)?;
                let n = self.reduce(&args[1], env, Polarity::Mixed)?;
                let n = self.expect_int(n, args[1].span)?;
                match v {
                    Value::Vector(items) => {
                        Ok(Value::Bool(Formula::bool(BigInt::from(items.len()) == n)))
                    }
                    Value::Pending(id) if pol == Polarity::Neg && !self.probing => {
                        let n = n
                            .to_usize()
                            .ok_or_else(|| shape_err(span, format!("invalid vector length {n}")))?;
                        self.materialize(id, n);
                        Ok(Value::Bool(Formula::True))
                    }
                    Value::Pending(id) => Err(shape_err(
                        span,
                        format!(
                            "`has_length {}` must appear as a hypothesis to fix its length",
                            self.pending_name(id)
                        ),
                    )),
                    _ => Err(unsupported(span, "has_length of a non-vector")),
                }
            }
            BuiltInKind::Index => {
                let v = self.reduce(&args[0], env, Polarity::Mixed)?;
                let i = self.reduce(&args[1], env, Polarity::Mixed)?;
                let items = match v {
                    Value::Vector(items) => items,
                    Value::Pending(id) => {
                        return Err(shape_err(
                            span,
                            format!("length of `{}` is unknown", self.pending_name(id)),
                        ))
                    }
                    _ => return Err(unsupported(span, "indexing a non-vector")),
                };
                let i = self.expect_int(i, args[1].span)?;
                match i.to_usize().and_then(|k| items.get(k)) {
                    Some(x) => Ok(x.clone()),
                    None => Err(InterpError::IndexOutOfBounds {
                        span,
                        index: i.to_string(),
                        len: items.len(),
                    }),
                }
            }
            BuiltInKind::ModelApply => {
                let Value::Model(model, source) = self.reduce(&args[0], env, Polarity::Mixed)?
                else {
                    return Err(unsupported(span, "`@@` expects a model on the left"));
                };
                let arg = self.reduce(&args[1], env, Polarity::Mixed)?;
                if self.probing {
                    return Err(unsupported(span, "model application while probing"));
                }
                let flat = self.flatten_argument(arg, model.input_dim(), span)?;
                if flat.len() != model.input_dim() {
                    return Err(InterpError::ShapeMismatch {
                        span,
                        detail: format!(
                            "model `{source}` expects {} inputs, got {}",
                            model.input_dim(),
                            flat.len()
                        ),
                    });
                }
                let app = ModelApp {
                    model: model.clone(),
                    source,
                    args: flat,
                };
                let index = match self.apps.iter().position(|a| *a == app) {
                    Some(i) => i,
                    None => {
                        self.apps.push(app);
                        self.apps.len() - 1
                    }
                };
                let outputs = (0..model.output_dim())
                    .map(|j| Value::Real(Term::output(index, j)))
                    .collect();
                Ok(Value::Vector(Arc::new(outputs)))
            }
            BuiltInKind::Mapi => {
                let v = self.reduce(&args[0], env, Polarity::Mixed)?;
                let f = self.reduce(&args[1], env, Polarity::Mixed)?;
                let items = match v {
                    Value::Vector(items) => items,
                    Value::Pending(id) => {
                        return Err(shape_err(
                            span,
                            format!("length of `{}` is unknown", self.pending_name(id)),
                        ))
                    }
                    _ => return Err(unsupported(span, "mapi over a non-vector")),
                };
                let mut out = Vec::with_capacity(items.len());
                for (k, x) in items.iter().enumerate() {
                    let r = self.apply(
                        f.clone(),
                        vec![Value::Int(int_value(k as i64)), x.clone()],
                        Polarity::Mixed,
                        span,
                    )?;
                    out.push(r);
                }
                Ok(Value::Vector(Arc::new(out)))
            }
            BuiltInKind::DatasetForall => {
                let d = self.reduce(&args[0], env, Polarity::Mixed)?;
                let f = self.reduce(&args[1], env, Polarity::Mixed)?;
                let Value::Vector(rows) = d else {
                    return Err(unsupported(span, "forall_ over a non-dataset"));
                };
                let mut parts = Vec::with_capacity(rows.len());
                for row in rows.iter() {
                    let Value::Tuple(pair) = row else {
                        return Err(unsupported(
                            span,
                            "dataset rows must be (label, features) pairs",
                        ));
                    };
                    let r = self.apply(f.clone(), pair.clone(), pol, span)?;
                    let r = self.force(r, pol)?;
                    parts.push(self.to_formula(r, span)?);
                }
                Ok(Value::Bool(Formula::and(parts)))
            }
        }
    }

    /// Scalars fed to a model: a vector, a scalar, or a tuple of those,
    /// concatenated. A single pending vector takes whatever length is left.
    fn flatten_argument(&mut self, arg: Value<'a>, input_dim: usize, span: Span) -> R<Vec<Term>> {
        let parts = match arg {
            Value::Tuple(items) => items,
            other => vec![other],
        };
        let parts: Vec<Value<'a>> = parts.into_iter().map(|p| self.resolve(p)).collect();
        let pending: Vec<usize> = parts
            .iter()
            .filter_map(|p| {
                if let Value::Pending(id) = p {
                    Some(*id)
                } else {
                    None
                }
            })
            .collect();
        if pending.len() > 1 {
            return Err(shape_err(
                span,
                "several vectors of unknown length in one model argument",
            ));
        }
        let known: usize = parts
            .iter()
            .map(|p| match p {
                Value::Vector(v) => v.len(),
                Value::Pending(_) => 0,
                _ => 1,
            })
            .sum();
        let mut out = Vec::new();
        for p in parts {
            match p {
                Value::Real(t) => out.push(t),
                Value::Vector(items) => {
                    for x in items.iter() {
                        match x {
                            Value::Real(t) => out.push(t.clone()),
                            _ => return Err(unsupported(span, "model arguments must be reals")),
                        }
                    }
                }
                Value::Pending(id) => {
                    let n = input_dim.saturating_sub(known);
                    for v in self.materialize(id, n) {
                        out.push(Term::input(v));
                    }
                }
                _ => return Err(unsupported(span, "model arguments must be reals")),
            }
        }
        Ok(out)
    }
}

/// Range of the probe variable where `a op b` may evaluate to `want`.
fn compare_range(op: CmpOp, a: &Value<'_>, b: &Value<'_>, want: bool, var: usize) -> Range {
    let op = if want { op } else { negate_cmp(op) };
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Range::from_bool(int_holds(op, x, y)),
        (
            Value::IntSym {
                var: v,
                coef,
                offset,
            },
            Value::Int(k),
        ) if *v == var => solve(coef, offset, op, k),
        (
            Value::Int(k),
            Value::IntSym {
                var: v,
                coef,
                offset,
            },
        ) if *v == var => solve(coef, offset, flip_cmp(op), k),
        _ => Range::top(),
    }
}

fn int_holds(op: CmpOp, x: &BigInt, y: &BigInt) -> bool {
    match op {
        CmpOp::Lt => x < y,
        CmpOp::Le => x <= y,
        CmpOp::Gt => x > y,
        CmpOp::Ge => x >= y,
        CmpOp::Eq => x == y,
        CmpOp::Ne => x != y,
        _ => true,
    }
}

fn negate_cmp(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Lt => CmpOp::Ge,
        CmpOp::Le => CmpOp::Gt,
        CmpOp::Gt => CmpOp::Le,
        CmpOp::Ge => CmpOp::Lt,
        CmpOp::Eq => CmpOp::Ne,
        CmpOp::Ne => CmpOp::Eq,
        other => other,
    }
}

fn flip_cmp(op: CmpOp) -> CmpOp {
    match op {
        CmpOp::Lt => CmpOp::Gt,
        CmpOp::Le => CmpOp::Ge,
        CmpOp::Gt => CmpOp::Lt,
        CmpOp::Ge => CmpOp::Le,
        other => other,
    }
}

/// Integers `i` with `coef * i + offset  op  k`.
fn solve(coef: &BigInt, offset: &BigInt, op: CmpOp, k: &BigInt) -> Range {
    if coef.is_zero() {
        return Range::from_bool(int_holds(op, offset, k));
    }
    let op = if coef.is_negative() { flip_cmp(op) } else { op };
    let q = Rational::new(k - offset, coef.clone());
    let (floor, ceil) = (q.floor().to_integer(), q.ceil().to_integer());
    match op {
        CmpOp::Lt => Range {
            lo: None,
            hi: Some(ceil - 1),
            empty: false,
        },
        CmpOp::Le => Range {
            lo: None,
            hi: Some(floor),
            empty: false,
        },
        CmpOp::Gt => Range {
            lo: Some(floor + 1),
            hi: None,
            empty: false,
        },
        CmpOp::Ge => Range {
            lo: Some(ceil),
            hi: None,
            empty: false,
        },
        CmpOp::Eq => {
            if q.is_integer() {
                Range::point(q.to_integer())
            } else {
                Range::empty()
            }
        }
        _ => Range::top(),
    }
}

//! Hindley-Milner style inference with a few overloaded operators.
//!
//! `+` and `-` (binary and unary) accept `int` or `vector float`, and `@@`
//! accepts a `vector float`, a `float`, or a tuple of those. These are
//! recorded as deferred constraints and resolved (with defaults `int` and
//! `vector float`) at the end of each top-level declaration. Only top-level
//! declarations are generalized.

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

use crate::speclang::ast::*;
use crate::speclang::prelude::prelude;
use crate::speclang::Span;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Bool,
    Float,
    Str,
    Model,
    Vector(Box<Type>),
    Tuple(Vec<Type>),
    Arrow(Box<Type>, Box<Type>),
    Var(u32),
}

impl Type {
    pub fn vector(elem: Type) -> Type {
        Type::Vector(Box::new(elem))
    }

    pub fn arrow(dom: Type, cod: Type) -> Type {
        Type::Arrow(Box::new(dom), Box::new(cod))
    }

    /// `a1 -> ... -> an -> result`.
    pub fn function(params: impl IntoIterator<Item = Type>, result: Type) -> Type {
        let params: Vec<Type> = params.into_iter().collect();
        params
            .into_iter()
            .rev()
            .fold(result, |acc, p| Type::arrow(p, acc))
    }

    fn free_vars(&self, out: &mut Vec<u32>) {
        match self {
            Type::Var(v) => {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
            Type::Vector(e) => e.free_vars(out),
            Type::Tuple(items) => items.iter().for_each(|i| i.free_vars(out)),
            Type::Arrow(a, b) => {
                a.free_vars(out);
                b.free_vars(out);
            }
            _ => {}
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(t: &Type, nested: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            match t {
                Type::Int => write!(f, "int"),
                Type::Bool => write!(f, "bool"),
                Type::Float => write!(f, "float"),
                Type::Str => write!(f, "string"),
                Type::Model => write!(f, "model"),
                Type::Var(v) => write!(f, "'t{v}"),
                Type::Vector(e) => {
                    write!(f, "vector ")?;
                    go(e, true, f)
                }
                Type::Tuple(items) => {
                    write!(f, "(")?;
                    for (i, item) in items.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        go(item, false, f)?;
                    }
                    write!(f, ")")
                }
                Type::Arrow(a, b) => {
                    if nested {
                        write!(f, "(")?;
                    }
                    go(a, true, f)?;
                    write!(f, " -> ")?;
                    go(b, false, f)?;
                    if nested {
                        write!(f, ")")?;
                    }
                    Ok(())
                }
            }
        }
        go(self, false, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("expected {expected}, found {found}")]
    Mismatch {
        span: Span,
        expected: String,
        found: String,
    },
    #[error("unbound identifier `{name}`")]
    UnboundIdentifier { span: Span, name: String },
    #[error("{message}")]
    Invalid { span: Span, message: String },
}

impl TypeError {
    pub fn span(&self) -> Span {
        match self {
            TypeError::Mismatch { span, .. }
            | TypeError::UnboundIdentifier { span, .. }
            | TypeError::Invalid { span, .. } => *span,
        }
    }
}

/// A type with universally quantified variables.
#[derive(Clone, Debug)]
pub(crate) struct Scheme {
    vars: Vec<u32>,
    ty: Type,
}

/// Global typing environment: type aliases and declared names.
#[derive(Clone, Debug, Default)]
pub(crate) struct Globals {
    aliases: HashMap<String, Type>,
    names: HashMap<String, Scheme>,
}

#[derive(Clone, Copy, Debug)]
enum Overload {
    /// `int` or `vector float`.
    Arith,
    /// `vector float`, `float`, or a tuple of those.
    ModelArg,
}

type Result<T> = std::result::Result<T, TypeError>;

struct Checker {
    subst: Vec<Option<Type>>,
    globals: Globals,
    locals: Vec<(String, Type)>,
    deferred: Vec<(Overload, Type, Span)>,
    type_vars: HashMap<String, Type>,
}

/// Type-checks a whole file against the prelude, filling in every
/// expression and binder type.
pub fn typecheck(ast: SpecAst) -> Result<SpecAst> {
    let (ast, _) = check_file(ast, prelude().globals.clone())?;
    Ok(ast)
}

pub(crate) fn check_file(mut ast: SpecAst, globals: Globals) -> Result<(SpecAst, Globals)> {
    let mut checker = Checker::new(globals);
    let mut goal_names = HashSet::new();
    for item in &mut ast.items {
        match item {
            Item::Decl(d) => checker.decl(d)?,
            Item::Goal(g) => {
                if !goal_names.insert(g.name.clone()) {
                    return Err(TypeError::Invalid {
                        span: g.span,
                        message: format!("duplicate goal `{}`", g.name),
                    });
                }
                checker.type_vars.clear();
                let t = checker.infer(&mut g.body)?;
                checker.expect(g.body.span, &Type::Bool, &t)?;
                checker.solve_deferred()?;
                checker.zonk_expr(&mut g.body);
            }
        }
    }
    Ok((ast, checker.globals))
}

/// Type-checks a standalone expression with the given free variables, on
/// top of the prelude.
pub fn typecheck_expr(mut expr: Expr, bindings: &[(&str, Type)]) -> Result<Expr> {
    let mut checker = Checker::new(prelude().globals.clone());
    for (name, ty) in bindings {
        checker.locals.push((name.to_string(), ty.clone()));
    }
    checker.infer(&mut expr)?;
    checker.solve_deferred()?;
    checker.zonk_expr(&mut expr);
    Ok(expr)
}

impl Checker {
    fn new(globals: Globals) -> Self {
        Checker {
            subst: Vec::new(),
            globals,
            locals: Vec::new(),
            deferred: Vec::new(),
            type_vars: HashMap::new(),
        }
    }

    fn fresh(&mut self) -> Type {
        self.subst.push(None);
        Type::Var(self.subst.len() as u32 - 1)
    }

    fn shallow(&self, t: &Type) -> Type {
        let mut t = t.clone();
        while let Type::Var(v) = t {
            match self.subst.get(v as usize).and_then(|s| s.as_ref()) {
                Some(next) => t = next.clone(),
                None => break,
            }
        }
        t
    }

    fn zonk(&self, t: &Type) -> Type {
        match self.shallow(t) {
            Type::Vector(e) => Type::vector(self.zonk(&e)),
            Type::Tuple(items) => Type::Tuple(items.iter().map(|i| self.zonk(i)).collect()),
            Type::Arrow(a, b) => Type::arrow(self.zonk(&a), self.zonk(&b)),
            other => other,
        }
    }

    fn occurs(&self, v: u32, t: &Type) -> bool {
        let mut vars = Vec::new();
        self.zonk(t).free_vars(&mut vars);
        vars.contains(&v)
    }

    fn unify(&mut self, a: &Type, b: &Type) -> bool {
        let (a, b) = (self.shallow(a), self.shallow(b));
        match (&a, &b) {
            (Type::Var(x), Type::Var(y)) if x == y => true,
            (Type::Var(x), other) | (other, Type::Var(x)) => {
                if self.occurs(*x, other) {
                    return false;
                }
                self.subst[*x as usize] = Some(other.clone());
                true
            }
            (Type::Vector(x), Type::Vector(y)) => self.unify(x, y),
            (Type::Tuple(xs), Type::Tuple(ys)) => {
                xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| self.unify(x, y))
            }
            (Type::Arrow(a1, b1), Type::Arrow(a2, b2)) => self.unify(a1, a2) && self.unify(b1, b2),
            _ => a == b,
        }
    }

    fn expect(&mut self, span: Span, expected: &Type, found: &Type) -> Result<()> {
        if self.unify(expected, found) {
            Ok(())
        } else {
            Err(TypeError::Mismatch {
                span,
                expected: self.zonk(expected).to_string(),
                found: self.zonk(found).to_string(),
            })
        }
    }

    fn instantiate(&mut self, scheme: &Scheme) -> Type {
        let map: HashMap<u32, Type> = scheme.vars.iter().map(|&v| (v, self.fresh())).collect();
        fn go(t: &Type, map: &HashMap<u32, Type>) -> Type {
            match t {
                Type::Var(v) => map.get(v).cloned().unwrap_or(Type::Var(*v)),
                Type::Vector(e) => Type::vector(go(e, map)),
                Type::Tuple(items) => Type::Tuple(items.iter().map(|i| go(i, map)).collect()),
                Type::Arrow(a, b) => Type::arrow(go(a, map), go(b, map)),
                other => other.clone(),
            }
        }
        go(&scheme.ty, &map)
    }

    fn convert(&mut self, t: &SpecType, span: Span) -> Result<Type> {
        Ok(match t {
            SpecType::Int => Type::Int,
            SpecType::Bool => Type::Bool,
            SpecType::Float => Type::Float,
            SpecType::String => Type::Str,
            SpecType::Model => Type::Model,
            SpecType::Vector(e) => Type::vector(self.convert(e, span)?),
            SpecType::Tuple(items) => Type::Tuple(
                items
                    .iter()
                    .map(|i| self.convert(i, span))
                    .collect::<Result<_>>()?,
            ),
            SpecType::Arrow(a, b) => Type::arrow(self.convert(a, span)?, self.convert(b, span)?),
            SpecType::Named(n) => match self.globals.aliases.get(n) {
                Some(t) => t.clone(),
                None => {
                    return Err(TypeError::Invalid {
                        span,
                        message: format!("unknown type `{n}`"),
                    })
                }
            },
            SpecType::Var(v) => match self.type_vars.get(v) {
                Some(t) => t.clone(),
                None => {
                    let t = self.fresh();
                    self.type_vars.insert(v.clone(), t.clone());
                    t
                }
            },
        })
    }

    fn bind(&mut self, b: &mut Binder) -> Result<Type> {
        let t = match &b.annotation {
            Some(a) => self.convert(a, b.span)?,
            None => self.fresh(),
        };
        b.ty = Some(t.clone());
        self.locals.push((b.name.clone(), t.clone()));
        Ok(t)
    }

    fn lookup(&mut self, name: &str, span: Span) -> Result<Type> {
        if let Some((_, t)) = self.locals.iter().rev().find(|(n, _)| n == name) {
            return Ok(t.clone());
        }
        match self.globals.names.get(name).cloned() {
            Some(s) => Ok(self.instantiate(&s)),
            None => Err(TypeError::UnboundIdentifier {
                span,
                name: name.to_string(),
            }),
        }
    }

    fn decl(&mut self, d: &mut Decl) -> Result<()> {
        self.type_vars.clear();
        self.locals.clear();
        if d.kind == DeclKind::TypeAlias {
            let t = self.convert(d.alias.as_ref().expect("alias has a type"), d.span)?;
            let t = self.zonk(&t);
            let mut vars = Vec::new();
            t.free_vars(&mut vars);
            if !vars.is_empty() {
                return Err(TypeError::Invalid {
                    span: d.span,
                    message: format!("type alias `{}` must not mention type variables", d.name),
                });
            }
            self.globals.aliases.insert(d.name.clone(), t);
            return Ok(());
        }
        let mut params = Vec::new();
        for b in &mut d.binders {
            params.push(self.bind(b)?);
        }
        let result = match (&d.kind, &d.result_type) {
            (DeclKind::Predicate, _) => Type::Bool,
            (_, Some(t)) => self.convert(t, d.span)?,
            (_, None) => self.fresh(),
        };
        for c in &mut d.contracts {
            let (e, is_ensures) = match c {
                Contract::Requires(e) => (e, false),
                Contract::Ensures(e) => (e, true),
            };
            if is_ensures {
                self.locals.push(("result".into(), result.clone()));
            }
            let t = self.infer(e)?;
            self.expect(e.span, &Type::Bool, &t)?;
            if is_ensures {
                self.locals.pop();
            }
        }
        let body = d.body.as_mut().expect("function has a body");
        let t = self.infer(body)?;
        self.expect(body.span, &result, &t)?;
        self.solve_deferred()?;

        self.zonk_expr(body);
        for c in &mut d.contracts {
            match c {
                Contract::Requires(e) | Contract::Ensures(e) => self.zonk_expr(e),
            }
        }
        for b in &mut d.binders {
            b.ty = b.ty.as_ref().map(|t| self.zonk(t));
        }
        let ty = self.zonk(&Type::function(params, result));
        let mut vars = Vec::new();
        ty.free_vars(&mut vars);
        self.globals
            .names
            .insert(d.name.clone(), Scheme { vars, ty });
        self.locals.clear();
        Ok(())
    }

    fn solve_deferred(&mut self) -> Result<()> {
        let mut pending = std::mem::take(&mut self.deferred);
        // Model arguments first: their default may decide an arithmetic one.
        pending.sort_by_key(|(kind, _, _)| matches!(kind, Overload::Arith));
        for (kind, t, span) in pending {
            let ok = match kind {
                Overload::Arith => match self.zonk(&t) {
                    Type::Var(_) => self.unify(&t, &Type::Int),
                    Type::Int => true,
                    Type::Vector(e) => self.unify(&e, &Type::Float),
                    _ => false,
                },
                Overload::ModelArg => match self.zonk(&t) {
                    Type::Var(_) => self.unify(&t, &Type::vector(Type::Float)),
                    Type::Tuple(items) => items.iter().all(|i| self.model_component(i)),
                    other => self.model_component(&other),
                },
            };
            if !ok {
                let expected = match kind {
                    Overload::Arith => "int or vector float",
                    Overload::ModelArg => "vector float, float, or a tuple of those",
                };
                return Err(TypeError::Mismatch {
                    span,
                    expected: expected.into(),
                    found: self.zonk(&t).to_string(),
                });
            }
        }
        Ok(())
    }

    fn model_component(&mut self, t: &Type) -> bool {
        match self.zonk(t) {
            Type::Var(_) => self.unify(t, &Type::Float),
            Type::Float => true,
            Type::Vector(e) => self.unify(&e, &Type::Float),
            _ => false,
        }
    }

    fn infer(&mut self, e: &mut Expr) -> Result<Type> {
        let span = e.span;
        let t = match &mut e.kind {
            ExprKind::Var(name) => self.lookup(name, span)?,
            ExprKind::IntLit(_) => Type::Int,
            ExprKind::FloatLit { .. } => Type::Float,
            ExprKind::BoolLit(_) => Type::Bool,
            ExprKind::StringLit(_) => Type::Str,
            ExprKind::App(head, args) => {
                let mut t = self.infer(head)?;
                for a in args {
                    let at = self.infer(a)?;
                    let r = self.fresh();
                    let want = Type::arrow(at.clone(), r.clone());
                    if !self.unify(&t, &want) {
                        let (expected, found) = match self.zonk(&t) {
                            Type::Arrow(dom, _) => (dom.to_string(), self.zonk(&at).to_string()),
                            other => ("a function".to_string(), other.to_string()),
                        };
                        return Err(TypeError::Mismatch {
                            span: a.span,
                            expected,
                            found,
                        });
                    }
                    t = r;
                }
                t
            }
            ExprKind::Tuple(items) => {
                let mut ts = Vec::new();
                for i in items {
                    ts.push(self.infer(i)?);
                }
                Type::Tuple(ts)
            }
            ExprKind::Paren(inner) => self.infer(inner)?,
            ExprKind::Ascribe(inner, ann) => {
                let want = self.convert(ann, span)?;
                let t = self.infer(inner)?;
                self.expect(inner.span, &want, &t)?;
                want
            }
            ExprKind::Let {
                name,
                params,
                value,
                body,
            } => {
                let depth = self.locals.len();
                let mut ps = Vec::new();
                for p in params.iter_mut() {
                    ps.push(self.bind(p)?);
                }
                let vt = self.infer(value)?;
                self.locals.truncate(depth);
                self.locals.push((name.clone(), Type::function(ps, vt)));
                let bt = self.infer(body)?;
                self.locals.truncate(depth);
                bt
            }
            ExprKind::If(c, a, b) => {
                let ct = self.infer(c)?;
                self.expect(c.span, &Type::Bool, &ct)?;
                let at = self.infer(a)?;
                let bt = self.infer(b)?;
                self.expect(b.span, &at, &bt)?;
                at
            }
            ExprKind::BinOp(op, a, b) => {
                let operand = match op {
                    BinOp::Implies | BinOp::Or | BinOp::OrElse | BinOp::And | BinOp::AndAlso => {
                        Type::Bool
                    }
                    BinOp::Mul | BinOp::Div => Type::Int,
                    BinOp::FAdd | BinOp::FSub | BinOp::FMul | BinOp::FDiv => Type::Float,
                    BinOp::Add | BinOp::Sub => {
                        let t = self.fresh();
                        self.deferred.push((Overload::Arith, t.clone(), span));
                        t
                    }
                };
                let at = self.infer(a)?;
                self.expect(a.span, &operand, &at)?;
                let bt = self.infer(b)?;
                self.expect(b.span, &operand, &bt)?;
                operand
            }
            ExprKind::Compare { first, rest } => {
                let mut prev = self.infer(first)?;
                let mut prev_span = first.span;
                for (op, operand) in rest {
                    let t = self.infer(operand)?;
                    match op {
                        CmpOp::Eq | CmpOp::Ne => self.expect(operand.span, &prev, &t)?,
                        CmpOp::Lt | CmpOp::Le | CmpOp::Gt | CmpOp::Ge => {
                            self.expect(prev_span, &Type::Int, &prev)?;
                            self.expect(operand.span, &Type::Int, &t)?;
                        }
                        _ => {
                            self.expect(prev_span, &Type::Float, &prev)?;
                            self.expect(operand.span, &Type::Float, &t)?;
                        }
                    }
                    prev = t;
                    prev_span = operand.span;
                }
                Type::Bool
            }
            ExprKind::Neg { float, operand } => {
                let want = if *float {
                    Type::Float
                } else {
                    let t = self.fresh();
                    self.deferred.push((Overload::Arith, t.clone(), span));
                    t
                };
                let t = self.infer(operand)?;
                self.expect(operand.span, &want, &t)?;
                want
            }
            ExprKind::Not(inner) => {
                let t = self.infer(inner)?;
                self.expect(inner.span, &Type::Bool, &t)?;
                Type::Bool
            }
            ExprKind::Forall(bs, body) | ExprKind::Exists(bs, body) => {
                let depth = self.locals.len();
                for b in bs.iter_mut() {
                    self.bind(b)?;
                }
                let t = self.infer(body)?;
                self.expect(body.span, &Type::Bool, &t)?;
                self.locals.truncate(depth);
                Type::Bool
            }
            ExprKind::Fun(bs, body) => {
                let depth = self.locals.len();
                let mut ps = Vec::new();
                for b in bs.iter_mut() {
                    ps.push(self.bind(b)?);
                }
                let t = self.infer(body)?;
                self.locals.truncate(depth);
                Type::function(ps, t)
            }
            ExprKind::BuiltIn { kind, args, .. } => {
                let kind = *kind;
                let mut ts = Vec::new();
                for a in args.iter_mut() {
                    ts.push(self.infer(a)?);
                }
                self.builtin(kind, args, &ts)?
            }
        };
        e.ty = Some(t.clone());
        Ok(t)
    }

    fn builtin(&mut self, kind: BuiltInKind, args: &[Expr], ts: &[Type]) -> Result<Type> {
        let float_vec = Type::vector(Type::Float);
        let dataset = Type::vector(Type::Tuple(vec![Type::Int, float_vec.clone()]));
        Ok(match kind {
            BuiltInKind::ReadModel => {
                self.expect(args[0].span, &Type::Str, &ts[0])?;
                Type::Model
            }
            BuiltInKind::ReadDataset => {
                self.expect(args[0].span, &Type::Str, &ts[0])?;
                dataset
            }
            BuiltInKind::Length => {
                let a = self.fresh();
                self.expect(args[0].span, &Type::vector(a), &ts[0])?;
                Type::Int
            }
            BuiltInKind::HasLength => {
                let a = self.fresh();
                self.expect(args[0].span, &Type::vector(a), &ts[0])?;
                self.expect(args[1].span, &Type::Int, &ts[1])?;
                Type::Bool
            }
            BuiltInKind::Index => {
                let a = self.fresh();
                self.expect(args[0].span, &Type::vector(a.clone()), &ts[0])?;
                self.expect(args[1].span, &Type::Int, &ts[1])?;
                a
            }
            BuiltInKind::ModelApply => {
                self.expect(args[0].span, &Type::Model, &ts[0])?;
                self.deferred
                    .push((Overload::ModelArg, ts[1].clone(), args[1].span));
                float_vec
            }
            BuiltInKind::Mapi => {
                let a = self.fresh();
                let b = self.fresh();
                self.expect(args[0].span, &Type::vector(a.clone()), &ts[0])?;
                self.expect(
                    args[1].span,
                    &Type::function([Type::Int, a], b.clone()),
                    &ts[1],
                )?;
                Type::vector(b)
            }
            BuiltInKind::DatasetForall => {
                self.expect(args[0].span, &dataset, &ts[0])?;
                let f = Type::function([Type::Int, float_vec], Type::Bool);
                self.expect(args[1].span, &f, &ts[1])?;
                Type::Bool
            }
        })
    }

    fn zonk_binders(&self, bs: &mut [Binder]) {
        for b in bs {
            b.ty = b.ty.as_ref().map(|t| self.zonk(t));
        }
    }

    fn zonk_expr(&self, e: &mut Expr) {
        e.ty = e.ty.as_ref().map(|t| self.zonk(t));
        match &mut e.kind {
            ExprKind::Paren(x) | ExprKind::Ascribe(x, _) | ExprKind::Not(x) => self.zonk_expr(x),
            ExprKind::Neg { operand, .. } => self.zonk_expr(operand),
            ExprKind::Forall(bs, x) | ExprKind::Exists(bs, x) | ExprKind::Fun(bs, x) => {
                self.zonk_binders(bs);
                self.zonk_expr(x);
            }
            ExprKind::App(f, args) => {
                self.zonk_expr(f);
                args.iter_mut().for_each(|a| self.zonk_expr(a));
            }
            ExprKind::Tuple(items) | ExprKind::BuiltIn { args: items, .. } => {
                items.iter_mut().for_each(|a| self.zonk_expr(a))
            }
            ExprKind::Let {
                params,
                value,
                body,
                ..
            } => {
                self.zonk_binders(params);
                self.zonk_expr(value);
                self.zonk_expr(body);
            }
            ExprKind::If(c, a, b) => {
                self.zonk_expr(c);
                self.zonk_expr(a);
                self.zonk_expr(b);
            }
            ExprKind::BinOp(_, a, b) => {
                self.zonk_expr(a);
                self.zonk_expr(b);
            }
            ExprKind::Compare { first, rest } => {
                self.zonk_expr(first);
                rest.iter_mut().for_each(|(_, x)| self.zonk_expr(x));
            }
            ExprKind::Var(_)
            | ExprKind::IntLit(_)
            | ExprKind::FloatLit { .. }
            | ExprKind::BoolLit(_)
            | ExprKind::StringLit(_) => {}
        }
    }
}

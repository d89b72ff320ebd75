use num_bigint::BigInt;

use crate::rational::Rational;
use crate::speclang::types::Type;
use crate::speclang::Span;

/// Surface type syntax.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SpecType {
    Int,
    Bool,
    Float,
    String,
    Model,
    Vector(Box<SpecType>),
    Tuple(Vec<SpecType>),
    Arrow(Box<SpecType>, Box<SpecType>),
    Named(String),
    Var(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binder {
    pub name: String,
    pub annotation: Option<SpecType>,
    pub span: Span,
    /// Filled in by the type checker.
    pub ty: Option<Type>,
}

impl Binder {
    pub fn new(name: impl Into<String>, annotation: Option<SpecType>) -> Self {
        Binder {
            name: name.into(),
            annotation,
            span: Span::default(),
            ty: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Implies,
    /// `\/`
    Or,
    /// `||`
    OrElse,
    /// `/\`
    And,
    /// `&&`
    AndAlso,
    Add,
    Sub,
    Mul,
    Div,
    FAdd,
    FSub,
    FMul,
    FDiv,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Implies => "->",
            BinOp::Or => "\\/",
            BinOp::OrElse => "||",
            BinOp::And => "/\\",
            BinOp::AndAlso => "&&",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::FAdd => ".+",
            BinOp::FSub => ".-",
            BinOp::FMul => ".*",
            BinOp::FDiv => "./",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BinOp> {
        Some(match s {
            "->" => BinOp::Implies,
            "\\/" => BinOp::Or,
            "||" => BinOp::OrElse,
            "/\\" => BinOp::And,
            "&&" => BinOp::AndAlso,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            ".+" => BinOp::FAdd,
            ".-" => BinOp::FSub,
            ".*" => BinOp::FMul,
            "./" => BinOp::FDiv,
            _ => return None,
        })
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Implies => PREC_IMPLIES,
            BinOp::Or | BinOp::OrElse => PREC_OR,
            BinOp::And | BinOp::AndAlso => PREC_AND,
            BinOp::Add | BinOp::Sub | BinOp::FAdd | BinOp::FSub => PREC_ADD,
            BinOp::Mul | BinOp::Div | BinOp::FMul | BinOp::FDiv => PREC_MUL,
        }
    }

    pub fn right_assoc(self) -> bool {
        self.precedence() <= PREC_AND
    }
}

pub const PREC_IMPLIES: u8 = 1;
pub const PREC_OR: u8 = 2;
pub const PREC_AND: u8 = 3;
pub const PREC_NOT: u8 = 4;
pub const PREC_CMP: u8 = 5;
pub const PREC_ADD: u8 = 6;
pub const PREC_MUL: u8 = 7;
pub const PREC_NEG: u8 = 8;
pub const PREC_APPLY_MODEL: u8 = 9;
pub const PREC_APP: u8 = 10;
pub const PREC_POSTFIX: u8 = 11;
pub const PREC_ATOM: u8 = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    FLt,
    FLe,
    FGt,
    FGe,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "<>",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::FLt => ".<",
            CmpOp::FLe => ".<=",
            CmpOp::FGt => ".>",
            CmpOp::FGe => ".>=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        Some(match s {
            "=" => CmpOp::Eq,
            "<>" => CmpOp::Ne,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            ".<" => CmpOp::FLt,
            ".<=" => CmpOp::FLe,
            ".>" => CmpOp::FGt,
            ".>=" => CmpOp::FGe,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BuiltInKind {
    ReadModel,
    ReadDataset,
    Length,
    HasLength,
    Index,
    ModelApply,
    Mapi,
    DatasetForall,
}

impl BuiltInKind {
    /// Recognizes a built-in by the name written in the source.
    pub fn from_name(name: &str) -> Option<BuiltInKind> {
        Some(match name {
            "read_model" | "Model.read_model" => BuiltInKind::ReadModel,
            "read_dataset" | "Dataset.read_dataset" | "CSV.read_dataset" => {
                BuiltInKind::ReadDataset
            }
            "length" | "Vector.length" => BuiltInKind::Length,
            "has_length" | "Vector.has_length" => BuiltInKind::HasLength,
            "mapi" | "Vector.mapi" => BuiltInKind::Mapi,
            "forall_" | "CSV.forall_" | "Dataset.forall_" => BuiltInKind::DatasetForall,
            _ => return None,
        })
    }

    pub fn arity(self) -> usize {
        match self {
            BuiltInKind::ReadModel | BuiltInKind::ReadDataset | BuiltInKind::Length => 1,
            _ => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprKind {
    Var(String),
    IntLit(BigInt),
    /// Decimal literal; `text` is kept verbatim for printing.
    FloatLit {
        text: String,
        value: Rational,
    },
    BoolLit(bool),
    StringLit(String),
    /// Curried application `f a b`.
    App(Box<Expr>, Vec<Expr>),
    Tuple(Vec<Expr>),
    Paren(Box<Expr>),
    Ascribe(Box<Expr>, SpecType),
    Let {
        name: String,
        params: Vec<Binder>,
        value: Box<Expr>,
        body: Box<Expr>,
    },
    If(Box<Expr>, Box<Expr>, Box<Expr>),
    BinOp(BinOp, Box<Expr>, Box<Expr>),
    /// Comparison chain `a <= b < c` meaning `a <= b /\ b < c`.
    Compare {
        first: Box<Expr>,
        rest: Vec<(CmpOp, Expr)>,
    },
    /// Unary minus; `float` selects `.-` over `-`.
    Neg {
        float: bool,
        operand: Box<Expr>,
    },
    Not(Box<Expr>),
    Forall(Vec<Binder>, Box<Expr>),
    Exists(Vec<Binder>, Box<Expr>),
    Fun(Vec<Binder>, Box<Expr>),
    /// `name` is the spelling used in the source (`@@` and `[]` for the
    /// operator forms).
    BuiltIn {
        kind: BuiltInKind,
        name: String,
        args: Vec<Expr>,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
    /// Filled in by the type checker.
    pub ty: Option<Type>,
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr {
            kind,
            span,
            ty: None,
        }
    }

    /// Expression without position, type annotations or parentheses; two
    /// expressions are structurally equal iff their stripped forms are equal.
    pub fn stripped(&self) -> Expr {
        let s = |e: &Expr| Box::new(e.stripped());
        let binders = |bs: &[Binder]| -> Vec<Binder> {
            bs.iter()
                .map(|b| Binder::new(b.name.clone(), b.annotation.clone()))
                .collect()
        };
        let kind = match &self.kind {
            ExprKind::Paren(inner) => return inner.stripped(),
            ExprKind::App(f, args) => {
                ExprKind::App(s(f), args.iter().map(Expr::stripped).collect())
            }
            ExprKind::Tuple(items) => ExprKind::Tuple(items.iter().map(Expr::stripped).collect()),
            ExprKind::Ascribe(e, t) => ExprKind::Ascribe(s(e), t.clone()),
            ExprKind::Let {
                name,
                params,
                value,
                body,
            } => ExprKind::Let {
                name: name.clone(),
                params: binders(params),
                value: s(value),
                body: s(body),
            },
            ExprKind::If(c, t, e) => ExprKind::If(s(c), s(t), s(e)),
            ExprKind::BinOp(op, a, b) => ExprKind::BinOp(*op, s(a), s(b)),
            ExprKind::Compare { first, rest } => ExprKind::Compare {
                first: s(first),
                rest: rest.iter().map(|(op, e)| (*op, e.stripped())).collect(),
            },
            ExprKind::Neg { float, operand } => ExprKind::Neg {
                float: *float,
                operand: s(operand),
            },
            ExprKind::Not(e) => ExprKind::Not(s(e)),
            ExprKind::Forall(bs, e) => ExprKind::Forall(binders(bs), s(e)),
            ExprKind::Exists(bs, e) => ExprKind::Exists(binders(bs), s(e)),
            ExprKind::Fun(bs, e) => ExprKind::Fun(binders(bs), s(e)),
            ExprKind::BuiltIn { kind, name, args } => ExprKind::BuiltIn {
                kind: *kind,
                name: name.clone(),
                args: args.iter().map(Expr::stripped).collect(),
            },
            leaf => leaf.clone(),
        };
        Expr::new(kind, Span::default())
    }

    pub fn structurally_eq(&self, other: &Expr) -> bool {
        self.stripped() == other.stripped()
    }

    /// Visits every sub-expression, parents before children.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        match &self.kind {
            ExprKind::Paren(e) | ExprKind::Ascribe(e, _) | ExprKind::Not(e) => e.walk(f),
            ExprKind::Neg { operand, .. } => operand.walk(f),
            ExprKind::Forall(_, e) | ExprKind::Exists(_, e) | ExprKind::Fun(_, e) => e.walk(f),
            ExprKind::App(g, args) => {
                g.walk(f);
                args.iter().for_each(|a| a.walk(f));
            }
            ExprKind::Tuple(items) => items.iter().for_each(|a| a.walk(f)),
            ExprKind::BuiltIn { args, .. } => args.iter().for_each(|a| a.walk(f)),
            ExprKind::Let { value, body, .. } => {
                value.walk(f);
                body.walk(f);
            }
            ExprKind::If(c, t, e) => {
                c.walk(f);
                t.walk(f);
                e.walk(f);
            }
            ExprKind::BinOp(_, a, b) => {
                a.walk(f);
                b.walk(f);
            }
            ExprKind::Compare { first, rest } => {
                first.walk(f);
                rest.iter().for_each(|(_, e)| e.walk(f));
            }
            ExprKind::Var(_)
            | ExprKind::IntLit(_)
            | ExprKind::FloatLit { .. }
            | ExprKind::BoolLit(_)
            | ExprKind::StringLit(_) => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeclKind {
    TypeAlias,
    Predicate,
    Function,
}

/// Keyword spelling of a function declaration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FunctionKeyword {
    Function,
    LetFunction,
    Let,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Contract {
    Requires(Expr),
    Ensures(Expr),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decl {
    pub kind: DeclKind,
    pub keyword: FunctionKeyword,
    pub name: String,
    pub binders: Vec<Binder>,
    pub result_type: Option<SpecType>,
    pub contracts: Vec<Contract>,
    /// Body expression; absent for type aliases.
    pub body: Option<Expr>,
    /// Aliased type for type aliases.
    pub alias: Option<SpecType>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Goal {
    pub name: String,
    pub body: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Item {
    Decl(Decl),
    Goal(Goal),
}

/// A parsed specification file: declarations and goals in source order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpecAst {
    pub items: Vec<Item>,
}

impl SpecAst {
    pub fn decls(&self) -> impl Iterator<Item = &Decl> {
        self.items.iter().filter_map(|i| match i {
            Item::Decl(d) => Some(d),
            Item::Goal(_) => None,
        })
    }

    pub fn goals(&self) -> impl Iterator<Item = &Goal> {
        self.items.iter().filter_map(|i| match i {
            Item::Goal(g) => Some(g),
            Item::Decl(_) => None,
        })
    }

    pub fn structurally_eq(&self, other: &SpecAst) -> bool {
        self.items.len() == other.items.len()
            && self
                .items
                .iter()
                .zip(&other.items)
                .all(|(a, b)| match (a, b) {
                    (Item::Goal(x), Item::Goal(y)) => {
                        x.name == y.name && x.body.structurally_eq(&y.body)
                    }
                    (Item::Decl(x), Item::Decl(y)) => {
                        let names = |bs: &[Binder]| -> Vec<(String, Option<SpecType>)> {
                            bs.iter()
                                .map(|b| (b.name.clone(), b.annotation.clone()))
                                .collect()
                        };
                        let contract_eq = |p: &Contract, q: &Contract| match (p, q) {
                            (Contract::Requires(a), Contract::Requires(b))
                            | (Contract::Ensures(a), Contract::Ensures(b)) => a.structurally_eq(b),
                            _ => false,
                        };
                        x.kind == y.kind
                            && x.keyword == y.keyword
                            && x.name == y.name
                            && names(&x.binders) == names(&y.binders)
                            && x.result_type == y.result_type
                            && x.alias == y.alias
                            && x.contracts.len() == y.contracts.len()
                            && x.contracts
                                .iter()
                                .zip(&y.contracts)
                                .all(|(p, q)| contract_eq(p, q))
                            && match (&x.body, &y.body) {
                                (Some(a), Some(b)) => a.structurally_eq(b),
                                (None, None) => true,
                                _ => false,
                            }
                    }
                    _ => false,
                })
    }
}

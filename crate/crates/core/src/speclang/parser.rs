use num_bigint::BigInt;

use crate::rational;
use crate::speclang::ast::*;
use crate::speclang::lexer::{tokenize, Tok, Token};
use crate::speclang::{Span, SyntaxError};

/// Parses a whole specification file.
pub fn parse(source: &str) -> Result<SpecAst, SyntaxError> {
    let mut p = Parser {
        tokens: tokenize(source)?,
        pos: 0,
    };
    let mut items = Vec::new();
    while p.peek() != &Tok::Eof {
        items.push(p.item()?);
    }
    Ok(SpecAst { items })
}

/// Parses a single expression (used by tests and the command line).
pub fn parse_expr(source: &str) -> Result<Expr, SyntaxError> {
    let mut p = Parser {
        tokens: tokenize(source)?,
        pos: 0,
    };
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, SyntaxError> {
        let found = self.peek();
        let message = if *found == Tok::Eof {
            format!("unexpected end of input, expected {expected}")
        } else {
            format!("unexpected {found}, expected {expected}")
        };
        Err(SyntaxError {
            span: self.span(),
            message,
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Keyword(x) if *x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), SyntaxError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(&format!("`{s}`"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), SyntaxError> {
        if self.is_kw(k) {
            self.advance();
            Ok(())
        } else {
            self.error(&format!("`{k}`"))
        }
    }

    fn expect_eof(&self) -> Result<(), SyntaxError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            self.error("end of input")
        }
    }

    fn ident(&mut self) -> Result<String, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(name)
            }
            _ => self.error("an identifier"),
        }
    }

    fn item(&mut self) -> Result<Item, SyntaxError> {
        let span = self.span();
        match self.peek() {
            Tok::Keyword("goal") => {
                self.advance();
                let name = self.ident()?;
                self.expect_sym(":")?;
                let body = self.expr()?;
                Ok(Item::Goal(Goal { name, body, span }))
            }
            Tok::Keyword("type") => {
                self.advance();
                let name = self.ident()?;
                self.expect_sym("=")?;
                let alias = self.ty()?;
                Ok(Item::Decl(Decl {
                    kind: DeclKind::TypeAlias,
                    keyword: FunctionKeyword::Function,
                    name,
                    binders: vec![],
                    result_type: None,
                    contracts: vec![],
                    body: None,
                    alias: Some(alias),
                    span,
                }))
            }
            Tok::Keyword("predicate") => {
                self.advance();
                self.function_decl(DeclKind::Predicate, FunctionKeyword::Function, span)
            }
            Tok::Keyword("function") => {
                self.advance();
                self.function_decl(DeclKind::Function, FunctionKeyword::Function, span)
            }
            Tok::Keyword("let") => {
                self.advance();
                if self.is_kw("function") {
                    self.advance();
                    self.function_decl(DeclKind::Function, FunctionKeyword::LetFunction, span)
                } else {
                    self.function_decl(DeclKind::Function, FunctionKeyword::Let, span)
                }
            }
            _ => self.error("a declaration (`goal`, `predicate`, `function`, `let` or `type`)"),
        }
    }

    fn function_decl(
        &mut self,
        kind: DeclKind,
        keyword: FunctionKeyword,
        span: Span,
    ) -> Result<Item, SyntaxError> {
        let name = self.ident()?;
        let mut binders = Vec::new();
        while matches!(self.peek(), Tok::Ident(_)) || self.is_sym("(") {
            binders.push(self.binder()?);
        }
        let result_type = if self.eat_sym(":") {
            Some(self.ty()?)
        } else {
            None
        };
        let mut contracts = Vec::new();
        loop {
            let requires = if self.is_kw("requires") {
                true
            } else if self.is_kw("ensures") {
                false
            } else {
                break;
            };
            self.advance();
            self.expect_sym("{")?;
            let e = self.expr()?;
            self.expect_sym("}")?;
            contracts.push(if requires {
                Contract::Requires(e)
            } else {
                Contract::Ensures(e)
            });
        }
        if kind == DeclKind::Predicate && (!contracts.is_empty() || result_type.is_some()) {
            return Err(SyntaxError {
                span,
                message: "predicates take neither contracts nor a result type".into(),
            });
        }
        self.expect_sym("=")?;
        let body = self.expr()?;
        Ok(Item::Decl(Decl {
            kind,
            keyword,
            name,
            binders,
            result_type,
            contracts,
            body: Some(body),
            alias: None,
            span,
        }))
    }

    fn binder(&mut self) -> Result<Binder, SyntaxError> {
        let span = self.span();
        if self.eat_sym("(") {
            let name = self.ident()?;
            self.expect_sym(":")?;
            let ty = self.ty()?;
            self.expect_sym(")")?;
            Ok(Binder {
                name,
                annotation: Some(ty),
                span,
                ty: None,
            })
        } else {
            let name = self.ident()?;
            Ok(Binder {
                name,
                annotation: None,
                span,
                ty: None,
            })
        }
    }

    /// Quantifier binders: `x y: t, z: u` or parenthesized binders.
    fn quant_binders(&mut self) -> Result<Vec<Binder>, SyntaxError> {
        let mut out = Vec::new();
        loop {
            if self.is_sym("(") {
                out.push(self.binder()?);
                if matches!(self.peek(), Tok::Ident(_)) || self.is_sym("(") {
                    continue;
                }
            } else {
                let mut group = Vec::new();
                while matches!(self.peek(), Tok::Ident(_)) {
                    let span = self.span();
                    group.push(Binder {
                        name: self.ident()?,
                        annotation: None,
                        span,
                        ty: None,
                    });
                }
                if group.is_empty() {
                    return self.error("a binder");
                }
                if self.eat_sym(":") {
                    let ty = self.ty()?;
                    for b in &mut group {
                        b.annotation = Some(ty.clone());
                    }
                }
                out.extend(group);
            }
            if !self.eat_sym(",") {
                return Ok(out);
            }
        }
    }

    fn binders(&mut self) -> Result<Vec<Binder>, SyntaxError> {
        let mut out = vec![self.binder()?];
        while matches!(self.peek(), Tok::Ident(_)) || self.is_sym("(") {
            out.push(self.binder()?);
        }
        Ok(out)
    }

    fn ty(&mut self) -> Result<SpecType, SyntaxError> {
        let lhs = self.ty_app()?;
        if self.eat_sym("->") {
            let rhs = self.ty()?;
            Ok(SpecType::Arrow(Box::new(lhs), Box::new(rhs)))
        } else {
            Ok(lhs)
        }
    }

    fn ty_app(&mut self) -> Result<SpecType, SyntaxError> {
        if matches!(self.peek(), Tok::Ident(n) if n == "vector") {
            self.advance();
            return Ok(SpecType::Vector(Box::new(self.ty_app()?)));
        }
        self.ty_atom()
    }

    fn ty_atom(&mut self) -> Result<SpecType, SyntaxError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                Ok(match name.as_str() {
                    "int" => SpecType::Int,
                    "bool" => SpecType::Bool,
                    "float" => SpecType::Float,
                    "string" => SpecType::String,
                    "model" => SpecType::Model,
                    _ => SpecType::Named(name),
                })
            }
            Tok::TypeVar(name) => {
                self.advance();
                Ok(SpecType::Var(name))
            }
            Tok::Sym("(") => {
                self.advance();
                let first = self.ty()?;
                if self.eat_sym(",") {
                    let mut items = vec![first, self.ty()?];
                    while self.eat_sym(",") {
                        items.push(self.ty()?);
                    }
                    self.expect_sym(")")?;
                    Ok(SpecType::Tuple(items))
                } else {
                    self.expect_sym(")")?;
                    Ok(first)
                }
            }
            _ => self.error("a type"),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.span();
        let lhs = self.or_expr()?;
        if self.eat_sym("->") {
            let rhs = self.expr()?;
            return Ok(Expr::new(
                ExprKind::BinOp(BinOp::Implies, Box::new(lhs), Box::new(rhs)),
                span,
            ));
        }
        Ok(lhs)
    }

    fn right_assoc(
        &mut self,
        ops: &[&str],
        next: fn(&mut Self) -> Result<Expr, SyntaxError>,
    ) -> Result<Expr, SyntaxError> {
        let span = self.span();
        let lhs = next(self)?;
        if let Tok::Sym(s) = self.peek() {
            if ops.contains(s) {
                let op = BinOp::from_symbol(s).unwrap();
                self.advance();
                let rhs = self.right_assoc(ops, next)?;
                return Ok(Expr::new(
                    ExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)),
                    span,
                ));
            }
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> Result<Expr, SyntaxError> {
        self.right_assoc(&["\\/", "||"], Self::and_expr)
    }

    fn and_expr(&mut self) -> Result<Expr, SyntaxError> {
        self.right_assoc(&["/\\", "&&"], Self::not_expr)
    }

    fn not_expr(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.span();
        if self.is_kw("not") {
            self.advance();
            let e = self.not_expr()?;
            return Ok(Expr::new(ExprKind::Not(Box::new(e)), span));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.span();
        let first = self.add_expr()?;
        let mut rest = Vec::new();
        while let Tok::Sym(s) = self.peek() {
            let Some(op) = CmpOp::from_symbol(s) else {
                break;
            };
            self.advance();
            rest.push((op, self.add_expr()?));
        }
        if rest.is_empty() {
            Ok(first)
        } else {
            Ok(Expr::new(
                ExprKind::Compare {
                    first: Box::new(first),
                    rest,
                },
                span,
            ))
        }
    }

    fn left_assoc(
        &mut self,
        ops: &[&str],
        next: fn(&mut Self) -> Result<Expr, SyntaxError>,
    ) -> Result<Expr, SyntaxError> {
        let span = self.span();
        let mut lhs = next(self)?;
        while let Tok::Sym(s) = self.peek() {
            if !ops.contains(s) {
                break;
            }
            let op = BinOp::from_symbol(s).unwrap();
            self.advance();
            let rhs = next(self)?;
            lhs = Expr::new(ExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)), span);
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Expr, SyntaxError> {
        self.left_assoc(&["+", "-", ".+", ".-"], Self::mul_expr)
    }

    fn mul_expr(&mut self) -> Result<Expr, SyntaxError> {
        self.left_assoc(&["*", "/", ".*", "./"], Self::neg_expr)
    }

    fn neg_expr(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.span();
        let float = match self.peek() {
            Tok::Sym("-") => false,
            Tok::Sym(".-") => true,
            _ => return self.model_apply_expr(),
        };
        self.advance();
        let operand = self.neg_expr()?;
        Ok(Expr::new(
            ExprKind::Neg {
                float,
                operand: Box::new(operand),
            },
            span,
        ))
    }

    fn model_apply_expr(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.span();
        let mut lhs = self.app_expr()?;
        while self.eat_sym("@@") {
            let rhs = self.app_expr()?;
            lhs = Expr::new(
                ExprKind::BuiltIn {
                    kind: BuiltInKind::ModelApply,
                    name: "@@".into(),
                    args: vec![lhs, rhs],
                },
                span,
            );
        }
        Ok(lhs)
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Ident(_)
                | Tok::Int(_)
                | Tok::Float(_)
                | Tok::Str(_)
                | Tok::Keyword("true" | "false")
                | Tok::Sym("(")
        )
    }

    fn app_expr(&mut self) -> Result<Expr, SyntaxError> {
        if let Tok::Keyword(k) = self.peek() {
            let k: &'static str = k;
            if matches!(k, "let" | "if" | "forall" | "exists" | "fun") {
                return self.prefix_form(k);
            }
        }
        let span = self.span();
        let head = self.postfix_expr()?;
        let mut args = Vec::new();
        while self.starts_atom() {
            args.push(self.postfix_expr()?);
        }
        if let ExprKind::Var(name) = &head.kind {
            if let Some(kind) = BuiltInKind::from_name(name) {
                if args.len() != kind.arity() {
                    return Err(SyntaxError {
                        span,
                        message: format!(
                            "built-in `{name}` expects {} argument(s), got {}",
                            kind.arity(),
                            args.len()
                        ),
                    });
                }
                return Ok(Expr::new(
                    ExprKind::BuiltIn {
                        kind,
                        name: name.clone(),
                        args,
                    },
                    span,
                ));
            }
        }
        if args.is_empty() {
            Ok(head)
        } else {
            Ok(Expr::new(ExprKind::App(Box::new(head), args), span))
        }
    }

    fn prefix_form(&mut self, keyword: &str) -> Result<Expr, SyntaxError> {
        let span = self.span();
        self.advance();
        let kind = match keyword {
            "let" => {
                let name = self.ident()?;
                let mut params = Vec::new();
                while matches!(self.peek(), Tok::Ident(_)) || self.is_sym("(") {
                    params.push(self.binder()?);
                }
                self.expect_sym("=")?;
                let value = self.expr()?;
                self.expect_kw("in")?;
                let body = self.expr()?;
                ExprKind::Let {
                    name,
                    params,
                    value: Box::new(value),
                    body: Box::new(body),
                }
            }
            "if" => {
                let c = self.expr()?;
                self.expect_kw("then")?;
                let t = self.expr()?;
                self.expect_kw("else")?;
                let e = self.expr()?;
                ExprKind::If(Box::new(c), Box::new(t), Box::new(e))
            }
            "forall" | "exists" => {
                let binders = self.quant_binders()?;
                self.expect_sym(".")?;
                let body = Box::new(self.expr()?);
                if keyword == "forall" {
                    ExprKind::Forall(binders, body)
                } else {
                    ExprKind::Exists(binders, body)
                }
            }
            _ => {
                let binders = self.binders()?;
                self.expect_sym("->")?;
                ExprKind::Fun(binders, Box::new(self.expr()?))
            }
        };
        Ok(Expr::new(kind, span))
    }

    fn postfix_expr(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.span();
        let mut e = self.atom()?;
        while self.eat_sym("[") {
            let index = self.expr()?;
            self.expect_sym("]")?;
            e = Expr::new(
                ExprKind::BuiltIn {
                    kind: BuiltInKind::Index,
                    name: "[]".into(),
                    args: vec![e, index],
                },
                span,
            );
        }
        Ok(e)
    }

    fn atom(&mut self) -> Result<Expr, SyntaxError> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::Ident(name) => {
                self.advance();
                ExprKind::Var(name)
            }
            Tok::Int(text) => {
                self.advance();
                ExprKind::IntLit(text.parse::<BigInt>().expect("lexer yields digits"))
            }
            Tok::Float(text) => {
                self.advance();
                let value = rational::parse_decimal(&text).expect("lexer yields decimals");
                ExprKind::FloatLit { text, value }
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::StringLit(s)
            }
            Tok::Keyword("true") => {
                self.advance();
                ExprKind::BoolLit(true)
            }
            Tok::Keyword("false") => {
                self.advance();
                ExprKind::BoolLit(false)
            }
            Tok::Sym("(") => {
                self.advance();
                let first = self.expr()?;
                if self.eat_sym(":") {
                    let ty = self.ty()?;
                    self.expect_sym(")")?;
                    ExprKind::Ascribe(Box::new(first), ty)
                } else if self.eat_sym(",") {
                    let mut items = vec![first, self.expr()?];
                    while self.eat_sym(",") {
                        items.push(self.expr()?);
                    }
                    self.expect_sym(")")?;
                    ExprKind::Tuple(items)
                } else {
                    self.expect_sym(")")?;
                    ExprKind::Paren(Box::new(first))
                }
            }
            _ => return self.error("an expression"),
        };
        Ok(Expr::new(kind, span))
    }
}

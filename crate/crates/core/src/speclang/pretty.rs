//! Source rendering. Parentheses written by the user are kept (they are
//! `Paren` nodes); extra ones are inserted only where the grammar needs them,
//! so printing a parsed file reproduces its token stream.

use crate::speclang::ast::*;

pub fn pretty(ast: &SpecAst) -> String {
    let mut out = String::new();
    for (i, item) in ast.items.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match item {
            Item::Goal(g) => {
                out.push_str(&format!("goal {}:\n  {}\n", g.name, pretty_expr(&g.body)));
            }
            Item::Decl(d) => out.push_str(&decl(d)),
        }
    }
    out
}

fn decl(d: &Decl) -> String {
    let binders: String = d
        .binders
        .iter()
        .map(|b| format!(" {}", binder(b)))
        .collect();
    match d.kind {
        DeclKind::TypeAlias => format!("type {} = {}\n", d.name, ty(d.alias.as_ref().unwrap())),
        DeclKind::Predicate => format!(
            "predicate {}{binders} =\n  {}\n",
            d.name,
            pretty_expr(d.body.as_ref().unwrap())
        ),
        DeclKind::Function => {
            let keyword = match d.keyword {
                FunctionKeyword::Function => "function",
                FunctionKeyword::LetFunction => "let function",
                FunctionKeyword::Let => "let",
            };
            let mut s = format!("{keyword} {}{binders}", d.name);
            if let Some(t) = &d.result_type {
                s.push_str(&format!(" : {}", ty(t)));
            }
            for c in &d.contracts {
                let (word, e) = match c {
                    Contract::Requires(e) => ("requires", e),
                    Contract::Ensures(e) => ("ensures", e),
                };
                s.push_str(&format!("\n  {word} {{ {} }}", pretty_expr(e)));
            }
            s.push_str(&format!(
                " =\n  {}\n",
                pretty_expr(d.body.as_ref().unwrap())
            ));
            s
        }
    }
}

pub fn binder(b: &Binder) -> String {
    match &b.annotation {
        Some(t) => format!("({}: {})", b.name, ty(t)),
        None => b.name.clone(),
    }
}

pub fn ty(t: &SpecType) -> String {
    fn go(t: &SpecType, level: u8) -> String {
        // level 0: arrow allowed, 1: argument of `vector` or arrow domain.
        match t {
            SpecType::Int => "int".into(),
            SpecType::Bool => "bool".into(),
            SpecType::Float => "float".into(),
            SpecType::String => "string".into(),
            SpecType::Model => "model".into(),
            SpecType::Named(n) => n.clone(),
            SpecType::Var(v) => format!("'{v}"),
            SpecType::Vector(e) => format!("vector {}", go(e, 1)),
            SpecType::Tuple(items) => {
                let parts: Vec<String> = items.iter().map(|i| go(i, 0)).collect();
                format!("({})", parts.join(", "))
            }
            SpecType::Arrow(a, b) => {
                let s = format!("{} -> {}", go(a, 1), go(b, 0));
                if level > 0 {
                    format!("({s})")
                } else {
                    s
                }
            }
        }
    }
    go(t, 0)
}

pub fn pretty_expr(e: &Expr) -> String {
    let mut out = String::new();
    print(e, 0, true, &mut out);
    out
}

fn is_prefix_form(e: &Expr) -> bool {
    matches!(
        e.kind,
        ExprKind::Let { .. }
            | ExprKind::If(..)
            | ExprKind::Forall(..)
            | ExprKind::Exists(..)
            | ExprKind::Fun(..)
    )
}

fn precedence(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::BinOp(op, _, _) => op.precedence(),
        ExprKind::Compare { .. } => PREC_CMP,
        ExprKind::Not(_) => PREC_NOT,
        ExprKind::Neg { .. } => PREC_NEG,
        ExprKind::BuiltIn {
            kind: BuiltInKind::ModelApply,
            ..
        } => PREC_APPLY_MODEL,
        ExprKind::BuiltIn {
            kind: BuiltInKind::Index,
            ..
        } => PREC_POSTFIX,
        ExprKind::App(..) | ExprKind::BuiltIn { .. } => PREC_APP,
        _ if is_prefix_form(e) => 0,
        _ => PREC_ATOM,
    }
}

/// `ctx` is the minimum precedence the context accepts without parentheses;
/// `tail` is true when nothing follows the expression before a closing
/// delimiter, which is where bare prefix forms may appear.
fn print(e: &Expr, ctx: u8, tail: bool, out: &mut String) {
    let wrap = precedence(e) < ctx || (is_prefix_form(e) && !tail);
    if wrap {
        out.push('(');
        print_bare(e, true, out);
        out.push(')');
    } else {
        print_bare(e, tail, out);
    }
}

fn print_bare(e: &Expr, tail: bool, out: &mut String) {
    match &e.kind {
        ExprKind::Var(n) => out.push_str(n),
        ExprKind::IntLit(v) => out.push_str(&v.to_string()),
        ExprKind::FloatLit { text, .. } => out.push_str(text),
        ExprKind::BoolLit(b) => out.push_str(if *b { "true" } else { "false" }),
        ExprKind::StringLit(s) => out.push_str(&format!("{s:?}")),
        ExprKind::Paren(inner) => {
            out.push('(');
            print(inner, 0, true, out);
            out.push(')');
        }
        ExprKind::Tuple(items) => {
            out.push('(');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                print(item, 0, true, out);
            }
            out.push(')');
        }
        ExprKind::Ascribe(inner, t) => {
            out.push('(');
            print(inner, 0, true, out);
            out.push(':');
            out.push_str(&ty(t));
            out.push(')');
        }
        ExprKind::App(head, args) => {
            print(head, PREC_POSTFIX, false, out);
            for a in args {
                out.push(' ');
                print(a, PREC_POSTFIX, false, out);
            }
        }
        ExprKind::BuiltIn { kind, name, args } => match kind {
            BuiltInKind::ModelApply => {
                print(&args[0], PREC_APPLY_MODEL, false, out);
                out.push_str(" @@ ");
                print(&args[1], PREC_APP, tail, out);
            }
            BuiltInKind::Index => {
                print(&args[0], PREC_POSTFIX, false, out);
                out.push('[');
                print(&args[1], 0, true, out);
                out.push(']');
            }
            _ => {
                out.push_str(name);
                for a in args {
                    out.push(' ');
                    print(a, PREC_POSTFIX, false, out);
                }
            }
        },
        ExprKind::BinOp(op, a, b) => {
            let p = op.precedence();
            let (lctx, rctx) = if op.right_assoc() {
                (p + 1, p)
            } else {
                (p, p + 1)
            };
            print(a, lctx, false, out);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            print(b, rctx, tail, out);
        }
        ExprKind::Compare { first, rest } => {
            print(first, PREC_ADD, false, out);
            for (i, (op, operand)) in rest.iter().enumerate() {
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                print(operand, PREC_ADD, tail && i + 1 == rest.len(), out);
            }
        }
        ExprKind::Neg { float, operand } => {
            out.push_str(if *float { ".- " } else { "- " });
            print(operand, PREC_NEG, tail, out);
        }
        ExprKind::Not(inner) => {
            out.push_str("not ");
            print(inner, PREC_NOT, tail, out);
        }
        ExprKind::Let {
            name,
            params,
            value,
            body,
        } => {
            out.push_str("let ");
            out.push_str(name);
            for p in params {
                out.push(' ');
                out.push_str(&binder(p));
            }
            out.push_str(" = ");
            print(value, 0, true, out);
            out.push_str(" in ");
            print(body, 0, tail, out);
        }
        ExprKind::If(c, t, f) => {
            out.push_str("if ");
            print(c, 0, true, out);
            out.push_str(" then ");
            print(t, 0, true, out);
            out.push_str(" else ");
            print(f, 0, tail, out);
        }
        ExprKind::Forall(bs, body) | ExprKind::Exists(bs, body) | ExprKind::Fun(bs, body) => {
            let (kw, sep) = match e.kind {
                ExprKind::Forall(..) => ("forall", "."),
                ExprKind::Exists(..) => ("exists", "."),
                _ => ("fun", " ->"),
            };
            out.push_str(kw);
            for b in bs {
                out.push(' ');
                out.push_str(&binder(b));
            }
            out.push_str(sep);
            out.push(' ');
            print(body, 0, tail, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::speclang::lexer::tokenize;
    use crate::speclang::parser::{parse, parse_expr};
    use crate::speclang::Span;

    fn round_trip(src: &str) {
        let ast = parse(src).unwrap();
        let printed = pretty(&ast);
        let again = parse(&printed).unwrap_or_else(|e| panic!("{printed}\n{e:?}"));
        assert!(ast.structurally_eq(&again), "{printed}");
        let toks =
            |s: &str| -> Vec<_> { tokenize(s).unwrap().into_iter().map(|t| t.tok).collect() };
        assert_eq!(toks(src), toks(&printed));
    }

    #[test]
    fn trivial_goal() {
        round_trip("goal g: true");
    }

    #[test]
    fn operators_and_binders() {
        round_trip(
            "predicate p (f: 'a -> bool) (v: vector 'a) = forall i. 0 <= i < length v -> f v[i]\n\
             goal h: forall (x: t) y. (forall z. z .> x) /\\ not (x .<= y) \\/ .- x .* 2.5 .+ y .>= 0.0",
        );
        round_trip("goal k: let n = nn @@ (a, b .+ c) in (n[0], if true then 1 else - 2) = (x, 3)");
        round_trip("goal m: CSV.forall_ d (fun l e -> has_length e (length e) && l <> 2 || false)");
    }

    #[test]
    fn synthesized_trees_get_parentheses() {
        let s = Span::default();
        let v = |n: &str| Expr::new(ExprKind::Var(n.into()), s);
        let forall = Expr::new(
            ExprKind::Forall(vec![Binder::new("x", None)], Box::new(v("b"))),
            s,
        );
        let and = Expr::new(
            ExprKind::BinOp(BinOp::And, Box::new(v("a")), Box::new(forall)),
            s,
        );
        let imp = Expr::new(
            ExprKind::BinOp(BinOp::Implies, Box::new(and), Box::new(v("c"))),
            s,
        );
        let text = pretty_expr(&imp);
        assert_eq!(text, "a /\\ (forall x. b) -> c");
        assert!(parse_expr(&text).unwrap().structurally_eq(&imp));

        let app = Expr::new(ExprKind::App(Box::new(v("f")), vec![v("a")]), s);
        let nested = Expr::new(ExprKind::App(Box::new(app), vec![v("b")]), s);
        let text = pretty_expr(&nested);
        assert!(
            parse_expr(&text).unwrap().structurally_eq(&nested),
            "{text}"
        );

        let sub = Expr::new(
            ExprKind::BinOp(BinOp::Sub, Box::new(v("b")), Box::new(v("c"))),
            s,
        );
        let outer = Expr::new(
            ExprKind::BinOp(BinOp::Sub, Box::new(v("a")), Box::new(sub)),
            s,
        );
        assert_eq!(pretty_expr(&outer), "a - (b - c)");
    }
}

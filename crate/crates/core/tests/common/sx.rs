//! A small S-expression reader and a decision procedure for the emitted
//! VNN-LIB and SMT-LIB files: `ite` branches are enumerated, the resulting
//! linear formulas go through DNF and Fourier-Motzkin.

use num_traits::{One, Zero};

use super::fm::{satisfiable, Con, Lin, Rel};
use super::Q;

#[derive(Clone, Debug, PartialEq)]
pub enum Sx {
    A(String),
    L(Vec<Sx>),
}

impl Sx {
    fn head(&self) -> Option<&str> {
        match self {
            Sx::L(items) => match items.first() {
                Some(Sx::A(a)) => Some(a),
                _ => None,
            },
            Sx::A(_) => None,
        }
    }

    fn args(&self) -> &[Sx] {
        match self {
            Sx::L(items) => &items[1..],
            Sx::A(_) => &[],
        }
    }
}

pub fn parse(text: &str) -> Vec<Sx> {
    let mut tokens = Vec::new();
    for line in text.lines() {
        let line = line.split(';').next().unwrap_or("");
        let spaced = line.replace('(', " ( ").replace(')', " ) ");
        tokens.extend(spaced.split_whitespace().map(str::to_string));
    }
    let mut stack: Vec<Vec<Sx>> = vec![Vec::new()];
    for t in tokens {
        match t.as_str() {
            "(" => stack.push(Vec::new()),
            ")" => {
                let done = stack.pop().expect("balanced parentheses");
                stack
                    .last_mut()
                    .expect("balanced parentheses")
                    .push(Sx::L(done));
            }
            _ => stack.last_mut().expect("open list").push(Sx::A(t)),
        }
    }
    assert_eq!(stack.len(), 1, "unbalanced parentheses");
    stack.pop().unwrap()
}

/// Decimal literal with optional sign and exponent.
pub fn decimal(s: &str) -> Option<Q> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (mant, exp) = match body.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let digits = format!("{int}{frac}");
    if !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let n: num_bigint::BigInt = digits.parse().ok()?;
    let scale = exp - frac.len() as i32;
    let ten = Q::from_integer(10.into());
    let mut v = Q::from_integer(n);
    for _ in 0..scale.unsigned_abs() {
        if scale > 0 {
            v *= &ten;
        } else {
            v /= &ten;
        }
    }
    Some(if neg { -v } else { v })
}

#[derive(Clone, Debug)]
pub enum Bf {
    T,
    F,
    Atom(Lin, Rel),
    And(Vec<Bf>),
    Or(Vec<Bf>),
    Not(Box<Bf>),
}

impl Bf {
    pub fn eval(&self, x: &[Q]) -> bool {
        match self {
            Bf::T => true,
            Bf::F => false,
            Bf::Atom(l, r) => r.holds(&l.eval(x)),
            Bf::And(items) => items.iter().all(|b| b.eval(x)),
            Bf::Or(items) => items.iter().any(|b| b.eval(x)),
            Bf::Not(b) => !b.eval(x),
        }
    }

    pub fn atoms(&self, out: &mut Vec<(Lin, Rel)>) {
        match self {
            Bf::Atom(l, r) => out.push((l.clone(), *r)),
            Bf::And(items) | Bf::Or(items) => items.iter().for_each(|b| b.atoms(out)),
            Bf::Not(b) => b.atoms(out),
            Bf::T | Bf::F => {}
        }
    }
}

fn negate(r: Rel) -> Vec<Rel> {
    match r {
        Rel::Ge => vec![Rel::Lt],
        Rel::Gt => vec![Rel::Le],
        Rel::Le => vec![Rel::Gt],
        Rel::Lt => vec![Rel::Ge],
        Rel::Eq => vec![Rel::Lt, Rel::Gt],
    }
}

/// Disjuncts of conjunctions, for `b` (or its negation when `neg`).
pub fn dnf(b: &Bf, neg: bool) -> Vec<Vec<Con>> {
    match (b, neg) {
        (Bf::T, false) | (Bf::F, true) => vec![vec![]],
        (Bf::T, true) | (Bf::F, false) => vec![],
        (Bf::Atom(l, r), false) => vec![vec![Con::new(l.clone(), *r)]],
        (Bf::Atom(l, r), true) => negate(*r)
            .into_iter()
            .map(|r| vec![Con::new(l.clone(), r)])
            .collect(),
        (Bf::Not(x), _) => dnf(x, !neg),
        (Bf::And(items), false) | (Bf::Or(items), true) => {
            let mut acc = vec![vec![]];
            for it in items {
                let d = dnf(it, neg);
                let mut next = Vec::new();
                for a in &acc {
                    for c in &d {
                        let mut merged: Vec<Con> = a.clone();
                        merged.extend(c.iter().cloned());
                        next.push(merged);
                    }
                }
                acc = next;
            }
            acc
        }
        (Bf::Or(items), false) | (Bf::And(items), true) => {
            items.iter().flat_map(|it| dnf(it, neg)).collect()
        }
    }
}

/// Declared reals and assertions of a VNN-LIB or SMT-LIB file.
pub struct Script {
    pub names: Vec<String>,
    pub asserts: Vec<Sx>,
}

pub fn script(text: &str) -> Script {
    let mut s = Script {
        names: vec![],
        asserts: vec![],
    };
    for e in parse(text) {
        match e.head() {
            Some("declare-const") | Some("declare-fun") => {
                let Sx::A(name) = &e.args()[0] else {
                    panic!("bad declaration")
                };
                s.names.push(name.clone());
            }
            Some("assert") => s.asserts.push(e.args()[0].clone()),
            Some("set-logic") | Some("check-sat") | Some("set-info") | Some("get-model") => {}
            other => panic!("unexpected command {other:?}"),
        }
    }
    s
}

/// Translation state: which branch each `ite` takes, numbered in
/// traversal order, and the branch conditions met along the way. An
/// undecided `ite` makes the enclosing comparison unknown.
struct Ites<'a> {
    choice: &'a dyn Fn(usize) -> Option<bool>,
    next: usize,
    conditions: Vec<Bf>,
    unknown: bool,
}

impl Script {
    pub fn index(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("undeclared {name}"))
    }

    fn real(&self, e: &Sx, st: &mut Ites, active: bool) -> Lin {
        if let Sx::A(a) = e {
            if let Some(v) = decimal(a) {
                return Lin::konst(v);
            }
            return Lin::var(self.index(a));
        }
        let args = e.args();
        match e.head().expect("operator") {
            "+" => args
                .iter()
                .fold(Lin::default(), |acc, a| acc.add(&self.real(a, st, active))),
            "-" if args.len() == 1 => self.real(&args[0], st, active).scale(&-Q::one()),
            "-" => {
                let first = self.real(&args[0], st, active);
                args[1..]
                    .iter()
                    .fold(first, |acc, a| acc.sub(&self.real(a, st, active)))
            }
            "*" => {
                let parts: Vec<Lin> = args.iter().map(|a| self.real(a, st, active)).collect();
                let mut acc = Lin::konst(Q::one());
                for p in parts {
                    if p.c.is_empty() {
                        acc = acc.scale(&p.k);
                    } else {
                        assert!(acc.c.is_empty(), "non-linear product");
                        acc = p.scale(&acc.k);
                    }
                }
                acc
            }
            "/" => {
                let num = self.real(&args[0], st, active);
                let den = self.real(&args[1], st, active);
                assert!(
                    den.c.is_empty() && !den.k.is_zero(),
                    "division by a non-constant"
                );
                num.scale(&den.k.recip())
            }
            "ite" => {
                let id = st.next;
                st.next += 1;
                let cond = self.boolean(&args[0], st, active);
                let Some(pick) = (st.choice)(id) else {
                    st.unknown = true;
                    self.real(&args[1], st, false);
                    self.real(&args[2], st, false);
                    return Lin::default();
                };
                if active {
                    st.conditions
                        .push(if pick { cond } else { Bf::Not(Box::new(cond)) });
                }
                let yes = self.real(&args[1], st, active && pick);
                let no = self.real(&args[2], st, active && !pick);
                if pick {
                    yes
                } else {
                    no
                }
            }
            op => panic!("unexpected real operator {op}"),
        }
    }

    fn boolean(&self, e: &Sx, st: &mut Ites, active: bool) -> Bf {
        if let Sx::A(a) = e {
            return match a.as_str() {
                "true" => Bf::T,
                "false" => Bf::F,
                _ => panic!("unexpected boolean {a}"),
            };
        }
        let args = e.args();
        let op = e.head().expect("operator");
        let cmp = |r: Rel, st: &mut Ites| {
            let outer = std::mem::replace(&mut st.unknown, false);
            let l = self.real(&args[0], st, active);
            let rhs = self.real(&args[1], st, active);
            let unknown = std::mem::replace(&mut st.unknown, outer);
            if unknown {
                Bf::T
            } else {
                Bf::Atom(l.sub(&rhs), r)
            }
        };
        match op {
            "and" => Bf::And(args.iter().map(|a| self.boolean(a, st, active)).collect()),
            "or" => Bf::Or(args.iter().map(|a| self.boolean(a, st, active)).collect()),
            "not" => Bf::Not(Box::new(self.boolean(&args[0], st, active))),
            "=>" => Bf::Or(vec![
                Bf::Not(Box::new(self.boolean(&args[0], st, active))),
                self.boolean(&args[1], st, active),
            ]),
            ">=" => cmp(Rel::Ge, st),
            ">" => cmp(Rel::Gt, st),
            "<=" => cmp(Rel::Le, st),
            "<" => cmp(Rel::Lt, st),
            "=" => cmp(Rel::Eq, st),
            _ => panic!("unexpected boolean operator {op}"),
        }
    }

    /// Number of `ite` nodes across all assertions.
    pub fn ite_count(&self) -> usize {
        let mut st = Ites {
            choice: &|_| Some(true),
            next: 0,
            conditions: vec![],
            unknown: false,
        };
        for a in &self.asserts {
            self.boolean(a, &mut st, true);
        }
        st.next
    }

    /// The conjunction of all assertions with every `ite` resolved by
    /// `choice`, plus the branch conditions that choice implies.
    pub fn resolve(&self, choice: &dyn Fn(usize) -> bool) -> Bf {
        self.partial(&|i| Some(choice(i)))
    }

    /// Like `resolve`, but comparisons over undecided `ite` nodes become
    /// `true`. This over-approximates as long as those comparisons occur
    /// positively, which holds for the emitted activation definitions.
    fn partial(&self, choice: &dyn Fn(usize) -> Option<bool>) -> Bf {
        let mut st = Ites {
            choice,
            next: 0,
            conditions: vec![],
            unknown: false,
        };
        let mut all: Vec<Bf> = self
            .asserts
            .iter()
            .map(|a| self.boolean(a, &mut st, true))
            .collect();
        all.extend(st.conditions);
        Bf::And(all)
    }

    /// Whether the assertions are jointly satisfiable over the reals.
    ///
    /// Branches are decided in traversal order and a prefix is abandoned as
    /// soon as its over-approximation is infeasible.
    pub fn satisfiable(&self) -> bool {
        let n = self.ite_count();
        assert!(n <= 24, "too many ite nodes for enumeration: {n}");
        self.search(n, &mut Vec::new())
    }

    fn search(&self, n: usize, prefix: &mut Vec<bool>) -> bool {
        let f = self.partial(&|i| prefix.get(i).copied());
        if !dnf(&f, false).iter().any(|conj| satisfiable(conj)) {
            return false;
        }
        if prefix.len() == n {
            return true;
        }
        [true, false].into_iter().any(|b| {
            prefix.push(b);
            let found = self.search(n, prefix);
            prefix.pop();
            found
        })
    }

    /// Truth of the assertions at a full valuation of the declared names.
    pub fn holds(&self, values: &[Q]) -> bool {
        let n = self.ite_count();
        // The branch conditions themselves select the right branch.
        (0u64..1 << n).any(|mask| self.resolve(&|i| mask >> i & 1 == 1).eval(values))
    }
}

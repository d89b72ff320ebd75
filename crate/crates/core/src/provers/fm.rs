//! Exact feasibility of linear constraint systems by Fourier–Motzkin
//! elimination, with a witness recovered by back-substitution.

use std::collections::HashMap;

use num_traits::{One, Signed, Zero};

use crate::nir::linear::LinExpr;
use crate::rational::Rational;

/// Relation of a constraint `expr REL 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Ge,
    Gt,
    Eq,
}

/// `expr REL 0` over variable indices `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Constraint {
    pub expr: LinExpr,
    pub rel: Rel,
}

impl Constraint {
    pub fn ge(expr: LinExpr) -> Self {
        Constraint { expr, rel: Rel::Ge }
    }

    pub fn gt(expr: LinExpr) -> Self {
        Constraint { expr, rel: Rel::Gt }
    }

    pub fn eq(expr: LinExpr) -> Self {
        Constraint { expr, rel: Rel::Eq }
    }

    pub fn holds(&self, point: &[Rational]) -> bool {
        let v = self.expr.eval(point);
        match self.rel {
            Rel::Ge => !v.is_negative(),
            Rel::Gt => v.is_positive(),
            Rel::Eq => v.is_zero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Feasibility {
    Feasible(Vec<Rational>),
    Infeasible,
    /// The intermediate system outgrew the constraint cap.
    TooLarge,
}

/// Step recorded for back-substitution.
enum Step {
    /// `var = expr` (expr free of `var`).
    Solved(usize, LinExpr),
    /// Bounds on `var` in terms of variables eliminated later.
    Eliminated(usize, Vec<Constraint>),
}

/// Decides whether the conjunction of `constraints` over `n` variables has
/// a real solution; returns one when it does. Gives up with `TooLarge` when
/// more than `cap` constraints are live at once.
pub fn feasible(n: usize, constraints: &[Constraint], cap: usize) -> Feasibility {
    let mut live: Vec<Constraint> = Vec::new();
    let mut steps = Vec::new();
    let mut eqs: Vec<LinExpr> = Vec::new();
    for c in constraints {
        if c.rel == Rel::Eq {
            eqs.push(c.expr.clone());
        } else {
            live.push(c.clone());
        }
    }
    // Equalities: solve for one variable and substitute everywhere.
    while let Some(e) = eqs.pop() {
        let Some((&v, coeff)) = e.coeffs.iter().next() else {
            if e.constant.is_zero() {
                continue;
            }
            return Feasibility::Infeasible;
        };
        // v = -(e - coeff*v) / coeff
        let mut rest = e.clone();
        rest.coeffs.remove(&v);
        let def = rest.scale(&(-Rational::one() / coeff));
        let subst = |x: &LinExpr| substitute(x, v, &def);
        eqs = eqs.iter().map(subst).collect();
        for c in &mut live {
            c.expr = subst(&c.expr);
        }
        steps.push(Step::Solved(v, def));
    }
    live = match normalize(live) {
        Some(l) => l,
        None => return Feasibility::Infeasible,
    };
    loop {
        if live.len() > cap {
            return Feasibility::TooLarge;
        }
        // Pick the variable with the fewest generated pairs.
        let mut counts: HashMap<usize, (usize, usize)> = HashMap::new();
        for c in &live {
            for (&v, k) in &c.expr.coeffs {
                let e = counts.entry(v).or_default();
                if k.is_positive() {
                    e.0 += 1;
                } else {
                    e.1 += 1;
                }
            }
        }
        let Some((&var, _)) = counts.iter().min_by_key(|(&v, &(p, q))| (p * q, v)) else {
            break;
        };
        let (with, without): (Vec<_>, Vec<_>) = live
            .into_iter()
            .partition(|c| c.expr.coeffs.contains_key(&var));
        let (pos, neg): (Vec<_>, Vec<_>) =
            with.iter().partition(|c| c.expr.coeffs[&var].is_positive());
        let mut next = without;
        for p in &pos {
            for q in &neg {
                let a = &p.expr.coeffs[&var];
                let b = -&q.expr.coeffs[&var];
                let mut expr = p.expr.scale(&b).add_scaled(&q.expr, a);
                expr.coeffs.remove(&var);
                let rel = if p.rel == Rel::Gt || q.rel == Rel::Gt {
                    Rel::Gt
                } else {
                    Rel::Ge
                };
                next.push(Constraint { expr, rel });
            }
        }
        steps.push(Step::Eliminated(var, with));
        live = match normalize(next) {
            Some(l) => l,
            None => return Feasibility::Infeasible,
        };
    }
    let mut point: Vec<Option<Rational>> = vec![None; n];
    for step in steps.iter().rev() {
        match step {
            Step::Eliminated(var, cs) => {
                let value = choose(*var, cs, &point);
                point[*var] = Some(value);
            }
            Step::Solved(var, def) => {
                let value = def.eval(&fill(&point));
                point[*var] = Some(value);
            }
        }
    }
    Feasibility::Feasible(fill(&point))
}

fn fill(point: &[Option<Rational>]) -> Vec<Rational> {
    point
        .iter()
        .map(|v| v.clone().unwrap_or_else(Rational::zero))
        .collect()
}

fn substitute(x: &LinExpr, v: usize, def: &LinExpr) -> LinExpr {
    match x.coeffs.get(&v) {
        None => x.clone(),
        Some(k) => {
            let mut out = x.clone();
            out.coeffs.remove(&v);
            out.add_scaled(def, &k.clone())
        }
    }
}

/// Scales each constraint so its leading coefficient has magnitude one,
/// drops tautologies, keeps the tightest of parallel constraints. `None`
/// when a constant constraint is violated.
fn normalize(cs: Vec<Constraint>) -> Option<Vec<Constraint>> {
    let mut best: HashMap<Vec<(usize, Rational)>, (Rational, Rel)> = HashMap::new();
    let mut order = Vec::new();
    for c in cs {
        let Some((_, lead)) = c.expr.coeffs.iter().next() else {
            let v = &c.expr.constant;
            let ok = match c.rel {
                Rel::Ge => !v.is_negative(),
                Rel::Gt => v.is_positive(),
                Rel::Eq => v.is_zero(),
            };
            if ok {
                continue;
            }
            return None;
        };
        let e = c.expr.scale(&(Rational::one() / lead.abs()));
        let key: Vec<(usize, Rational)> = e.coeffs.into_iter().collect();
        // Smaller constant is tighter; strict beats non-strict on ties.
        match best.get_mut(&key) {
            Some(slot) => {
                if e.constant < slot.0 || (e.constant == slot.0 && c.rel == Rel::Gt) {
                    *slot = (e.constant, c.rel);
                }
            }
            None => {
                order.push(key.clone());
                best.insert(key, (e.constant, c.rel));
            }
        }
    }
    Some(
        order
            .into_iter()
            .map(|key| {
                let (constant, rel) = best.remove(&key).expect("recorded key");
                Constraint {
                    expr: LinExpr {
                        coeffs: key.into_iter().collect(),
                        constant,
                    },
                    rel,
                }
            })
            .collect(),
    )
}

/// A value for `var` satisfying every constraint in `cs`, given values of
/// the other variables they mention.
fn choose(var: usize, cs: &[Constraint], point: &[Option<Rational>]) -> Rational {
    let known = fill(point);
    let mut lo: Option<(Rational, bool)> = None;
    let mut hi: Option<(Rational, bool)> = None;
    for c in cs {
        let k = &c.expr.coeffs[&var];
        let mut rest = c.expr.clone();
        rest.coeffs.remove(&var);
        // k*var + rest REL 0  =>  var REL' -rest/k
        let bound = -rest.eval(&known) / k;
        let strict = c.rel == Rel::Gt;
        if k.is_positive() {
            if lo
                .as_ref()
                .is_none_or(|(b, s)| bound > *b || (bound == *b && strict && !s))
            {
                lo = Some((bound, strict));
            }
        } else if hi
            .as_ref()
            .is_none_or(|(b, s)| bound < *b || (bound == *b && strict && !s))
        {
            hi = Some((bound, strict));
        }
    }
    let admits = |v: &Rational| {
        let above = lo.as_ref().is_none_or(|(b, s)| v > b || (v == b && !s));
        let below = hi.as_ref().is_none_or(|(b, s)| v < b || (v == b && !s));
        above && below
    };
    if admits(&Rational::zero()) {
        return Rational::zero();
    }
    match (lo, hi) {
        (None, None) => Rational::zero(),
        (Some((l, s)), None) => {
            if s {
                l + Rational::one()
            } else {
                l
            }
        }
        (None, Some((h, s))) => {
            if s {
                h - Rational::one()
            } else {
                h
            }
        }
        (Some((l, ls)), Some((h, hs))) => {
            if !ls {
                l
            } else if !hs {
                h
            } else {
                (l + h) / Rational::from_integer(2.into())
            }
        }
    }
}

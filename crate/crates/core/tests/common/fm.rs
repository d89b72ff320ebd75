//! Linear forms and a plain Fourier-Motzkin satisfiability check, written
//! independently of the library's solver.

use std::collections::{BTreeMap, HashSet};

use num_traits::{One, Signed, Zero};

use super::Q;

/// `sum c[v] * v + k`, never storing zero coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Lin {
    pub c: BTreeMap<usize, Q>,
    pub k: Q,
}

impl Lin {
    pub fn konst(k: Q) -> Lin {
        Lin {
            c: BTreeMap::new(),
            k,
        }
    }

    pub fn var(v: usize) -> Lin {
        Lin {
            c: BTreeMap::from([(v, Q::one())]),
            k: Q::zero(),
        }
    }

    pub fn plus(&self, other: &Lin, f: &Q) -> Lin {
        let mut out = self.clone();
        for (v, a) in &other.c {
            let e = out.c.entry(*v).or_insert_with(Q::zero);
            *e += a * f;
            if e.is_zero() {
                out.c.remove(v);
            }
        }
        out.k += &other.k * f;
        out
    }

    pub fn add(&self, other: &Lin) -> Lin {
        self.plus(other, &Q::one())
    }

    pub fn sub(&self, other: &Lin) -> Lin {
        self.plus(other, &-Q::one())
    }

    pub fn scale(&self, f: &Q) -> Lin {
        Lin::default().plus(self, f)
    }

    pub fn eval(&self, x: &[Q]) -> Q {
        self.c
            .iter()
            .fold(self.k.clone(), |acc, (v, a)| acc + a * &x[*v])
    }

    /// Replaces `v` by `by`.
    fn substitute(&self, v: usize, by: &Lin) -> Lin {
        match self.c.get(&v) {
            None => self.clone(),
            Some(a) => {
                let mut rest = self.clone();
                let a = a.clone();
                rest.c.remove(&v);
                rest.plus(by, &a)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rel {
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
}

impl Rel {
    pub fn holds(self, v: &Q) -> bool {
        match self {
            Rel::Ge => !v.is_negative(),
            Rel::Gt => v.is_positive(),
            Rel::Le => !v.is_positive(),
            Rel::Lt => v.is_negative(),
            Rel::Eq => v.is_zero(),
        }
    }
}

/// `lin rel 0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Con {
    pub lin: Lin,
    pub rel: Rel,
}

impl Con {
    pub fn new(lin: Lin, rel: Rel) -> Con {
        Con { lin, rel }
    }

    pub fn holds(&self, x: &[Q]) -> bool {
        self.rel.holds(&self.lin.eval(x))
    }
}

/// Positive rescaling so that the first coefficient has magnitude one.
fn canonical(lin: &Lin) -> Lin {
    match lin.c.values().next() {
        Some(a) => lin.scale(&a.abs().recip()),
        None => lin.clone(),
    }
}

/// Whether some rational point satisfies every constraint.
pub fn satisfiable(cons: &[Con]) -> bool {
    let mut eqs = Vec::new();
    let mut ineqs: Vec<(Lin, bool)> = Vec::new();
    for c in cons {
        match c.rel {
            Rel::Eq => eqs.push(c.lin.clone()),
            Rel::Ge => ineqs.push((c.lin.clone(), false)),
            Rel::Gt => ineqs.push((c.lin.clone(), true)),
            Rel::Le => ineqs.push((c.lin.scale(&-Q::one()), false)),
            Rel::Lt => ineqs.push((c.lin.scale(&-Q::one()), true)),
        }
    }
    while let Some(e) = eqs.pop() {
        let Some((&v, a)) = e.c.iter().next() else {
            if !e.k.is_zero() {
                return false;
            }
            continue;
        };
        // v = -(e - a v) / a
        let mut rest = e.clone();
        rest.c.remove(&v);
        let by = rest.scale(&-a.recip());
        for other in eqs.iter_mut() {
            *other = other.substitute(v, &by);
        }
        for (l, _) in ineqs.iter_mut() {
            *l = l.substitute(v, &by);
        }
    }
    loop {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for (l, strict) in ineqs {
            if l.c.is_empty() {
                let ok = if strict {
                    l.k.is_positive()
                } else {
                    !l.k.is_negative()
                };
                if !ok {
                    return false;
                }
                continue;
            }
            let l = canonical(&l);
            if seen.insert((l.clone(), strict)) {
                kept.push((l, strict));
            }
        }
        let Some(v) = kept.iter().flat_map(|(l, _)| l.c.keys()).next().copied() else {
            return true;
        };
        let (mut pos, mut neg, mut next) = (Vec::new(), Vec::new(), Vec::new());
        for (l, s) in kept {
            match l.c.get(&v).map(|a| a.is_positive()) {
                Some(true) => pos.push((l, s)),
                Some(false) => neg.push((l, s)),
                None => next.push((l, s)),
            }
        }
        for (p, sp) in &pos {
            for (n, sn) in &neg {
                let a = &p.c[&v];
                let b = -&n.c[&v];
                next.push((p.scale(&b).add(&n.scale(a)), *sp || *sn));
            }
        }
        ineqs = next;
    }
}

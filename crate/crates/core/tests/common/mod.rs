//! Test-only oracles and fixture builders. The oracles evaluate networks,
//! SVMs and properties straight from their parameters and never call the
//! library's evaluation, lowering or solving code.
#![allow(dead_code)]

pub mod fm;
pub mod nets;
pub mod sx;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nnspec::interp::{Atom, Cmp, Formula, GoalFormula, InputVar, ModelApp, Term, VarRole};
use nnspec::nir::NirGraph;
use num_bigint::BigInt;
use num_traits::Signed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fm::{Lin, Rel};
use nets::Dense;
use sx::Bf;

pub type Q = num_rational::BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform multiple of `1/denom` in `[lo, hi]`.
pub fn sample(rng: &mut impl Rng, lo: &Q, hi: &Q, denom: i64) -> Q {
    let d = Q::from_integer(denom.into());
    let a = (lo * &d).ceil().to_integer();
    let b = (hi * &d).floor().to_integer();
    let span: i64 = (&b - &a).try_into().expect("small range");
    Q::new(
        a + BigInt::from(rng.gen_range(0..=span)),
        BigInt::from(denom),
    )
}

/// Affine expression over inputs and application outputs.
#[derive(Clone, Debug)]
pub enum E {
    In(usize),
    Out(usize, usize),
    C(Q),
    Add(Box<E>, Box<E>),
    Scale(Q, Box<E>),
}

impl E {
    pub fn eval(&self, x: &[Q], outs: &[Vec<Q>]) -> Q {
        match self {
            E::In(i) => x[*i].clone(),
            E::Out(a, j) => outs[*a][*j].clone(),
            E::C(c) => c.clone(),
            E::Add(a, b) => a.eval(x, outs) + b.eval(x, outs),
            E::Scale(k, a) => k * a.eval(x, outs),
        }
    }

    pub fn term(&self) -> Term {
        match self {
            E::In(i) => Term::input(*i),
            E::Out(a, j) => Term::output(*a, *j),
            E::C(c) => Term::constant(c.clone()),
            E::Add(a, b) => Term::add(a.term(), b.term()),
            E::Scale(k, a) => {
                Term::mul(Term::constant(k.clone()), a.term()).expect("constant factor")
            }
        }
    }

    /// Linear form given affine forms for every application output.
    pub fn lin(&self, outs: &[Vec<Lin>]) -> Lin {
        match self {
            E::In(i) => Lin::var(*i),
            E::Out(a, j) => outs[*a][*j].clone(),
            E::C(c) => Lin::konst(c.clone()),
            E::Add(a, b) => a.lin(outs).add(&b.lin(outs)),
            E::Scale(k, a) => a.lin(outs).scale(k),
        }
    }
}

/// Boolean combination of comparisons.
#[derive(Clone, Debug)]
pub enum P {
    Cmp(E, Rel, E),
    And(Vec<P>),
    Or(Vec<P>),
    Not(Box<P>),
}

fn cmp_of(r: Rel) -> Cmp {
    match r {
        Rel::Ge => Cmp::Ge,
        Rel::Gt => Cmp::Gt,
        Rel::Le => Cmp::Le,
        Rel::Lt => Cmp::Lt,
        Rel::Eq => Cmp::Eq,
    }
}

impl P {
    pub fn eval(&self, x: &[Q], outs: &[Vec<Q>]) -> bool {
        match self {
            P::Cmp(a, r, b) => r.holds(&(a.eval(x, outs) - b.eval(x, outs))),
            P::And(ps) => ps.iter().all(|p| p.eval(x, outs)),
            P::Or(ps) => ps.iter().any(|p| p.eval(x, outs)),
            P::Not(p) => !p.eval(x, outs),
        }
    }

    pub fn formula(&self) -> Formula {
        match self {
            P::Cmp(a, r, b) => Formula::atom(a.term(), cmp_of(*r), b.term()),
            P::And(ps) => Formula::and(ps.iter().map(P::formula)),
            P::Or(ps) => Formula::or(ps.iter().map(P::formula)),
            P::Not(p) => Formula::not(p.formula()),
        }
    }

    pub fn bf(&self, outs: &[Vec<Lin>]) -> Bf {
        match self {
            P::Cmp(a, r, b) => Bf::Atom(a.lin(outs).sub(&b.lin(outs)), *r),
            P::And(ps) => Bf::And(ps.iter().map(|p| p.bf(outs)).collect()),
            P::Or(ps) => Bf::Or(ps.iter().map(|p| p.bf(outs)).collect()),
            P::Not(p) => Bf::Not(Box::new(p.bf(outs))),
        }
    }
}

/// A goal `box(x) -> conclusion` over applications of dense networks.
#[derive(Clone, Debug)]
pub struct GoalSpec {
    pub name: String,
    pub nets: Vec<Dense>,
    /// `(network index, arguments)`; arguments may use earlier outputs.
    pub apps: Vec<(usize, Vec<E>)>,
    pub bounds: Vec<(Q, Q)>,
    pub conclusion: P,
}

impl GoalSpec {
    pub fn n_inputs(&self) -> usize {
        self.bounds.len()
    }

    pub fn outputs(&self, x: &[Q]) -> Vec<Vec<Q>> {
        let mut outs: Vec<Vec<Q>> = Vec::new();
        for (net, args) in &self.apps {
            let a: Vec<Q> = args.iter().map(|e| e.eval(x, &outs)).collect();
            outs.push(self.nets[*net].forward(&a));
        }
        outs
    }

    pub fn in_box(&self, x: &[Q]) -> bool {
        self.bounds
            .iter()
            .zip(x)
            .all(|((lo, hi), v)| lo <= v && v <= hi)
    }

    /// Truth of `box -> conclusion` at `x`.
    pub fn holds(&self, x: &[Q]) -> bool {
        !self.in_box(x) || self.conclusion.eval(x, &self.outputs(x))
    }

    pub fn formula(&self) -> GoalFormula {
        let graphs: Vec<Arc<NirGraph>> = self
            .nets
            .iter()
            .enumerate()
            .map(|(i, n)| n.graph(&format!("net{i}")))
            .collect();
        let hypothesis = self
            .bounds
            .iter()
            .enumerate()
            .flat_map(|(i, (lo, hi))| {
                [
                    Atom::new(Term::constant(lo.clone()), Cmp::Le, Term::input(i)),
                    Atom::new(Term::input(i), Cmp::Le, Term::constant(hi.clone())),
                ]
            })
            .collect();
        GoalFormula {
            name: self.name.clone(),
            input_vars: (0..self.n_inputs())
                .map(|i| InputVar {
                    name: format!("x{i}"),
                    role: VarRole::ModelInput,
                })
                .collect(),
            hypothesis,
            conclusion: self.conclusion.formula(),
            model_apps: self
                .apps
                .iter()
                .map(|(net, args)| ModelApp {
                    model: graphs[*net].clone(),
                    source: format!("net{net}.onnx"),
                    args: args.iter().map(E::term).collect(),
                })
                .collect(),
        }
    }

    /// A random point, inside the box with probability 9/10.
    pub fn point(&self, rng: &mut impl Rng) -> Vec<Q> {
        let inside = rng.gen_bool(0.9);
        self.bounds
            .iter()
            .map(|(lo, hi)| {
                if inside {
                    sample(rng, lo, hi, 64)
                } else {
                    sample(
                        rng,
                        &(lo - Q::from_integer(1.into())),
                        &(hi + Q::from_integer(1.into())),
                        64,
                    )
                }
            })
            .collect()
    }

    /// Decides the goal by enumerating every ReLU phase of its single
    /// application and running Fourier-Motzkin on each linear piece.
    /// Returns whether the goal is valid.
    pub fn brute_force_valid(&self) -> bool {
        assert_eq!(self.apps.len(), 1, "brute force handles one application");
        let net = &self.nets[self.apps[0].0];
        let args: Vec<Lin> = self.apps[0].1.iter().map(|e| e.lin(&[])).collect();
        let n = net.n_relu();
        let mut box_cons = Vec::new();
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            box_cons.push(fm::Con::new(
                Lin::var(i).sub(&Lin::konst(lo.clone())),
                Rel::Ge,
            ));
            box_cons.push(fm::Con::new(
                Lin::var(i).sub(&Lin::konst(hi.clone())),
                Rel::Le,
            ));
        }
        for mask in 0u64..1 << n {
            let (outs, pattern) = net.pattern(&|k| mask >> k & 1 == 1);
            // Net inputs are the application arguments.
            let subst = |l: &Lin| -> Lin {
                l.c.iter().fold(Lin::konst(l.k.clone()), |acc, (v, a)| {
                    acc.plus(&args[*v], a)
                })
            };
            let outs: Vec<Lin> = outs.iter().map(subst).collect();
            let mut base = box_cons.clone();
            base.extend(pattern.iter().map(|c| fm::Con::new(subst(&c.lin), c.rel)));
            for disjunct in sx::dnf(&self.conclusion.bf(std::slice::from_ref(&outs)), true) {
                let mut all = base.clone();
                all.extend(disjunct);
                if fm::satisfiable(&all) {
                    return false;
                }
            }
        }
        true
    }
}

pub fn rel(rng: &mut impl Rng) -> Rel {
    [Rel::Ge, Rel::Gt, Rel::Le, Rel::Lt][rng.gen_range(0..4)]
}

/// Random small affine combination of the given leaves plus a constant.
pub fn affine(rng: &mut impl Rng, leaves: &[E]) -> E {
    let mut e = E::C(q(rng.gen_range(-8..=8), 8));
    let k = rng.gen_range(1..=leaves.len().min(3));
    for _ in 0..k {
        let leaf = leaves[rng.gen_range(0..leaves.len())].clone();
        let c = q(
            rng.gen_range(1..=8) * if rng.gen_bool(0.5) { 1 } else { -1 },
            4,
        );
        e = E::Add(Box::new(e), Box::new(E::Scale(c, Box::new(leaf))));
    }
    e
}

fn random_bounds(rng: &mut impl Rng, n: usize) -> Vec<(Q, Q)> {
    (0..n)
        .map(|_| {
            let lo = rng.gen_range(-8..=0);
            let hi = rng.gen_range(1..=8);
            (q(lo, 4), q(hi, 4))
        })
        .collect()
}

fn combine(rng: &mut impl Rng, mut atoms: Vec<P>) -> P {
    while atoms.len() > 1 {
        let b = atoms.pop().unwrap();
        let a = atoms.pop().unwrap();
        let c = match rng.gen_range(0..5) {
            0 | 1 => P::And(vec![a, b]),
            2 | 3 => P::Or(vec![a, b]),
            _ => P::Or(vec![P::Not(Box::new(a)), b]),
        };
        atoms.push(c);
    }
    atoms.pop().unwrap()
}

/// A goal over 1-3 distinct networks applied 1-4 times, with affine
/// arithmetic on arguments and in the conclusion; later applications may
/// consume earlier outputs.
pub fn random_multi_goal(rng: &mut impl Rng, name: &str) -> GoalSpec {
    let n_inputs = rng.gen_range(1..=3);
    let n_nets = rng.gen_range(1..=3);
    let nets: Vec<Dense> = (0..n_nets)
        .map(|_| {
            let n_in = rng.gen_range(1..=3);
            let depth = rng.gen_range(0..=2);
            let hidden: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=6)).collect();
            let n_out = rng.gen_range(1..=3);
            Dense::random(rng, n_in, &hidden, n_out, 4)
        })
        .collect();
    let mut leaves: Vec<E> = (0..n_inputs).map(E::In).collect();
    let mut apps = Vec::new();
    let n_apps = rng.gen_range(n_nets..=n_nets + 1);
    for a in 0..n_apps {
        let net = if a < n_nets {
            a
        } else {
            rng.gen_range(0..n_nets)
        };
        let args = (0..nets[net].n_in())
            .map(|_| {
                if rng.gen_bool(0.5) {
                    affine(rng, &leaves)
                } else {
                    leaves[rng.gen_range(0..leaves.len())].clone()
                }
            })
            .collect();
        apps.push((net, args));
        leaves.extend((0..nets[net].n_out()).map(|j| E::Out(a, j)));
    }
    let outputs: Vec<E> = leaves[n_inputs..].to_vec();
    let n_atoms = rng.gen_range(1..=3);
    let atoms = (0..n_atoms)
        .map(|_| {
            let lhs = affine(rng, &outputs);
            let rhs = if rng.gen_bool(0.3) {
                affine(rng, &leaves)
            } else {
                E::C(q(rng.gen_range(-16..=16), 8))
            };
            P::Cmp(lhs, rel(rng), rhs)
        })
        .collect();
    let conclusion = combine(rng, atoms);
    GoalSpec {
        name: name.to_string(),
        nets,
        apps,
        bounds: random_bounds(rng, n_inputs),
        conclusion,
    }
}

/// A property over one network with at most `max_relu` ReLUs applied
/// directly to the inputs. Thresholds come from sampled outputs, so valid
/// and invalid instances both occur.
pub fn random_property(rng: &mut impl Rng, name: &str, max_relu: usize) -> GoalSpec {
    let n_inputs = rng.gen_range(1..=3);
    let mut hidden = Vec::new();
    let mut budget = rng.gen_range(1..=max_relu);
    while budget > 0 && hidden.len() < 2 {
        let w = rng.gen_range(1..=budget);
        hidden.push(w);
        budget -= w;
    }
    let n_out = rng.gen_range(1..=2);
    let net = Dense::random(rng, n_inputs, &hidden, n_out, 4);
    let outputs: Vec<E> = (0..net.n_out()).map(|j| E::Out(0, j)).collect();
    let mut spec = GoalSpec {
        name: name.to_string(),
        nets: vec![net],
        apps: vec![(0, (0..n_inputs).map(E::In).collect())],
        bounds: random_bounds(rng, n_inputs),
        conclusion: P::And(vec![]),
    };
    let samples: Vec<Vec<Q>> = (0..16)
        .map(|_| {
            let x: Vec<Q> = spec
                .bounds
                .iter()
                .map(|(lo, hi)| sample(rng, lo, hi, 16))
                .collect();
            x
        })
        .collect();
    let n_atoms = rng.gen_range(1..=3);
    let atoms = (0..n_atoms)
        .map(|_| {
            let lhs = affine(rng, &outputs);
            let values: Vec<Q> = samples
                .iter()
                .map(|x| lhs.eval(x, &spec.outputs(x)))
                .collect();
            let max = values.iter().max().unwrap().clone();
            let min = values.iter().min().unwrap().clone();
            let slack = q(rng.gen_range(0..=8), 8);
            // Mostly true on the samples; the verifier has to find the rest.
            match rng.gen_range(0..3) {
                0 => P::Cmp(lhs, Rel::Le, E::C(max + slack)),
                1 => P::Cmp(lhs, Rel::Ge, E::C(min - slack)),
                _ => P::Cmp(lhs, rel(rng), E::C(values[0].clone())),
            }
        })
        .collect();
    spec.conclusion = combine(rng, atoms);
    spec
}

/// Whether `x` is a genuine counterexample according to the oracle.
pub fn refutes(spec: &GoalSpec, x: &[Q]) -> bool {
    x.len() == spec.n_inputs() && spec.in_box(x) && !spec.conclusion.eval(x, &spec.outputs(x))
}

/// `|a - b| <= tol * |b|`.
pub fn close(a: &Q, b: &Q, tol: &Q) -> bool {
    (a - b).abs() <= tol * b.abs()
}

pub fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).expect("write fixture");
    p
}

/// Runs the command-line entry point, returning (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv: Vec<String> = std::iter::once("nnspec")
        .chain(args.iter().copied())
        .map(String::from)
        .collect();
    let code = nnspec::cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

//! Complete verification of small piecewise-linear goals: depth-first case
//! splitting on neuron phases, with each leaf decided by Fourier–Motzkin.

use std::time::Instant;

use num_traits::{Signed, Zero};

use crate::embed::MergedGoal;
use crate::emit::{affine_difference, InputConstraints};
use crate::interp::{Atom, Cmp, Formula, Sym};
use crate::nir::linear::{lower, LinExpr, NeuronKind, PlNetwork};
use crate::provers::fm::{feasible, Constraint, Feasibility};
use crate::provers::{OutcomeKind, ProverError, ProverOutcome, EXACT};
use crate::rational::{int, Rational};

/// Largest disjunctive normal form of the negated conclusion.
const DNF_LIMIT: usize = 1 << 12;

#[derive(Clone, Copy, Debug)]
pub struct ExactOptions {
    /// Maximum number of phase branches explored.
    pub split_budget: usize,
    /// Maximum live constraints during one elimination.
    pub constraint_cap: usize,
    pub deadline: Option<Instant>,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            split_budget: 1 << 16,
            constraint_cap: 1 << 12,
            deadline: None,
        }
    }
}

struct Search<'a> {
    m: &'a MergedGoal,
    net: PlNetwork,
    lower: Vec<Rational>,
    upper: Vec<Rational>,
    /// Hypothesis atoms mentioning outputs, over all network variables.
    late_hyp: Vec<Constraint>,
    /// Disjuncts of the negated conclusion, over all network variables.
    negated: Vec<Vec<Constraint>>,
    opts: ExactOptions,
    splits: usize,
    leaves: usize,
    incomplete: Option<String>,
}

enum Stop {
    Counterexample(Vec<Rational>),
    Budget,
    Deadline,
}

/// `lhs - rhs REL 0` constraints for an atom, with outputs replaced by the
/// network's output expressions.
fn constraint(atom: &Atom, net: &PlNetwork) -> Result<Constraint, ProverError> {
    let d = affine_difference(atom)?;
    let mut e = LinExpr::constant(d.constant.clone());
    for (s, c) in &d.coeffs {
        let term = match *s {
            Sym::Input(i) => LinExpr::var(i),
            Sym::Output { app: 0, index } => net.outputs[index].clone(),
            Sym::Output { app, .. } => return Err(crate::emit::EmitError::NotMerged(app).into()),
        };
        e = e.add_scaled(&term, c);
    }
    Ok(match atom.cmp {
        Cmp::Ge => Constraint::ge(e),
        Cmp::Gt => Constraint::gt(e),
        Cmp::Le => Constraint::ge(e.scale(&int(-1))),
        Cmp::Lt => Constraint::gt(e.scale(&int(-1))),
        Cmp::Eq => Constraint::eq(e),
    })
}

/// Decides `m` exactly. Inputs must be bounded on both sides; the network
/// may only use operators with a piecewise-linear lowering.
pub fn exact_verify(m: &MergedGoal, opts: ExactOptions) -> Result<ProverOutcome, ProverError> {
    let start = Instant::now();
    let net = lower(&m.merged).map_err(crate::emit::EmitError::from)?;
    let bounds = InputConstraints::of(&m.goal)?;
    if let Some(name) = bounds.first_unbounded(&m.goal) {
        return Err(ProverError::UnboundedInput(name.to_string()));
    }
    let value = |b: &Option<crate::emit::Bound>| b.as_ref().expect("bounded").value.clone();
    let lower = bounds.lower.iter().map(value).collect();
    let upper = bounds.upper.iter().map(value).collect();
    let mut early = Vec::new();
    let mut late_hyp = Vec::new();
    for a in &m.goal.hypothesis {
        let c = constraint(a, &net)?;
        if a.mentions_outputs() {
            late_hyp.push(c);
        } else {
            early.push(c);
        }
    }
    let dnf = Formula::not(m.goal.conclusion.clone())
        .dnf(DNF_LIMIT)
        .ok_or_else(|| {
            crate::emit::EmitError::UnsupportedNode("conclusion too large to negate".into())
        })?;
    let negated = dnf
        .iter()
        .map(|c| {
            c.iter()
                .map(|a| constraint(a, &net))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut s = Search {
        m,
        net,
        lower,
        upper,
        late_hyp,
        negated,
        opts,
        splits: 0,
        leaves: 0,
        incomplete: None,
    };
    let result = if s.negated.is_empty() {
        Ok(())
    } else {
        match feasible(s.net.n_inputs, &early, opts.constraint_cap) {
            Feasibility::Infeasible => Ok(()),
            _ => s.dfs(0, &mut Vec::with_capacity(s.net.neurons.len()), &mut early),
        }
    };
    let (kind, cex) = match result {
        Err(Stop::Counterexample(x)) => (OutcomeKind::Invalid, Some(x)),
        Err(Stop::Budget) => {
            s.incomplete = Some(format!("split budget of {} exhausted", opts.split_budget));
            (OutcomeKind::Unknown, None)
        }
        Err(Stop::Deadline) => (OutcomeKind::Timeout, None),
        Ok(()) if s.incomplete.is_some() => (OutcomeKind::Unknown, None),
        Ok(()) => (OutcomeKind::Valid, None),
    };
    let mut out = ProverOutcome::new(EXACT, kind);
    out.counterexample = cex;
    out.wall_time = start.elapsed().as_secs_f64();
    out.raw_output = format!(
        "neurons: {}, branches: {}, leaves: {}",
        s.net.neurons.len(),
        s.splits,
        s.leaves
    );
    if kind == OutcomeKind::Unknown {
        out.diagnostic = s.incomplete;
    }
    Ok(out)
}

impl Search<'_> {
    /// Substitutes known neuron values so `e` mentions inputs only.
    fn expand(&self, e: &LinExpr, vals: &[LinExpr]) -> LinExpr {
        let n = self.net.n_inputs;
        e.expand(|v| {
            if v < n {
                LinExpr::var(v)
            } else {
                vals[v - n].clone()
            }
        })
    }

    fn range(&self, e: &LinExpr) -> (Rational, Rational) {
        let mut lo = e.constant.clone();
        let mut hi = e.constant.clone();
        for (&v, c) in &e.coeffs {
            if c.is_positive() {
                lo += c * &self.lower[v];
                hi += c * &self.upper[v];
            } else {
                lo += c * &self.upper[v];
                hi += c * &self.lower[v];
            }
        }
        (lo, hi)
    }

    fn dfs(
        &mut self,
        k: usize,
        vals: &mut Vec<LinExpr>,
        cs: &mut Vec<Constraint>,
    ) -> Result<(), Stop> {
        if self.opts.deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Stop::Deadline);
        }
        if k == self.net.neurons.len() {
            return self.leaf(vals, cs);
        }
        let neuron = &self.net.neurons[k];
        let pre = self.expand(&neuron.pre, vals);
        let (lo, hi) = self.range(&pre);
        let neg = pre.scale(&int(-1));
        let zero = LinExpr::constant(Rational::zero());
        // (phase constraint, neuron value) for each reachable phase
        let mut branches: Vec<(Option<Constraint>, LinExpr)> = Vec::new();
        match neuron.kind {
            NeuronKind::Relu => {
                if !lo.is_negative() {
                    branches.push((None, pre.clone()));
                } else if !hi.is_positive() {
                    branches.push((None, zero));
                } else {
                    branches.push((Some(Constraint::ge(pre.clone())), pre.clone()));
                    branches.push((Some(Constraint::ge(neg)), zero));
                }
            }
            NeuronKind::Sign => {
                if hi.is_positive() {
                    branches.push((Some(Constraint::gt(pre.clone())), LinExpr::constant(int(1))));
                }
                if lo.is_negative() {
                    branches.push((Some(Constraint::gt(neg)), LinExpr::constant(int(-1))));
                }
                if !lo.is_positive() && !hi.is_negative() {
                    branches.push((Some(Constraint::eq(pre.clone())), zero));
                }
                if branches.len() == 1 {
                    branches[0].0 = None;
                }
            }
        }
        let split = branches.len() > 1;
        for (phase, value) in branches {
            let pushed = phase.is_some();
            if let Some(c) = phase {
                self.splits += 1;
                if self.splits > self.opts.split_budget {
                    return Err(Stop::Budget);
                }
                cs.push(c);
                if split
                    && feasible(self.net.n_inputs, cs, self.opts.constraint_cap)
                        == Feasibility::Infeasible
                {
                    cs.pop();
                    continue;
                }
            }
            vals.push(value);
            let r = self.dfs(k + 1, vals, cs);
            vals.pop();
            if pushed {
                cs.pop();
            }
            r?;
        }
        Ok(())
    }

    fn leaf(&mut self, vals: &[LinExpr], cs: &[Constraint]) -> Result<(), Stop> {
        self.leaves += 1;
        let lift = |c: &Constraint| Constraint {
            expr: self.expand(&c.expr, vals),
            rel: c.rel,
        };
        let mut base: Vec<Constraint> = cs.to_vec();
        base.extend(self.late_hyp.iter().map(lift));
        let disjuncts: Vec<Vec<Constraint>> = self
            .negated
            .iter()
            .map(|d| d.iter().map(lift).collect())
            .collect();
        for disjunct in disjuncts {
            let mut all = base.clone();
            all.extend(disjunct);
            match feasible(self.net.n_inputs, &all, self.opts.constraint_cap) {
                Feasibility::Infeasible => {}
                Feasibility::TooLarge => {
                    self.incomplete = Some(format!(
                        "constraint cap of {} exceeded at a leaf",
                        self.opts.constraint_cap
                    ));
                }
                Feasibility::Feasible(x) => {
                    let goal = &self.m.goal;
                    if goal.hypothesis_holds(&x) && goal.conclusion_holds(&x) == Ok(false) {
                        return Err(Stop::Counterexample(x));
                    }
                    self.incomplete =
                        Some("a leaf witness failed to replay through the model".into());
                }
            }
        }
        Ok(())
    }
}

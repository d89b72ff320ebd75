//! Merging every model application of a goal, together with the arithmetic
//! around them, into a single network.
//!
//! Each network-dependent term is compiled to graph nodes: arithmetic maps to
//! `Add`/`Sub`/`Mul`/`Div`, an input variable to a `Gather` on the merged
//! `Input`, and `nn @@ (e1, .., en)` to a copy of `nn` fed with the `Concat`
//! of its argument fragments. The goal is then rewritten over the outputs of
//! the merged network, so verifiers that accept one network per query can
//! handle compositions and comparisons between several networks.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_traits::One;
use thiserror::Error;

use crate::interp::{Atom, Formula, GoalFormula, ModelApp, Sym, Term};
use crate::nir::{GraphBuilder, NirError, NirGraph, NodeId, Op};
use crate::rational::Rational;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EmbedError {
    #[error("non-linear term {0}")]
    NonLinearTerm(String),
    #[error("unknown variable x{0}")]
    UnknownVariable(usize),
    #[error("unknown model application {0}")]
    UnknownApplication(usize),
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
    #[error(transparent)]
    Graph(#[from] NirError),
}

/// Which terms become outputs of the merged network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EmbedPolicy {
    /// `Terms` when some model consumes another model's output, otherwise
    /// `AppOutputs`.
    #[default]
    Auto,
    /// Every network-dependent side of a conclusion atom.
    Terms,
    /// Every model output component the conclusion mentions.
    AppOutputs,
}

impl fmt::Display for EmbedPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedPolicy::Auto => "auto",
            EmbedPolicy::Terms => "terms",
            EmbedPolicy::AppOutputs => "app-outputs",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmbedOptions {
    pub policy: EmbedPolicy,
    /// Unify structurally identical nodes after merging.
    pub dedup: bool,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            policy: EmbedPolicy::Auto,
            dedup: true,
        }
    }
}

/// Position of every input variable in the merged network's `Input`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmbedContext {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl EmbedContext {
    pub fn from_goal(goal: &GoalFormula) -> Self {
        let mut ctx = EmbedContext::default();
        for v in &goal.input_vars {
            ctx.push(&v.name);
        }
        ctx
    }

    /// Assigns the next free index to `name` unless it already has one.
    pub fn push(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn next_index(&self) -> usize {
        self.names.len()
    }
}

/// A goal over one network, plus the bookkeeping that relates it to the
/// goal it came from.
#[derive(Clone, Debug)]
pub struct MergedGoal {
    /// Same variables and hypothesis as the source; a single model
    /// application whose arguments are all input variables in order.
    pub goal: GoalFormula,
    pub merged: Arc<NirGraph>,
    pub var_layout: EmbedContext,
    /// For each merged output, the source term it computes.
    pub output_map: Vec<Term>,
}

impl MergedGoal {
    pub fn n_inputs(&self) -> usize {
        self.goal.input_vars.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_map.len()
    }
}

/// Unifies structurally identical nodes.
pub fn shared_subterm_dedup(graph: &NirGraph) -> NirGraph {
    graph.dedup()
}

struct Compiler<'g> {
    b: GraphBuilder,
    input: NodeId,
    n_inputs: usize,
    apps: &'g [ModelApp],
    app_nodes: HashMap<usize, Vec<NodeId>>,
    vars: HashMap<usize, NodeId>,
}

impl<'g> Compiler<'g> {
    fn new(n_inputs: usize, apps: &'g [ModelApp]) -> Result<Self, EmbedError> {
        let mut b = GraphBuilder::new();
        let input = b.input(vec![n_inputs])?;
        Ok(Compiler {
            b,
            input,
            n_inputs,
            apps,
            app_nodes: HashMap::new(),
            vars: HashMap::new(),
        })
    }

    fn term(&mut self, t: &Term) -> Result<NodeId, EmbedError> {
        Ok(match t {
            Term::Const(c) => self.b.scalar(c.clone()),
            Term::Sym(Sym::Input(i)) => self.var(*i)?,
            Term::Sym(Sym::Output { app, index }) => self.output(*app, *index)?,
            Term::Add(a, c) => self.binary(Op::Add, a, c)?,
            Term::Sub(a, c) => self.binary(Op::Sub, a, c)?,
            Term::Mul(a, c) => {
                if !a.is_constant() && !c.is_constant() {
                    return Err(EmbedError::NonLinearTerm(t.to_string()));
                }
                self.binary(Op::Mul, a, c)?
            }
            Term::Div(a, c) => {
                if !c.is_constant() {
                    return Err(EmbedError::NonLinearTerm(t.to_string()));
                }
                self.binary(Op::Div, a, c)?
            }
            Term::Neg(a) => {
                let minus_one = self.b.scalar(-Rational::one());
                let x = self.term(a)?;
                self.b.binary(Op::Mul, minus_one, x)?
            }
        })
    }

    fn binary(&mut self, op: Op, a: &Term, c: &Term) -> Result<NodeId, EmbedError> {
        let x = self.term(a)?;
        let y = self.term(c)?;
        Ok(self.b.binary(op, x, y)?)
    }

    /// `Gather(Input, i)`; one node per variable.
    fn var(&mut self, i: usize) -> Result<NodeId, EmbedError> {
        if i >= self.n_inputs {
            return Err(EmbedError::UnknownVariable(i));
        }
        if let Some(&id) = self.vars.get(&i) {
            return Ok(id);
        }
        let id = self.b.gather(self.input, vec![i])?;
        self.vars.insert(i, id);
        Ok(id)
    }

    /// Outputs of an inlined copy of the application's model; each
    /// application is inlined once.
    fn app(&mut self, app: usize) -> Result<Vec<NodeId>, EmbedError> {
        if let Some(nodes) = self.app_nodes.get(&app) {
            return Ok(nodes.clone());
        }
        let a = self
            .apps
            .get(app)
            .ok_or(EmbedError::UnknownApplication(app))?;
        let args = a
            .args
            .iter()
            .map(|t| self.term(t))
            .collect::<Result<Vec<_>, _>>()?;
        let arg = self.b.concat(args, 0)?;
        let outs = self.b.inline(&a.model, arg)?;
        self.app_nodes.insert(app, outs.clone());
        Ok(outs)
    }

    fn output(&mut self, app: usize, index: usize) -> Result<NodeId, EmbedError> {
        let outs = self.app(app)?;
        let mut offset = index;
        for o in outs {
            let len = self.b.shape(o)[0];
            if offset < len {
                if len == 1 {
                    return Ok(o);
                }
                return Ok(self.b.gather(o, vec![offset])?);
            }
            offset -= len;
        }
        Err(EmbedError::UnknownApplication(app))
    }
}

/// Compiles one term to a network over the goal's input variables with a
/// single one-element output.
pub fn term_to_nir(t: &Term, goal: &GoalFormula) -> Result<NirGraph, EmbedError> {
    let mut c = Compiler::new(goal.input_vars.len(), &goal.model_apps)?;
    let out = c.term(t)?;
    Ok(c.b.finish("term", vec![out])?)
}

fn resolve_policy(goal: &GoalFormula, policy: EmbedPolicy) -> EmbedPolicy {
    match policy {
        EmbedPolicy::Auto => {
            let composed = goal
                .model_apps
                .iter()
                .any(|a| a.args.iter().any(Term::mentions_outputs));
            if composed {
                EmbedPolicy::Terms
            } else {
                EmbedPolicy::AppOutputs
            }
        }
        p => p,
    }
}

/// Rewrites `goal` over a single merged network.
pub fn merge(goal: &GoalFormula, opts: EmbedOptions) -> Result<MergedGoal, EmbedError> {
    let n = goal.input_vars.len();
    let whole_terms = resolve_policy(goal, opts.policy) == EmbedPolicy::Terms;
    // Terms to embed, in order of first appearance in the conclusion.
    let mut output_map: Vec<Term> = Vec::new();
    goal.conclusion.visit_atoms(&mut |a| {
        for side in [&a.lhs, &a.rhs] {
            if whole_terms {
                if side.mentions_outputs() && !output_map.contains(side) {
                    output_map.push(side.clone());
                }
            } else {
                side.visit_syms(&mut |s| {
                    let t = Term::Sym(s);
                    if matches!(s, Sym::Output { .. }) && !output_map.contains(&t) {
                        output_map.push(t);
                    }
                });
            }
        }
    });
    let mut c = Compiler::new(n, &goal.model_apps)?;
    let mut outputs = output_map
        .iter()
        .map(|t| c.term(t))
        .collect::<Result<Vec<_>, _>>()?;
    if outputs.is_empty() {
        if n == 0 {
            return Err(EmbedError::UnsupportedConstruct(
                "goal without variables".into(),
            ));
        }
        // No network-dependent terms: pass the inputs through.
        outputs.push(c.b.gather(c.input, (0..n).collect())?);
    }
    let slot = |t: &Term| {
        output_map
            .iter()
            .position(|u| u == t)
            .map(|k| Term::output(0, k))
    };
    let conclusion = goal.conclusion.map_atoms(&|a| {
        if whole_terms {
            let side = |t: &Term| slot(t).unwrap_or_else(|| t.clone());
            Formula::Atom(Atom::new(side(&a.lhs), a.cmp, side(&a.rhs)))
        } else {
            Formula::Atom(a.map_syms(&|s| slot(&Term::Sym(s)).unwrap_or(Term::Sym(s))))
        }
    });
    let output = c.b.concat(outputs, 0)?;
    let name = format!("{}_merged", goal.name);
    let mut graph = c.b.finish(name.clone(), vec![output])?;
    if opts.dedup {
        graph = shared_subterm_dedup(&graph);
    }
    let graph = Arc::new(graph);
    let merged_goal = GoalFormula {
        name: goal.name.clone(),
        input_vars: goal.input_vars.clone(),
        hypothesis: goal.hypothesis.clone(),
        conclusion,
        model_apps: vec![ModelApp {
            model: graph.clone(),
            source: name,
            args: (0..n).map(Term::input).collect(),
        }],
    };
    Ok(MergedGoal {
        goal: merged_goal,
        merged: graph,
        var_layout: EmbedContext::from_goal(goal),
        output_map,
    })
}

/// Splits a goal into independent parts (one per dataset row, for
/// instance) and merges each.
pub fn merge_split(goal: &GoalFormula, opts: EmbedOptions) -> Result<Vec<MergedGoal>, EmbedError> {
    goal.split().iter().map(|g| merge(g, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{reduce_all, Context, InputVar, VarRole};
    use crate::nir::{forward, mlp_from_ints, Tensor};
    use crate::rational::{int, ratio};
    use crate::speclang::load;

    fn vars(names: &[&str]) -> GoalFormula {
        GoalFormula {
            name: "g".into(),
            input_vars: names
                .iter()
                .map(|n| InputVar {
                    name: n.to_string(),
                    role: VarRole::Auxiliary,
                })
                .collect(),
            hypothesis: vec![],
            conclusion: Formula::True,
            model_apps: vec![],
        }
    }

    fn gathers_of_input(g: &NirGraph) -> Vec<Vec<usize>> {
        g.nodes()
            .iter()
            .filter(|n| n.inputs == [g.input()])
            .filter_map(|n| match &n.op {
                Op::Gather { indices, .. } => Some(indices.clone()),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn sum_of_variables() {
        let goal = vars(&["x0", "x1", "eps"]);
        let g = term_to_nir(&Term::add(Term::input(1), Term::input(2)), &goal).unwrap();
        let out = g.node(g.outputs()[0]);
        assert_eq!(out.op, Op::Add);
        assert_eq!(gathers_of_input(&g), vec![vec![1], vec![2]]);
        let g = term_to_nir(&Term::input(0), &goal).unwrap();
        assert_eq!(gathers_of_input(&g), vec![vec![0]]);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn products_of_variables_are_rejected() {
        let goal = vars(&["x", "y"]);
        let t = Term::Mul(Box::new(Term::input(0)), Box::new(Term::input(1)));
        assert!(matches!(
            term_to_nir(&t, &goal),
            Err(EmbedError::NonLinearTerm(_))
        ));
        let t = Term::Div(Box::new(Term::input(0)), Box::new(Term::input(1)));
        assert!(matches!(
            term_to_nir(&t, &goal),
            Err(EmbedError::NonLinearTerm(_))
        ));
        assert_eq!(
            term_to_nir(&Term::input(5), &goal).unwrap_err(),
            EmbedError::UnknownVariable(5)
        );
    }

    fn composition_goal() -> GoalFormula {
        let ctx = Context::new("/m");
        // nn1: 1 -> 2 -> 1 with a ReLU, nn2: 2 -> 1
        let nn1 = mlp_from_ints(
            "nn1",
            1,
            &[
                (vec![vec![1, -1]], vec![0, 1]),
                (vec![vec![2], vec![1]], vec![-1]),
            ],
        )
        .unwrap();
        let nn2 = mlp_from_ints("nn2", 2, &[(vec![vec![1], vec![-3]], vec![1])]).unwrap();
        ctx.cache.insert_model("/m/nn1.onnx", nn1);
        ctx.cache.insert_model("/m/nn2.onnx", nn2);
        let ast = load(
            "let nn1 = read_model \"nn1.onnx\"
             let nn2 = read_model \"nn2.onnx\"
             goal composed: forall x0 x1 eps: float.
               0.0 .<= x0 .<= 1.0 -> 0.0 .<= x1 .<= 1.0 -> 0.0 .<= eps .<= 0.5 ->
               (nn2 @@ ((nn1 @@ x1)[0], x1 .+ eps))[0] .+ (nn1 @@ x0)[0] .> 0.0",
        )
        .unwrap();
        reduce_all(&ast, &ctx).unwrap().remove(0)
    }

    #[test]
    fn composition_topology() {
        let goal = composition_goal();
        assert_eq!(goal.model_apps.len(), 3);
        let m = merge(&goal, EmbedOptions::default()).unwrap();
        let g = &m.merged;
        let mut gathers = gathers_of_input(g);
        gathers.sort();
        assert_eq!(gathers, vec![vec![0], vec![1], vec![2]]);
        // nn1 twice (two Gemms each), nn2 once
        assert_eq!(g.count_op("Gemm"), 5);
        assert_eq!(g.count_op("Relu"), 2);
        assert_eq!(g.count_op("Add"), 2);
        assert_eq!(g.count_op("Concat"), 1);
        assert_eq!(g.output_dim(), 1);
        assert_eq!(m.goal.model_apps.len(), 1);
        assert_eq!(m.goal.hypothesis, goal.hypothesis);
        assert_eq!(m.goal.conclusion.to_string(), "Y0_0 > 0");
    }

    #[test]
    fn merged_goal_agrees_with_source() {
        let goal = composition_goal();
        let m = merge(&goal, EmbedOptions::default()).unwrap();
        for (a, b, c) in [(0, 0, 0), (1, 1, 1), (1, 3, 2), (2, 1, 0), (4, 4, 2)] {
            let v = [ratio(a, 4), ratio(b, 4), ratio(c, 4)];
            assert_eq!(goal.eval(&v).unwrap(), m.goal.eval(&v).unwrap(), "{v:?}");
            let direct = goal.app_outputs(&v).unwrap();
            let merged = forward(&m.merged, &Tensor::vector(v.to_vec())).unwrap();
            assert_eq!(merged[0].data()[0], &direct[1][0] + &direct[2][0]);
        }
    }

    #[test]
    fn separate_networks_keep_their_outputs() {
        let ctx = Context::new("/m");
        let nn = mlp_from_ints("nn", 1, &[(vec![vec![1], vec![1]], vec![0])]).unwrap();
        let other = mlp_from_ints("other", 1, &[(vec![vec![1], vec![-1]], vec![0])]).unwrap();
        ctx.cache.insert_model("/m/a.onnx", nn);
        ctx.cache.insert_model("/m/b.onnx", other);
        let ast = load(
            "goal d: let a = read_model \"a.onnx\" in let b = read_model \"b.onnx\" in
             forall v: vector float. has_length v 2 ->
               .- 0.125 .<= (a @@ v)[0] .- (b @@ v)[0] .<= 0.125",
        )
        .unwrap();
        let goal = reduce_all(&ast, &ctx).unwrap().remove(0);
        let m = merge(&goal, EmbedOptions::default()).unwrap();
        assert_eq!(m.n_outputs(), 2);
        let terms = merge(
            &goal,
            EmbedOptions {
                policy: EmbedPolicy::Terms,
                dedup: true,
            },
        )
        .unwrap();
        assert_eq!(terms.n_outputs(), 1);
        for v in [
            [int(0), int(0)],
            [int(1), ratio(1, 8)],
            [int(1), ratio(1, 16)],
        ] {
            assert_eq!(goal.eval(&v).unwrap(), m.goal.eval(&v).unwrap());
            assert_eq!(goal.eval(&v).unwrap(), terms.goal.eval(&v).unwrap());
        }
    }

    #[test]
    fn dedup_unifies_repeated_gathers() {
        let mut b = GraphBuilder::new();
        let x = b.input(vec![2]).unwrap();
        let g1 = b.gather(x, vec![1]).unwrap();
        let g2 = b.gather(x, vec![1]).unwrap();
        let s = b.binary(Op::Add, g1, g2).unwrap();
        let g = b.finish("dup", vec![s]).unwrap();
        let d = shared_subterm_dedup(&g);
        assert!(d.len() < g.len());
        assert_eq!(gathers_of_input(&d).len(), 1);
        let x = Tensor::vector(vec![int(3), ratio(1, 2)]);
        assert_eq!(forward(&g, &x).unwrap(), forward(&d, &x).unwrap());
    }
}

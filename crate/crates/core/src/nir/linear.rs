//! Lowering of a graph to a piecewise-linear network: every tensor element
//! becomes an affine expression over the inputs and a set of neurons, and
//! only `Relu` and `Sign` introduce neurons.

use std::collections::BTreeMap;
use std::fmt;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::nir::eval::{bias_index, concat_data, gather_data};
use crate::nir::tensor::strides;
use crate::nir::{NirError, NirGraph, Op};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LowerError {
    #[error("operator {op} at node {node} has no piecewise-linear encoding")]
    UnsupportedNode { node: usize, op: &'static str },
    #[error("operator {op} at node {node} multiplies two non-constant values")]
    NonLinear { node: usize, op: &'static str },
    #[error(transparent)]
    Graph(#[from] NirError),
}

/// `sum coeffs[v] * v + constant` over variable indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct LinExpr {
    pub coeffs: BTreeMap<usize, Rational>,
    pub constant: Rational,
}

impl LinExpr {
    pub fn constant(c: Rational) -> Self {
        LinExpr {
            coeffs: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: usize) -> Self {
        LinExpr {
            coeffs: BTreeMap::from([(v, Rational::one())]),
            constant: Rational::zero(),
        }
    }

    pub fn as_constant(&self) -> Option<&Rational> {
        self.coeffs.is_empty().then_some(&self.constant)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `self + k * other`.
    pub fn add_scaled(&self, other: &LinExpr, k: &Rational) -> LinExpr {
        let mut out = self.clone();
        if k.is_zero() {
            return out;
        }
        for (v, c) in &other.coeffs {
            let e = out.coeffs.entry(*v).or_insert_with(Rational::zero);
            *e += c * k;
            if e.is_zero() {
                out.coeffs.remove(v);
            }
        }
        out.constant += &other.constant * k;
        out
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        self.add_scaled(other, &Rational::one())
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        self.add_scaled(other, &-Rational::one())
    }

    pub fn scale(&self, k: &Rational) -> LinExpr {
        if k.is_zero() {
            return LinExpr::default();
        }
        LinExpr {
            coeffs: self.coeffs.iter().map(|(v, c)| (*v, c * k)).collect(),
            constant: &self.constant * k,
        }
    }

    pub fn eval(&self, values: &[Rational]) -> Rational {
        self.coeffs
            .iter()
            .fold(self.constant.clone(), |acc, (v, c)| acc + c * &values[*v])
    }

    /// Replaces every variable by an expression.
    pub fn expand(&self, def: impl Fn(usize) -> LinExpr) -> LinExpr {
        self.coeffs
            .iter()
            .fold(LinExpr::constant(self.constant.clone()), |acc, (v, c)| {
                acc.add_scaled(&def(*v), c)
            })
    }
}

impl fmt::Display for LinExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.coeffs {
            let sign = if c.is_negative() { "-" } else { "+" };
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let a = c.abs();
            if !a.is_one() {
                write!(f, "{}*", rational::display(&a))?;
            }
            write!(f, "v{v}")?;
            first = false;
        }
        if first {
            write!(f, "{}", rational::display(&self.constant))
        } else if !self.constant.is_zero() {
            let sign = if self.constant.is_negative() {
                "-"
            } else {
                "+"
            };
            write!(f, " {sign} {}", rational::display(&self.constant.abs()))
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NeuronKind {
    Relu,
    Sign,
}

/// A non-linear unit applied to an affine expression over earlier variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neuron {
    pub kind: NeuronKind,
    pub pre: LinExpr,
}

/// Variables `0..n_inputs` are the inputs; variable `n_inputs + k` is the
/// output of neuron `k`. Neurons only refer to earlier variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlNetwork {
    pub n_inputs: usize,
    pub neurons: Vec<Neuron>,
    pub outputs: Vec<LinExpr>,
}

impl PlNetwork {
    pub fn n_vars(&self) -> usize {
        self.n_inputs + self.neurons.len()
    }

    pub fn neuron_var(&self, k: usize) -> usize {
        self.n_inputs + k
    }

    /// Values of all variables on a concrete input.
    pub fn eval_vars(&self, input: &[Rational]) -> Vec<Rational> {
        let mut values = input.to_vec();
        for n in &self.neurons {
            let x = n.pre.eval(&values);
            values.push(match n.kind {
                NeuronKind::Relu => {
                    if x.is_negative() {
                        Rational::zero()
                    } else {
                        x
                    }
                }
                NeuronKind::Sign => x.signum(),
            });
        }
        values
    }

    pub fn eval(&self, input: &[Rational]) -> Vec<Rational> {
        let values = self.eval_vars(input);
        self.outputs.iter().map(|o| o.eval(&values)).collect()
    }
}

struct Lowering {
    n_inputs: usize,
    neurons: Vec<Neuron>,
}

impl Lowering {
    fn neuron(&mut self, kind: NeuronKind, pre: LinExpr) -> LinExpr {
        if let Some(c) = pre.as_constant() {
            return LinExpr::constant(match kind {
                NeuronKind::Relu if c.is_negative() => Rational::zero(),
                NeuronKind::Relu => c.clone(),
                NeuronKind::Sign => c.signum(),
            });
        }
        self.neurons.push(Neuron { kind, pre });
        LinExpr::var(self.n_inputs + self.neurons.len() - 1)
    }
}

fn broadcast(
    a: &(Vec<usize>, Vec<LinExpr>),
    b: &(Vec<usize>, Vec<LinExpr>),
    f: impl Fn(&LinExpr, &LinExpr) -> Result<LinExpr, LowerError>,
) -> Result<Vec<LinExpr>, LowerError> {
    if a.0 == b.0 {
        return a.1.iter().zip(&b.1).map(|(x, y)| f(x, y)).collect();
    }
    if b.1.len() == 1 {
        return a.1.iter().map(|x| f(x, &b.1[0])).collect();
    }
    if a.1.len() == 1 {
        return b.1.iter().map(|y| f(&a.1[0], y)).collect();
    }
    Err(NirError::shape(format!("cannot combine shapes {:?} and {:?}", a.0, b.0)).into())
}

fn product(x: &LinExpr, y: &LinExpr) -> Option<LinExpr> {
    match (x.as_constant(), y.as_constant()) {
        (Some(c), _) => Some(y.scale(c)),
        (_, Some(c)) => Some(x.scale(c)),
        _ => None,
    }
}

/// Lowers `graph`; outputs are concatenated in graph order.
///
/// Operators without any piecewise-linear encoding are reported before
/// products of non-constant values, whichever comes first in the graph.
pub fn lower(graph: &NirGraph) -> Result<PlNetwork, LowerError> {
    if let Some(id) = graph
        .topo_order()
        .into_iter()
        .find(|&id| matches!(graph.node(id).op, Op::Exp))
    {
        return Err(LowerError::UnsupportedNode {
            node: id.0,
            op: "Exp",
        });
    }
    let mut l = Lowering {
        n_inputs: graph.input_dim(),
        neurons: Vec::new(),
    };
    let mut values: Vec<Option<(Vec<usize>, Vec<LinExpr>)>> = vec![None; graph.len()];
    for id in graph.topo_order() {
        let node = graph.node(id);
        let args: Vec<&(Vec<usize>, Vec<LinExpr>)> = node
            .inputs
            .iter()
            .map(|i| values[i.0].as_ref().expect("operands are lowered first"))
            .collect();
        let op_name = node.op.name();
        let nonlinear = || LowerError::NonLinear {
            node: id.0,
            op: op_name,
        };
        let data = match &node.op {
            Op::Input => (0..l.n_inputs).map(LinExpr::var).collect(),
            Op::Constant(t) => t.data().iter().cloned().map(LinExpr::constant).collect(),
            Op::Add => broadcast(args[0], args[1], |x, y| Ok(x.add(y)))?,
            Op::Sub => broadcast(args[0], args[1], |x, y| Ok(x.sub(y)))?,
            Op::Mul => broadcast(args[0], args[1], |x, y| product(x, y).ok_or_else(nonlinear))?,
            Op::Div => broadcast(args[0], args[1], |x, y| match y.as_constant() {
                Some(c) if c.is_zero() => Err(NirError::DivisionByZero { node: id.0 }.into()),
                Some(c) => Ok(x.scale(&c.recip())),
                None => Err(nonlinear()),
            })?,
            Op::Relu => args[0]
                .1
                .iter()
                .map(|x| l.neuron(NeuronKind::Relu, x.clone()))
                .collect(),
            Op::Sign => args[0]
                .1
                .iter()
                .map(|x| l.neuron(NeuronKind::Sign, x.clone()))
                .collect(),
            Op::Exp => {
                return Err(LowerError::UnsupportedNode {
                    node: id.0,
                    op: "Exp",
                })
            }
            Op::Concat { axis } => {
                let parts: Vec<(&[usize], &[LinExpr])> = args
                    .iter()
                    .map(|(s, d)| (s.as_slice(), d.as_slice()))
                    .collect();
                concat_data(&parts, *axis, &node.shape)
            }
            Op::Gather { axis, indices, .. } => gather_data(&args[0].0, &args[0].1, *axis, indices),
            Op::Gemm {
                alpha,
                beta,
                trans_a,
                trans_b,
            } => {
                let (a, b) = (args[0], args[1]);
                let (sa, sb) = (strides(&a.0), strides(&b.0));
                let (m, k) = if *trans_a {
                    (a.0[1], a.0[0])
                } else {
                    (a.0[0], a.0[1])
                };
                let n = if *trans_b { b.0[0] } else { b.0[1] };
                let at = |i: usize, p: usize| {
                    if *trans_a {
                        &a.1[p * sa[0] + i]
                    } else {
                        &a.1[i * sa[0] + p]
                    }
                };
                let bt = |p: usize, j: usize| {
                    if *trans_b {
                        &b.1[j * sb[0] + p]
                    } else {
                        &b.1[p * sb[0] + j]
                    }
                };
                let mut out = Vec::with_capacity(m * n);
                for i in 0..m {
                    for j in 0..n {
                        let mut acc = LinExpr::default();
                        for p in 0..k {
                            acc = acc.add(&product(at(i, p), bt(p, j)).ok_or_else(nonlinear)?);
                        }
                        acc = acc.scale(alpha);
                        if let Some(c) = args.get(2) {
                            acc = acc.add_scaled(&c.1[bias_index(&c.0, m, n, i, j)], beta);
                        }
                        out.push(acc);
                    }
                }
                out
            }
        };
        values[id.0] = Some((node.shape.clone(), data));
    }
    let outputs = graph
        .outputs()
        .iter()
        .flat_map(|o| values[o.0].as_ref().expect("outputs are lowered").1.clone())
        .collect();
    Ok(PlNetwork {
        n_inputs: l.n_inputs,
        neurons: l.neurons,
        outputs,
    })
}

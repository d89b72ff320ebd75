use num_traits::{One, Signed, Zero};

use crate::nir::tensor::strides;
use crate::nir::{NirError, NirGraph, NodeId, Op, Tensor};
use crate::rational::{self, Rational};

/// Values of every node after a forward pass.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub values: Vec<Tensor>,
    /// Set when an `Exp` node was traversed; values downstream of it are
    /// high-precision approximations rather than exact.
    pub approximate: bool,
}

impl Evaluation {
    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }
}

/// Evaluates the graph outputs on `input`.
pub fn forward(graph: &NirGraph, input: &Tensor) -> Result<Vec<Tensor>, NirError> {
    let eval = evaluate(graph, input)?;
    Ok(graph
        .outputs()
        .iter()
        .map(|o| eval.values[o.0].clone())
        .collect())
}

/// Evaluates every node of the graph on `input`.
pub fn evaluate(graph: &NirGraph, input: &Tensor) -> Result<Evaluation, NirError> {
    if input.shape() != graph.input_shape() {
        if input.numel() == graph.input_dim() && graph.input_shape().len() == 1 {
            // Accept any same-sized tensor for a flat input.
        } else {
            return Err(NirError::shape(format!(
                "input has shape {:?}, graph expects {:?}",
                input.shape(),
                graph.input_shape()
            )));
        }
    }
    let mut values: Vec<Option<Tensor>> = vec![None; graph.len()];
    let mut approximate = false;
    for id in graph.topo_order() {
        let node = graph.node(id);
        let args: Vec<&Tensor> = node
            .inputs
            .iter()
            .map(|i| values[i.0].as_ref().expect("operands are evaluated first"))
            .collect();
        let value = match &node.op {
            Op::Input => Tensor::new(graph.input_shape().to_vec(), input.data().to_vec())?,
            Op::Constant(t) => t.clone(),
            Op::Add => broadcast(args[0], args[1], |a, b| Ok(a + b))?,
            Op::Sub => broadcast(args[0], args[1], |a, b| Ok(a - b))?,
            Op::Mul => broadcast(args[0], args[1], |a, b| Ok(a * b))?,
            Op::Div => broadcast(args[0], args[1], |a, b| {
                if b.is_zero() {
                    Err(NirError::DivisionByZero { node: id.0 })
                } else {
                    Ok(a / b)
                }
            })?,
            Op::Relu => args[0].map(|v| {
                if v.is_negative() {
                    Rational::zero()
                } else {
                    v.clone()
                }
            }),
            Op::Sign => args[0].map(|v| v.signum()),
            Op::Exp => {
                approximate = true;
                args[0].map(|v| rational::exp(v).value)
            }
            Op::Concat { axis } => concat(&args, *axis, &node.shape)?,
            Op::Gather { axis, indices, .. } => gather(args[0], *axis, indices, &node.shape)?,
            Op::Gemm {
                alpha,
                beta,
                trans_a,
                trans_b,
            } => gemm(&args, alpha, beta, *trans_a, *trans_b)?,
        };
        if value.shape() != node.shape.as_slice() {
            return Err(NirError::ShapeMismatch {
                node: Some(id.0),
                detail: format!(
                    "evaluated shape {:?} differs from annotation {:?}",
                    value.shape(),
                    node.shape
                ),
            });
        }
        values[id.0] = Some(value);
    }
    Ok(Evaluation {
        values: values
            .into_iter()
            .map(|v| v.expect("all nodes evaluated"))
            .collect(),
        approximate,
    })
}

fn broadcast(
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(&Rational, &Rational) -> Result<Rational, NirError>,
) -> Result<Tensor, NirError> {
    if a.shape() == b.shape() {
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| f(x, y))
            .collect::<Result<_, _>>()?;
        return Tensor::new(a.shape().to_vec(), data);
    }
    if b.numel() == 1 && b.shape().len() <= a.shape().len() {
        let y = &b.data()[0];
        let data = a.data().iter().map(|x| f(x, y)).collect::<Result<_, _>>()?;
        return Tensor::new(a.shape().to_vec(), data);
    }
    if a.numel() == 1 && a.shape().len() <= b.shape().len() {
        let x = &a.data()[0];
        let data = b.data().iter().map(|y| f(x, y)).collect::<Result<_, _>>()?;
        return Tensor::new(b.shape().to_vec(), data);
    }
    Err(NirError::shape(format!(
        "cannot combine shapes {:?} and {:?}",
        a.shape(),
        b.shape()
    )))
}

fn concat(parts: &[&Tensor], axis: usize, out_shape: &[usize]) -> Result<Tensor, NirError> {
    let parts: Vec<(&[usize], &[Rational])> = parts.iter().map(|p| (p.shape(), p.data())).collect();
    Tensor::new(out_shape.to_vec(), concat_data(&parts, axis, out_shape))
}

/// Row-major concatenation of `(shape, data)` parts along `axis`.
pub(crate) fn concat_data<T: Clone>(
    parts: &[(&[usize], &[T])],
    axis: usize,
    out_shape: &[usize],
) -> Vec<T> {
    let outer: usize = out_shape[..axis].iter().product();
    let inner: usize = out_shape[axis + 1..].iter().product();
    let mut data = Vec::with_capacity(out_shape.iter().product());
    for o in 0..outer {
        for (shape, values) in parts {
            let chunk = shape[axis] * inner;
            data.extend_from_slice(&values[o * chunk..(o + 1) * chunk]);
        }
    }
    data
}

fn gather(
    data: &Tensor,
    axis: usize,
    indices: &[usize],
    out_shape: &[usize],
) -> Result<Tensor, NirError> {
    Tensor::new(
        out_shape.to_vec(),
        gather_data(data.shape(), data.data(), axis, indices),
    )
}

/// Row-major static gather along `axis`.
pub(crate) fn gather_data<T: Clone>(
    shape: &[usize],
    data: &[T],
    axis: usize,
    indices: &[usize],
) -> Vec<T> {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let dim = shape[axis];
    let mut out = Vec::new();
    for o in 0..outer {
        for &idx in indices {
            let start = (o * dim + idx) * inner;
            out.extend_from_slice(&data[start..start + inner]);
        }
    }
    out
}

/// Flat index into a Gemm bias of shape `shape` for output cell `(i, j)`
/// of an `m x n` product, following unidirectional broadcasting.
pub(crate) fn bias_index(shape: &[usize], m: usize, n: usize, i: usize, j: usize) -> usize {
    match shape {
        [] | [1] | [1, 1] => 0,
        [_, 1] if shape[0] == m && n != 1 => i,
        [_] | [1, _] => j,
        _ => i * n + j,
    }
}

fn gemm(
    args: &[&Tensor],
    alpha: &Rational,
    beta: &Rational,
    trans_a: bool,
    trans_b: bool,
) -> Result<Tensor, NirError> {
    let (a, b) = (args[0], args[1]);
    let sa = strides(a.shape());
    let sb = strides(b.shape());
    let (m, k) = if trans_a {
        (a.shape()[1], a.shape()[0])
    } else {
        (a.shape()[0], a.shape()[1])
    };
    let n = if trans_b { b.shape()[0] } else { b.shape()[1] };
    let at = |i: usize, p: usize| {
        if trans_a {
            &a.data()[p * sa[0] + i]
        } else {
            &a.data()[i * sa[0] + p]
        }
    };
    let bt = |p: usize, j: usize| {
        if trans_b {
            &b.data()[j * sb[0] + p]
        } else {
            &b.data()[p * sb[0] + j]
        }
    };
    let bias = args.get(2).map(|c| {
        let shape = c.shape().to_vec();
        move |i: usize, j: usize| -> &Rational { &c.data()[bias_index(&shape, m, n, i, j)] }
    });
    let unit_alpha = alpha.is_one();
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = Rational::zero();
            for p in 0..k {
                let x = at(i, p);
                if x.is_zero() {
                    continue;
                }
                acc += x * bt(p, j);
            }
            if !unit_alpha {
                acc *= alpha;
            }
            if let Some(c) = &bias {
                acc += beta * c(i, j);
            }
            out.push(acc);
        }
    }
    Tensor::new(vec![m, n], out)
}

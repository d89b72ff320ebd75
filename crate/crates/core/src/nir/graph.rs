use std::collections::HashMap;
use std::fmt;

use num_traits::One;

use crate::nir::{NirError, Tensor};
use crate::rational::{self, Rational};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Operators of the intermediate representation. Everything outside this set
/// is rejected at import time.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Input,
    Constant(Tensor),
    Add,
    Sub,
    Mul,
    Div,
    Concat {
        axis: usize,
    },
    /// Static gather; the output shape is
    /// `data[..axis] ++ indices_shape ++ data[axis+1..]`.
    Gather {
        axis: usize,
        indices: Vec<usize>,
        indices_shape: Vec<usize>,
    },
    /// `alpha * A' B' + beta * C` with optional transposes and optional bias.
    Gemm {
        alpha: Rational,
        beta: Rational,
        trans_a: bool,
        trans_b: bool,
    },
    Sign,
    Relu,
    Exp,
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input => "Input",
            Op::Constant(_) => "Constant",
            Op::Add => "Add",
            Op::Sub => "Sub",
            Op::Mul => "Mul",
            Op::Div => "Div",
            Op::Concat { .. } => "Concat",
            Op::Gather { .. } => "Gather",
            Op::Gemm { .. } => "Gemm",
            Op::Sign => "Sign",
            Op::Relu => "Relu",
            Op::Exp => "Exp",
        }
    }

    pub fn gemm() -> Op {
        Op::Gemm {
            alpha: Rational::one(),
            beta: Rational::one(),
            trans_a: false,
            trans_b: false,
        }
    }

    /// Gather of a flat index list along axis 0.
    pub fn gather(indices: Vec<usize>) -> Op {
        Op::Gather {
            axis: 0,
            indices_shape: vec![indices.len()],
            indices,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub shape: Vec<usize>,
}

/// Shape-annotated operator DAG with a single `Input` node.
///
/// Nodes are stored so that every operand precedes its consumers; all
/// constructors go through [`GraphBuilder`], which enforces this.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NirGraph {
    name: String,
    nodes: Vec<Node>,
    input: NodeId,
    outputs: Vec<NodeId>,
}

impl NirGraph {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&self) -> NodeId {
        self.input
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.nodes[self.input.0].shape
    }

    /// Flat input dimension.
    pub fn input_dim(&self) -> usize {
        self.input_shape().iter().product()
    }

    pub fn outputs(&self) -> &[NodeId] {
        &self.outputs
    }

    /// Total number of output scalars across all outputs.
    pub fn output_dim(&self) -> usize {
        self.outputs
            .iter()
            .map(|o| self.nodes[o.0].shape.iter().product::<usize>())
            .sum()
    }

    pub fn count_op(&self, name: &str) -> usize {
        self.nodes.iter().filter(|n| n.op.name() == name).count()
    }

    pub fn consumers(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.inputs.contains(&id))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    /// Kahn topological order over the edges actually present.
    pub fn topo_order(&self) -> Vec<NodeId> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            for operand in &node.inputs {
                indegree[i] += 1;
                users[operand.0].push(i);
            }
        }
        let mut ready: std::collections::VecDeque<usize> =
            (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop_front() {
            order.push(NodeId(i));
            for &u in &users[i] {
                indegree[u] -= 1;
                if indegree[u] == 0 {
                    ready.push_back(u);
                }
            }
        }
        order
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo_order().len() == self.nodes.len()
    }

    /// Re-derives every node's shape from its operands and checks it against
    /// the stored annotation.
    pub fn infer_shapes(&self) -> Result<NirGraph, NirError> {
        let mut graph = self.clone();
        for id in self.topo_order() {
            let node = &self.nodes[id.0];
            let shapes: Vec<&[usize]> = node
                .inputs
                .iter()
                .map(|i| graph.nodes[i.0].shape.as_slice())
                .collect();
            let shape = match &node.op {
                Op::Input => node.shape.clone(),
                op => infer_shape(op, &shapes).map_err(|e| e.at(id))?,
            };
            graph.nodes[id.0].shape = shape;
        }
        for (i, (old, new)) in self.nodes.iter().zip(&graph.nodes).enumerate() {
            if old.shape != new.shape {
                return Err(NirError::ShapeMismatch {
                    node: Some(i),
                    detail: format!(
                        "annotated shape {:?} but operands imply {:?}",
                        old.shape, new.shape
                    ),
                });
            }
        }
        Ok(graph)
    }

    /// Copy of `self` whose `Input` node is replaced by the whole
    /// `replacement` graph (which must have a single output of the same shape).
    pub fn subst_input(&self, replacement: &NirGraph) -> Result<NirGraph, NirError> {
        let [out] = replacement.outputs() else {
            return Err(NirError::shape(
                "replacement graph must have exactly one output".to_string(),
            ));
        };
        let mut builder = GraphBuilder::from_graph(replacement);
        let mapped = builder.inline(self, *out)?;
        builder.finish(self.name.clone(), mapped)
    }

    /// Unifies structurally identical nodes (same operator, same operands)
    /// and drops nodes no output depends on.
    pub fn dedup(&self) -> NirGraph {
        let mut builder = GraphBuilder::new();
        builder.hash_cons = true;
        let mut remap = vec![NodeId(0); self.nodes.len()];
        for id in self.topo_order() {
            let node = &self.nodes[id.0];
            let inputs: Vec<NodeId> = node.inputs.iter().map(|i| remap[i.0]).collect();
            remap[id.0] = builder.push_unchecked(node.op.clone(), inputs, node.shape.clone());
            if matches!(node.op, Op::Input) {
                builder.input = Some(remap[id.0]);
            }
        }
        let outputs: Vec<NodeId> = self.outputs.iter().map(|o| remap[o.0]).collect();
        let graph = NirGraph {
            name: self.name.clone(),
            nodes: builder.nodes,
            input: remap[self.input.0],
            outputs,
        };
        graph.prune()
    }

    /// Removes nodes unreachable from the outputs (the `Input` node is kept).
    pub fn prune(&self) -> NirGraph {
        let mut live = vec![false; self.nodes.len()];
        live[self.input.0] = true;
        let mut stack: Vec<NodeId> = self.outputs.clone();
        while let Some(id) = stack.pop() {
            if !live[id.0] || id == self.input {
                live[id.0] = true;
                stack.extend(self.nodes[id.0].inputs.iter().copied());
            }
        }
        let mut remap = vec![None; self.nodes.len()];
        let mut nodes = Vec::new();
        for id in self.topo_order() {
            if !live[id.0] {
                continue;
            }
            let node = &self.nodes[id.0];
            remap[id.0] = Some(NodeId(nodes.len()));
            nodes.push(Node {
                op: node.op.clone(),
                inputs: node.inputs.iter().map(|i| remap[i.0].unwrap()).collect(),
                shape: node.shape.clone(),
            });
        }
        NirGraph {
            name: self.name.clone(),
            input: remap[self.input.0].unwrap(),
            outputs: self.outputs.iter().map(|o| remap[o.0].unwrap()).collect(),
            nodes,
        }
    }

    /// Canonical node listing obtained by a post-order walk from the outputs;
    /// two graphs are isomorphic iff their canonical forms are equal.
    fn canonical(&self) -> Vec<(Op, Vec<usize>, Vec<usize>)> {
        fn visit(
            g: &NirGraph,
            id: NodeId,
            index: &mut HashMap<NodeId, usize>,
            out: &mut Vec<(Op, Vec<usize>, Vec<usize>)>,
        ) -> usize {
            if let Some(&i) = index.get(&id) {
                return i;
            }
            let node = g.node(id);
            let operands: Vec<usize> = node
                .inputs
                .iter()
                .map(|&i| visit(g, i, index, out))
                .collect();
            let k = out.len();
            out.push((node.op.clone(), operands, node.shape.clone()));
            index.insert(id, k);
            k
        }
        let mut index = HashMap::new();
        let mut out = Vec::new();
        visit(self, self.input, &mut index, &mut out);
        let roots: Vec<usize> = self
            .outputs
            .iter()
            .map(|&o| visit(self, o, &mut index, &mut out))
            .collect();
        out.push((Op::Input, roots, vec![]));
        out
    }

    /// Isomorphism up to node numbering (operators, attributes, constants,
    /// shapes and ordered operand structure must agree).
    pub fn isomorphic(&self, other: &NirGraph) -> bool {
        self.canonical() == other.canonical()
    }
}

impl fmt::Display for NirGraph {
    /// One node per line: `id: Op(shape) <- operands`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, node) in self.nodes.iter().enumerate() {
            let operands: Vec<String> = node.inputs.iter().map(|i| i.to_string()).collect();
            let detail = match &node.op {
                Op::Concat { axis } => format!("axis={axis}, "),
                Op::Gather { axis, indices, .. } => format!("axis={axis}, indices={indices:?}, "),
                Op::Gemm {
                    trans_a, trans_b, ..
                } if *trans_a || *trans_b => format!("transA={trans_a}, transB={trans_b}, "),
                _ => String::new(),
            };
            write!(f, "{i}: {}({detail}{:?})", node.op.name(), node.shape)?;
            if !operands.is_empty() {
                write!(f, " <- {}", operands.join(", "))?;
            }
            writeln!(f)?;
        }
        let outs: Vec<String> = self.outputs.iter().map(|o| o.to_string()).collect();
        writeln!(f, "outputs: {}", outs.join(", "))
    }
}

/// Output shape of `op` applied to operands of the given shapes.
pub fn infer_shape(op: &Op, shapes: &[&[usize]]) -> Result<Vec<usize>, NirError> {
    let arity = |n: usize| -> Result<(), NirError> {
        if shapes.len() != n {
            Err(NirError::shape(format!(
                "{} expects {n} operand(s), got {}",
                op.name(),
                shapes.len()
            )))
        } else {
            Ok(())
        }
    };
    match op {
        Op::Input => Err(NirError::shape("Input has no operands".into())),
        Op::Constant(t) => {
            arity(0)?;
            Ok(t.shape().to_vec())
        }
        Op::Add | Op::Sub | Op::Mul | Op::Div => {
            arity(2)?;
            let (a, b) = (shapes[0], shapes[1]);
            let numel = |s: &[usize]| s.iter().product::<usize>();
            if a == b || (numel(b) == 1 && b.len() <= a.len()) {
                Ok(a.to_vec())
            } else if numel(a) == 1 && a.len() <= b.len() {
                Ok(b.to_vec())
            } else {
                Err(NirError::shape(format!(
                    "{} operands have shapes {a:?} and {b:?}",
                    op.name()
                )))
            }
        }
        Op::Sign | Op::Relu | Op::Exp => {
            arity(1)?;
            Ok(shapes[0].to_vec())
        }
        Op::Concat { axis } => {
            if shapes.is_empty() {
                return Err(NirError::shape("Concat needs at least one operand".into()));
            }
            let first = shapes[0];
            if *axis >= first.len() {
                return Err(NirError::shape(format!(
                    "Concat axis {axis} out of range for rank {}",
                    first.len()
                )));
            }
            let mut out = first.to_vec();
            out[*axis] = 0;
            for s in shapes {
                if s.len() != first.len()
                    || s.iter()
                        .zip(first)
                        .enumerate()
                        .any(|(d, (x, y))| d != *axis && x != y)
                {
                    return Err(NirError::shape(format!(
                        "Concat operands {first:?} and {s:?} disagree off axis {axis}"
                    )));
                }
                out[*axis] += s[*axis];
            }
            Ok(out)
        }
        Op::Gather {
            axis,
            indices,
            indices_shape,
        } => {
            arity(1)?;
            let data = shapes[0];
            if *axis >= data.len() {
                return Err(NirError::shape(format!(
                    "Gather axis {axis} out of range for rank {}",
                    data.len()
                )));
            }
            if indices.len() != indices_shape.iter().product::<usize>() {
                return Err(NirError::shape(format!(
                    "Gather indices {indices:?} do not fill shape {indices_shape:?}"
                )));
            }
            if let Some(bad) = indices.iter().find(|&&i| i >= data[*axis]) {
                return Err(NirError::shape(format!(
                    "Gather index {bad} out of range for axis of size {}",
                    data[*axis]
                )));
            }
            let mut out = data[..*axis].to_vec();
            out.extend_from_slice(indices_shape);
            out.extend_from_slice(&data[axis + 1..]);
            Ok(out)
        }
        Op::Gemm {
            trans_a, trans_b, ..
        } => {
            if shapes.len() != 2 && shapes.len() != 3 {
                return Err(NirError::shape(format!(
                    "Gemm expects 2 or 3 operands, got {}",
                    shapes.len()
                )));
            }
            let (a, b) = (shapes[0], shapes[1]);
            if a.len() != 2 || b.len() != 2 {
                return Err(NirError::shape(format!(
                    "Gemm operands must be matrices, got {a:?} and {b:?}"
                )));
            }
            let (m, k) = if *trans_a { (a[1], a[0]) } else { (a[0], a[1]) };
            let (k2, n) = if *trans_b { (b[1], b[0]) } else { (b[0], b[1]) };
            if k != k2 {
                return Err(NirError::shape(format!(
                    "Gemm inner dimensions differ: ({m}x{k}) . ({k2}x{n})"
                )));
            }
            if let Some(c) = shapes.get(2) {
                let ok = matches!(*c, [] | [1])
                    || *c == [n]
                    || *c == [1, n]
                    || *c == [m, n]
                    || *c == [m, 1]
                    || *c == [1, 1];
                if !ok {
                    return Err(NirError::shape(format!(
                        "Gemm bias shape {c:?} does not broadcast to ({m}x{n})"
                    )));
                }
            }
            Ok(vec![m, n])
        }
    }
}

/// Incremental graph constructor; every added node is shape-checked against
/// its operands, so graphs built here are acyclic and consistently shaped.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    input: Option<NodeId>,
    hash_cons: bool,
    interned: HashMap<(Op, Vec<NodeId>), NodeId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from a copy of an existing graph's nodes (outputs are dropped).
    pub fn from_graph(graph: &NirGraph) -> Self {
        GraphBuilder {
            nodes: graph.nodes.clone(),
            input: Some(graph.input),
            ..Self::default()
        }
    }

    /// Builder that reuses an existing node when asked to add an identical one.
    pub fn with_sharing() -> Self {
        GraphBuilder {
            hash_cons: true,
            ..Self::default()
        }
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn input(&mut self, shape: Vec<usize>) -> Result<NodeId, NirError> {
        if self.input.is_some() {
            return Err(NirError::MalformedModel(
                "graph already has an Input node".into(),
            ));
        }
        let id = self.push_unchecked(Op::Input, vec![], shape);
        self.input = Some(id);
        Ok(id)
    }

    pub fn input_id(&self) -> Option<NodeId> {
        self.input
    }

    fn push_unchecked(&mut self, op: Op, inputs: Vec<NodeId>, shape: Vec<usize>) -> NodeId {
        if self.hash_cons && !matches!(op, Op::Input) {
            let key = (op, inputs);
            if let Some(&id) = self.interned.get(&key) {
                return id;
            }
            let id = NodeId(self.nodes.len());
            self.nodes.push(Node {
                op: key.0.clone(),
                inputs: key.1.clone(),
                shape,
            });
            self.interned.insert(key, id);
            return id;
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs, shape });
        id
    }

    pub fn add_node(&mut self, op: Op, inputs: Vec<NodeId>) -> Result<NodeId, NirError> {
        if matches!(op, Op::Input) {
            return Err(NirError::MalformedModel(
                "use GraphBuilder::input for Input nodes".into(),
            ));
        }
        if let Some(bad) = inputs.iter().find(|i| i.0 >= self.nodes.len()) {
            return Err(NirError::MalformedModel(format!(
                "operand {bad} does not exist"
            )));
        }
        let shapes: Vec<&[usize]> = inputs
            .iter()
            .map(|i| self.nodes[i.0].shape.as_slice())
            .collect();
        let shape = infer_shape(&op, &shapes).map_err(|e| e.at(NodeId(self.nodes.len())))?;
        Ok(self.push_unchecked(op, inputs, shape))
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        let shape = t.shape().to_vec();
        self.push_unchecked(Op::Constant(t), vec![], shape)
    }

    pub fn scalar(&mut self, value: Rational) -> NodeId {
        self.constant(Tensor::vector(vec![value]))
    }

    pub fn binary(&mut self, op: Op, a: NodeId, b: NodeId) -> Result<NodeId, NirError> {
        self.add_node(op, vec![a, b])
    }

    pub fn unary(&mut self, op: Op, a: NodeId) -> Result<NodeId, NirError> {
        self.add_node(op, vec![a])
    }

    pub fn gather(&mut self, data: NodeId, indices: Vec<usize>) -> Result<NodeId, NirError> {
        self.add_node(Op::gather(indices), vec![data])
    }

    pub fn concat(&mut self, parts: Vec<NodeId>, axis: usize) -> Result<NodeId, NirError> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        self.add_node(Op::Concat { axis }, parts)
    }

    /// `x [1 x k] . w [k x n] (+ bias [n])`.
    pub fn dense(
        &mut self,
        x: NodeId,
        weights: Tensor,
        bias: Option<Tensor>,
    ) -> Result<NodeId, NirError> {
        let w = self.constant(weights);
        let mut inputs = vec![x, w];
        if let Some(b) = bias {
            inputs.push(self.constant(b));
        }
        self.add_node(Op::gemm(), inputs)
    }

    /// Reshapes a rank-1 tensor of length `n` into a `[1, n]` row.
    pub fn to_row(&mut self, x: NodeId) -> Result<NodeId, NirError> {
        let n = match self.shape(x) {
            [n] => *n,
            s => {
                return Err(NirError::shape(format!(
                    "expected a rank-1 tensor, got {s:?}"
                )))
            }
        };
        self.add_node(
            Op::Gather {
                axis: 0,
                indices: (0..n).collect(),
                indices_shape: vec![1, n],
            },
            vec![x],
        )
    }

    /// Drops leading unit dimensions until the tensor is rank 1.
    pub fn flatten_leading(&mut self, mut x: NodeId) -> Result<NodeId, NirError> {
        while self.shape(x).len() > 1 {
            if self.shape(x)[0] != 1 {
                return Err(NirError::shape(format!(
                    "cannot flatten shape {:?} with static gathers",
                    self.shape(x)
                )));
            }
            x = self.add_node(
                Op::Gather {
                    axis: 0,
                    indices: vec![0],
                    indices_shape: vec![],
                },
                vec![x],
            )?;
        }
        Ok(x)
    }

    /// Copies every node of `graph` except its `Input`, which is wired to
    /// `input_replacement`. Returns the ids of the copied graph outputs.
    pub fn inline(
        &mut self,
        graph: &NirGraph,
        input_replacement: NodeId,
    ) -> Result<Vec<NodeId>, NirError> {
        if self.shape(input_replacement) != graph.input_shape() {
            return Err(NirError::shape(format!(
                "cannot substitute a {:?} tensor for an Input of shape {:?}",
                self.shape(input_replacement),
                graph.input_shape()
            )));
        }
        let mut remap = vec![NodeId(0); graph.nodes.len()];
        for id in graph.topo_order() {
            let node = graph.node(id);
            remap[id.0] = if id == graph.input {
                input_replacement
            } else {
                let inputs = node.inputs.iter().map(|i| remap[i.0]).collect();
                self.push_unchecked(node.op.clone(), inputs, node.shape.clone())
            };
        }
        Ok(graph.outputs.iter().map(|o| remap[o.0]).collect())
    }

    /// Finalizes the graph. The boundary is flat: the Input and every output
    /// must be rank-1 tensors.
    pub fn finish(
        self,
        name: impl Into<String>,
        outputs: Vec<NodeId>,
    ) -> Result<NirGraph, NirError> {
        let input = self
            .input
            .ok_or_else(|| NirError::MalformedModel("graph has no Input node".into()))?;
        if self.nodes[input.0].shape.len() != 1 {
            return Err(NirError::shape(format!(
                "graph Input must be rank 1, got {:?}",
                self.nodes[input.0].shape
            )));
        }
        if outputs.is_empty() {
            return Err(NirError::MalformedModel("graph has no outputs".into()));
        }
        for o in &outputs {
            if self.nodes[o.0].shape.len() != 1 {
                return Err(NirError::shape(format!(
                    "graph output {o} must be rank 1, got {:?}",
                    self.nodes[o.0].shape
                )));
            }
        }
        let graph = NirGraph {
            name: name.into(),
            nodes: self.nodes,
            input,
            outputs,
        };
        debug_assert!(graph.is_acyclic());
        Ok(graph)
    }
}

/// Builds a fully connected ReLU network: `layers[i]` is `(weights [in x out], bias [out])`;
/// ReLU follows every layer but the last.
pub fn mlp(
    name: &str,
    layers: &[(Vec<Vec<Rational>>, Vec<Rational>)],
) -> Result<NirGraph, NirError> {
    let first = layers
        .first()
        .ok_or_else(|| NirError::MalformedModel("network needs at least one layer".into()))?;
    let mut b = GraphBuilder::new();
    let x = b.input(vec![first.0.len()])?;
    let mut h = b.to_row(x)?;
    for (i, (w, bias)) in layers.iter().enumerate() {
        let rows = w.len();
        let cols = bias.len();
        let data: Vec<Rational> = w.iter().flat_map(|r| r.iter().cloned()).collect();
        let weights = Tensor::matrix(rows, cols, data)?;
        h = b.dense(h, weights, Some(Tensor::vector(bias.clone())))?;
        if i + 1 < layers.len() {
            h = b.unary(Op::Relu, h)?;
        }
    }
    let out = b.flatten_leading(h)?;
    b.finish(name, vec![out])
}

/// Convenience for tests and examples: weights given as `i64` numerators over a
/// common denominator.
pub fn mlp_from_ints(
    name: &str,
    denominator: i64,
    layers: &[(Vec<Vec<i64>>, Vec<i64>)],
) -> Result<NirGraph, NirError> {
    let r = |v: i64| rational::ratio(v, denominator);
    let layers: Vec<_> = layers
        .iter()
        .map(|(w, b)| {
            (
                w.iter()
                    .map(|row| row.iter().map(|&v| r(v)).collect())
                    .collect(),
                b.iter().map(|&v| r(v)).collect(),
            )
        })
        .collect();
    mlp(name, &layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nir::forward;
    use crate::rational::{int, ratio};

    fn relu_graph(n: usize) -> NirGraph {
        let mut b = GraphBuilder::new();
        let x = b.input(vec![n]).unwrap();
        let y = b.unary(Op::Relu, x).unwrap();
        b.finish("relu", vec![y]).unwrap()
    }

    fn affine_graph() -> NirGraph {
        mlp_from_ints("affine", 1, &[(vec![vec![1, -1], vec![2, 0]], vec![0, -3])]).unwrap()
    }

    #[test]
    fn shape_rules() {
        assert_eq!(
            infer_shape(&Op::Concat { axis: 0 }, &[&[2], &[3]]).unwrap(),
            vec![5]
        );
        assert!(matches!(
            infer_shape(&Op::gemm(), &[&[1, 3], &[4, 2]]),
            Err(NirError::ShapeMismatch { .. })
        ));
        assert_eq!(
            infer_shape(&Op::gather(vec![7]), &[&[10]]).unwrap(),
            vec![1]
        );
        assert!(infer_shape(&Op::gather(vec![10]), &[&[10]]).is_err());
        assert!(infer_shape(&Op::Add, &[&[2], &[3]]).is_err());
        assert_eq!(infer_shape(&Op::Mul, &[&[1], &[3]]).unwrap(), vec![3]);
    }

    #[test]
    fn infer_shapes_is_a_fixpoint() {
        let g = affine_graph();
        let once = g.infer_shapes().unwrap();
        assert_eq!(once, g);
        assert_eq!(once.infer_shapes().unwrap(), once);
    }

    #[test]
    fn subst_input_composes() {
        let g = relu_graph(2);
        let h = affine_graph();
        let composed = g.subst_input(&h).unwrap();
        assert_eq!(composed.len(), g.len() - 1 + h.len());
        assert!(composed.is_acyclic());
        for x in [[int(1), int(2)], [ratio(-1, 2), int(3)], [int(4), int(-5)]] {
            let x = Tensor::vector(x.to_vec());
            let inner = forward(&h, &x).unwrap().remove(0);
            assert_eq!(
                forward(&composed, &x).unwrap(),
                forward(&g, &inner).unwrap()
            );
        }
        assert!(matches!(
            relu_graph(3).subst_input(&h),
            Err(NirError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn dedup_merges_identical_nodes() {
        let mut b = GraphBuilder::new();
        let x = b.input(vec![3]).unwrap();
        let g1 = b.gather(x, vec![1]).unwrap();
        let g2 = b.gather(x, vec![1]).unwrap();
        let s = b.binary(Op::Add, g1, g2).unwrap();
        let g = b.finish("dup", vec![s]).unwrap();
        let d = g.dedup();
        assert_eq!(d.len(), g.len() - 1);
        assert_eq!(d.count_op("Gather"), 1);
        let gather = NodeId(1);
        assert_eq!(d.node(NodeId(2)).inputs, vec![gather, gather]);
        let x = Tensor::vector(vec![int(0), ratio(5, 2), int(9)]);
        assert_eq!(forward(&d, &x).unwrap(), forward(&g, &x).unwrap());
    }

    #[test]
    fn isomorphism_ignores_numbering() {
        let mut b = GraphBuilder::new();
        let c = b.scalar(int(2));
        let x = b.input(vec![1]).unwrap();
        let y = b.binary(Op::Mul, x, c).unwrap();
        let g1 = b.finish("a", vec![y]).unwrap();
        let mut b = GraphBuilder::new();
        let x = b.input(vec![1]).unwrap();
        let c = b.scalar(int(2));
        let y = b.binary(Op::Mul, x, c).unwrap();
        let g2 = b.finish("b", vec![y]).unwrap();
        assert!(g1.isomorphic(&g2));
        let mut b = GraphBuilder::new();
        let x = b.input(vec![1]).unwrap();
        let c = b.scalar(int(2));
        let y = b.binary(Op::Mul, c, x).unwrap();
        let g3 = b.finish("c", vec![y]).unwrap();
        assert!(!g1.isomorphic(&g3));
    }

    #[test]
    fn debug_dump_lists_nodes() {
        let text = relu_graph(2).to_string();
        assert_eq!(text, "0: Input([2])\n1: Relu([2]) <- 0\noutputs: 1\n");
    }

    #[test]
    fn boundary_must_be_flat() {
        let mut b = GraphBuilder::new();
        let x = b.input(vec![2]).unwrap();
        let r = b.to_row(x).unwrap();
        assert!(b.finish("row", vec![r]).is_err());
    }
}

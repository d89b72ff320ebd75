//! ONNX (IR version 8, opset 13) import and export.
//!
//! Import accepts the operator subset of [`Op`] (plus `Constant` nodes and
//! initializers) and rejects everything else with
//! [`NirError::UnsupportedOperator`]. Export writes every constant as a
//! float64 initializer; Gather indices become int64 initializers.

pub mod proto;

use std::collections::HashMap;

use num_traits::One;
use prost::Message;

use crate::nir::{GraphBuilder, NirError, NirGraph, NodeId, Op, Tensor};
use crate::rational::{self, Rational};
use proto::{
    attribute_type, data_type, AttributeProto, Dimension, GraphProto, ModelProto, NodeProto,
    OperatorSetIdProto, TensorProto, TensorShapeProto, TypeProto, TypeProtoTensor, ValueInfoProto,
};

pub const IR_VERSION: i64 = 8;
pub const OPSET_VERSION: i64 = 13;

/// How constants that are not exactly representable as doubles are handled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    /// Fail with [`NirError::UnserializableExact`].
    #[default]
    Strict,
    /// Round to the nearest double and report the node in the warnings.
    Lossy,
}

#[derive(Clone, Debug, Default)]
pub struct Emitted {
    pub bytes: Vec<u8>,
    /// Nodes whose constants were rounded (only in [`Precision::Lossy`]).
    pub rounded_nodes: Vec<usize>,
}

enum Value {
    Node(NodeId),
    // Constants stay detached until used as a data operand so that Gather
    // index tensors do not leave dead nodes behind.
    Const(Tensor, Option<Vec<i64>>),
}

fn malformed(msg: impl Into<String>) -> NirError {
    NirError::MalformedModel(msg.into())
}

fn dims_of(dims: &[i64]) -> Result<Vec<usize>, NirError> {
    dims.iter()
        .map(|&d| usize::try_from(d).map_err(|_| malformed(format!("negative dimension {d}"))))
        .collect()
}

/// Decodes a tensor; integer tensors also return their raw values (for use
/// as Gather indices).
fn decode_tensor(t: &TensorProto) -> Result<(Tensor, Option<Vec<i64>>), NirError> {
    let shape = dims_of(&t.dims)?;
    let n: usize = shape.iter().product();
    let raw = &t.raw_data;
    let finite = |v: f64| -> Result<Rational, NirError> {
        rational::from_f64(v)
            .ok_or_else(|| malformed(format!("non-finite value in tensor {:?}", t.name)))
    };
    let (values, ints): (Vec<Rational>, Option<Vec<i64>>) = match t.data_type {
        data_type::FLOAT => {
            let floats: Vec<f32> = if raw.is_empty() {
                t.float_data.clone()
            } else {
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            };
            (
                floats
                    .iter()
                    .map(|&v| finite(v as f64))
                    .collect::<Result<_, _>>()?,
                None,
            )
        }
        data_type::DOUBLE => {
            let doubles: Vec<f64> = if raw.is_empty() {
                t.double_data.clone()
            } else {
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            };
            (
                doubles
                    .iter()
                    .map(|&v| finite(v))
                    .collect::<Result<_, _>>()?,
                None,
            )
        }
        data_type::INT64 | data_type::INT32 => {
            let ints: Vec<i64> = match (t.data_type, raw.is_empty()) {
                (data_type::INT64, true) => t.int64_data.clone(),
                (data_type::INT64, false) => raw
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                (_, true) => t.int32_data.iter().map(|&v| v as i64).collect(),
                (_, false) => raw
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as i64)
                    .collect(),
            };
            (ints.iter().map(|&v| rational::int(v)).collect(), Some(ints))
        }
        other => {
            return Err(malformed(format!(
                "unsupported tensor element type {other}"
            )))
        }
    };
    if values.len() != n {
        return Err(malformed(format!(
            "tensor {:?} has {} values for shape {shape:?}",
            t.name,
            values.len()
        )));
    }
    Ok((Tensor::new(shape, values)?, ints))
}

fn attr<'a>(node: &'a NodeProto, name: &str) -> Option<&'a AttributeProto> {
    node.attribute.iter().find(|a| a.name == name)
}

fn attr_int(node: &NodeProto, name: &str, default: i64) -> i64 {
    attr(node, name).and_then(|a| a.i).unwrap_or(default)
}

fn attr_float(node: &NodeProto, name: &str) -> Result<Rational, NirError> {
    match attr(node, name).and_then(|a| a.f) {
        None => Ok(Rational::one()),
        Some(v) => {
            rational::from_f32(v).ok_or_else(|| malformed(format!("non-finite attribute {name}")))
        }
    }
}

fn value_shape(info: &ValueInfoProto) -> Option<Vec<usize>> {
    let shape = info.r#type.as_ref()?.tensor_type.as_ref()?.shape.as_ref()?;
    Some(
        shape
            .dim
            .iter()
            .map(|d| match d.dim_value {
                Some(v) if v > 0 => v as usize,
                // Symbolic (batch) dimensions are taken as 1.
                _ => 1,
            })
            .collect(),
    )
}

fn normalize_axis(axis: i64, rank: usize) -> Result<usize, NirError> {
    let a = if axis < 0 { axis + rank as i64 } else { axis };
    if a < 0 || a as usize >= rank.max(1) {
        return Err(malformed(format!(
            "axis {axis} out of range for rank {rank}"
        )));
    }
    Ok(a as usize)
}

const SUPPORTED: &[&str] = &[
    "Add", "Sub", "Mul", "Div", "Concat", "Gather", "Gemm", "Sign", "Relu", "Exp", "Constant",
];

/// Parses a serialized ONNX model into a graph.
pub fn parse_onnx(bytes: &[u8]) -> Result<NirGraph, NirError> {
    let model =
        ModelProto::decode(bytes).map_err(|e| malformed(format!("protobuf decode failed: {e}")))?;
    let graph = model
        .graph
        .as_ref()
        .ok_or_else(|| malformed("model has no graph"))?;
    for node in &graph.node {
        if !SUPPORTED.contains(&node.op_type.as_str())
            || !(node.domain.is_empty() || node.domain == "ai.onnx")
        {
            return Err(NirError::UnsupportedOperator(node.op_type.clone()));
        }
    }

    let mut b = GraphBuilder::new();
    let mut env: HashMap<String, Value> = HashMap::new();
    for init in &graph.initializer {
        let (t, ints) = decode_tensor(init)?;
        env.insert(init.name.clone(), Value::Const(t, ints));
    }
    let inputs: Vec<&ValueInfoProto> = graph
        .input
        .iter()
        .filter(|i| !env.contains_key(&i.name))
        .collect();
    let [input] = inputs.as_slice() else {
        return Err(malformed(format!(
            "expected exactly one graph input, found {}",
            inputs.len()
        )));
    };
    let shape = value_shape(input)
        .ok_or_else(|| malformed(format!("input {:?} has no tensor shape", input.name)))?;
    let flat: usize = shape.iter().product();
    let x = b.input(vec![flat])?;
    let x = if shape.len() == 1 {
        x
    } else {
        b.add_node(
            Op::Gather {
                axis: 0,
                indices: (0..flat).collect(),
                indices_shape: shape,
            },
            vec![x],
        )?
    };
    env.insert(input.name.clone(), Value::Node(x));

    let mut pending: Vec<&NodeProto> = graph.node.iter().collect();
    while !pending.is_empty() {
        let before = pending.len();
        let mut deferred = Vec::new();
        for node in pending {
            if node
                .input
                .iter()
                .filter(|n| !n.is_empty())
                .all(|n| env.contains_key(n))
            {
                import_node(&mut b, &mut env, node)?;
            } else {
                deferred.push(node);
            }
        }
        if deferred.len() == before {
            return Err(malformed(format!(
                "node {:?} ({}) uses an undefined value or forms a cycle",
                deferred[0].name, deferred[0].op_type
            )));
        }
        pending = deferred;
    }

    let mut outputs = Vec::new();
    for out in &graph.output {
        let id = materialize(&mut b, &mut env, &out.name)?;
        outputs.push(b.flatten_leading(id)?);
    }
    let name = if graph.name.is_empty() {
        "model".to_string()
    } else {
        graph.name.clone()
    };
    b.finish(name, outputs)
}

fn materialize(
    b: &mut GraphBuilder,
    env: &mut HashMap<String, Value>,
    name: &str,
) -> Result<NodeId, NirError> {
    match env.get(name) {
        Some(Value::Node(id)) => Ok(*id),
        Some(Value::Const(t, _)) => {
            let id = b.constant(t.clone());
            env.insert(name.to_string(), Value::Node(id));
            Ok(id)
        }
        None => Err(malformed(format!("undefined value {name:?}"))),
    }
}

fn import_node(
    b: &mut GraphBuilder,
    env: &mut HashMap<String, Value>,
    node: &NodeProto,
) -> Result<(), NirError> {
    let out_name = node
        .output
        .first()
        .ok_or_else(|| malformed(format!("node {:?} has no output", node.name)))?
        .clone();
    let op_type = node.op_type.as_str();
    if op_type == "Constant" {
        let value = constant_attr(node)?;
        env.insert(out_name, value);
        return Ok(());
    }
    let args: Vec<&String> = node.input.iter().filter(|n| !n.is_empty()).collect();
    let id = match op_type {
        "Gather" => {
            if args.len() != 2 {
                return Err(malformed("Gather takes data and indices"));
            }
            let (indices, indices_shape) = match env.get(args[1].as_str()) {
                Some(Value::Const(t, Some(ints))) => (ints.clone(), t.shape().to_vec()),
                _ => {
                    return Err(malformed(
                        "Gather indices must be a constant integer tensor",
                    ))
                }
            };
            let data = materialize(b, env, args[0])?;
            let rank = b.shape(data).len();
            let axis = normalize_axis(attr_int(node, "axis", 0), rank)?;
            let dim = b.shape(data)[axis] as i64;
            let indices = indices
                .iter()
                .map(|&i| {
                    let j = if i < 0 { i + dim } else { i };
                    if j < 0 || j >= dim {
                        Err(malformed(format!(
                            "Gather index {i} out of range for size {dim}"
                        )))
                    } else {
                        Ok(j as usize)
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            b.add_node(
                Op::Gather {
                    axis,
                    indices,
                    indices_shape,
                },
                vec![data],
            )?
        }
        _ => {
            let operands = args
                .iter()
                .map(|n| materialize(b, env, n))
                .collect::<Result<Vec<_>, _>>()?;
            let op = match op_type {
                "Add" => Op::Add,
                "Sub" => Op::Sub,
                "Mul" => Op::Mul,
                "Div" => Op::Div,
                "Sign" => Op::Sign,
                "Relu" => Op::Relu,
                "Exp" => Op::Exp,
                "Concat" => {
                    let rank = operands.first().map(|o| b.shape(*o).len()).unwrap_or(1);
                    Op::Concat {
                        axis: normalize_axis(attr_int(node, "axis", 0), rank)?,
                    }
                }
                "Gemm" => Op::Gemm {
                    alpha: attr_float(node, "alpha")?,
                    beta: attr_float(node, "beta")?,
                    trans_a: attr_int(node, "transA", 0) != 0,
                    trans_b: attr_int(node, "transB", 0) != 0,
                },
                other => return Err(NirError::UnsupportedOperator(other.to_string())),
            };
            b.add_node(op, operands)?
        }
    };
    env.insert(out_name, Value::Node(id));
    Ok(())
}

fn constant_attr(node: &NodeProto) -> Result<Value, NirError> {
    let a = node
        .attribute
        .first()
        .ok_or_else(|| malformed("Constant node without a value attribute"))?;
    let from_f32 =
        |v: f32| rational::from_f32(v).ok_or_else(|| malformed("non-finite Constant value"));
    Ok(match a.name.as_str() {
        "value" => {
            let t =
                a.t.as_ref()
                    .ok_or_else(|| malformed("Constant value is not a tensor"))?;
            let (t, ints) = decode_tensor(t)?;
            Value::Const(t, ints)
        }
        "value_float" => Value::Const(Tensor::scalar(from_f32(a.f.unwrap_or(0.0))?), None),
        "value_floats" => Value::Const(
            Tensor::vector(
                a.floats
                    .iter()
                    .map(|&v| from_f32(v))
                    .collect::<Result<_, _>>()?,
            ),
            None,
        ),
        "value_int" => {
            let v = a.i.unwrap_or(0);
            Value::Const(Tensor::scalar(rational::int(v)), Some(vec![v]))
        }
        "value_ints" => Value::Const(
            Tensor::vector(a.ints.iter().map(|&v| rational::int(v)).collect()),
            Some(a.ints.clone()),
        ),
        other => return Err(malformed(format!("unsupported Constant attribute {other}"))),
    })
}

fn value_info(name: String, elem_type: i32, shape: &[usize]) -> ValueInfoProto {
    ValueInfoProto {
        name,
        r#type: Some(TypeProto {
            tensor_type: Some(TypeProtoTensor {
                elem_type,
                shape: Some(TensorShapeProto {
                    dim: shape
                        .iter()
                        .map(|&d| Dimension {
                            dim_value: Some(d as i64),
                            dim_param: None,
                        })
                        .collect(),
                }),
            }),
        }),
        doc_string: String::new(),
    }
}

fn int_attr(name: &str, v: i64) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        i: Some(v),
        r#type: attribute_type::INT,
        ..Default::default()
    }
}

fn float_attr(
    name: &str,
    v: &Rational,
    node: usize,
    precision: Precision,
    rounded: &mut Vec<usize>,
) -> Result<AttributeProto, NirError> {
    if !rational::is_exact_f32(v) {
        match precision {
            Precision::Strict => {
                return Err(NirError::UnserializableExact {
                    node,
                    value: rational::display(v),
                    width: "float32 attribute",
                })
            }
            Precision::Lossy => rounded.push(node),
        }
    }
    Ok(AttributeProto {
        name: name.into(),
        f: Some(rational::to_f64(v) as f32),
        r#type: attribute_type::FLOAT,
        ..Default::default()
    })
}

/// Serializes a graph, failing on constants that are not exact doubles.
pub fn emit_onnx(graph: &NirGraph) -> Result<Vec<u8>, NirError> {
    emit_onnx_with(graph, Precision::Strict).map(|e| e.bytes)
}

pub fn emit_onnx_with(graph: &NirGraph, precision: Precision) -> Result<Emitted, NirError> {
    let input_name = "input".to_string();
    let name_of = |id: NodeId| {
        if id == graph.input() {
            input_name.clone()
        } else {
            format!("n{}", id.0)
        }
    };
    let mut rounded = Vec::new();
    let mut nodes = Vec::new();
    let mut initializers = Vec::new();
    for id in graph.topo_order() {
        let node = graph.node(id);
        let inputs: Vec<String> = node.inputs.iter().map(|&i| name_of(i)).collect();
        let mut proto = NodeProto {
            input: inputs,
            output: vec![name_of(id)],
            name: format!("node{}", id.0),
            op_type: node.op.name().to_string(),
            ..Default::default()
        };
        match &node.op {
            Op::Input => continue,
            Op::Constant(t) => {
                let mut data = Vec::with_capacity(t.numel());
                let mut lossy = false;
                for v in t.data() {
                    if !rational::is_exact_f64(v) {
                        if precision == Precision::Strict {
                            return Err(NirError::UnserializableExact {
                                node: id.0,
                                value: rational::display(v),
                                width: "double",
                            });
                        }
                        lossy = true;
                    }
                    data.push(rational::to_f64(v));
                }
                if lossy {
                    rounded.push(id.0);
                }
                initializers.push(TensorProto {
                    dims: t.shape().iter().map(|&d| d as i64).collect(),
                    data_type: data_type::DOUBLE,
                    double_data: data,
                    name: name_of(id),
                    ..Default::default()
                });
                continue;
            }
            Op::Concat { axis } => proto.attribute.push(int_attr("axis", *axis as i64)),
            Op::Gather {
                axis,
                indices,
                indices_shape,
            } => {
                let idx_name = format!("n{}_indices", id.0);
                initializers.push(TensorProto {
                    dims: indices_shape.iter().map(|&d| d as i64).collect(),
                    data_type: data_type::INT64,
                    int64_data: indices.iter().map(|&i| i as i64).collect(),
                    name: idx_name.clone(),
                    ..Default::default()
                });
                proto.input.push(idx_name);
                proto.attribute.push(int_attr("axis", *axis as i64));
            }
            Op::Gemm {
                alpha,
                beta,
                trans_a,
                trans_b,
            } => {
                proto
                    .attribute
                    .push(float_attr("alpha", alpha, id.0, precision, &mut rounded)?);
                proto
                    .attribute
                    .push(float_attr("beta", beta, id.0, precision, &mut rounded)?);
                proto.attribute.push(int_attr("transA", *trans_a as i64));
                proto.attribute.push(int_attr("transB", *trans_b as i64));
            }
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Sign | Op::Relu | Op::Exp => {}
        }
        nodes.push(proto);
    }
    let outputs = graph
        .outputs()
        .iter()
        .map(|&o| value_info(name_of(o), data_type::DOUBLE, &graph.node(o).shape))
        .collect();
    let model = ModelProto {
        ir_version: IR_VERSION,
        producer_name: "nnspec".into(),
        producer_version: env!("CARGO_PKG_VERSION").into(),
        graph: Some(GraphProto {
            node: nodes,
            name: graph.name().to_string(),
            initializer: initializers,
            input: vec![value_info(
                input_name.clone(),
                data_type::DOUBLE,
                graph.input_shape(),
            )],
            output: outputs,
            ..Default::default()
        }),
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: OPSET_VERSION,
        }],
        ..Default::default()
    };
    Ok(Emitted {
        bytes: model.encode_to_vec(),
        rounded_nodes: rounded,
    })
}

/// Builds a single-node model around an arbitrary operator name; used to
/// exercise the import boundary.
pub fn single_op_model(op_type: &str, width: usize) -> Vec<u8> {
    let model = ModelProto {
        ir_version: IR_VERSION,
        graph: Some(GraphProto {
            node: vec![NodeProto {
                input: vec!["x".into()],
                output: vec!["y".into()],
                op_type: op_type.into(),
                ..Default::default()
            }],
            name: op_type.to_lowercase(),
            input: vec![value_info("x".into(), data_type::FLOAT, &[1, width])],
            output: vec![value_info("y".into(), data_type::FLOAT, &[1, width])],
            ..Default::default()
        }),
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: OPSET_VERSION,
        }],
        ..Default::default()
    };
    model.encode_to_vec()
}

/// True when every constant of the graph survives a float64 round trip.
pub fn exactly_serializable(graph: &NirGraph) -> bool {
    graph.nodes().iter().all(|n| match &n.op {
        Op::Constant(t) => t.data().iter().all(rational::is_exact_f64),
        Op::Gemm { alpha, beta, .. } => {
            rational::is_exact_f32(alpha) && rational::is_exact_f32(beta)
        }
        _ => true,
    })
}

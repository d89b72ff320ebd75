//! One-vs-one SVM classifiers: loading from JSON, a direct reference
//! implementation of the decision function, and translation into a NIR graph.
//!
//! Dual coefficients follow the scikit-learn/libsvm one-vs-one layout: row
//! `r` of `dual_coef` holds, for every support vector of class `c`, its
//! coefficient in the classifier opposing `c` to class `r` (if `r < c`) or
//! `r + 1` (if `r >= c`). Coefficients are signed, so the decision value of
//! pair `(i, j)` is `intercept + sum coef * K(x, s)` over the support vectors
//! of both classes, and a positive value votes for `i`.

use std::path::Path;

use num_traits::{One, Signed, Zero};
use serde_json::Value;
use thiserror::Error;

use crate::nir::{GraphBuilder, NirError, NirGraph, NodeId, Op, Tensor};
use crate::rational::{self, Rational};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SvmError {
    #[error("invalid or missing field `{0}`")]
    SchemaError(String),
    #[error("inconsistent counts: {0}")]
    InconsistentCounts(String),
    #[error("input has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Graph(#[from] NirError),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Kernel {
    Linear,
    Poly {
        gamma: Rational,
        coef0: Rational,
        degree: u32,
    },
    Rbf {
        gamma: Rational,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SvmModel {
    pub n_classes: usize,
    pub kernel: Kernel,
    pub support_vectors: Vec<Vec<Rational>>,
    pub n_support: Vec<usize>,
    pub dual_coef: Vec<Vec<Rational>>,
    pub intercept: Vec<Rational>,
}

/// Class pairs in intercept order: (0,1), (0,2), ..., (m-2, m-1).
pub fn class_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .collect()
}

fn number(v: &Value, field: &str) -> Result<Rational, SvmError> {
    let text = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return Err(SvmError::SchemaError(field.into())),
    };
    let value = match text.split_once('/') {
        Some((n, d)) => rational::parse_decimal(n)
            .zip(rational::parse_decimal(d))
            .filter(|(_, d)| !d.is_zero())
            .map(|(n, d)| n / d),
        None => rational::parse_decimal(&text),
    };
    value.ok_or_else(|| SvmError::SchemaError(field.into()))
}

fn count(v: &Value, field: &str) -> Result<usize, SvmError> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| SvmError::SchemaError(field.into()))
}

fn field<'a>(obj: &'a Value, name: &str) -> Result<&'a Value, SvmError> {
    obj.get(name)
        .ok_or_else(|| SvmError::SchemaError(name.into()))
}

fn array<'a>(v: &'a Value, name: &str) -> Result<&'a Vec<Value>, SvmError> {
    v.as_array()
        .ok_or_else(|| SvmError::SchemaError(name.into()))
}

fn numbers(v: &Value, name: &str) -> Result<Vec<Rational>, SvmError> {
    array(v, name)?.iter().map(|x| number(x, name)).collect()
}

impl SvmModel {
    pub fn from_json(text: &str) -> Result<Self, SvmError> {
        let root: Value = serde_json::from_str(text)
            .map_err(|e| SvmError::SchemaError(format!("<document>: {e}")))?;
        let n_classes = count(field(&root, "n_classes")?, "n_classes")?;
        let k = field(&root, "kernel")?;
        let kind = field(k, "type")
            .ok()
            .and_then(Value::as_str)
            .ok_or_else(|| SvmError::SchemaError("kernel.type".into()))?;
        let gamma = || {
            number(
                field(k, "gamma").map_err(|_| SvmError::SchemaError("kernel.gamma".into()))?,
                "kernel.gamma",
            )
        };
        let kernel = match kind {
            "linear" => Kernel::Linear,
            "poly" => Kernel::Poly {
                gamma: gamma()?,
                coef0: match k.get("coef0") {
                    Some(v) => number(v, "kernel.coef0")?,
                    None => Rational::zero(),
                },
                degree: match k.get("degree") {
                    Some(v) => count(v, "kernel.degree")? as u32,
                    None => 3,
                },
            },
            "rbf" => Kernel::Rbf { gamma: gamma()? },
            _ => return Err(SvmError::SchemaError("kernel.type".into())),
        };
        let support_vectors = array(field(&root, "support_vectors")?, "support_vectors")?
            .iter()
            .map(|row| numbers(row, "support_vectors"))
            .collect::<Result<Vec<_>, _>>()?;
        let n_support = array(field(&root, "n_support")?, "n_support")?
            .iter()
            .map(|v| count(v, "n_support"))
            .collect::<Result<Vec<_>, _>>()?;
        let dual_coef = array(field(&root, "dual_coef")?, "dual_coef")?
            .iter()
            .map(|row| numbers(row, "dual_coef"))
            .collect::<Result<Vec<_>, _>>()?;
        let intercept = numbers(field(&root, "intercept")?, "intercept")?;
        let model = SvmModel {
            n_classes,
            kernel,
            support_vectors,
            n_support,
            dual_coef,
            intercept,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, SvmError> {
        let text = std::fs::read_to_string(path).map_err(|e| SvmError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let nums = |v: &[Rational]| -> Value {
            Value::Array(
                v.iter()
                    .map(|x| Value::String(rational::display(x)))
                    .collect(),
            )
        };
        let kernel = match &self.kernel {
            Kernel::Linear => serde_json::json!({"type": "linear"}),
            Kernel::Poly {
                gamma,
                coef0,
                degree,
            } => serde_json::json!({
                "type": "poly",
                "gamma": rational::display(gamma),
                "coef0": rational::display(coef0),
                "degree": degree,
            }),
            Kernel::Rbf { gamma } => {
                serde_json::json!({"type": "rbf", "gamma": rational::display(gamma)})
            }
        };
        let doc = serde_json::json!({
            "n_classes": self.n_classes,
            "kernel": kernel,
            "support_vectors": self.support_vectors.iter().map(|r| nums(r)).collect::<Vec<_>>(),
            "n_support": self.n_support,
            "dual_coef": self.dual_coef.iter().map(|r| nums(r)).collect::<Vec<_>>(),
            "intercept": nums(&self.intercept),
        });
        serde_json::to_string_pretty(&doc).expect("JSON values always serialize")
    }

    pub fn feature_dim(&self) -> usize {
        self.support_vectors.first().map_or(0, Vec::len)
    }

    pub fn n_pairs(&self) -> usize {
        self.n_classes * self.n_classes.saturating_sub(1) / 2
    }

    fn validate(&self) -> Result<(), SvmError> {
        let m = self.n_classes;
        let bad = |msg: String| Err(SvmError::InconsistentCounts(msg));
        if m < 2 {
            return bad(format!("n_classes must be at least 2, got {m}"));
        }
        if self.n_support.len() != m {
            return bad(format!(
                "n_support has {} entries for {m} classes",
                self.n_support.len()
            ));
        }
        if let Some(c) = self.n_support.iter().position(|&k| k == 0) {
            return bad(format!("class {c} has no support vectors"));
        }
        let total: usize = self.n_support.iter().sum();
        if self.support_vectors.len() != total {
            return bad(format!(
                "n_support sums to {total} but there are {} support vectors",
                self.support_vectors.len()
            ));
        }
        let d = self.feature_dim();
        if d == 0 || self.support_vectors.iter().any(|s| s.len() != d) {
            return bad("support vectors must share a positive dimension".into());
        }
        if self.dual_coef.len() != m - 1 || self.dual_coef.iter().any(|r| r.len() != total) {
            return bad(format!("dual_coef must be {} x {total}", m - 1));
        }
        if self.intercept.len() != self.n_pairs() {
            return bad(format!(
                "{m} classes need {} intercepts, got {}",
                self.n_pairs(),
                self.intercept.len()
            ));
        }
        if let Kernel::Poly { degree: 0, .. } = self.kernel {
            return bad("polynomial degree must be positive".into());
        }
        Ok(())
    }

    /// First support-vector row of each class.
    fn class_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.n_classes);
        let mut acc = 0;
        for &k in &self.n_support {
            offsets.push(acc);
            acc += k;
        }
        offsets
    }

    /// Signed coefficient of support vector `sv` (of class `class`) in the
    /// classifier for `pair`, or zero when the vector does not take part.
    fn pair_coef(&self, pair: (usize, usize), class: usize, sv: usize) -> Rational {
        let (i, j) = pair;
        if class == i {
            self.dual_coef[j - 1][sv].clone()
        } else if class == j {
            self.dual_coef[i][sv].clone()
        } else {
            Rational::zero()
        }
    }

    fn class_of(&self, sv: usize) -> usize {
        let mut acc = 0;
        for (c, &k) in self.n_support.iter().enumerate() {
            acc += k;
            if sv < acc {
                return c;
            }
        }
        unreachable!("support vector index out of range")
    }

    fn kernel_value(&self, x: &[Rational], s: &[Rational]) -> Rational {
        let dot = || x.iter().zip(s).map(|(a, b)| a * b).sum::<Rational>();
        match &self.kernel {
            Kernel::Linear => dot(),
            Kernel::Poly {
                gamma,
                coef0,
                degree,
            } => num_traits::pow(gamma * dot() + coef0, *degree as usize),
            Kernel::Rbf { gamma } => {
                let dist: Rational = x
                    .iter()
                    .zip(s)
                    .map(|(a, b)| {
                        let d = a - b;
                        &d * &d
                    })
                    .sum();
                rational::exp(&(-(gamma * dist))).value
            }
        }
    }

    /// Pairwise decision values (intercept order), computed directly.
    #[allow(clippy::needless_range_loop)]
    pub fn decision_values(&self, x: &[Rational]) -> Result<Vec<Rational>, SvmError> {
        if x.len() != self.feature_dim() {
            return Err(SvmError::DimensionMismatch {
                expected: self.feature_dim(),
                found: x.len(),
            });
        }
        let kernels: Vec<Rational> = self
            .support_vectors
            .iter()
            .map(|s| self.kernel_value(x, s))
            .collect();
        let offsets = self.class_offsets();
        Ok(class_pairs(self.n_classes)
            .into_iter()
            .zip(&self.intercept)
            .map(|((i, j), b)| {
                let mut v = b.clone();
                for class in [i, j] {
                    for sv in offsets[class]..offsets[class] + self.n_support[class] {
                        v += self.pair_coef((i, j), class, sv) * &kernels[sv];
                    }
                }
                v
            })
            .collect())
    }

    /// Vote counts per class: a positive pair value votes for the first class
    /// of the pair, a negative one for the second, zero for neither.
    pub fn decision(&self, x: &[Rational]) -> Result<Vec<u32>, SvmError> {
        let values = self.decision_values(x)?;
        let mut scores = vec![0u32; self.n_classes];
        for ((i, j), v) in class_pairs(self.n_classes).into_iter().zip(values) {
            if v.is_positive() {
                scores[i] += 1;
            } else if v.is_negative() {
                scores[j] += 1;
            }
        }
        Ok(scores)
    }
}

/// Translates the classifier into a graph computing the vote vector.
///
/// Votes are `A . sign(v) + b` with `A[c, p] = +-1/2` for the members of pair
/// `p` and `b[c] = (m - 1) / 2`, so a pair whose decision value is exactly
/// zero gives half a vote to each side.
pub fn svm_to_nir(svm: &SvmModel) -> Result<NirGraph, SvmError> {
    svm.validate()?;
    let d = svm.feature_dim();
    let total = svm.support_vectors.len();
    let m = svm.n_classes;
    let pairs = class_pairs(m);
    let p = pairs.len();
    let sv_data: Vec<Rational> = svm.support_vectors.iter().flatten().cloned().collect();
    let transposed = Op::Gemm {
        alpha: Rational::one(),
        beta: Rational::one(),
        trans_a: false,
        trans_b: true,
    };

    let mut b = GraphBuilder::new();
    let x = b.input(vec![d])?;
    let row = b.to_row(x)?;
    let kernel = match &svm.kernel {
        Kernel::Linear => {
            let s = b.constant(Tensor::matrix(total, d, sv_data)?);
            b.add_node(transposed, vec![row, s])?
        }
        Kernel::Poly {
            gamma,
            coef0,
            degree,
        } => {
            let s = b.constant(Tensor::matrix(total, d, sv_data)?);
            let mut base = b.add_node(transposed, vec![row, s])?;
            if !gamma.is_one() {
                let g = b.scalar(gamma.clone());
                base = b.binary(Op::Mul, base, g)?;
            }
            if !coef0.is_zero() {
                let c = b.scalar(coef0.clone());
                base = b.binary(Op::Add, base, c)?;
            }
            let mut acc = base;
            for _ in 1..*degree {
                acc = b.binary(Op::Mul, acc, base)?;
            }
            acc
        }
        Kernel::Rbf { gamma } => {
            // ||x - s||^2 = ||x||^2 - 2 x.s + ||s||^2
            let minus_two = rational::int(-2);
            let scaled =
                Tensor::matrix(total, d, sv_data.iter().map(|v| v * &minus_two).collect())?;
            let s = b.constant(scaled);
            let cross = b.add_node(transposed, vec![row, s])?;
            let squares = b.binary(Op::Mul, row, row)?;
            let ones = b.constant(Tensor::matrix(d, total, vec![Rational::one(); d * total])?);
            let norms: Vec<Rational> = svm
                .support_vectors
                .iter()
                .map(|s| s.iter().map(|v| v * v).sum())
                .collect();
            let norms = b.constant(Tensor::vector(norms));
            let both = b.add_node(Op::gemm(), vec![squares, ones, norms])?;
            let dist = b.binary(Op::Add, both, cross)?;
            let neg_gamma = b.scalar(-gamma.clone());
            let arg = b.binary(Op::Mul, dist, neg_gamma)?;
            b.unary(Op::Exp, arg)?
        }
    };

    let mut dual = vec![Rational::zero(); total * p];
    for sv in 0..total {
        let class = svm.class_of(sv);
        for (k, &pair) in pairs.iter().enumerate() {
            dual[sv * p + k] = svm.pair_coef(pair, class, sv);
        }
    }
    let dual = b.constant(Tensor::matrix(total, p, dual)?);
    let summed = b.add_node(Op::gemm(), vec![kernel, dual])?;
    let intercept = b.constant(Tensor::matrix(1, p, svm.intercept.clone())?);
    let pre_sign = b.binary(Op::Add, summed, intercept)?;
    let signs = b.unary(Op::Sign, pre_sign)?;

    let half = rational::ratio(1, 2);
    let mut votes = vec![Rational::zero(); p * m];
    for (k, &(i, j)) in pairs.iter().enumerate() {
        votes[k * m + i] = half.clone();
        votes[k * m + j] = -half.clone();
    }
    let votes = b.constant(Tensor::matrix(p, m, votes)?);
    let bias = b.constant(Tensor::vector(vec![rational::ratio(m as i64 - 1, 2); m]));
    let scores = b.add_node(Op::gemm(), vec![signs, votes, bias])?;
    let out = b.flatten_leading(scores)?;
    Ok(b.finish("svm", vec![out])?)
}

/// The node holding the pairwise decision values (the operand of `Sign`).
pub fn pre_sign_node(graph: &NirGraph) -> Option<NodeId> {
    graph
        .nodes()
        .iter()
        .find(|n| matches!(n.op, Op::Sign))
        .map(|n| n.inputs[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nir::{evaluate, forward};
    use crate::rational::int;

    fn binary_linear() -> SvmModel {
        SvmModel::from_json(
            r#"{"n_classes": 2, "kernel": {"type": "linear"},
                "support_vectors": [[1, 0], [0, 1]], "n_support": [1, 1],
                "dual_coef": [[1, -1]], "intercept": [0]}"#,
        )
        .unwrap()
    }

    fn scores(graph: &NirGraph, x: &[i64]) -> Vec<Rational> {
        let x = Tensor::vector(x.iter().map(|&v| int(v)).collect());
        forward(graph, &x).unwrap().remove(0).into_data()
    }

    #[test]
    fn binary_linear_votes() {
        let svm = binary_linear();
        let x = [int(2), int(1)];
        assert_eq!(svm.decision_values(&x).unwrap(), vec![int(1)]);
        assert_eq!(svm.decision(&x).unwrap(), vec![1, 0]);
        let g = svm_to_nir(&svm).unwrap();
        assert_eq!(scores(&g, &[2, 1]), vec![int(1), int(0)]);
        assert_eq!(scores(&g, &[0, 3]), vec![int(0), int(1)]);
    }

    #[test]
    fn hyperplane_points_cast_no_reference_vote() {
        let svm = binary_linear();
        assert_eq!(svm.decision(&[int(1), int(1)]).unwrap(), vec![0, 0]);
        // The graph splits the vote.
        let g = svm_to_nir(&svm).unwrap();
        let half = rational::ratio(1, 2);
        assert_eq!(scores(&g, &[1, 1]), vec![half.clone(), half]);
    }

    #[test]
    fn missing_intercept_is_a_schema_error() {
        let err = SvmModel::from_json(
            r#"{"n_classes": 2, "kernel": {"type": "linear"},
                "support_vectors": [[1]], "n_support": [1, 1], "dual_coef": [[1]]}"#,
        )
        .unwrap_err();
        assert_eq!(err, SvmError::SchemaError("intercept".into()));
    }

    #[test]
    fn ten_classes_need_45_intercepts() {
        let sv: Vec<String> = (0..10).map(|i| format!("[{i}]")).collect();
        let text = format!(
            r#"{{"n_classes": 10, "kernel": {{"type": "linear"}}, "support_vectors": [{}],
                "n_support": [1,1,1,1,1,1,1,1,1,1], "dual_coef": [{}], "intercept": [0]}}"#,
            sv.join(","),
            ["[1,1,1,1,1,1,1,1,1,1]"; 9].join(",")
        );
        let err = SvmModel::from_json(&text).unwrap_err();
        assert!(matches!(err, SvmError::InconsistentCounts(msg) if msg.contains("45")));
    }

    #[test]
    fn kernel_stage_shapes() {
        let mut svm = binary_linear();
        assert_eq!(svm_to_nir(&svm).unwrap().count_op("Exp"), 0);
        svm.kernel = Kernel::Rbf {
            gamma: rational::ratio(1, 2),
        };
        let g = svm_to_nir(&svm).unwrap();
        assert_eq!(g.count_op("Exp"), 1);
        let x = [rational::ratio(3, 4), int(-1)];
        let eval = evaluate(&g, &Tensor::vector(x.to_vec())).unwrap();
        assert!(eval.approximate);
        let pre = eval.value(pre_sign_node(&g).unwrap()).data().to_vec();
        let want = svm.decision_values(&x).unwrap();
        let err = (&pre[0] - &want[0]).abs();
        assert!(err <= want[0].abs() * rational::ratio(1, 1_000_000_000_000));
    }

    #[test]
    fn degenerate_poly_matches_linear() {
        let linear = binary_linear();
        let mut poly = linear.clone();
        poly.kernel = Kernel::Poly {
            gamma: int(1),
            coef0: int(0),
            degree: 1,
        };
        let (gl, gp) = (svm_to_nir(&linear).unwrap(), svm_to_nir(&poly).unwrap());
        for x in [[3, -2], [-1, 4], [0, 0], [5, 5]] {
            assert_eq!(scores(&gl, &x), scores(&gp, &x));
        }
    }

    #[test]
    fn json_round_trip() {
        let mut svm = binary_linear();
        svm.kernel = Kernel::Poly {
            gamma: rational::ratio(1, 10),
            coef0: int(1),
            degree: 2,
        };
        assert_eq!(SvmModel::from_json(&svm.to_json()).unwrap(), svm);
    }
}

//! Dense ReLU networks and one-vs-one SVMs evaluated directly from their
//! parameters, plus random generators for both.

use std::sync::Arc;

use nnspec::nir::{mlp, NirGraph};
use nnspec::svm::{Kernel, SvmModel};
use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;

use super::fm::{Con, Lin, Rel};
use super::{q, Q};

/// `layers[i] = (weights [in x out], bias)`; ReLU after all but the last.
#[derive(Clone, Debug)]
pub struct Dense {
    pub layers: Vec<(Vec<Vec<Q>>, Vec<Q>)>,
}

impl Dense {
    pub fn random(
        rng: &mut impl Rng,
        n_in: usize,
        hidden: &[usize],
        n_out: usize,
        denom: i64,
    ) -> Dense {
        let mut widths = vec![n_in];
        widths.extend_from_slice(hidden);
        widths.push(n_out);
        let layers = widths
            .windows(2)
            .map(|w| {
                let weights = (0..w[0])
                    .map(|_| {
                        (0..w[1])
                            .map(|_| q(rng.gen_range(-2 * denom..=2 * denom), denom))
                            .collect()
                    })
                    .collect();
                let bias = (0..w[1])
                    .map(|_| q(rng.gen_range(-denom..=denom), denom))
                    .collect();
                (weights, bias)
            })
            .collect();
        Dense { layers }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].0.len()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().1.len()
    }

    pub fn n_relu(&self) -> usize {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.1.len())
            .sum()
    }

    pub fn forward(&self, x: &[Q]) -> Vec<Q> {
        assert_eq!(x.len(), self.n_in());
        let mut h = x.to_vec();
        for (k, (w, b)) in self.layers.iter().enumerate() {
            let mut z = b.clone();
            for (i, hi) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj += &w[i][j] * hi;
                }
            }
            if k + 1 < self.layers.len() {
                for zj in z.iter_mut() {
                    if zj.is_negative() {
                        *zj = Q::zero();
                    }
                }
            }
            h = z;
        }
        h
    }

    pub fn graph(&self, name: &str) -> Arc<NirGraph> {
        Arc::new(mlp(name, &self.layers).expect("well-formed layers"))
    }

    /// Outputs as affine forms over the inputs for one activation pattern,
    /// with the constraints that make the pattern consistent.
    pub fn pattern(&self, active: &dyn Fn(usize) -> bool) -> (Vec<Lin>, Vec<Con>) {
        let mut h: Vec<Lin> = (0..self.n_in()).map(Lin::var).collect();
        let mut cons = Vec::new();
        let mut neuron = 0;
        for (k, (w, b)) in self.layers.iter().enumerate() {
            let mut z: Vec<Lin> = b.iter().map(|c| Lin::konst(c.clone())).collect();
            for (i, hi) in h.iter().enumerate() {
                for (j, zj) in z.iter_mut().enumerate() {
                    *zj = zj.plus(hi, &w[i][j]);
                }
            }
            if k + 1 < self.layers.len() {
                for zj in z.iter_mut() {
                    if active(neuron) {
                        cons.push(Con::new(zj.clone(), Rel::Ge));
                    } else {
                        cons.push(Con::new(zj.clone(), Rel::Le));
                        *zj = Lin::default();
                    }
                    neuron += 1;
                }
            }
            h = z;
        }
        (h, cons)
    }
}

/// Pairs in the one-vs-one order (0,1), (0,2), ..., (m-2,m-1).
pub fn pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            out.push((i, j));
        }
    }
    out
}

/// `2^-bits` fixed-point approximation of `e^x`, far more precise than any
/// tolerance the tests use.
pub fn exp_fixed(x: &Q, bits: u32) -> Q {
    // Halve until |y| <= 1/2, sum the series, square back.
    let mut halvings = 0u32;
    let mut y = x.clone();
    while y.abs() > q(1, 2) {
        y /= Q::from_integer(2.into());
        halvings += 1;
    }
    let guard = bits + 64 + halvings;
    let scale = BigInt::one() << guard;
    let y_fixed = (&y * Q::from_integer(scale.clone())).round().to_integer();
    let mut term = scale.clone();
    let mut sum = scale.clone();
    for k in 1u64.. {
        term = (&term * &y_fixed) / (&scale * BigInt::from(k));
        if term.is_zero() {
            break;
        }
        sum += &term;
    }
    for _ in 0..halvings {
        sum = (&sum * &sum) >> guard;
    }
    Q::new(sum, scale)
}

fn kernel(svm: &SvmModel, x: &[Q], s: &[Q]) -> Q {
    let dot: Q = x.iter().zip(s).map(|(a, b)| a * b).sum();
    match &svm.kernel {
        Kernel::Linear => dot,
        Kernel::Poly {
            gamma,
            coef0,
            degree,
        } => {
            let base = gamma * dot + coef0;
            (0..*degree).fold(Q::one(), |acc, _| acc * &base)
        }
        Kernel::Rbf { gamma } => {
            let d: Q = x.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
            exp_fixed(&-(gamma * d), 400)
        }
    }
}

/// Pairwise decision values following the libsvm coefficient layout.
#[allow(clippy::needless_range_loop)]
pub fn svm_values(svm: &SvmModel, x: &[Q]) -> Vec<Q> {
    let k: Vec<Q> = svm
        .support_vectors
        .iter()
        .map(|s| kernel(svm, x, s))
        .collect();
    let mut start = vec![0];
    for n in &svm.n_support {
        start.push(start.last().unwrap() + n);
    }
    pairs(svm.n_classes)
        .into_iter()
        .zip(&svm.intercept)
        .map(|((i, j), b)| {
            let mut v = b.clone();
            for sv in start[i]..start[i + 1] {
                v += &svm.dual_coef[j - 1][sv] * &k[sv];
            }
            for sv in start[j]..start[j + 1] {
                v += &svm.dual_coef[i][sv] * &k[sv];
            }
            v
        })
        .collect()
}

/// Votes per class; an exact zero gives half a vote to each side.
pub fn svm_votes(svm: &SvmModel, values: &[Q]) -> Vec<Q> {
    let mut votes = vec![Q::zero(); svm.n_classes];
    for ((i, j), v) in pairs(svm.n_classes).into_iter().zip(values) {
        if v.is_positive() {
            votes[i] += Q::one();
        } else if v.is_negative() {
            votes[j] += Q::one();
        } else {
            votes[i] += q(1, 2);
            votes[j] += q(1, 2);
        }
    }
    votes
}

pub fn random_svm(rng: &mut impl Rng, n_classes: usize, dim: usize, kernel: Kernel) -> SvmModel {
    let n_support: Vec<usize> = (0..n_classes).map(|_| rng.gen_range(1..=3)).collect();
    let total: usize = n_support.iter().sum();
    let support_vectors = (0..total)
        .map(|_| (0..dim).map(|_| q(rng.gen_range(-16..=16), 8)).collect())
        .collect();
    let dual_coef = (0..n_classes - 1)
        .map(|_| (0..total).map(|_| q(rng.gen_range(-32..=32), 16)).collect())
        .collect();
    let intercept = (0..n_classes * (n_classes - 1) / 2)
        .map(|_| q(rng.gen_range(-16..=16), 16))
        .collect();
    SvmModel {
        n_classes,
        kernel,
        support_vectors,
        n_support,
        dual_coef,
        intercept,
    }
}

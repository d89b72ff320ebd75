//! Compiles a three-class one-vs-one SVM into a NIR graph and checks that
//! the graph's votes agree with the direct decision function.
//!
//! `cargo run --example svm_compile`

use nnspec::nir::{forward, Tensor};
use nnspec::rational::{display, ratio};
use nnspec::svm::{svm_to_nir, SvmModel};

const MODEL: &str = r#"{
  "n_classes": 3,
  "kernel": {"type": "poly", "gamma": 0.5, "coef0": 1, "degree": 2},
  "support_vectors": [[0, 1], [1, 0], [-1, -1], [0.5, -1]],
  "n_support": [1, 1, 2],
  "dual_coef": [[1, -1, -0.5, -0.5], [0.5, 0.25, -0.25, -0.5]],
  "intercept": [0.25, -0.5, 0]
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let svm = SvmModel::from_json(MODEL)?;
    let graph = svm_to_nir(&svm)?;
    println!("{graph}");

    for (a, b) in [(1, 3), (-2, 5), (4, -1), (0, 0)] {
        let x = vec![ratio(a, 2), ratio(b, 3)];
        let votes = forward(&graph, &Tensor::vector(x.clone()))?;
        let shown: Vec<String> = votes[0].data().iter().map(display).collect();
        let direct = svm.decision(&x)?;
        println!(
            "x = ({}, {}): graph votes [{}], decision() {direct:?}",
            display(&x[0]),
            display(&x[1]),
            shown.join(", ")
        );
    }
    Ok(())
}

//! Decides goals with the built-in exact prover: one holds, the other is
//! refuted by a counterexample that is replayed through the networks.
//!
//! `cargo run --example exact_verify`

use nnspec::cli::load_goals;
use nnspec::embed::{merge, EmbedOptions};
use nnspec::nir::mlp_from_ints;
use nnspec::nir::onnx::emit_onnx;
use nnspec::provers::{exact_verify, ExactOptions};
use nnspec::rational::display;

const SPEC: &str = "let nn = read_model \"nn.onnx\"
goal nonnegative: forall x0 x1: float.
  .- 1.0 .<= x0 .<= 1.0 -> .- 1.0 .<= x1 .<= 1.0 -> (nn @@ (x0, x1))[0] .>= 0.0
goal small: forall x0 x1: float.
  .- 1.0 .<= x0 .<= 1.0 -> .- 1.0 .<= x1 .<= 1.0 -> (nn @@ (x0, x1))[0] .<= 1.0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    // |x0 - x1| + |x0 + x1| / 2, computed with four ReLUs.
    let nn = mlp_from_ints(
        "nn",
        2,
        &[
            (
                vec![vec![2, -2, 2, -2], vec![-2, 2, 2, -2]],
                vec![0, 0, 0, 0],
            ),
            (vec![vec![2], vec![2], vec![1], vec![1]], vec![0]),
        ],
    )?;
    std::fs::write(dir.path().join("nn.onnx"), emit_onnx(&nn)?)?;
    std::fs::write(dir.path().join("abs.mls"), SPEC)?;

    for goal in load_goals(&dir.path().join("abs.mls"), None)? {
        let m = merge(&goal, EmbedOptions::default())?;
        let outcome = exact_verify(&m, ExactOptions::default())?;
        print!("{}: {}", goal.name, outcome.kind);
        if let Some(x) = &outcome.counterexample {
            let shown: Vec<String> = x.iter().map(display).collect();
            print!(
                " at ({}); goal holds there: {}",
                shown.join(", "),
                goal.eval(x)?
            );
        }
        println!();
    }
    Ok(())
}

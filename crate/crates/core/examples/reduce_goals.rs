//! Reduces a specification to quantifier-free goals over model
//! applications: vector quantifiers become scalar inputs and predicates are
//! unfolded.
//!
//! `cargo run --example reduce_goals`

use nnspec::interp::{reduce_all, Context};
use nnspec::nir::mlp_from_ints;
use nnspec::nir::onnx::emit_onnx;
use nnspec::speclang::load;

const SPEC: &str = "predicate in_unit (x: vector float) =
  forall i. 0 <= i < Vector.length x -> 0.0 .<= x[i] .<= 1.0

goal bounded:
  let nn = Model.read_model \"net.onnx\" in
  forall x: vector float. has_length x 2 -> in_unit x ->
    (nn @@ x)[0] .- (nn @@ x)[1] .<= 3.0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    // Two inputs, three hidden ReLUs, two outputs; weights are over 4.
    let net = mlp_from_ints(
        "net",
        4,
        &[
            (vec![vec![4, -2, 1], vec![2, 3, -4]], vec![0, 1, -1]),
            (vec![vec![1, 2], vec![-3, 1], vec![2, 2]], vec![0, 4]),
        ],
    )?;
    std::fs::write(dir.path().join("net.onnx"), emit_onnx(&net)?)?;

    let ast = load(SPEC)?;
    for goal in reduce_all(&ast, &Context::new(dir.path()))? {
        println!("{goal}");
        println!(
            "  {} inputs, {} model applications",
            goal.input_vars.len(),
            goal.model_apps.len()
        );
    }
    Ok(())
}

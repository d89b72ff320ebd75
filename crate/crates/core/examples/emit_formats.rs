//! Writes a merged goal as an ONNX model, a VNN-LIB property and a
//! self-contained SMT-LIB script.
//!
//! `cargo run --example emit_formats`

use nnspec::cli::load_goals;
use nnspec::embed::{merge, EmbedOptions};
use nnspec::emit::{emit_smtlib, emit_vnnlib, VnnLibOptions};
use nnspec::nir::mlp_from_ints;
use nnspec::nir::onnx::{emit_onnx, parse_onnx};

const SPEC: &str = "let nn = read_model \"nn.onnx\"
goal margin: forall x0 x1: float.
  0.0 .<= x0 .<= 1.0 -> .- 0.5 .<= x1 .<= 0.5 ->
  (nn @@ (x0, x1))[0] .>= (nn @@ (x0, x1))[1] .- 1.5
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let nn = mlp_from_ints(
        "nn",
        2,
        &[
            (vec![vec![2, -1], vec![1, 3]], vec![0, -1]),
            (vec![vec![1, -2], vec![2, 1]], vec![1, 0]),
        ],
    )?;
    std::fs::write(dir.path().join("nn.onnx"), emit_onnx(&nn)?)?;
    std::fs::write(dir.path().join("margin.mls"), SPEC)?;
    let goal = load_goals(&dir.path().join("margin.mls"), None)?.remove(0);
    let m = merge(&goal, EmbedOptions::default())?;

    let onnx = emit_onnx(&m.merged)?;
    let back = parse_onnx(&onnx)?;
    println!(
        "ONNX: {} bytes, re-parses isomorphic: {}",
        onnx.len(),
        back.isomorphic(&m.merged)
    );

    // By default the property is negated: a model of it is a counterexample.
    let vnn = emit_vnnlib(&m, VnnLibOptions::default())?;
    println!("\n{}", vnn.text);

    println!("{}", emit_smtlib(&m)?);
    Ok(())
}

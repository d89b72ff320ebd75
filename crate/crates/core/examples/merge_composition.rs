//! Merges a goal that composes two networks into a single network and
//! checks the merged network against the source terms.
//!
//! `cargo run --example merge_composition`

use nnspec::cli::load_goals;
use nnspec::embed::{merge, EmbedOptions, EmbedPolicy};
use nnspec::interp::Sym;
use nnspec::nir::onnx::emit_onnx;
use nnspec::nir::{forward, mlp_from_ints, Tensor};
use nnspec::rational::{display, ratio};

/// `nn2` reads the output of `nn1` together with a shifted input.
const SPEC: &str = "let nn1 = read_model \"nn1.onnx\"
let nn2 = read_model \"nn2.onnx\"
goal composed: forall x0 x1: float.
  0.0 .<= x0 .<= 1.0 -> 0.0 .<= x1 .<= 1.0 ->
  (nn2 @@ ((nn1 @@ x1)[0], x1 .+ 0.25))[0] .+ (nn1 @@ x0)[0] .<= 100.0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let nn1 = mlp_from_ints(
        "nn1",
        2,
        &[
            (vec![vec![2, -1]], vec![1, 0]),
            (vec![vec![1], vec![3]], vec![0]),
        ],
    )?;
    let nn2 = mlp_from_ints(
        "nn2",
        4,
        &[
            (vec![vec![1, 2], vec![-4, 1]], vec![0, 2]),
            (vec![vec![2], vec![1]], vec![-1]),
        ],
    )?;
    std::fs::write(dir.path().join("nn1.onnx"), emit_onnx(&nn1)?)?;
    std::fs::write(dir.path().join("nn2.onnx"), emit_onnx(&nn2)?)?;
    std::fs::write(dir.path().join("composed.mls"), SPEC)?;

    let goal = load_goals(&dir.path().join("composed.mls"), None)?.remove(0);
    println!("{goal}\n");
    let merged = merge(
        &goal,
        EmbedOptions {
            policy: EmbedPolicy::Terms,
            dedup: true,
        },
    )?;
    println!("{}", merged.merged);
    for (j, t) in merged.output_map.iter().enumerate() {
        println!("output {j} computes {t}");
    }

    for (a, b) in [(0, 0), (1, 3), (7, 2)] {
        let x = vec![ratio(a, 8), ratio(b, 4)];
        let out = forward(&merged.merged, &Tensor::vector(x.clone()))?;
        let outs = goal.app_outputs(&x)?;
        let direct = merged.output_map[0].eval(&|s| match s {
            Sym::Input(i) => x[i].clone(),
            Sym::Output { app, index } => outs[app][index].clone(),
        });
        println!(
            "x = ({}, {}): merged {} / source {}",
            display(&x[0]),
            display(&x[1]),
            display(&out[0].data()[0]),
            display(&direct)
        );
    }
    Ok(())
}

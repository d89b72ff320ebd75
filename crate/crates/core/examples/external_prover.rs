//! Dispatches a goal to the built-in prover and to an external one described
//! by a configuration file. The external prover here is a shell one-liner
//! that checks its property file exists and answers `unsat`.
//!
//! `cargo run --example external_prover`

use std::time::Duration;

use nnspec::cli::load_goals;
use nnspec::embed::{merge, EmbedOptions};
use nnspec::nir::mlp_from_ints;
use nnspec::nir::onnx::emit_onnx;
use nnspec::provers::{dispatch, parse_config, DispatchOptions, ProverChoice};

const CONFIG: &str = "[prover.stub]
command = test -s %{property} && test -s %{model} && echo unsat
pattern.valid = ^unsat
pattern.invalid = ^sat
";

const SPEC: &str = "let nn = read_model \"nn.onnx\"
goal bounded: forall x: float. 0.0 .<= x .<= 1.0 -> (nn @@ x)[0] .<= 3.0
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let nn = mlp_from_ints(
        "nn",
        1,
        &[
            (vec![vec![1, -1]], vec![0, 1]),
            (vec![vec![2], vec![1]], vec![0]),
        ],
    )?;
    std::fs::write(dir.path().join("nn.onnx"), emit_onnx(&nn)?)?;
    std::fs::write(dir.path().join("bounded.mls"), SPEC)?;
    let goal = load_goals(&dir.path().join("bounded.mls"), None)?.remove(0);
    let m = merge(&goal, EmbedOptions::default())?;

    let mut provers = vec![ProverChoice::Exact];
    provers.extend(
        parse_config(CONFIG)?
            .into_iter()
            .map(ProverChoice::External),
    );
    let opts = DispatchOptions {
        timeout: Duration::from_secs(10),
        artifacts: Some(dir.path().join("work")),
        ..DispatchOptions::default()
    };
    for outcome in dispatch(&m, &provers, &opts)? {
        println!(
            "{:6} {:8} {:.3}s {:?}",
            outcome.prover,
            outcome.kind.to_string(),
            outcome.wall_time,
            outcome.raw_output.trim()
        );
    }
    let mut files: Vec<String> = std::fs::read_dir(dir.path().join("work/bounded_stub"))?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    files.sort();
    println!("workspace files: {}", files.join(", "));
    Ok(())
}

//! Runs the `verify` subcommand in-process on a small specification and
//! prints the table and JSON reports with the exit code.
//!
//! `cargo run --example cli_report`

use nnspec::nir::mlp_from_ints;
use nnspec::nir::onnx::emit_onnx;

const SPEC: &str = "let nn = read_model \"nn.onnx\"
goal low: forall x: float. 0.0 .<= x .<= 1.0 -> (nn @@ x)[0] .>= 0.0
goal high: forall x: float. 0.0 .<= x .<= 1.0 -> (nn @@ x)[0] .<= 1.5
";

fn run(args: &[&str]) -> i32 {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = nnspec::cli::run(
        std::iter::once("nnspec").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    print!(
        "{}{}",
        String::from_utf8_lossy(&out),
        String::from_utf8_lossy(&err)
    );
    code
}

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
    let spec = dir.path().join("spec.mls");
    std::fs::write(&spec, SPEC)?;
    let spec = spec.to_str().expect("temporary paths are UTF-8");

    let code = run(&["verify", spec]);
    println!("exit code {code}\n");
    let code = run(&["verify", spec, "--goal", "high", "--format", "json"]);
    println!("exit code {code}");
    Ok(())
}

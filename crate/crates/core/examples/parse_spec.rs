//! Parses and type-checks a specification, prints it back, and shows the
//! diagnostic for an ill-typed one.
//!
//! `cargo run --example parse_spec`

use nnspec::speclang::{load, pretty};

const SPEC: &str = "type input = vector float

predicate in_unit (x: input) =
  forall i. 0 <= i < Vector.length x -> 0.0 .<= x[i] .<= 1.0

goal bounded:
  let nn = Model.read_model \"net.onnx\" in
  forall x: input. has_length x 2 -> in_unit x -> (nn @@ x)[0] .<= 10.0
";

fn main() {
    let ast = load(SPEC).expect("the specification type-checks");
    println!("{}", pretty(&ast));

    let bad = "goal g: forall x: float. x .+ 1 .>= 0.0";
    match load(bad) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("{}", e.diagnostic("bad.mls")),
    }
}

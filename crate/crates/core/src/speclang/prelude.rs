//! Theories available to every specification, written in the language
//! itself. Only the built-ins get special treatment; these are ordinary
//! definitions that the interpreter inlines.

use std::sync::OnceLock;

use crate::speclang::ast::SpecAst;
use crate::speclang::parser::parse;
use crate::speclang::types::{check_file, Globals};

pub const PRELUDE_SOURCE: &str = r#"type t = float

predicate Vector.forall_ (v: vector 'a) (f: 'a -> bool) =
  forall i. 0 <= i < length v -> f v[i]

predicate FeatureVector.valid (bounds: t -> bool) (v: vector t) =
  forall i. 0 <= i < length v -> bounds v[i]

predicate ClassRobustVector.bounded_by_epsilon (v: vector t) (eps: t) =
  forall i. 0 <= i < length v -> .- eps .<= v[i] .<= eps

predicate Label.valid (bounds: int -> bool) (j: int) =
  bounds j
"#;

pub struct Prelude {
    /// Type-checked prelude declarations.
    pub ast: SpecAst,
    pub(crate) globals: Globals,
}

pub fn prelude() -> &'static Prelude {
    static PRELUDE: OnceLock<Prelude> = OnceLock::new();
    PRELUDE.get_or_init(|| {
        let ast = parse(PRELUDE_SOURCE).expect("prelude parses");
        let (ast, globals) = check_file(ast, Globals::default()).expect("prelude type-checks");
        Prelude { ast, globals }
    })
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nnspec::cli::load_goals;
use nnspec::embed::{merge, EmbedOptions, EmbedPolicy, MergedGoal};
use nnspec::emit::{emit_smtlib, emit_vnnlib, VnnLibOptions};
use nnspec::interp::{Atom, Cmp, Formula, GoalFormula, InputVar, ModelApp, Sym, Term, VarRole};
use nnspec::nir::onnx::{emit_onnx, parse_onnx, single_op_model};
use nnspec::nir::{evaluate, forward, NirGraph, Op, Tensor};
use nnspec::provers::{exact_verify, ExactOptions, OutcomeKind};
use nnspec::svm::{pre_sign_node, svm_to_nir, Kernel, SvmModel};
use num_traits::{Signed, Zero};
use rand::Rng;

use common::fm::Lin;
use common::nets::{random_svm, svm_values, svm_votes, Dense};
use common::sx;
use common::{
    cli, close, q, random_multi_goal, random_property, refutes, rng, sample, write, GoalSpec, Q,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn flat(graph: &NirGraph, x: &[Q]) -> Vec<Q> {
    forward(graph, &Tensor::vector(x.to_vec()))
        .expect("forward")
        .into_iter()
        .flat_map(Tensor::into_data)
        .collect()
}

fn sym_value<'a>(x: &'a [Q], outs: &'a [Vec<Q>]) -> impl Fn(Sym) -> Q + 'a {
    move |s| match s {
        Sym::Input(i) => x[i].clone(),
        Sym::Output { app, index } => outs[app][index].clone(),
    }
}

fn merge_preservation() -> Outcome {
    let mut rng = rng(1);
    let policies = [
        EmbedPolicy::Auto,
        EmbedPolicy::Terms,
        EmbedPolicy::AppOutputs,
    ];
    let mut valuations = 0;
    let mut truths = [0usize; 2];
    for g in 0..100 {
        let spec = random_multi_goal(&mut rng, &format!("g{g}"));
        let goal = spec.formula();
        let opts = EmbedOptions {
            policy: policies[g % 3],
            dedup: g % 2 == 0,
        };
        let m = merge(&goal, opts).map_err(|e| format!("goal {g}: merge failed: {e}"))?;
        ensure!(
            m.goal.model_apps.len() == 1,
            "goal {g}: merged goal has several applications"
        );
        for _ in 0..1000 {
            let x = spec.point(&mut rng);
            let expected = spec.holds(&x);
            let source = goal.eval(&x).map_err(|e| e.to_string())?;
            let merged = m.goal.eval(&x).map_err(|e| e.to_string())?;
            ensure!(
                source == expected && merged == expected,
                "goal {g} at {x:?}: oracle {expected}, source {source}, merged {merged}"
            );
            let outs = spec.outputs(&x);
            let y = flat(&m.merged, &x);
            ensure!(y.len() == m.output_map.len(), "goal {g}: output count");
            for (k, t) in m.output_map.iter().enumerate() {
                let want = t.eval(&sym_value(&x, &outs));
                ensure!(
                    y[k] == want,
                    "goal {g} output {k} at {x:?}: {} != {want}",
                    y[k]
                );
            }
            truths[expected as usize] += 1;
            valuations += 1;
        }
    }
    Ok(format!(
        "{valuations} valuations agree exactly ({} true, {} false)",
        truths[1], truths[0]
    ))
}

const COMPOSITION_SPEC: &str = "let nn1 = read_model \"nn1.onnx\"
let nn2 = read_model \"nn2.onnx\"
goal composed: forall x0 x1 eps: float.
  .- 1.0 .<= x0 .<= 1.0 -> .- 1.0 .<= x1 .<= 1.0 -> 0.0 .<= eps .<= 0.5 ->
  (nn2 @@ ((nn1 @@ x1)[0], x1 .+ eps))[0] .+ (nn1 @@ x0)[0] .> 0.0
";

fn write_net(dir: &Path, name: &str, net: &Dense) {
    write(
        dir,
        name,
        emit_onnx(&net.graph(name)).expect("dyadic weights serialize"),
    );
}

fn composition() -> Outcome {
    let mut rng = rng(2);
    let nn1 = Dense::random(&mut rng, 1, &[3], 1, 4);
    let nn2 = Dense::random(&mut rng, 2, &[3], 1, 4);
    let dir = tempfile::tempdir().unwrap();
    write_net(dir.path(), "nn1.onnx", &nn1);
    write_net(dir.path(), "nn2.onnx", &nn2);
    let spec = write(dir.path(), "composed.mls", COMPOSITION_SPEC);
    let goals = load_goals(&spec, None).map_err(|e| e.diagnostic("composed.mls"))?;
    ensure!(goals.len() == 1, "expected one goal");
    let m = merge(&goals[0], EmbedOptions::default()).map_err(|e| e.to_string())?;
    let bounds = [(q(-1, 1), q(1, 1)), (q(-1, 1), q(1, 1)), (q(0, 1), q(1, 2))];
    for _ in 0..200 {
        let x: Vec<Q> = bounds
            .iter()
            .map(|(lo, hi)| sample(&mut rng, lo, hi, 1024))
            .collect();
        let inner = nn1.forward(&x[1..2])[0].clone();
        let want = &nn2.forward(&[inner, &x[1] + &x[2]])[0] + &nn1.forward(&x[0..1])[0];
        let got = flat(&m.merged, &x);
        ensure!(
            got == [want.clone()],
            "at {x:?}: merged {got:?}, expected {want}"
        );
    }
    let g = &m.merged;
    let input = g.input();
    let gather_of = |i: usize| {
        g.nodes().iter().position(|n| {
            n.inputs == [input] && matches!(&n.op, Op::Gather { indices, .. } if indices == &[i])
        })
    };
    let gathers: Vec<Option<usize>> = (0..3).map(gather_of).collect();
    ensure!(
        gathers.iter().all(Option::is_some),
        "missing Gather(0..2) of the input: {gathers:?}"
    );
    let (g1, g2) = (gathers[1].unwrap(), gathers[2].unwrap());
    let add1 = g
        .nodes()
        .iter()
        .position(|n| {
            n.op == Op::Add && {
                let mut ins: Vec<usize> = n.inputs.iter().map(|i| i.0).collect();
                ins.sort();
                ins == [g1.min(g2), g1.max(g2)]
            }
        })
        .ok_or("no Add(x1, eps) node")?;
    let reaches = |from: usize, to: usize| {
        let mut stack = vec![to];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            if n == from {
                return true;
            }
            if seen.insert(n) {
                stack.extend(g.nodes()[n].inputs.iter().map(|i| i.0));
            }
        }
        false
    };
    let concat = g
        .nodes()
        .iter()
        .enumerate()
        .find(|(k, n)| matches!(n.op, Op::Concat { .. }) && reaches(add1, *k))
        .map(|(k, _)| k)
        .ok_or("no Concat fed by the Add")?;
    let out = g.outputs()[0].0;
    ensure!(
        g.nodes()[out].op == Op::Add,
        "final node is {:?}, not Add",
        g.nodes()[out].op
    );
    ensure!(reaches(concat, out), "Concat does not feed the final Add");
    ensure!(
        reaches(gathers[0].unwrap(), out) && !reaches(gathers[0].unwrap(), concat),
        "nn1(x0) must join only at the final Add"
    );
    Ok(format!(
        "200 points exact; skeleton Gather(0,1,2) -> Add -> Concat -> final Add over {} nodes",
        g.len()
    ))
}

/// A point of [-3, 3]^dim whose coordinates have distinct prime
/// denominators, so that no decision value of a model with dyadic
/// parameters lands exactly on a tie.
fn off_lattice(rng: &mut impl Rng, dim: usize) -> Vec<Q> {
    const PRIMES: [i64; 4] = [61, 67, 71, 73];
    PRIMES[..dim]
        .iter()
        .map(|&p| loop {
            let n = rng.gen_range(-3 * p..=3 * p);
            if n % p != 0 {
                break q(n, p);
            }
        })
        .collect()
}

fn svm_compilation() -> Outcome {
    let mut rng = rng(3);
    let poly = |degree| Kernel::Poly {
        gamma: q(1, 2),
        coef0: q(1, 1),
        degree,
    };
    let rbf = || Kernel::Rbf { gamma: q(1, 4) };
    let models: Vec<(usize, usize, Kernel)> = vec![
        (2, 2, Kernel::Linear),
        (2, 3, poly(2)),
        (2, 2, rbf()),
        (3, 2, Kernel::Linear),
        (3, 3, poly(3)),
        (3, 2, rbf()),
        (10, 3, Kernel::Linear),
        (10, 2, poly(2)),
        (10, 3, rbf()),
        (2, 4, poly(3)),
    ];
    let mut skipped = 0;
    let tol = Q::new(1.into(), num_bigint::BigInt::from(10u64).pow(12));
    for (k, (classes, dim, kernel)) in models.into_iter().enumerate() {
        let is_rbf = matches!(kernel, Kernel::Rbf { .. });
        let svm = random_svm(&mut rng, classes, dim, kernel);
        let reloaded = SvmModel::from_json(&svm.to_json()).map_err(|e| e.to_string())?;
        ensure!(
            reloaded == svm,
            "model {k}: JSON round trip changed the model"
        );
        let graph = svm_to_nir(&reloaded).map_err(|e| e.to_string())?;
        let pre = pre_sign_node(&graph).ok_or("no Sign operand")?;
        for _ in 0..1000 {
            let x = off_lattice(&mut rng, dim);
            let values = svm_values(&svm, &x);
            let ev = evaluate(&graph, &Tensor::vector(x.clone())).map_err(|e| e.to_string())?;
            let got_pre = ev.value(pre).data().to_vec();
            let votes: Vec<Q> = ev.value(graph.outputs()[0]).data().to_vec();
            if classes == 10 {
                ensure!(
                    votes
                        .iter()
                        .all(|v| v.is_integer() && !v.is_negative() && *v <= q(9, 1)),
                    "model {k}: votes {votes:?} outside 0..=9"
                );
            }
            if is_rbf {
                let eps = Q::new(1.into(), num_bigint::BigInt::from(10u64).pow(12));
                for (a, b) in got_pre.iter().zip(&values) {
                    if b.abs() > eps {
                        ensure!(close(a, b, &tol), "model {k}: pre-Sign {a} vs oracle {b}");
                    }
                }
                if values.iter().any(|v| v.abs() <= eps) {
                    skipped += 1;
                    continue;
                }
            } else {
                ensure!(got_pre == values, "model {k} at {x:?}: pre-Sign differs");
            }
            let want = svm_votes(&svm, &values);
            ensure!(
                votes == want,
                "model {k} at {x:?}: votes {votes:?}, oracle {want:?}"
            );
            if values.iter().all(|v| !v.is_zero()) {
                let direct: Vec<Q> = svm
                    .decision(&x)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|v| q(v as i64, 1))
                    .collect();
                ensure!(
                    direct == want,
                    "model {k}: decision() {direct:?}, oracle {want:?}"
                );
            }
        }
    }
    Ok(format!(
        "10 models x 1000 points agree; {skipped} RBF points within 1e-12 of a tie skipped"
    ))
}

fn exact_vs_brute_force() -> Outcome {
    let mut rng = rng(4);
    let (mut valid, mut invalid) = (0, 0);
    for p in 0..50 {
        let spec = random_property(&mut rng, &format!("p{p}"), 8);
        let m = merge(&spec.formula(), EmbedOptions::default()).map_err(|e| e.to_string())?;
        let out = exact_verify(&m, ExactOptions::default()).map_err(|e| e.to_string())?;
        let oracle = spec.brute_force_valid();
        match (out.kind, oracle) {
            (OutcomeKind::Valid, true) => valid += 1,
            (OutcomeKind::Invalid, false) => {
                let x = out
                    .counterexample
                    .as_ref()
                    .ok_or(format!("p{p}: Invalid without counterexample"))?;
                ensure!(
                    refutes(&spec, x),
                    "p{p}: counterexample {x:?} does not refute the property"
                );
                ensure!(
                    m.goal.hypothesis_holds(x) && m.goal.conclusion_holds(x) == Ok(false),
                    "p{p}: counterexample does not replay through the merged network"
                );
                invalid += 1;
            }
            (kind, oracle) => {
                return Err(format!(
                    "p{p} ({} ReLUs): exact says {kind}, brute force says {}",
                    spec.nets[0].n_relu(),
                    if oracle { "valid" } else { "invalid" }
                ))
            }
        }
    }
    Ok(format!(
        "50 properties agree ({valid} valid, {invalid} invalid, counterexamples replayed)"
    ))
}

/// Input normalization constants of the ACAS Xu networks.
const MEANS: [&str; 5] = ["19791.091", "0.0", "0.0", "650.0", "600.0"];
const RANGES: [&str; 5] = [
    "60261.0",
    "6.28318530718",
    "6.28318530718",
    "1100.0",
    "1200.0",
];
const OUT_MEAN: &str = "7.51888402010059753166615337249822914600372314453125";
const OUT_RANGE: &str = "373.9499200000000200816430151462554931640625";

fn acas_spec() -> String {
    let branches: Vec<String> = (0..5)
        .map(|k| {
            format!(
                "if i = {k} then normalize_t x ({}:t) ({}:t)",
                MEANS[k], RANGES[k]
            )
        })
        .collect();
    format!(
        "type input = vector t
let nn = Model.read_model \"acas.onnx\"
let clear_of_conflict = 0

let function normalize_t i mean range = (i .- mean) ./ range
let function denormalize_t i mean range = (i .* range) .+ mean
let function normalize_by_index (i: int) (x: t) : t =
  {} else x
let function normalize_input i = Vector.mapi i normalize_by_index

let function denormalize_output_t o =
  denormalize_t o
    ({OUT_MEAN}:t)
      ({OUT_RANGE}:t)

predicate valid_input (i: input) =
  0.0 .<= i[0] .<= 60760.0 /\\ .- 3.141593 .<= i[1] .<= 3.141593 /\\
  .- 3.141593 .<= i[2] .<= 3.141593 /\\ 100.0 .<= i[3] .<= 1200.0 /\\
  0.0 .<= i[4] .<= 1200.0

predicate intruder_distant_and_slow (i: input) =
  i[0] .>= 55947.691 /\\ i[3] .>= 1145.0 /\\ i[4] .<= 60.0

let runP1 (i: input) : t
  requires {{ has_length i 5 /\\ valid_input i }}
  requires {{ intruder_distant_and_slow i }}
  ensures {{ result .<= (1500.0:t) }} =
    let j = normalize_input i in
    let o = (nn @@ j)[clear_of_conflict] in
    (denormalize_output_t o)

goal mean_lower: denormalize_output_t 0.0 .>= ({OUT_MEAN}:t)
goal mean_upper: denormalize_output_t 0.0 .<= ({OUT_MEAN}:t)
goal mean_strict: denormalize_output_t 0.0 .< ({OUT_MEAN}:t)
",
        branches.join("\n  else ")
    )
}

fn dec(s: &str) -> Q {
    sx::decimal(s).expect("decimal literal")
}

fn acas() -> Outcome {
    let mut rng = rng(5);
    let nn = Dense::random(&mut rng, 5, &[8, 8], 5, 8);
    let dir = tempfile::tempdir().unwrap();
    write_net(dir.path(), "acas.onnx", &nn);
    let spec = write(dir.path(), "acas.mls", acas_spec());
    let goals = load_goals(&spec, None).map_err(|e| e.diagnostic("acas.mls"))?;
    let by_name = |n: &str| {
        goals
            .iter()
            .find(|g| g.name == n)
            .ok_or(format!("no goal {n}"))
    };
    ensure!(
        by_name("mean_lower")?.conclusion == Formula::True,
        "denormalize_output_t 0 < mean"
    );
    ensure!(
        by_name("mean_upper")?.conclusion == Formula::True,
        "denormalize_output_t 0 > mean"
    );
    ensure!(
        by_name("mean_strict")?.conclusion == Formula::False,
        "strict comparison should fail"
    );
    // The listing's constant is exactly the double nearest the ACAS mean.
    ensure!(
        nnspec::rational::from_f64(7.5188840201005975) == Some(dec(OUT_MEAN)),
        "mean constant is not the double 7.5188840201005975"
    );
    let goal = by_name("runP1")?;
    let m = merge(
        goal,
        EmbedOptions {
            policy: EmbedPolicy::Terms,
            dedup: true,
        },
    )
    .map_err(|e| e.to_string())?;
    // Published input ranges, with the rounded bound for pi.
    #[allow(clippy::approx_constant)]
    let lo = [0.0, -3.141593, -3.141593, 100.0, 0.0];
    #[allow(clippy::approx_constant)]
    let hi = [60760.0, 3.141593, 3.141593, 1200.0, 1200.0];
    for _ in 0..100 {
        let x: Vec<Q> = (0..5)
            .map(|k| {
                let (a, b) = (
                    nnspec::rational::from_f64(lo[k]).unwrap(),
                    nnspec::rational::from_f64(hi[k]).unwrap(),
                );
                sample(&mut rng, &a, &b, 1000)
            })
            .collect();
        let normalized: Vec<Q> = (0..5)
            .map(|k| (&x[k] - dec(MEANS[k])) / dec(RANGES[k]))
            .collect();
        let want = &nn.forward(&normalized)[0] * dec(OUT_RANGE) + dec(OUT_MEAN);
        let got = flat(&m.merged, &x);
        ensure!(
            got == [want.clone()],
            "at {x:?}: merged {got:?}, expected {want}"
        );
    }
    let out = dir.path().join("out");
    let (code, _, err) = cli(&[
        "compile",
        spec.to_str().unwrap(),
        "--goal",
        "runP1",
        "--emit",
        "vnnlib",
        "--embed",
        "terms",
        "-o",
        out.to_str().unwrap(),
    ]);
    ensure!(code == 0, "compile failed: {err}");
    let text = std::fs::read_to_string(out.join("goal_runP1.vnnlib")).map_err(|e| e.to_string())?;
    let mut tokens = Vec::new();
    fn atoms(e: &sx::Sx, out: &mut Vec<String>) {
        match e {
            sx::Sx::A(a) => out.push(a.clone()),
            sx::Sx::L(items) => items.iter().for_each(|i| atoms(i, out)),
        }
    }
    sx::parse(&text).iter().for_each(|e| atoms(e, &mut tokens));
    for want in ["55947.691", "1145", "60", "1500"] {
        ensure!(
            tokens.iter().any(|t| t == want),
            "VNN-LIB lacks the literal {want}:\n{text}"
        );
    }
    Ok("100 points exact; VNN-LIB carries 55947.691, 1145, 60, 1500; output mean exact".into())
}

const FIG4_SPEC: &str = "goal equality_up_to_delta:
    let nn1 = Model.read_model \"nn1.onnx\" in
    let nn2 = Model.read_model \"nn2.onnx\" in
    let delta = (0.125:t) in
    forall input. Vector.has_length input 5 ->
      (forall i. 0 <= i < Vector.length input -> 0.0 .<= input[i] .<= 1.0) ->
        let output1 = nn1 @@ input in
        let output2 = nn2 @@ input in
        .- delta .<= output1[0] .- output2[0] .<= delta
";

fn delta_equality() -> Outcome {
    let mut rng = rng(6);
    let nn = Dense::random(&mut rng, 5, &[4], 1, 4);
    let dir = tempfile::tempdir().unwrap();
    write_net(dir.path(), "nn1.onnx", &nn);
    write_net(dir.path(), "nn2.onnx", &nn);
    let spec = write(dir.path(), "delta.mls", FIG4_SPEC);
    let spec = spec.to_str().unwrap();
    let (code, out, err) = cli(&["verify", spec, "--prover", "exact", "--format", "json"]);
    ensure!(code == 0, "identical networks: exit {code}, {err}{out}");
    let report: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    ensure!(
        report["goals"][0]["outcomes"][0]["kind"] == "valid",
        "expected valid: {out}"
    );

    let mut shifted = nn.clone();
    shifted.layers.last_mut().unwrap().1[0] += q(1, 1);
    write_net(dir.path(), "nn2.onnx", &shifted);
    let (code, out, err) = cli(&["verify", spec, "--prover", "exact", "--format", "json"]);
    ensure!(code == 10, "shifted bias: exit {code}, {err}{out}");
    let report: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
    let outcome = &report["goals"][0]["outcomes"][0];
    ensure!(outcome["kind"] == "invalid", "expected invalid: {out}");
    let x: Vec<Q> = outcome["counterexample"]
        .as_array()
        .ok_or("no counterexample")?
        .iter()
        .map(|v| nnspec::rational::parse_rational(v.as_str().unwrap()).unwrap())
        .collect();
    ensure!(x.len() == 5, "counterexample has {} components", x.len());
    ensure!(
        x.iter().all(|v| *v >= q(0, 1) && *v <= q(1, 1)),
        "counterexample outside [0,1]^5"
    );
    let diff = &nn.forward(&x)[0] - &shifted.forward(&x)[0];
    ensure!(
        diff.abs() > q(1, 8),
        "counterexample difference {diff} is within delta"
    );
    Ok(format!(
        "valid with exit 0; shifted bias invalid with exit 10, |difference| = {diff}",
        diff = diff.abs()
    ))
}

/// Source atoms of a merged goal, with outputs numbered after the inputs.
fn source_atoms(m: &MergedGoal) -> Vec<Lin> {
    let n = m.n_inputs();
    let lin = |a: &Atom| {
        let d = a.difference();
        d.coeffs
            .iter()
            .fold(Lin::konst(d.constant.clone()), |acc, (s, c)| {
                let v = match s {
                    Sym::Input(i) => *i,
                    Sym::Output { index, .. } => n + index,
                };
                acc.plus(&Lin::var(v), c)
            })
    };
    let mut out: Vec<Lin> = m.goal.hypothesis.iter().map(lin).collect();
    m.goal.conclusion.visit_atoms(&mut |a| out.push(lin(a)));
    out
}

/// Direction-free normal form of `lin ~ 0`.
fn normal(l: &Lin) -> Lin {
    match l.c.values().next() {
        Some(a) => l.scale(&a.recip()),
        None => l.clone(),
    }
}

fn svm_goal(svm: &SvmModel, name: &str) -> GoalFormula {
    let d = svm.feature_dim();
    let graph = Arc::new(svm_to_nir(svm).unwrap());
    GoalFormula {
        name: name.into(),
        input_vars: (0..d)
            .map(|i| InputVar {
                name: format!("x{i}"),
                role: VarRole::ModelInput,
            })
            .collect(),
        hypothesis: (0..d)
            .flat_map(|i| {
                [
                    Atom::new(Term::constant(q(-1, 2)), Cmp::Le, Term::input(i)),
                    Atom::new(Term::input(i), Cmp::Le, Term::constant(q(1, 2))),
                ]
            })
            .collect(),
        conclusion: Formula::atom(Term::output(0, 0), Cmp::Ge, Term::constant(q(1, 1))),
        model_apps: vec![ModelApp {
            model: graph,
            source: name.into(),
            args: (0..d).map(Term::input).collect(),
        }],
    }
}

fn format_fidelity() -> Outcome {
    let mut rng = rng(7);
    let mut cases: Vec<(MergedGoal, Option<GoalSpec>)> = Vec::new();
    for g in 0..30 {
        let spec = random_multi_goal(&mut rng, &format!("m{g}"));
        let m = merge(&spec.formula(), EmbedOptions::default()).map_err(|e| e.to_string())?;
        cases.push((m, Some(spec)));
    }
    for p in 0..20 {
        let spec = random_property(&mut rng, &format!("p{p}"), 8);
        let m = merge(&spec.formula(), EmbedOptions::default()).map_err(|e| e.to_string())?;
        cases.push((m, Some(spec)));
    }
    for s in 0..4 {
        let kernel = if s % 2 == 0 {
            Kernel::Linear
        } else {
            Kernel::Rbf { gamma: q(1, 2) }
        };
        let svm = random_svm(&mut rng, 2, 2, kernel);
        let m = merge(&svm_goal(&svm, &format!("svm{s}")), EmbedOptions::default())
            .map_err(|e| e.to_string())?;
        cases.push((m, None));
    }

    let (mut onnx, mut vnn, mut smt) = (0, 0, 0);
    for (m, spec) in &cases {
        let name = &m.goal.name;
        let bytes = emit_onnx(&m.merged).map_err(|e| format!("{name}: {e}"))?;
        let back = parse_onnx(&bytes).map_err(|e| format!("{name}: {e}"))?;
        ensure!(
            back.isomorphic(&m.merged),
            "{name}: ONNX re-parse is not isomorphic"
        );
        onnx += 1;

        let v = emit_vnnlib(m, VnnLibOptions::default()).map_err(|e| format!("{name}: {e}"))?;
        ensure!(
            v.warnings.is_empty(),
            "{name}: inexact VNN-LIB constants {:?}",
            v.warnings
        );
        let script = sx::script(&v.text);
        let n = m.n_inputs();
        let expected_names: Vec<String> = (0..n)
            .map(|i| format!("X_{i}"))
            .chain((0..m.n_outputs()).map(|j| format!("Y_{j}")))
            .collect();
        ensure!(
            script.names == expected_names,
            "{name}: declarations {:?}",
            script.names
        );
        let parsed = script.resolve(&|_| true);
        let mut atoms = Vec::new();
        parsed.atoms(&mut atoms);
        let got: HashSet<Lin> = atoms.iter().map(|(l, _)| normal(l)).collect();
        let want: HashSet<Lin> = source_atoms(m).iter().map(normal).collect();
        ensure!(got == want, "{name}: VNN-LIB atoms differ from the source");
        if let Some(spec) = spec {
            for _ in 0..100 {
                let x = spec.point(&mut rng);
                let mut y = flat(&m.merged, &x);
                if rng.gen_bool(0.5) {
                    for v in y.iter_mut() {
                        *v += q(rng.gen_range(-8..=8), 8);
                    }
                }
                let outs = [y.clone()];
                let truth = m.goal.hypothesis_holds(&x)
                    && !m.goal.conclusion.eval(&|s| match s {
                        Sym::Input(i) => x[i].clone(),
                        Sym::Output { index, .. } => outs[0][index].clone(),
                    });
                let values: Vec<Q> = x.iter().chain(&y).cloned().collect();
                ensure!(
                    parsed.eval(&values) == truth,
                    "{name}: VNN-LIB disagrees at x={x:?} y={y:?}"
                );
            }
        }
        vnn += 1;

        let net_neurons = m.merged.count_op("Relu") + m.merged.count_op("Sign");
        if spec.as_ref().is_some_and(|s| s.apps.len() > 1)
            || net_neurons > 10
            || m.merged.count_op("Exp") > 0
        {
            continue;
        }
        let text = emit_smtlib(m).map_err(|e| format!("{name}: {e}"))?;
        let sat = sx::script(&text).satisfiable();
        let out = exact_verify(m, ExactOptions::default()).map_err(|e| e.to_string())?;
        let expected = match out.kind {
            OutcomeKind::Valid => false,
            OutcomeKind::Invalid => true,
            k => return Err(format!("{name}: exact verifier returned {k}")),
        };
        ensure!(
            sat == expected,
            "{name}: SMT-LIB sat={sat}, exact says {}",
            out.kind
        );
        smt += 1;
    }
    Ok(format!(
        "{onnx} ONNX, {vnn} VNN-LIB and {smt} SMT-LIB files match their sources"
    ))
}

/// Stable diagnostics for the rejected inputs; `<dir>` stands for the
/// fixture directory.
const NEGATIVE: [(&str, &str); 5] = [
    (
        "UnresolvedShape",
        "<dir>/shape.mls:1:33: error[UnresolvedShape]: vector length cannot be determined statically: length of `v` is unknown",
    ),
    (
        "AlternatingQuantifiers",
        "<dir>/exists.mls:1:9: error[AlternatingQuantifiers]: alternating or existential quantification over reals is not supported",
    ),
    ("NonLinearTerm", "<dir>/square.mls:1:47: error[NonLinearTerm]: non-linear term x0 * x0"),
    (
        "UnsupportedOperator",
        "<dir>/softmax.mls: error[UnsupportedOperator]: <dir>/softmax.onnx: unsupported operator Softmax",
    ),
    ("UnsupportedNode", "<dir>/rbf.mls: error[UnsupportedNode]: goal `rbf`: unsupported node: Exp"),
];

fn negative_paths() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = |n: &str| d.join(n).to_str().unwrap().to_string();
    write(
        d,
        "shape.mls",
        "goal g: forall v: vector float. v[0] .>= 0.0\n",
    );
    write(d, "exists.mls", "goal g: exists x: float. x .>= 0.0\n");
    write(
        d,
        "square.mls",
        "goal g: forall x: float. 0.0 .<= x .<= 1.0 -> x .* x .>= 0.0\n",
    );
    write(d, "softmax.onnx", single_op_model("Softmax", 2));
    write(
        d,
        "softmax.mls",
        "goal g: let m = read_model \"softmax.onnx\" in forall v: vector float. has_length v 2 -> (m @@ v)[0] .>= 0.0\n",
    );
    let mut rng = rng(8);
    write(
        d,
        "rbf.json",
        random_svm(&mut rng, 2, 2, Kernel::Rbf { gamma: q(1, 2) }).to_json(),
    );
    write(
        d,
        "rbf.mls",
        "goal rbf: let m = read_model \"rbf.json\" in forall v: vector float. has_length v 2 ->
  (forall i. 0 <= i < 2 -> 0.0 .<= v[i] .<= 1.0) -> (m @@ v)[0] .>= 1.0\n",
    );
    let runs: [(&str, Vec<String>); 5] = [
        ("UnresolvedShape", vec!["verify".into(), path("shape.mls")]),
        (
            "AlternatingQuantifiers",
            vec!["verify".into(), path("exists.mls")],
        ),
        ("NonLinearTerm", vec!["verify".into(), path("square.mls")]),
        (
            "UnsupportedOperator",
            vec!["verify".into(), path("softmax.mls")],
        ),
        (
            "UnsupportedNode",
            vec![
                "compile".into(),
                path("rbf.mls"),
                "--emit".into(),
                "smtlib".into(),
                "-o".into(),
                path("out"),
            ],
        ),
    ];
    let prefix = d.to_str().unwrap();
    for ((kind, args), (kind2, expected)) in runs.iter().zip(NEGATIVE) {
        assert_eq!(*kind, kind2);
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = cli(&args);
        let second = cli(&args);
        ensure!(first == second, "{kind}: diagnostics differ between runs");
        let (code, _, err) = first;
        ensure!(code == 2, "{kind}: exit {code}, {err}");
        let got = err.trim_end().replace(prefix, "<dir>");
        ensure!(
            got == expected,
            "{kind}: diagnostic\n  got:      {got}\n  expected: {expected}"
        );
    }
    Ok("5 fixtures rejected with exit 2 and stable diagnostics".into())
}

/// Name, time limit in seconds, check.
type Criterion = (&'static str, u64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("merge preserves goal semantics", 60, merge_preservation),
        ("two-network composition", 5, composition),
        ("SVM compilation", 120, svm_compilation),
        ("exact verifier vs brute force", 300, exact_vs_brute_force),
        ("unnormalized ACAS pipeline", 10, acas),
        ("delta-equality end to end", 10, delta_equality),
        ("format fidelity", 60, format_fidelity),
        ("negative-path diagnostics", 60, negative_paths),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (k, (name, limit, check)) in criteria.into_iter().enumerate() {
        let label = format!("criterion {}: {name}", k + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(_) if elapsed > Duration::from_secs(limit) => Err(format!(
                "took {:.1}s, limit {limit}s",
                elapsed.as_secs_f64()
            )),
            r => r,
        };
        match result {
            Ok(detail) => println!("PASS {label}: {detail} [{:.2}s]", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {label}: {why} [{:.2}s]", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

//! SMT-LIB 2 scripts in QF_LRA: the merged network is lowered to affine
//! expressions, and each `Relu`/`Sign` neuron becomes an `ite` definition.

use crate::embed::MergedGoal;
use crate::emit::{header, render_atom, smt_number, EmitError};
use crate::interp::Formula;
use crate::nir::linear::{lower, LinExpr, NeuronKind, PlNetwork};

use num_traits::{One, Zero};

/// Emits a script that is `unsat` exactly when the goal holds.
pub fn emit_smtlib(m: &MergedGoal) -> Result<String, EmitError> {
    let net = lower(&m.merged)?;
    let mut lines = vec![
        header(),
        format!("; goal {}", m.goal.name),
        "(set-logic QF_LRA)".to_string(),
    ];
    for i in 0..net.n_inputs {
        lines.push(format!("(declare-const X_{i} Real)"));
    }
    for k in 0..net.neurons.len() {
        lines.push(format!("(declare-const N_{k} Real)"));
    }
    for j in 0..net.outputs.len() {
        lines.push(format!("(declare-const Y_{j} Real)"));
    }
    for (k, n) in net.neurons.iter().enumerate() {
        let pre = linear(&net, &n.pre);
        let def = match n.kind {
            NeuronKind::Relu => format!("(ite (>= {pre} 0.0) {pre} 0.0)"),
            NeuronKind::Sign => format!("(ite (> {pre} 0.0) 1.0 (ite (< {pre} 0.0) (- 1.0) 0.0))"),
        };
        lines.push(format!("(assert (= N_{k} {def}))"));
    }
    for (j, o) in net.outputs.iter().enumerate() {
        lines.push(format!("(assert (= Y_{j} {}))", linear(&net, o)));
    }
    for a in &m.goal.hypothesis {
        lines.push(format!("(assert {})", render_atom(a, &mut smt_number)?));
    }
    lines.push(format!("(assert (not {}))", formula(&m.goal.conclusion)?));
    lines.push("(check-sat)".to_string());
    let mut text = lines.join("\n");
    text.push('\n');
    Ok(text)
}

fn var_name(net: &PlNetwork, v: usize) -> String {
    if v < net.n_inputs {
        format!("X_{v}")
    } else {
        format!("N_{}", v - net.n_inputs)
    }
}

fn linear(net: &PlNetwork, e: &LinExpr) -> String {
    let mut parts: Vec<String> = e
        .coeffs
        .iter()
        .map(|(&v, c)| {
            if c.is_one() {
                var_name(net, v)
            } else {
                format!("(* {} {})", smt_number(c), var_name(net, v))
            }
        })
        .collect();
    if !e.constant.is_zero() || parts.is_empty() {
        parts.push(smt_number(&e.constant));
    }
    if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        format!("(+ {})", parts.join(" "))
    }
}

fn formula(f: &Formula) -> Result<String, EmitError> {
    let join = |head: &str, items: &[Formula]| -> Result<String, EmitError> {
        let parts = items.iter().map(formula).collect::<Result<Vec<_>, _>>()?;
        Ok(format!("({head} {})", parts.join(" ")))
    };
    match f {
        Formula::True => Ok("true".into()),
        Formula::False => Ok("false".into()),
        Formula::Atom(a) => render_atom(a, &mut smt_number),
        Formula::Not(g) => Ok(format!("(not {})", formula(g)?)),
        Formula::And(items) => join("and", items),
        Formula::Or(items) => join("or", items),
        Formula::Implies(a, b) => Ok(format!("(=> {} {})", formula(a)?, formula(b)?)),
    }
}

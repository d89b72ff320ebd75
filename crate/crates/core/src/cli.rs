//! Command-line driver: `verify`, `compile`, `detect` and `eval`, plus the
//! library entry points they wrap.
//!
//! Exit codes: 0 when every outcome is valid, 10 when any is invalid, 20
//! when some outcome is inconclusive and none is invalid, 2 on any
//! pipeline error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{merge_split, EmbedError, EmbedOptions, EmbedPolicy, MergedGoal};
use crate::emit::{emit_model, emit_smtlib, emit_vnnlib, EmitError, VnnLibOptions};
use crate::interp::{reduce_all, reduce_goal, Context, Formula, GoalFormula, InterpError};
use crate::nir::onnx::Precision;
use crate::nir::{forward, NirError, Tensor};
use crate::provers::{
    detect, dispatch, load_config, DispatchOptions, ExactOptions, OutcomeKind, ProverChoice,
    ProverError, ProverOutcome, EXACT,
};
use crate::rational::{self, Rational};
use crate::speclang::{self, SpecError};

pub const EXIT_VALID: i32 = 0;
pub const EXIT_INVALID: i32 = 10;
pub const EXIT_INCONCLUSIVE: i32 = 20;
pub const EXIT_ERROR: i32 = 2;

/// Version of the JSON report layout.
pub const REPORT_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error("goal `{goal}`: {source}")]
    Embed { goal: String, source: EmbedError },
    #[error("goal `{goal}`: {source}")]
    Emit { goal: String, source: EmitError },
    #[error("{0}")]
    Prover(ProverError),
    #[error("goal `{goal}`: {source}")]
    GoalProver { goal: String, source: ProverError },
    #[error(transparent)]
    Model(#[from] NirError),
    #[error("{0}")]
    Usage(String),
}

fn nir_kind(e: &NirError) -> &'static str {
    match e {
        NirError::UnsupportedOperator(_) => "UnsupportedOperator",
        NirError::ShapeMismatch { .. } => "ShapeMismatch",
        NirError::DivisionByZero { .. } => "DivisionByZero",
        NirError::MalformedModel(_) => "MalformedModel",
        NirError::UnserializableExact { .. } => "UnserializableExact",
    }
}

fn emit_kind(e: &EmitError) -> &'static str {
    match e {
        EmitError::NonLinearAtom(_) => "NonLinearAtom",
        EmitError::UnboundedVariable(_) => "UnboundedVariable",
        EmitError::UnsupportedNode(_) => "UnsupportedNode",
        EmitError::NotMerged(_) => "NotMerged",
        EmitError::Model(m) => nir_kind(m),
        EmitError::Io { .. } => "IoError",
        EmitError::Parse(_) => "ParseError",
    }
}

fn prover_kind(e: &ProverError) -> &'static str {
    match e {
        ProverError::ConfigParse { .. } => "ConfigParseError",
        ProverError::ConfigIo { .. } => "ConfigIoError",
        ProverError::WorkspaceIo(_) => "WorkspaceIoError",
        ProverError::UnknownProver(_) => "UnknownProver",
        ProverError::UnboundedInput(_) => "UnboundedInput",
        ProverError::Emit(e) => emit_kind(e),
    }
}

impl PipelineError {
    /// Stable category name printed in diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Io { .. } => "IoError",
            PipelineError::Spec(SpecError::Syntax(_)) => "SyntaxError",
            PipelineError::Spec(SpecError::Type(_)) => "TypeError",
            PipelineError::Interp(e) => e.kind(),
            PipelineError::Embed { source, .. } => match source {
                EmbedError::NonLinearTerm(_) => "NonLinearTerm",
                EmbedError::Graph(g) => nir_kind(g),
                _ => "UnsupportedConstruct",
            },
            PipelineError::Emit { source, .. } => emit_kind(source),
            PipelineError::Prover(e) | PipelineError::GoalProver { source: e, .. } => {
                prover_kind(e)
            }
            PipelineError::Model(e) => nir_kind(e),
            PipelineError::Usage(_) => "UsageError",
        }
    }

    /// `file:line:col: error[Kind]: message`, without the position when the
    /// error has none.
    pub fn diagnostic(&self, file: &str) -> String {
        let (span, message) = match self {
            PipelineError::Spec(e) => (Some(e.span()), e.message()),
            PipelineError::Interp(e) => (e.span(), e.to_string()),
            other => (None, other.to_string()),
        };
        match span {
            Some(s) => format!(
                "{file}:{}:{}: error[{}]: {message}",
                s.line,
                s.col,
                self.kind()
            ),
            None => format!("{file}: error[{}]: {message}", self.kind()),
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Parses, type-checks and reduces a specification file. Relative paths in
/// the file resolve against its directory.
pub fn load_goals(spec: &Path, goal: Option<&str>) -> Result<Vec<GoalFormula>, PipelineError> {
    let source = std::fs::read_to_string(spec).map_err(|e| io_error(spec, e))?;
    let ast = speclang::load(&source)?;
    let base = spec.parent().map(Path::to_path_buf).unwrap_or_default();
    let ctx = Context::new(base);
    Ok(match goal {
        Some(name) => vec![reduce_goal(&ast, name, &ctx)?],
        None => reduce_all(&ast, &ctx)?,
    })
}

fn merge_goal(g: &GoalFormula, policy: EmbedPolicy) -> Result<Vec<MergedGoal>, PipelineError> {
    let opts = EmbedOptions {
        policy,
        ..EmbedOptions::default()
    };
    merge_split(g, opts).map_err(|source| PipelineError::Embed {
        goal: g.name.clone(),
        source,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub reduce: f64,
    pub merge: f64,
    pub verify: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalReport {
    pub goal: String,
    /// Input variable names, in counterexample order.
    pub inputs: Vec<String>,
    /// One entry per requested prover.
    pub outcomes: Vec<ProverOutcome>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merged_model: Option<String>,
    pub timings: Timings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    pub spec: String,
    pub goals: Vec<GoalReport>,
}

/// Overall exit code for a set of outcomes.
pub fn exit_code(kinds: impl IntoIterator<Item = OutcomeKind>) -> i32 {
    let mut code = EXIT_VALID;
    for k in kinds {
        match k {
            OutcomeKind::Invalid => return EXIT_INVALID,
            OutcomeKind::Valid => {}
            OutcomeKind::Timeout | OutcomeKind::Unknown | OutcomeKind::Crash => {
                code = EXIT_INCONCLUSIVE
            }
        }
    }
    code
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        exit_code(
            self.goals
                .iter()
                .flat_map(|g| g.outcomes.iter().map(|o| o.kind)),
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Plain-text table, one row per goal and prover.
    pub fn to_table(&self) -> String {
        let mut rows = vec![[
            "goal".to_string(),
            "prover".to_string(),
            "result".to_string(),
            "time".to_string(),
            "detail".to_string(),
        ]];
        for g in &self.goals {
            for o in &g.outcomes {
                let detail = match (&o.counterexample, &o.diagnostic) {
                    (Some(x), _) => g
                        .inputs
                        .iter()
                        .zip(x)
                        .map(|(n, v)| format!("{n} = {}", rational::display(v)))
                        .collect::<Vec<_>>()
                        .join(", "),
                    (None, Some(d)) => d.clone(),
                    (None, None) => String::new(),
                };
                rows.push([
                    g.goal.clone(),
                    o.prover.clone(),
                    o.kind.to_string(),
                    format!("{:.3}s", o.wall_time),
                    detail,
                ]);
            }
        }
        let widths: Vec<usize> = (0..4)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for r in rows {
            let line = format!(
                "{:w0$}  {:w1$}  {:w2$}  {:w3$}  {}",
                r[0],
                r[1],
                r[2],
                r[3],
                r[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Prover names; empty selects the built-in prover.
    pub provers: Vec<String>,
    pub timeout: Duration,
    pub goal: Option<String>,
    pub config: Option<PathBuf>,
    pub keep_artifacts: Option<PathBuf>,
    pub allow_unbounded: bool,
    pub direct: bool,
    pub jobs: usize,
    pub policy: EmbedPolicy,
    pub exact: ExactOptions,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            provers: Vec::new(),
            timeout: Duration::from_secs(250),
            goal: None,
            config: None,
            keep_artifacts: None,
            allow_unbounded: false,
            direct: false,
            jobs: 1,
            policy: EmbedPolicy::Auto,
            exact: ExactOptions::default(),
        }
    }
}

fn choose_provers(opts: &VerifyOptions) -> Result<Vec<ProverChoice>, PipelineError> {
    if opts.provers.is_empty() {
        return Ok(vec![ProverChoice::Exact]);
    }
    let configs = if opts.provers.iter().any(|p| p != EXACT) {
        load_config(opts.config.as_deref()).map_err(PipelineError::Prover)?
    } else {
        Vec::new()
    };
    opts.provers
        .iter()
        .map(|name| {
            if name == EXACT {
                return Ok(ProverChoice::Exact);
            }
            configs
                .iter()
                .find(|c| &c.name == name)
                .cloned()
                .map(ProverChoice::External)
                .ok_or_else(|| PipelineError::Prover(ProverError::UnknownProver(name.clone())))
        })
        .collect()
}

/// Outcome for goals settled during reduction (no variables or a constant
/// conclusion).
fn settled(goal: &GoalFormula, provers: &[ProverChoice]) -> Option<Vec<ProverOutcome>> {
    let kind = match &goal.conclusion {
        Formula::True => OutcomeKind::Valid,
        _ if goal.input_vars.is_empty() => match goal.eval(&[]) {
            Ok(true) => OutcomeKind::Valid,
            _ => OutcomeKind::Invalid,
        },
        _ => return None,
    };
    Some(
        provers
            .iter()
            .map(|p| {
                let mut o = ProverOutcome::new(p.name(), kind);
                if kind == OutcomeKind::Invalid {
                    o.counterexample = Some(Vec::new());
                }
                o.diagnostic = Some("decided during reduction".into());
                o
            })
            .collect(),
    )
}

/// Replays counterexamples on the goal before merging; a failed replay
/// downgrades the outcome to unknown.
fn recheck(original: &GoalFormula, outcomes: &mut [ProverOutcome]) {
    for o in outcomes {
        if let Some(x) = &o.counterexample {
            if original.eval(x) != Ok(false) {
                o.kind = OutcomeKind::Unknown;
                o.counterexample = None;
                o.diagnostic = Some("counterexample does not falsify the source goal".into());
            }
        }
    }
}

fn keep_model(
    m: &MergedGoal,
    dir: &Path,
    warnings: &Mutex<Vec<String>>,
) -> Result<String, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let path = dir.join(format!("goal_{}.onnx", m.goal.name));
    let emit_err = |source| PipelineError::Emit {
        goal: m.goal.name.clone(),
        source,
    };
    match emit_model(m, &path, Precision::Strict) {
        Ok(_) => {}
        Err(EmitError::Model(NirError::UnserializableExact { .. })) => {
            let rounded = emit_model(m, &path, Precision::Lossy).map_err(emit_err)?;
            warnings.lock().expect("warnings lock").push(format!(
                "goal `{}`: constants rounded to double at nodes {rounded:?}",
                m.goal.name
            ));
        }
        Err(e) => return Err(emit_err(e)),
    }
    Ok(path.display().to_string())
}

/// Runs the whole pipeline on a specification file. Warnings (such as
/// rounded constants in kept artifacts) are appended to `warnings`.
pub fn verify_spec(
    spec: &Path,
    opts: &VerifyOptions,
    warnings: &mut Vec<String>,
) -> Result<RunReport, PipelineError> {
    let provers = choose_provers(opts)?;
    let t0 = Instant::now();
    let goals = load_goals(spec, opts.goal.as_deref())?;
    let reduce_time = t0.elapsed().as_secs_f64() / goals.len().max(1) as f64;
    let mut parts: Vec<(GoalFormula, Option<MergedGoal>, f64)> = Vec::new();
    for g in &goals {
        if settled(g, &provers).is_some() {
            parts.push((g.clone(), None, 0.0));
            continue;
        }
        let t = Instant::now();
        let merged = merge_goal(g, opts.policy)?;
        let each = t.elapsed().as_secs_f64() / merged.len().max(1) as f64;
        let sources = g.split();
        for (k, m) in merged.into_iter().enumerate() {
            let source = if sources.len() == 1 {
                g.clone()
            } else {
                sources[k].clone()
            };
            parts.push((source, Some(m), each));
        }
    }
    let dispatch_opts = DispatchOptions {
        timeout: opts.timeout,
        artifacts: opts.keep_artifacts.clone(),
        allow_unbounded: opts.allow_unbounded,
        direct: opts.direct,
        exact: opts.exact,
    };
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<GoalReport, PipelineError>>>> =
        parts.iter().map(|_| Mutex::new(None)).collect();
    let kept_warnings = Mutex::new(Vec::new());
    let work = || loop {
        let i = next.fetch_add(1, Ordering::SeqCst);
        let Some((source, merged, merge_time)) = parts.get(i) else {
            break;
        };
        let report = (|| {
            let t = Instant::now();
            let (outcomes, merged_model) = match merged {
                None => (settled(source, &provers).expect("settled goal"), None),
                Some(m) => {
                    let kept = match &opts.keep_artifacts {
                        Some(dir) => Some(keep_model(m, dir, &kept_warnings)?),
                        None => None,
                    };
                    let mut outcomes = dispatch(m, &provers, &dispatch_opts).map_err(|source| {
                        PipelineError::GoalProver {
                            goal: m.goal.name.clone(),
                            source,
                        }
                    })?;
                    recheck(source, &mut outcomes);
                    (outcomes, kept)
                }
            };
            Ok(GoalReport {
                goal: source.name.clone(),
                inputs: source.input_vars.iter().map(|v| v.name.clone()).collect(),
                outcomes,
                merged_model,
                timings: Timings {
                    reduce: reduce_time,
                    merge: *merge_time,
                    verify: t.elapsed().as_secs_f64(),
                },
            })
        })();
        *slots[i].lock().expect("slot lock") = Some(report);
    };
    std::thread::scope(|s| {
        for _ in 0..opts.jobs.max(1).min(parts.len().max(1)) {
            s.spawn(work);
        }
    });
    warnings.extend(kept_warnings.into_inner().expect("warnings lock"));
    let goals = slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("slot lock")
                .expect("every goal processed")
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunReport {
        schema: REPORT_SCHEMA,
        spec: spec.display().to_string(),
        goals,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
pub enum EmitKind {
    Onnx,
    Vnnlib,
    Smtlib,
}

impl EmitKind {
    pub fn extension(self) -> &'static str {
        match self {
            EmitKind::Onnx => "onnx",
            EmitKind::Vnnlib => "vnnlib",
            EmitKind::Smtlib => "smt2",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CompileOptions {
    pub emit: Vec<EmitKind>,
    pub output: PathBuf,
    pub goal: Option<String>,
    pub allow_unbounded: bool,
    pub direct: bool,
    /// Round constants a double cannot hold instead of failing.
    pub lossy_onnx: bool,
    pub policy: EmbedPolicy,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            emit: vec![EmitKind::Onnx, EmitKind::Vnnlib],
            output: PathBuf::from("."),
            goal: None,
            allow_unbounded: false,
            direct: false,
            lossy_onnx: false,
            policy: EmbedPolicy::Auto,
        }
    }
}

/// Writes `goal_<name>.<ext>` for every goal and requested format; returns
/// the paths written.
pub fn compile_spec(
    spec: &Path,
    opts: &CompileOptions,
    warnings: &mut Vec<String>,
) -> Result<Vec<PathBuf>, PipelineError> {
    let goals = load_goals(spec, opts.goal.as_deref())?;
    std::fs::create_dir_all(&opts.output).map_err(|e| io_error(&opts.output, e))?;
    let mut written = Vec::new();
    for g in &goals {
        for m in merge_goal(g, opts.policy)? {
            let name = &m.goal.name;
            let emit_err = |source| PipelineError::Emit {
                goal: name.clone(),
                source,
            };
            for kind in &opts.emit {
                let path = opts
                    .output
                    .join(format!("goal_{name}.{}", kind.extension()));
                let text = match kind {
                    EmitKind::Onnx => {
                        let precision = if opts.lossy_onnx {
                            Precision::Lossy
                        } else {
                            Precision::Strict
                        };
                        let rounded = emit_model(&m, &path, precision).map_err(emit_err)?;
                        if !rounded.is_empty() {
                            warnings.push(format!(
                                "goal `{name}`: constants rounded to double at nodes {rounded:?}"
                            ));
                        }
                        written.push(path);
                        continue;
                    }
                    EmitKind::Vnnlib => {
                        let v = emit_vnnlib(
                            &m,
                            VnnLibOptions {
                                negate: !opts.direct,
                                allow_unbounded: opts.allow_unbounded,
                            },
                        )
                        .map_err(emit_err)?;
                        warnings.extend(
                            v.warnings
                                .into_iter()
                                .map(|w| format!("goal `{name}`: {w}")),
                        );
                        v.text
                    }
                    EmitKind::Smtlib => emit_smtlib(&m).map_err(emit_err)?,
                };
                std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Parses `0.5, -1, 1/3` into exact values.
pub fn parse_input(text: &str) -> Result<Vec<Rational>, PipelineError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            rational::parse_rational(s)
                .ok_or_else(|| PipelineError::Usage(format!("`{s}` is not a number")))
        })
        .collect()
}

/// Runs a model file (ONNX, or SVM JSON) on one input vector.
pub fn eval_model(model: &Path, input: &[Rational]) -> Result<Vec<Rational>, PipelineError> {
    let cache = crate::interp::ModelCache::new();
    let graph = cache.read_model(model)?;
    let outs = forward(&graph, &Tensor::vector(input.to_vec()))?;
    Ok(outs.into_iter().flat_map(Tensor::into_data).collect())
}

#[derive(Parser, Debug)]
#[command(
    name = "nnspec",
    version,
    about = "Compile and verify specifications of neural networks and SVMs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Reduce, merge and verify every goal of a specification.
    Verify(VerifyArgs),
    /// Write merged models and property files for every goal.
    Compile(CompileArgs),
    /// List the built-in and configured provers.
    Detect(DetectArgs),
    /// Run a model on one input and print the exact output.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Auto,
    Terms,
    AppOutputs,
}

impl From<PolicyArg> for EmbedPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Auto => EmbedPolicy::Auto,
            PolicyArg::Terms => EmbedPolicy::Terms,
            PolicyArg::AppOutputs => EmbedPolicy::AppOutputs,
        }
    }
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub spec: PathBuf,
    /// Comma-separated prover names.
    #[arg(long, value_delimiter = ',')]
    pub prover: Vec<String>,
    /// Seconds per prover and goal.
    #[arg(long, default_value_t = 250)]
    pub timeout: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Keep merged models and prover workspaces in this directory.
    #[arg(long)]
    pub keep_artifacts: Option<PathBuf>,
    /// Prover configuration file (default: $NNSPEC_CONFIG).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub allow_unbounded: bool,
    /// Hand external provers the property itself instead of its negation.
    #[arg(long)]
    pub direct: bool,
    #[arg(long)]
    pub goal: Option<String>,
    /// Goals verified in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Auto)]
    pub embed: PolicyArg,
}

#[derive(Args, Debug)]
pub struct CompileArgs {
    pub spec: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [EmitKind::Onnx, EmitKind::Vnnlib])]
    pub emit: Vec<EmitKind>,
    #[arg(short, long, default_value = ".")]
    pub output: PathBuf,
    #[arg(long)]
    pub goal: Option<String>,
    #[arg(long)]
    pub allow_unbounded: bool,
    /// Emit the property itself instead of its negation.
    #[arg(long)]
    pub direct: bool,
    /// Round constants that a double cannot hold instead of failing.
    #[arg(long)]
    pub lossy_onnx: bool,
    #[arg(long, value_enum, default_value_t = PolicyArg::Auto)]
    pub embed: PolicyArg,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// ONNX model, or SVM description in JSON.
    pub model: PathBuf,
    /// Comma-separated input values (decimals or p/q).
    #[arg(long, allow_hyphen_values = true)]
    pub input: String,
    /// Print values rounded to this many decimal places.
    #[arg(long)]
    pub decimal: Option<usize>,
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_ERROR
            } else {
                let _ = write!(out, "{text}");
                EXIT_VALID
            };
        }
    };
    match cli.command {
        Cmd::Verify(a) => cmd_verify(a, out, err),
        Cmd::Compile(a) => cmd_compile(a, out, err),
        Cmd::Detect(a) => cmd_detect(a, out, err),
        Cmd::Eval(a) => cmd_eval(a, out, err),
    }
}

fn fail(err: &mut dyn Write, file: &str, e: &PipelineError) -> i32 {
    let _ = writeln!(err, "{}", e.diagnostic(file));
    EXIT_ERROR
}

fn cmd_verify(a: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let opts = VerifyOptions {
        provers: a.prover,
        timeout: Duration::from_secs(a.timeout),
        goal: a.goal,
        config: a.config,
        keep_artifacts: a.keep_artifacts,
        allow_unbounded: a.allow_unbounded,
        direct: a.direct,
        jobs: a.jobs,
        policy: a.embed.into(),
        exact: ExactOptions::default(),
    };
    let file = a.spec.display().to_string();
    let mut warnings = Vec::new();
    let report = match verify_spec(&a.spec, &opts, &mut warnings) {
        Ok(r) => r,
        Err(e) => return fail(err, &file, &e),
    };
    for w in warnings {
        let _ = writeln!(err, "{file}: warning: {w}");
    }
    let _ = match a.format {
        Format::Table => write!(out, "{}", report.to_table()),
        Format::Json => writeln!(out, "{}", report.to_json()),
    };
    report.exit_code()
}

fn cmd_compile(a: CompileArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let opts = CompileOptions {
        emit: a.emit,
        output: a.output,
        goal: a.goal,
        allow_unbounded: a.allow_unbounded,
        direct: a.direct,
        lossy_onnx: a.lossy_onnx,
        policy: a.embed.into(),
    };
    let file = a.spec.display().to_string();
    let mut warnings = Vec::new();
    let result = compile_spec(&a.spec, &opts, &mut warnings);
    for w in warnings {
        let _ = writeln!(err, "{file}: warning: {w}");
    }
    match result {
        Ok(paths) => {
            for p in paths {
                let _ = writeln!(out, "{}", p.display());
            }
            EXIT_VALID
        }
        Err(e) => fail(err, &file, &e),
    }
}

fn cmd_detect(a: DetectArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let found = match detect(a.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            let file = a
                .config
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "config".into());
            return fail(err, &file, &PipelineError::Prover(e));
        }
    };
    match a.format {
        Format::Json => {
            let rows: Vec<_> = found
                .iter()
                .map(|d| {
                    serde_json::json!({
                        "name": d.name,
                        "available": d.available,
                        "version": d.version,
                        "command": d.config.as_ref().map(|c| c.command.clone()),
                    })
                })
                .collect();
            let doc = serde_json::json!({"schema": REPORT_SCHEMA, "provers": rows});
            let _ = writeln!(
                out,
                "{}",
                serde_json::to_string_pretty(&doc).expect("JSON values serialize")
            );
        }
        Format::Table => {
            let width = found.iter().map(|d| d.name.len()).max().unwrap_or(0).max(6);
            let _ = writeln!(
                out,
                "{:width$}  {:9}  {:10}  command",
                "prover", "available", "version"
            );
            for d in &found {
                let command = d
                    .config
                    .as_ref()
                    .map_or("(built-in)", |c| c.command.as_str());
                let available = if d.available { "yes" } else { "no" };
                let _ = writeln!(
                    out,
                    "{:width$}  {available:9}  {:10}  {command}",
                    d.name, d.version
                );
            }
        }
    }
    EXIT_VALID
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let file = a.model.display().to_string();
    let values = match parse_input(&a.input).and_then(|x| eval_model(&a.model, &x)) {
        Ok(v) => v,
        Err(e) => return fail(err, &file, &e),
    };
    let shown: Vec<String> = values
        .iter()
        .map(|v| match a.decimal {
            Some(places) => rational::rounded_decimal(v, places),
            None => rational::display(v),
        })
        .collect();
    let _ = writeln!(out, "{}", shown.join(", "));
    EXIT_VALID
}

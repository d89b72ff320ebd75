//! Running provers: workspace preparation, subprocesses with an enforced
//! timeout, answer classification and counterexample replay.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use regex::Regex;

use crate::embed::MergedGoal;
use crate::emit::{emit_smtlib, emit_vnnlib, parse_number, parse_sexprs, VnnLibOptions};
use crate::nir::onnx::{emit_onnx_with, Precision};
use crate::provers::config::first_match;
use crate::provers::{
    exact_verify, ExactOptions, OutcomeKind, PropertyFormat, ProverConfig, ProverError,
    ProverOutcome,
};
use crate::rational::Rational;

const POLL: Duration = Duration::from_millis(5);

/// A prover selected for a run.
#[derive(Clone, Debug)]
pub enum ProverChoice {
    Exact,
    External(ProverConfig),
}

impl ProverChoice {
    pub fn name(&self) -> &str {
        match self {
            ProverChoice::Exact => crate::provers::EXACT,
            ProverChoice::External(c) => &c.name,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DispatchOptions {
    pub timeout: Duration,
    /// Directory that keeps each prover's workspace; a temporary one otherwise.
    pub artifacts: Option<PathBuf>,
    /// Emit VNN-LIB even when an input lacks finite bounds.
    pub allow_unbounded: bool,
    /// Hand VNN-LIB provers the property itself instead of its negation.
    pub direct: bool,
    pub exact: ExactOptions,
}

impl Default for DispatchOptions {
    fn default() -> Self {
        DispatchOptions {
            timeout: Duration::from_secs(250),
            artifacts: None,
            allow_unbounded: false,
            direct: false,
            exact: ExactOptions::default(),
        }
    }
}

pub(crate) struct RunResult {
    pub status: Option<ExitStatus>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn success(&self) -> bool {
        self.status.is_some_and(|s| s.success())
    }
}

/// Runs `sh -c command` in its own process group, killing the whole group
/// once `timeout` elapses.
pub(crate) fn run_command(
    command: &str,
    dir: Option<&Path>,
    timeout: Duration,
) -> std::io::Result<RunResult> {
    let start = Instant::now();
    let mut cmd = Command::new("sh");
    cmd.arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(d) = dir {
        cmd.current_dir(d);
    }
    // SAFETY: setpgid is async-signal-safe and touches no parent state.
    unsafe {
        cmd.pre_exec(|| {
            if libc::setpgid(0, 0) == 0 {
                Ok(())
            } else {
                Err(std::io::Error::last_os_error())
            }
        });
    }
    let mut child = cmd.spawn()?;
    let drain = |mut r: Box<dyn Read + Send>| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            String::from_utf8_lossy(&buf).into_owned()
        })
    };
    let out = drain(Box::new(child.stdout.take().expect("piped stdout")));
    let err = drain(Box::new(child.stderr.take().expect("piped stderr")));
    let mut timed_out = false;
    let status = loop {
        if let Some(s) = child.try_wait()? {
            break Some(s);
        }
        if start.elapsed() >= timeout {
            timed_out = true;
            // SAFETY: signals the process group created above.
            unsafe {
                libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
            }
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(POLL);
    };
    let elapsed = start.elapsed();
    Ok(RunResult {
        status,
        stdout: out.join().unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        timed_out,
        elapsed,
    })
}

/// Reads `(X_i value)` assignments; `None` unless they cover `X_0..X_n`
/// without gaps.
pub fn parse_counterexample(text: &str) -> Option<Vec<Rational>> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"\(\s*X_(\d+)\s+(\([^()]*\)|[^\s()]+)\s*\)").expect("valid regex")
    });
    let mut values: Vec<Option<Rational>> = Vec::new();
    for cap in re.captures_iter(text) {
        let i: usize = cap[1].parse().ok()?;
        let v = parse_sexprs(&cap[2]).ok()?.first().and_then(parse_number)?;
        if values.len() <= i {
            values.resize(i + 1, None);
        }
        values[i] = Some(v);
    }
    if values.is_empty() {
        return None;
    }
    values.into_iter().collect()
}

fn quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

/// Runs one external prover on `m` inside `workspace`.
pub fn run_external(
    m: &MergedGoal,
    cfg: &ProverConfig,
    workspace: &Path,
    opts: &DispatchOptions,
) -> Result<ProverOutcome, ProverError> {
    let io = |e: std::io::Error| ProverError::WorkspaceIo(format!("{}: {e}", workspace.display()));
    std::fs::create_dir_all(workspace).map_err(io)?;
    let model = workspace.join("model.onnx");
    let emitted =
        emit_onnx_with(&m.merged, Precision::Lossy).map_err(crate::emit::EmitError::from)?;
    std::fs::write(&model, &emitted.bytes).map_err(io)?;
    let mut notes = Vec::new();
    if !emitted.rounded_nodes.is_empty() {
        notes.push(format!(
            "constants rounded to double at nodes {:?}",
            emitted.rounded_nodes
        ));
    }
    let (property, text) = match cfg.format {
        PropertyFormat::VnnLib => {
            let v = emit_vnnlib(
                m,
                VnnLibOptions {
                    negate: !opts.direct,
                    allow_unbounded: opts.allow_unbounded,
                },
            )?;
            notes.extend(v.warnings);
            (workspace.join("property.vnnlib"), v.text)
        }
        PropertyFormat::SmtLib => (workspace.join("property.smt2"), emit_smtlib(m)?),
    };
    std::fs::write(&property, text).map_err(io)?;
    let command = cfg
        .command
        .replace("%{model}", &quote(&model))
        .replace("%{property}", &quote(&property))
        .replace("%{timeout}", &opts.timeout.as_secs().max(1).to_string());
    let run = run_command(&command, Some(workspace), opts.timeout).map_err(io)?;
    let mut out = ProverOutcome::new(&cfg.name, OutcomeKind::Unknown);
    out.wall_time = run.elapsed.as_secs_f64();
    out.raw_output = run.stdout.clone();
    out.kind = if run.timed_out {
        OutcomeKind::Timeout
    } else {
        match first_match(&run.stdout, cfg) {
            Some(k) => k,
            None if run.success() => OutcomeKind::Unknown,
            None => {
                let code = run.status.and_then(|s| s.code());
                notes.push(format!(
                    "exit status {}: {}",
                    code.map_or("signal".to_string(), |c| c.to_string()),
                    run.stderr.trim()
                ));
                OutcomeKind::Crash
            }
        }
    };
    if out.kind == OutcomeKind::Invalid {
        if let Some(x) = parse_counterexample(&run.stdout) {
            let replays = x.len() == m.n_inputs()
                && m.goal.hypothesis_holds(&x)
                && m.goal.conclusion_holds(&x) == Ok(false);
            if replays {
                out.counterexample = Some(x);
            } else {
                out.kind = OutcomeKind::Unknown;
                notes.push("reported counterexample does not falsify the goal".into());
            }
        }
    }
    if !notes.is_empty() {
        out.diagnostic = Some(notes.join("; "));
    }
    Ok(out)
}

/// Runs every prover on `m` concurrently; outcomes follow the order of
/// `provers`.
pub fn dispatch(
    m: &MergedGoal,
    provers: &[ProverChoice],
    opts: &DispatchOptions,
) -> Result<Vec<ProverOutcome>, ProverError> {
    let temp = match &opts.artifacts {
        Some(_) => None,
        None => Some(tempfile::tempdir().map_err(|e| ProverError::WorkspaceIo(e.to_string()))?),
    };
    let root = opts.artifacts.clone().unwrap_or_else(|| {
        temp.as_ref()
            .expect("temporary workspace")
            .path()
            .to_path_buf()
    });
    let results: Vec<Result<ProverOutcome, ProverError>> = thread::scope(|s| {
        let handles: Vec<_> = provers
            .iter()
            .map(|p| {
                let root = &root;
                s.spawn(move || match p {
                    ProverChoice::Exact => {
                        let mut exact = opts.exact;
                        exact.deadline = Some(Instant::now() + opts.timeout);
                        exact_verify(m, exact)
                    }
                    ProverChoice::External(cfg) => {
                        let ws = root.join(format!("{}_{}", m.goal.name, cfg.name));
                        run_external(m, cfg, &ws, opts)
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("prover thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}

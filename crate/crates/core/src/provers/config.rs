//! Prover configuration files and detection.
//!
//! ```text
//! [prover.NAME]
//! command = tool --net %{model} --prop %{property} --timeout %{timeout}
//! version = tool --version
//! format = vnnlib
//! pattern.valid = ^unsat
//! pattern.invalid = ^sat
//! pattern.timeout = timed out
//! ```
//!
//! Patterns are regular expressions in multi-line mode, tried in file
//! order; the first match decides the outcome.

use std::path::{Path, PathBuf};
use std::time::Duration;

use regex::{Regex, RegexBuilder};

use crate::provers::dispatch::run_command;
use crate::provers::{OutcomeKind, ProverError, EXACT};

/// Environment variable naming the config file when no path is given.
pub const CONFIG_ENV: &str = "NNSPEC_CONFIG";

const VERSION_PROBE_TIMEOUT: Duration = Duration::from_secs(5);

/// Which property file an external prover reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropertyFormat {
    VnnLib,
    SmtLib,
}

#[derive(Clone, Debug)]
pub struct ProverConfig {
    pub name: String,
    /// Shell command with `%{model}`, `%{property}` and `%{timeout}` placeholders.
    pub command: String,
    pub version: Option<String>,
    pub format: PropertyFormat,
    pub patterns: Vec<(Regex, OutcomeKind)>,
}

impl ProverConfig {
    /// Program named by the command, resolved against `PATH`.
    pub fn program(&self) -> Option<PathBuf> {
        let first = self.command.split_whitespace().next()?;
        if first.contains('/') {
            let p = PathBuf::from(first);
            return p.is_file().then_some(p);
        }
        let path = std::env::var_os("PATH")?;
        std::env::split_paths(&path)
            .map(|d| d.join(first))
            .find(|p| p.is_file())
    }
}

/// A prover and whether it can run here.
#[derive(Clone, Debug)]
pub struct Detected {
    pub name: String,
    /// `None` for the built-in prover.
    pub config: Option<ProverConfig>,
    pub available: bool,
    pub version: String,
}

struct Section {
    line: usize,
    name: String,
    command: Option<String>,
    version: Option<String>,
    format: PropertyFormat,
    patterns: Vec<(Regex, OutcomeKind)>,
}

impl Section {
    fn finish(self) -> Result<ProverConfig, ProverError> {
        let err = |message: String| ProverError::ConfigParse {
            line: self.line,
            message,
        };
        let command = self
            .command
            .clone()
            .ok_or_else(|| err(format!("prover {} has no command", self.name)))?;
        if !command.contains("%{property}") {
            return Err(err(format!(
                "command of prover {} lacks %{{property}}",
                self.name
            )));
        }
        for kind in [OutcomeKind::Valid, OutcomeKind::Invalid] {
            if !self.patterns.iter().any(|(_, k)| *k == kind) {
                return Err(err(format!("prover {} has no pattern.{kind}", self.name)));
            }
        }
        Ok(ProverConfig {
            name: self.name,
            command,
            version: self.version,
            format: self.format,
            patterns: self.patterns,
        })
    }
}

pub fn parse_config(text: &str) -> Result<Vec<ProverConfig>, ProverError> {
    let mut out = Vec::new();
    let mut current: Option<Section> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let err = |message: &str| ProverError::ConfigParse {
            line,
            message: message.to_string(),
        };
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
            continue;
        }
        if let Some(header) = t.strip_prefix('[') {
            let header = header
                .strip_suffix(']')
                .ok_or_else(|| err("unterminated section header"))?;
            let name = header
                .trim()
                .strip_prefix("prover.")
                .filter(|n| !n.is_empty())
                .ok_or_else(|| err("section must be [prover.NAME]"))?;
            if name == EXACT
                || out.iter().any(|c: &ProverConfig| c.name == name)
                || current.as_ref().is_some_and(|s| s.name == name)
            {
                return Err(err(&format!("prover name {name} is already taken")));
            }
            if let Some(s) = current.take() {
                out.push(s.finish()?);
            }
            current = Some(Section {
                line,
                name: name.to_string(),
                command: None,
                version: None,
                format: PropertyFormat::VnnLib,
                patterns: Vec::new(),
            });
            continue;
        }
        let (key, value) = t
            .split_once('=')
            .ok_or_else(|| err("expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        let section = current
            .as_mut()
            .ok_or_else(|| err("key outside a [prover.NAME] section"))?;
        match key {
            "command" => section.command = Some(value.to_string()),
            "version" => section.version = Some(value.to_string()),
            "format" => {
                section.format = match value {
                    "vnnlib" => PropertyFormat::VnnLib,
                    "smtlib" => PropertyFormat::SmtLib,
                    _ => return Err(err("format must be vnnlib or smtlib")),
                }
            }
            _ => {
                let kind = key
                    .strip_prefix("pattern.")
                    .and_then(OutcomeKind::parse)
                    .filter(|k| *k != OutcomeKind::Crash)
                    .ok_or_else(|| err(&format!("unknown key {key}")))?;
                let re = RegexBuilder::new(value)
                    .multi_line(true)
                    .build()
                    .map_err(|e| err(&format!("bad pattern: {e}")))?;
                section.patterns.push((re, kind));
            }
        }
    }
    if let Some(s) = current {
        out.push(s.finish()?);
    }
    Ok(out)
}

/// The first matching pattern's outcome, if any.
pub(crate) fn first_match(raw: &str, cfg: &ProverConfig) -> Option<OutcomeKind> {
    cfg.patterns
        .iter()
        .find(|(re, _)| re.is_match(raw))
        .map(|(_, k)| *k)
}

/// Outcome named by the first matching pattern; `Unknown` when none match.
pub fn classify_output(raw: &str, cfg: &ProverConfig) -> OutcomeKind {
    first_match(raw, cfg).unwrap_or(OutcomeKind::Unknown)
}

/// Config path from the argument, else from `NNSPEC_CONFIG`.
fn config_path(explicit: Option<&Path>) -> Option<PathBuf> {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from))
}

/// Reads the configured provers (empty without a config file).
pub fn load_config(explicit: Option<&Path>) -> Result<Vec<ProverConfig>, ProverError> {
    let Some(path) = config_path(explicit) else {
        return Ok(Vec::new());
    };
    let text = std::fs::read_to_string(&path).map_err(|e| ProverError::ConfigIo {
        path: path.clone(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

/// Lists the built-in prover followed by every configured one, probing
/// each external command for presence and version.
pub fn detect(explicit: Option<&Path>) -> Result<Vec<Detected>, ProverError> {
    let mut out = vec![Detected {
        name: EXACT.to_string(),
        config: None,
        available: true,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }];
    for cfg in load_config(explicit)? {
        let available = cfg.program().is_some();
        let version = match (&cfg.version, available) {
            (Some(cmd), true) => run_command(cmd, None, VERSION_PROBE_TIMEOUT)
                .ok()
                .filter(|r| r.success())
                .and_then(|r| {
                    r.stdout
                        .lines()
                        .map(str::trim)
                        .find(|l| !l.is_empty())
                        .map(str::to_string)
                })
                .unwrap_or_else(|| "unknown".into()),
            _ => "unknown".into(),
        };
        out.push(Detected {
            name: cfg.name.clone(),
            config: Some(cfg),
            available,
            version,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# two provers
[prover.mock]
command = sh %{property}
version = echo mock 1.2
pattern.valid = ^unsat
pattern.invalid = ^sat
pattern.timeout = timeout

[prover.ghost]
command = /nonexistent/ghost %{model} %{property}
format = smtlib
pattern.invalid = ^sat
pattern.valid = ^unsat
";

    #[test]
    fn parse_and_classify() {
        let cfgs = parse_config(SAMPLE).unwrap();
        assert_eq!(cfgs.len(), 2);
        let mock = &cfgs[0];
        assert_eq!(mock.format, PropertyFormat::VnnLib);
        assert_eq!(cfgs[1].format, PropertyFormat::SmtLib);
        assert_eq!(classify_output("unsat\n", mock), OutcomeKind::Valid);
        assert_eq!(
            classify_output("log line\nsat\n", mock),
            OutcomeKind::Invalid
        );
        assert_eq!(classify_output("timeout", mock), OutcomeKind::Timeout);
        assert_eq!(classify_output("garbage", mock), OutcomeKind::Unknown);
    }

    #[test]
    fn malformed_lines_report_their_position() {
        let e = parse_config("[prover.a]\ncommand\n").unwrap_err();
        assert_eq!(
            e,
            ProverError::ConfigParse {
                line: 2,
                message: "expected key = value".into()
            }
        );
        assert!(matches!(
            parse_config("[prover.a]\ncommand = x\npattern.valid = a\npattern.invalid = b\n"),
            Err(ProverError::ConfigParse { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("[prover.a]\ncommand = x %{property}\npattern.valid = a\n"),
            Err(ProverError::ConfigParse { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("command = x\n"),
            Err(ProverError::ConfigParse { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("[prover.exact]\n"),
            Err(ProverError::ConfigParse { line: 1, .. })
        ));
    }

    #[test]
    fn detection() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.conf");
        std::fs::write(&empty, "").unwrap();
        let found = detect(Some(&empty)).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].name, "exact");
        assert!(found[0].available);

        let custom = dir.path().join("site-provers.conf");
        std::fs::write(&custom, SAMPLE).unwrap();
        let found = detect(Some(&custom)).unwrap();
        let names: Vec<_> = found
            .iter()
            .map(|d| (d.name.as_str(), d.available))
            .collect();
        assert_eq!(names, [("exact", true), ("mock", true), ("ghost", false)]);
        assert_eq!(found[1].version, "mock 1.2");
    }
}

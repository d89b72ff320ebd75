//! Prover registry and dispatch: configuration and detection of external
//! provers, classification of their answers, subprocess execution with an
//! enforced timeout, and the built-in exact verifier.

mod config;
mod dispatch;
mod exact;
pub mod fm;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::emit::EmitError;
use crate::rational::{self, Rational};

pub use config::{
    classify_output, detect, load_config, parse_config, Detected, PropertyFormat, ProverConfig,
    CONFIG_ENV,
};
pub use dispatch::{dispatch, parse_counterexample, run_external, DispatchOptions, ProverChoice};
pub use exact::{exact_verify, ExactOptions};

/// Name of the built-in prover.
pub const EXACT: &str = "exact";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProverError {
    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },
    #[error("cannot read config {}: {message}", .path.display())]
    ConfigIo { path: PathBuf, message: String },
    #[error("workspace: {0}")]
    WorkspaceIo(String),
    #[error("unknown prover `{0}`")]
    UnknownProver(String),
    #[error("input `{0}` has no finite lower or upper bound")]
    UnboundedInput(String),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

/// Answer categories shared by every prover.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Valid,
    Invalid,
    Timeout,
    Unknown,
    Crash,
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutcomeKind::Valid => "valid",
            OutcomeKind::Invalid => "invalid",
            OutcomeKind::Timeout => "timeout",
            OutcomeKind::Unknown => "unknown",
            OutcomeKind::Crash => "crash",
        })
    }
}

impl OutcomeKind {
    pub fn parse(text: &str) -> Option<Self> {
        Some(match text {
            "valid" => OutcomeKind::Valid,
            "invalid" => OutcomeKind::Invalid,
            "timeout" => OutcomeKind::Timeout,
            "unknown" => OutcomeKind::Unknown,
            "crash" => OutcomeKind::Crash,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProverOutcome {
    pub prover: String,
    pub kind: OutcomeKind,
    /// Input valuation falsifying the goal; only for `Invalid`.
    #[serde(
        with = "rational_list",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub counterexample: Option<Vec<Rational>>,
    /// Seconds.
    pub wall_time: f64,
    pub raw_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl ProverOutcome {
    pub fn new(prover: &str, kind: OutcomeKind) -> Self {
        ProverOutcome {
            prover: prover.to_string(),
            kind,
            counterexample: None,
            wall_time: 0.0,
            raw_output: String::new(),
            diagnostic: None,
        }
    }
}

/// Rationals as exact strings (`0.25`, `1/3`) in JSON.
mod rational_list {
    use super::*;
    use serde::{de::Error as _, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<Rational>>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|xs| xs.iter().map(rational::display).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Rational>>, D::Error> {
        let Some(xs) = Option::<Vec<String>>::deserialize(d)? else {
            return Ok(None);
        };
        xs.iter()
            .map(|x| {
                rational::parse_rational(x)
                    .ok_or_else(|| D::Error::custom(format!("bad rational {x}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }
}

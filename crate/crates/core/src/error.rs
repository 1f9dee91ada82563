//! Error types shared across the crate.

use std::path::PathBuf;

/// Coordinates identifying where a trajectory blew up.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DivergenceSite {
    pub replica: Option<u64>,
    pub client: Option<u64>,
    pub round: Option<u64>,
    pub step: u64,
}

impl std::fmt::Display for DivergenceSite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(r) = self.replica {
            write!(f, "replica {r}, ")?;
        }
        if let Some(c) = self.client {
            write!(f, "client {c}, ")?;
        }
        if let Some(r) = self.round {
            write!(f, "round {r}, ")?;
        }
        write!(f, "step {}", self.step)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A formula was requested outside the hypotheses under which it holds.
    /// The bounds are meaningless outside their regime, so this is a hard
    /// error rather than a clamp.
    #[error("out of regime: {hypothesis} violated ({detail})")]
    OutOfRegime {
        hypothesis: &'static str,
        detail: String,
    },

    #[error("trajectory diverged (|x| > {guard:e}) at {site}")]
    Diverged { guard: f64, site: DivergenceSite },

    #[error("histogram range too small: {outside_fraction:.3e} of the mass fell outside [{lo}, {hi}] (limit 1e-3)")]
    RangeTooSmall {
        lo: f64,
        hi: f64,
        outside_fraction: f64,
    },

    #[error("inconclusive: confidence interval too wide to decide; roughly n = {required_n} samples needed (got {got_n})")]
    Inconclusive { required_n: u64, got_n: u64 },

    #[error("non-positive magnitudes at indices {indices:?}; filter before fitting")]
    NonPositiveFitInput { indices: Vec<usize> },

    #[error("unknown command `{0}`")]
    UnknownCommand(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn regime(hypothesis: &'static str, detail: impl Into<String>) -> Self {
        Error::OutOfRegime {
            hypothesis,
            detail: detail.into(),
        }
    }
}

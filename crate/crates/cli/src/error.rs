//! CLI error categories and their process exit codes.
//!
//! Every failure is reported as a single stderr line of the form
//! `error: <category>: <message>` with a category-specific exit code:
//! usage 2, validation 3, io 4, numerical 5.

use std::fmt;
use std::path::Path;

use amfuse_core::fusion::FusionError;
use amfuse_core::inventory::InventoryError;
use amfuse_core::metrics::MetricsError;
use amfuse_core::net::{NetError, TrainError};
use amfuse_core::pgm::PgmError;
use amfuse_core::posterior::PosteriorError;
use amfuse_core::synth::SynthError;

#[derive(Debug)]
pub enum CliError {
    /// Malformed invocation: bad flags, bad flag values.
    Usage(String),
    /// Inputs that parse but violate an invariant (bad file contents,
    /// inconsistent dimensions, unknown languages, invalid weights...).
    Validation(String),
    /// The operating system refused a read or write.
    Io(String),
    /// Non-finite numbers where finite ones are required; training
    /// divergence.
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io(_) => 4,
            CliError::Numerical(_) => 5,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
            CliError::Numerical(_) => "numerical",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m)
            | CliError::Validation(m)
            | CliError::Io(m)
            | CliError::Numerical(m) => m,
        }
    }

    /// Same category, message prefixed with `prefix: `.
    pub fn prefixed(self, prefix: &str) -> Self {
        let msg = format!("{prefix}: {}", self.message());
        match self {
            CliError::Usage(_) => CliError::Usage(msg),
            CliError::Validation(_) => CliError::Validation(msg),
            CliError::Io(_) => CliError::Io(msg),
            CliError::Numerical(_) => CliError::Numerical(msg),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category(), self.message())
    }
}

impl std::error::Error for CliError {}

/// Adds the offending path to an error converted from a core error type.
pub fn at_path(e: impl Into<CliError>, path: &Path) -> CliError {
    e.into().prefixed(&path.display().to_string())
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<PosteriorError> for CliError {
    fn from(e: PosteriorError) -> Self {
        match e {
            PosteriorError::Io(io) => io.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        match e {
            PgmError::Io(io) => io.into(),
            PgmError::Posterior(p) => p.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<InventoryError> for CliError {
    fn from(e: InventoryError) -> Self {
        match e {
            InventoryError::Io(io) => io.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Io(io) => io.into(),
            NetError::NonFinite(m) => CliError::Numerical(format!("non-finite input: {m}")),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } => CliError::Numerical(e.to_string()),
            TrainError::Net(n) => n.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(io) => io.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<FusionError> for CliError {
    fn from(e: FusionError) -> Self {
        match e {
            FusionError::Io(io) => io.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(io) => io.into(),
            SynthError::Posterior(p) => p.into(),
            SynthError::Pgm(p) => p.into(),
            SynthError::Inventory(i) => i.into(),
            SynthError::Metrics(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<toml::de::Error> for CliError {
    fn from(e: toml::de::Error) -> Self {
        // toml renders multi-line pointered messages; keep the first line.
        let first = e.to_string();
        let first = first.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
        CliError::Validation(format!("config parse error: {}", first.trim()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn categories_map_to_documented_exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
        assert_eq!(CliError::Validation(String::new()).exit_code(), 3);
        assert_eq!(CliError::Io(String::new()).exit_code(), 4);
        assert_eq!(CliError::Numerical(String::new()).exit_code(), 5);
    }

    #[test]
    fn divergence_is_numerical_and_bad_weights_are_validation() {
        use amfuse_core::net::{StopReason, TrainingTrace};
        let div: CliError = TrainError::Divergence {
            epoch: 3,
            trace: TrainingTrace {
                epochs: vec![],
                stop_reason: StopReason::Diverged,
                best_epoch: 0,
            },
        }
        .into();
        assert_eq!(div.exit_code(), 5);
        let weights: CliError = FusionError::InvalidWeights(vec!["bad".into()]).into();
        assert_eq!(weights.exit_code(), 3);
    }

    #[test]
    fn display_is_one_line_with_category() {
        let e = CliError::Validation("dimension mismatch".into());
        assert_eq!(e.to_string(), "validation: dimension mismatch");
        assert!(!e.to_string().contains('\n'));
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or flags; reported before any computation.
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] ultrametric_vp::Error),

    #[error("cannot write `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{failed} check(s) failed: {names}")]
    CheckFailed { failed: usize, names: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(e) if is_validation(e) => 2,
            CliError::CheckFailed { .. } => 3,
            _ => 1,
        }
    }
}

fn is_validation(e: &ultrametric_vp::Error) -> bool {
    use ultrametric_vp::Error as E;
    matches!(
        e,
        E::InvalidTree(_)
            | E::UnknownVertex(_)
            | E::NotALeaf { .. }
            | E::NotAligned
            | E::InvalidParameter(_)
            | E::CapExceeded { .. }
            | E::Json(_)
    )
}

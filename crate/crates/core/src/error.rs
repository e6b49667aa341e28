use thiserror::Error;

/// Errors raised while building trees or evaluating operators on them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("vertex `{0}` is not in the tree")]
    UnknownVertex(String),

    #[error("`{address}` is at level {level}, expected a leaf at level {depth}")]
    NotALeaf {
        address: String,
        level: usize,
        depth: usize,
    },

    #[error(
        "radius {radius} is not the diameter of an ancestor of `{center}` \
         (nearest attained: below {below}, above {above})"
    )]
    RadiusNotAttained {
        center: String,
        radius: String,
        below: String,
        above: String,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} of size {size} exceeds the cap {cap}")]
    CapExceeded {
        what: &'static str,
        size: u128,
        cap: usize,
    },

    #[error("kernel is undefined on the diagonal (x = y = `{0}`)")]
    Diagonal(String),

    #[error("the diameter-aligned kernel requires measure = diameter at every vertex")]
    NotAligned,

    #[error("no wavelet is supported on the leaf `{0}`")]
    LeafSupport(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed tree description: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

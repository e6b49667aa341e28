//! Vladimirov-Pearson operators on finitely truncated ultrametric Cantor sets.
//!
//! The crate builds truncated Michon trees ([`tree`]), their zeta data and
//! equity measure ([`measure_zeta`]), the ultrametric wavelet basis
//! ([`wavelets`]), the operator itself in exact finite form ([`operator`]),
//! its heat semigroup and Green function ([`heat`]) and the associated jump
//! process ([`process`]). [`checks`] bundles the invariant suite used by the
//! `check` command.

pub mod checks;
pub mod error;
pub mod heat;
pub mod measure_zeta;
pub mod numeric;
pub mod operator;
pub mod process;
pub mod tree;
pub mod wavelets;

pub use error::{Error, Result};

//! Error type shared by all modules.

use alloc::string::String;
use alloc::vec::Vec;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the named operation.
    #[error("{op}: shape mismatch: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An operation that needs at least one element got none.
    #[error("{what}: empty input")]
    EmptySet { what: &'static str },

    /// `backward` was called on a tensor that is not a scalar.
    #[error("backward requires a scalar loss, got {len} elements")]
    NonScalarLoss { len: usize },

    /// Invalid configuration value.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A label referenced a class with no samples.
    #[error("class {class} has no samples")]
    MissingClass { class: usize },

    /// A label lies outside `[0, class_count)`.
    #[error("label {label} at index {index} is out of range (class count {class_count})")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        class_count: usize,
    },

    /// The batch lacks the pairs/triplets the loss needs.
    #[error("batch composition: {0}")]
    BatchComposition(String),

    /// A statistic needs more data points than were provided.
    #[error("{what}: need at least {needed} values, got {got}")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    /// Batch sampling could not honor its configuration.
    #[error("sampler: {0}")]
    Sampler(String),

    /// Training aborted mid-run; carries where and why.
    #[error("training aborted at epoch {epoch}, batch {batch}: {reason}")]
    Abort {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    /// An observer callback (metrics/checkpoint sink) failed.
    #[error("observer: {0}")]
    Observer(String),
}

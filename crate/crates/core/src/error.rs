use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Concentration outside the model's declared validity interval.
    #[error("concentration {c} outside validity interval [{lo}, {hi}]")]
    DomainError { c: f64, lo: f64, hi: f64 },

    /// A derivative order this model cannot supply.
    #[error("derivative order {order} unsupported for {model} (max {max})")]
    UnsupportedOrder {
        model: &'static str,
        order: usize,
        max: usize,
    },

    /// Target value outside the range of the integrated diffusivity.
    #[error("target {f} outside attainable range [{lo}, {hi}]")]
    RangeError { f: f64, lo: f64, hi: f64 },

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),

    /// Operation requires a boundary treatment the grid does not use.
    #[error("{op} requires {required} boundary, grid is {actual}")]
    UnsupportedBoundary {
        op: &'static str,
        required: &'static str,
        actual: &'static str,
    },

    /// Invalid model or solver parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Series coefficients grew past any usable magnitude.
    #[error("series coefficient at order {order} exceeds 1e100; time horizon is zero")]
    Divergence { order: usize },

    /// Time integration produced a non-finite field.
    #[error("non-finite value at step {step} (t = {t}); time step too large or data invalid")]
    Instability { step: usize, t: f64 },

    /// An identity that divides by D' was asked of a model with D' = 0.
    #[error("{op} requires dD/dc != 0 on the field's range; {model} violates this")]
    NonlinearityRequired { op: &'static str, model: &'static str },

    /// Not enough snapshots for the requested stencil or quadrature.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Malformed input file.
    #[error("parse error in {path} line {line}: {msg}")]
    ParseError {
        path: String,
        line: usize,
        msg: String,
    },

    /// Underlying I/O failure.
    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

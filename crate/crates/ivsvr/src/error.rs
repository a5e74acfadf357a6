//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Two vectors/matrices that must agree in length or shape do not.
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    /// A configuration value is outside its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// A learning-rate schedule produced a negative shrink multiplier.
    #[error("schedule shrink multiplier is negative at t={t}: {value}")]
    ScheduleParameter { t: u64, value: f64 },

    /// An operation that needs at least one support vector saw none.
    #[error("empty model: {0}")]
    EmptyModel(&'static str),

    /// The bordering denominator of the inverse update is too close to
    /// zero; the candidate vector is numerically spanned by the current set
    /// and must not be inserted.
    #[error("near-singular bordering denominator {denom:e} (threshold {delta_z:e})")]
    NearSingular { denom: f64, delta_z: f64 },

    /// A query point with k(x,x) = 0 (possible only for the linear kernel
    /// at the origin) has no defined local fitness.
    #[error("degenerate sample: k(x, x) = 0")]
    DegenerateSample,

    /// An index was outside the current state dimension.
    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    /// The configured hard cap on state dimension was hit.
    #[error("capacity exceeded: dimension {dim} at configured cap {cap}")]
    CapacityExceeded { dim: usize, cap: usize },

    /// The stored kernel matrix is numerically singular, so the inverse
    /// cannot be rebuilt; the state cannot be repaired in place.
    #[error("kernel matrix numerically singular; state unrecoverable")]
    UnrecoverableState,

    /// The support-vector dictionary and the selection state disagree.
    #[error("dictionary/selection state misaligned: {details}")]
    StateMismatch { details: String },

    /// An option price violates its no-arbitrage bounds, so no implied
    /// volatility exists.
    #[error("price {price} outside no-arbitrage bounds ({lo}, {hi})")]
    IvOutOfBounds { price: f64, lo: f64, hi: f64 },

    /// The implied volatility lies outside the configured search bracket.
    #[error("implied volatility outside search bracket [{lo}, {hi}]")]
    IvOutOfBracket { lo: f64, hi: f64 },

    /// Root search failed to reach tolerance within the iteration cap.
    #[error("implied-volatility solver did not converge within {max_iter} iterations")]
    IvNoConvergence { max_iter: u32 },

    /// A tick stream went backwards in time.
    #[error("out-of-order tick at {position}: timestamp {ts_us} after {prev_us}")]
    StreamOrder { position: u64, prev_us: i64, ts_us: i64 },

    /// A record in an input file could not be parsed.
    #[error("parse error at {origin}:{line}: {reason}")]
    Parse { origin: String, line: u64, reason: String },

    /// A persisted file carries an unknown format header.
    #[error("unsupported file version: expected `{expected}`, found `{found}`")]
    VersionMismatch { expected: &'static str, found: String },

    /// A statistic needs more samples than were supplied.
    #[error("need at least {need} samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    /// Underlying I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

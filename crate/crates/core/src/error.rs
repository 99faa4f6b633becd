use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("slot {slot} out of range for a space with {factors} factors")]
    SlotOutOfRange { slot: usize, factors: usize },

    #[error("operator is not Hermitian (max |H - H^dag| = {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("state is not normalized (norm = {norm:.12})")]
    NotNormalized { norm: f64 },

    #[error("measurement basis is not orthonormal and complete")]
    InvalidBasis,

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("sampling step {dt:.6e} violates Nyquist; need dt <= {required:.6e}")]
    Nyquist { dt: f64, required: f64 },

    #[error("band {band} is degenerate on the loop (spacing {spacing:.3e})")]
    Degeneracy { band: usize, spacing: f64 },

    #[error("Berry phase residue {residue:.3e} exceeds the quantization bound")]
    WindingResidue { residue: f64 },

    #[error("numerical contract violated: {0}")]
    Contract(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max |H - H^dagger| = {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not unitary (max |U^dagger U - I| = {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("target operator is not unitary (max |X^dagger X - I| = {defect:.3e})")]
    TargetNotUnitary { defect: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("trace overlap with the target vanishes ({overlap:.3e}); phase is undefined")]
    ZeroTraceOverlap { overlap: f64 },

    #[error("edge ({0}, {1}) is not a nearest-neighbour pair of the qubit grid")]
    BadEdge(usize, usize),

    #[error("ground energy {e_min} of the measured Hamiltonian must be negative")]
    NonNegativeGroundEnergy { e_min: f64 },

    #[error("free-binary enumeration over {n_ctrl} controllers exceeds the cap of {cap} candidates")]
    UnsupportedFeasibleSet { n_ctrl: usize, cap: usize },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

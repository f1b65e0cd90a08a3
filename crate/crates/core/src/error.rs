use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coupling must have unit modulus, got |A| = {0}")]
    NonUnitCoupling(f64),
    #[error("omega must be finite and >= 0, got {0}")]
    InvalidFrequency(f64),
    #[error("lam must be > 0, got {0}")]
    InvalidRate(f64),
    #[error("amplitudes are not normalized: squared norm = {0}")]
    NotNormalized(f64),
    #[error("|env_overlap| must be <= 1, got {0}")]
    OverlapTooLarge(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("hamiltonian is not hermitian (|H - H^dag|_F = {0:e})")]
    NotHermitian(f64),
    #[error("not a density operator: {0}")]
    InvalidDensity(String),
    #[error("invalid projector family: {0}")]
    InvalidProjectors(String),
    #[error("Δ=0 degenerate; use ODE path (eps = 1/4)")]
    DegenerateDelta,
    #[error("closed form left an imaginary residue of {0:e}")]
    ImaginaryResidue(f64),
    #[error("no reduction plateau: t_min = {t_min:e} s >= t_max = {t_max:e} s")]
    NoPlateau { t_min: f64, t_max: f64 },
    #[error("time grid must start at 0 and be strictly increasing")]
    InvalidTimeGrid,
    #[error("integration step underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("integration exceeded {0} steps")]
    TooManySteps(usize),
    #[error("density operator invariant violated at t = {t:e}: {reason}")]
    InvariantViolation { t: f64, reason: String },
    #[error("steady state is not unique: null space has dimension {0}")]
    NonUniqueSteadyState(usize),
    #[error("numerically degenerate state at t = {0:e}: all outcome weights below 1e-14")]
    DegenerateState(f64),
    #[error("trajectory {index}: {source}")]
    Trajectory { index: usize, source: Box<Error> },
    #[error("manifold '{label}' has weight {weight:e} < 1e-12; conditional state undefined")]
    EmptyManifold { label: String, weight: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

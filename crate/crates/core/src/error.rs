use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("Laurent polynomial evaluated at its pole beta = 0")]
    Pole,

    #[error("lattice of {sites} sites is too small for hopping range {range}")]
    WrapAround { sites: usize, range: usize },

    #[error("eigensolver did not converge; {remaining} eigenvalues left in the active window")]
    SolverFailure { remaining: usize },

    #[error("eigenvector matrix is near-defective (condition number {condition:.3e})")]
    NearExceptionalPoint { condition: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("operation requires a single-band model, got {bands} bands")]
    WrongArity { bands: usize },

    #[error("metric diverges at mu = {mu} ({flagged} near-EP quadrature points)")]
    Divergent { mu: f64, flagged: usize },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("no sign change of the gap between t = {lo} and t = {hi}")]
    NotBracketed { lo: f64, hi: f64 },

    #[error("ambiguous central minimum: {count} minima found")]
    AmbiguousCentral { count: usize },

    #[error("root of modulus {modulus} lies on the GBZ circle r = {radius} (exceptional point)")]
    AtTransition { modulus: f64, radius: f64 },

    #[error("energy lies on the spectrum at phase phi = {phi}")]
    OnSpectrum { phi: f64 },

    #[error("transfer-matrix product overflowed at step {step}")]
    Overflow { step: usize },

    #[error("conditioning guard tripped: {0}")]
    IllConditioned(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

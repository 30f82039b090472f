use thiserror::Error;

/// Errors raised by the solvers in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid domain [{a}, {b}]: left end must be below right end")]
    InvalidDomain { a: f64, b: f64 },

    #[error("dimension mismatch: expected {expected}, got {found} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("degenerate exponent p = n + 1: the similarity exponent vanishes and no compactly supported profile exists")]
    DegenerateExponent,

    #[error("no sign change of the interface height on [{lo}, {hi}] (h = {h_lo:.3e}, {h_hi:.3e}); widen the bracket")]
    NoSignChange { lo: f64, hi: f64, h_lo: f64, h_hi: f64 },

    #[error("interface root at y0 = {y0:.6} gives a sign-changing profile (min f = {min:.3e}); narrow the bracket")]
    FbpSignChange { y0: f64, min: f64 },

    #[error("boundary value solve diverged at {context}")]
    BvpDivergence { context: String },

    #[error("profile depends on the truncation length: norm {norm_l:.6} at L = {l:.3} vs {norm_l15:.6} at 1.5 L")]
    LengthSensitivity { l: f64, norm_l: f64, norm_l15: f64 },

    #[error("periodic orbit search did not converge for n = {n} (last residual {residual:.3e})")]
    OrbitNoConvergence { n: f64, residual: f64 },

    #[error("periodic orbit degenerated: period {period:.3e} below step floor")]
    OrbitDegenerate { period: f64 },

    #[error("no periodic orbit converged at the scan start n = {n}")]
    SeedFailure { n: f64 },

    #[error("continuation start profile is not converged")]
    StartNotConverged,

    #[error("non-positive solvability denominator {0:.3e}")]
    NonPositiveDenominator(f64),

    #[error("eigenvalues did not settle under domain and mesh enlargement (drift {0:.3e})")]
    SpectrumNoConvergence(f64),

    #[error("time step Newton iteration failed at t = {t:.6e} with dt = {dt:.3e}")]
    NewtonFailure { t: f64, dt: f64 },

    #[error("solution reached the computational boundary at t = {t:.6e} (|u| = {value:.3e})")]
    BoundaryContamination { t: f64, value: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

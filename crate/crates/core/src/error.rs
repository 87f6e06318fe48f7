use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("tabulated curve is empty")]
    EmptyCurve,

    #[error("tabulated curve must be strictly increasing in frequency")]
    NonMonotoneGrid,

    #[error("negative loss value {value} at omega = {omega}")]
    NegativeLoss { omega: f64, value: f64 },

    #[error("frequency {0} outside the tabulated range")]
    OutOfRange(f64),

    #[error("eigen solver failed in grating layer: {0}")]
    EigenFailure(String),

    #[error("singular matrix while matching boundary conditions ({0})")]
    Singular(String),

    #[error("round-trip spectral radius {rho:.6} is not below one at xi = {xi:e}")]
    SpectralRadius { rho: f64, xi: f64 },

    #[error("log-det has imaginary residue {imag:e} against real part {real:e}")]
    ImaginaryResidue { real: f64, imag: f64 },

    #[error("det(1 - M) is not positive ({0:e})")]
    NonPositiveDeterminant(f64),

    #[error("Matsubara series did not decay after {0} terms")]
    NonDecaying(usize),

    #[error("truncation did not converge after {0} doublings")]
    NoConvergence(usize),

    #[error("finite difference step too small: {0}")]
    StepUnderflow(String),

    #[error("io: {0}")]
    Io(String),

    #[error("malformed data: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("rate graph is not strongly connected")]
    NotIrreducible,
    #[error("detailed balance violated between states {from} and {to} (relative residual {residual:e})")]
    DetailedBalanceViolated { from: usize, to: usize, residual: f64 },
    #[error("degenerate measure: entry {index} is {value}")]
    DegenerateMeasure { index: usize, value: f64 },
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("observable is not centred: mean {0:e}")]
    MeanNotZero(f64),
    #[error("linear system is singular or ill-conditioned (scaled residual {0:e})")]
    SingularSystem(f64),
    #[error("marginals have different total mass ({0} vs {1})")]
    InfeasibleMarginals(f64, f64),
    #[error("grid is not strictly increasing at index {0}")]
    UnsortedGrid(usize),
    #[error("product space too large: {0} entries")]
    ProductTooLarge(usize),
    #[error("pair {pair} violates its class constraint by {excess:e}")]
    PhiConstraintViolated { pair: usize, excess: f64 },
    #[error("t * Lambda = {0} would overflow the exponential")]
    HorizonOverflow(f64),
    #[error("no subset of the measure has weight exactly {0}")]
    NoExactSplit(f64),
    #[error("estimator relative variance {0:e} exceeds what the path count can resolve")]
    EstimatorOverflow(f64),
    #[error("adaptive quadrature failed on [{0}, {1}]")]
    QuadratureFailure(f64, f64),
    #[error("speed measure does not decay at the grid edge (tail ratio {0})")]
    DivergentSpeedMeasure(f64),
    #[error("C(rho) integral diverges near x = {0}")]
    DivergenceDetected(f64),
    #[error("discretized chain violates detailed balance (residual {0:e})")]
    StepTooCoarse(f64),
    #[error("Lyapunov function takes value {value} < 1 at state {index}")]
    UBelowOne { index: usize, value: f64 },
    #[error("certificate is not certified (max violation {0:e})")]
    NotCertified(f64),
    #[error("truncation at n_max = {n_max} leaves tail mass {tail:e}")]
    TruncationTooSmall { n_max: usize, tail: f64 },
    #[error("SDE step {step} is too large for drift scale {scale}")]
    StepTooLarge { step: f64, scale: f64 },
    #[error("expression error: {0}")]
    Expr(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("not implemented for m = {0}")]
    UnsupportedOrder(u32),
    #[error("step size underflow at y = {y}")]
    StepUnderflow { y: f64 },
    #[error("non-finite state at y = {y}")]
    NonFinite { y: f64 },
    #[error("trajectory overflowed before reaching the end, truncated at y = {y}")]
    Overflow { y: f64 },
    #[error("Newton iteration did not converge after {iters} iterations (residual {residual:e})")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("shot blew up at y = {y}; try a smaller guess or interval")]
    BlowupInShot { y: f64 },
    #[error("converged to the trivial solution (amplitude {amplitude:e})")]
    TrivialSolution { amplitude: f64 },
    #[error("converged profile has an algebraic tail")]
    AlgebraicTail,
    #[error("integral identity violated: residual {0:e}")]
    IdentityViolated(f64),
    #[error("quadrature: {0}")]
    Quadrature(String),
    #[error("kappa = {0} is not positive")]
    NonPositiveKappa(f64),
    #[error("singular linear system")]
    Singular,
    #[error("continuation: {0}")]
    Continuation(String),
    #[error("no blow-up within y <= {0}")]
    NoBlowup(f64),
    #[error("blow-up estimate unreliable: {0}")]
    UnreliableBlowup(String),
    #[error("domain exhausted: {0}")]
    DomainExhausted(String),
    #[error("anomaly: {0}")]
    Anomaly(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// CLI exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParams(_) | Error::Config(_) | Error::UnsupportedOrder(_) => 3,
            Error::IdentityViolated(_) | Error::UnreliableBlowup(_) | Error::Anomaly(_) => 4,
            Error::Io(_) | Error::Json(_) => 1,
            _ => 2,
        }
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cutoff mismatch: {0}")]
    CutoffMismatch(String),

    #[error("layout mismatch: expected dimension {expected}, got {found}")]
    LayoutMismatch { expected: usize, found: usize },

    #[error("invalid composite mode index {0} (expected 1..=4)")]
    InvalidCompositeMode(usize),

    #[error("singular input: {0}")]
    SingularInput(&'static str),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("infeasible laser configuration: {0}")]
    Infeasible(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integration unstable at tau = {tau}: trace drift {drift:e} (try a smaller d_tau)")]
    Unstable { tau: f64, drift: f64 },

    #[error("threshold 1 - F <= {threshold:e} never reached; max fidelity attained {max_fidelity}")]
    NotConverged { threshold: f64, max_fidelity: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("steering angle {0} rad is too close to the tangent singularity at +-pi/2")]
    SingularSteering(f64),
    #[error("reference speed is zero; feedforward inputs are undefined")]
    SingularReference,
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("trajectory construction failed: {0}")]
    Construction(String),
    #[error("time {t} s is outside the trajectory domain [0, {duration}]")]
    OutsideDomain { t: f64, duration: f64 },
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("tightened input set is empty on channel {channel}: saturation {saturation} exceeds bound {bound}")]
    EmptyTightenedSet {
        channel: usize,
        saturation: f64,
        bound: f64,
    },
    #[error("controller aborted after {0} consecutive QP failures")]
    ControllerAbort(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: String, reason: String },
    #[error("lattice side must be odd, got {0}")]
    EvenSide(usize),
    #[error("vertex outside box: {0}")]
    VertexOutside(String),
    #[error("ball of radius {radius} around {center} does not fit in the box")]
    BallExceedsBox { center: String, radius: u64 },
    #[error("operation requires a periodic box")]
    NotPeriodic,
    #[error("query at t={t} outside environment horizon [{start}, {end}]")]
    OutsideHorizon { t: f64, start: f64, end: f64 },
    #[error("exit rate {rate} exceeds dominating rate {bound} at t={t}")]
    DominationViolated { rate: f64, bound: f64, t: f64 },
    #[error("diffusive scale 6*sqrt({lambda}*{t}) exceeds torus side {side}")]
    DiffusiveScaleTooLarge { lambda: f64, t: f64, side: usize },
    #[error("torus side {side} below required {required}")]
    BoxTooSmall { side: usize, required: usize },
    #[error("Poisson mean {0} exceeds the 1e6 truncation guard")]
    PoissonOverflow(f64),
    #[error("Langevin step {dt} exceeds stability bound {bound}")]
    StabilityGuard { dt: f64, bound: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("tail bound {bound} exceeds tolerance {tol}")]
    TailBound { bound: f64, tol: f64 },
    #[error("estimator blow-up: relative stderr {0} above 0.2")]
    VarianceBlowUp(f64),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for aborts raised by numerical guards rather than bad input.
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Error::DominationViolated { .. }
                | Error::DiffusiveScaleTooLarge { .. }
                | Error::BoxTooSmall { .. }
                | Error::PoissonOverflow(_)
                | Error::StabilityGuard { .. }
                | Error::NonFinite(_)
                | Error::TailBound { .. }
                | Error::VarianceBlowUp(_)
                | Error::OutsideHorizon { .. }
        )
    }
}

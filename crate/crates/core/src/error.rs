use crate::model::Violation;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0:?}")]
    InvalidInstance(Vec<Violation>),
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("empty instance cannot route positive rate")]
    EmptyInstance,
    #[error("first link has zero slope; two-link rescaling undefined")]
    ZeroSlopeRescale,
    #[error("expected exactly two links, got {0}")]
    NotTwoLinks(usize),
    #[error("level {level} below required floor {floor}")]
    LevelBelowFloor { level: f64, floor: f64 },
    #[error("mechanism parameter must be positive: {name} = {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("malformed piecewise latency: {0}")]
    MalformedPiecewise(String),
    #[error("closed form needs a strictly increasing active set (constant link active)")]
    ConstantLinkActive,
    #[error("expected an error-tolerant mechanism")]
    NotErrorTolerant,
    #[error("grid would enumerate {0} points, above the supported budget")]
    GridTooLarge(u128),
    #[error("instance has {got} links, oracle supports at most {max}")]
    TooManyLinks { got: usize, max: usize },
    #[error("rate {rate} is not a multiple of the grid step {step}")]
    RateOffGrid { rate: f64, step: f64 },
    #[error("delta {0} outside (0, 2/3)")]
    DeltaOutOfRange(f64),
    #[error("empty rate grid")]
    EmptyGrid,
    #[error("flow has {flow} entries but the network has {links} links")]
    DimensionMismatch { flow: usize, links: usize },
    #[error("two-link closed form degenerates at b = 0; use the numeric path")]
    DegenerateClosedForm,
}

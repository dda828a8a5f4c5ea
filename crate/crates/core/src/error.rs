use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("trajectory has no points or no ink")]
    EmptyTrajectory,
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("zero vertical extent, cannot normalize height")]
    DegenerateExtent,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("unknown category {category} (model has {count})")]
    UnknownCategory { category: usize, count: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sequence of length {len} is too short for two segments of length {segment}")]
    SequenceTooShort { len: usize, segment: usize },
    #[error("contrastive loss needs at least two writers, got {0}")]
    NeedTwoWriters(usize),
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),
    #[error("timestep {t} outside 1..={steps}")]
    InvalidTimestep { t: usize, steps: usize },
    #[error("geometric features need at least two boxes")]
    NeedTwoBoxes,
    #[error("reference transcript is empty")]
    EmptyReference,
    #[error("classifier needs at least two classes")]
    NeedTwoClasses,
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}

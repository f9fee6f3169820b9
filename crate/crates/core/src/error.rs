use thiserror::Error;

use crate::world::ObjectId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("action target ({x}, {y}) is outside the 20x20 cm workspace")]
    OutOfWorkspace { x: f64, y: f64 },
    #[error("unknown color `{0}` (expected red, green or blue)")]
    UnknownColor(String),
    #[error("a pair stack needs two different objects, got {0} twice")]
    SameObject(ObjectId),
    #[error("invalid world state: {0}")]
    InvalidState(String),
    #[error("no plan of at most 8 moves solves `{0}`")]
    Unsolvable(String),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("unrecognized instruction `{text}`; expected one of: {expected}")]
    Task { text: String, expected: &'static str },
    #[error("`{0}` is not a caption; expected \"The robot is grasping the <color> object\" or \"The <color> object is on top of the <color> object\"")]
    Caption(String),
    #[error("no bracketed list of quoted captions found in completion `{0}`")]
    NoList(String),
    #[error("curriculum must contain at least one caption")]
    EmptyCurriculum,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("input has {got} components, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty training batch")]
    EmptyBatch,
    #[error("target cell {0} outside the 10x10 action grid")]
    CellOutOfRange(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BufferError {
    #[error("cannot sample from an empty task buffer")]
    Empty,
    #[error("episode log: {0}")]
    Log(String),
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("skill `{0}` is not in the skill library")]
    MissingSkill(String),
    #[error("no library caption was ever recognized in the demonstration")]
    NothingObserved,
    #[error("demonstration has no frames")]
    EmptyDemo,
    #[error("malformed demonstration: {0}")]
    Demo(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    World(#[from] WorldError),
}

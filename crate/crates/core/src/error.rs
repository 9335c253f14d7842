use thiserror::Error;

use crate::hilbert::{Level, LevelScheme};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("n_atoms = {0} is outside the supported range 1..={max}", max = crate::hilbert::MAX_ATOMS)]
    AtomCount(usize),

    #[error("level `{level}` does not exist in scheme {scheme} (levels: {levels})", levels = scheme.labels())]
    UnknownLevel { level: Level, scheme: LevelScheme },

    #[error("atom index {index} out of range for {n_atoms} atoms")]
    AtomIndex { index: usize, n_atoms: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("operands live on different bases ({left} vs {right})")]
    BasisMismatch { left: String, right: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("adaptive step size underflow at t = {time:e} s (step {step:e} s)")]
    StepUnderflow { time: f64, step: f64 },

    #[error("no step-C timing solution with k <= {max_k}")]
    NoTimingSolution { max_k: u32 },

    #[error(
        "a resonant step-C pulse cannot restore |X_2^{n}> and |X_4^{n}> together: \
         the ratio of their Rabi frequencies is 1:sqrt(2) rather than an integer ratio; \
         supply a detuned timing solution"
    )]
    NonIntegerRabiRatio { n: usize },

    #[error("segment {index} ({label}): {source}")]
    Segment {
        index: usize,
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("atoms {i} and {j} collided (separation {distance:e} m)")]
    Collision { i: usize, j: usize, distance: f64 },
}

impl Error {
    pub(crate) fn in_segment(self, index: usize, label: &str) -> Self {
        Error::Segment {
            index,
            label: label.to_owned(),
            source: Box::new(self),
        }
    }
}

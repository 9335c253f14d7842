//! Simulation of pulsed dissipative preparation of entangled states of
//! Rydberg-blockaded atoms.
//!
//! Units are SI throughout: angular frequencies in rad/s, times in s,
//! distances in m.

pub mod error;
pub mod hamiltonians;
pub mod hilbert;
pub mod lindblad;
pub mod noise;
pub mod oracle;
pub mod propagator;
pub mod protocols;

pub use error::{Error, Result};
pub use hilbert::{Basis, DensityMatrix, Level, LevelScheme, LocalOp, OperatorMatrix, StateVector};

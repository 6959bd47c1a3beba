//! Differentially private dynamic data structures under continual observation.
//!
//! Every mechanism draws its randomness from an explicitly passed
//! [`NoiseSource`]. A source in [`NoiseMode::Off`] returns zero for every
//! draw, which turns each mechanism into a deterministic reference that can
//! be compared against exact oracles.

pub mod cardinality;
pub mod counting;
pub mod draws;
pub mod dyadic;
pub mod error;
pub mod mdim;
pub mod noise;
pub mod partition;
pub mod predecessor;
pub mod queries;
pub mod range_count;
pub mod sparse_vector;

pub use draws::{DrawKind, DrawLog, DrawRecord};
pub use error::{Error, Result};
pub use noise::{EpsilonSchedule, FailureSchedule, NoiseMode, NoiseSource};

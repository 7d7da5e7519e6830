//! Energy-minimal offline transmission scheduling.
//!
//! Packets arrive at arbitrary instants, each with its own deadline, and share
//! one point-to-point link whose power grows convexly with the rate. This
//! crate computes a schedule of minimum total energy, checks any schedule
//! against the optimality conditions of the problem, and carries an
//! independent convex reference solver for cross-checking.

pub mod error;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod power;
pub mod schedule;
pub mod scheduler;
pub mod verifier;

pub use error::{Error, Result};
pub use model::{decompose, is_non_fifo, normalize_instance, EpochDecomposition, Instance, Packet};
pub use power::{PowerModel, RateCurve};
pub use schedule::{Schedule, Segment};
pub use scheduler::{solve, IterationTrace};

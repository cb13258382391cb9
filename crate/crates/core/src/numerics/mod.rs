//! Dense-matrix computation core with tape-based reverse-mode
//! differentiation and a finite-difference gradient checker.
//!
//! Generic over the scalar type; the rest of the crate uses the `f64`
//! aliases exported from the crate root.

pub mod gradcheck;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use params::ParamStore;
pub use tape::{Grads, NodeId, Tape};
pub use tensor::Matrix;

//! Two-stage on-road vehicle behavior classification.
//!
//! Per-frame quadrant spatial relations between tracked entities are
//! collapsed into a multi-relational temporal interaction graph, which is
//! classified per vehicle by a deterministic rule baseline, an MRGCN, or a
//! relation-attention MRGCN trained on synthetic labeled scenes.

pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod rules;
pub mod scene;
pub mod synth;
pub mod train;

pub use error::Error;
pub use graph::dense_demo_graph;

/// Concrete scalar type used by the models; the numerics core itself is
/// generic over `num_traits::Float`.
pub type Scalar = f64;
pub type Tensor = numerics::Matrix<Scalar>;
pub type Tape = numerics::Tape<Scalar>;
pub type ParamStore = numerics::ParamStore<Scalar>;
pub type Grads = numerics::Grads<Scalar>;

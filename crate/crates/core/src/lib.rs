//! Spatial Monte Carlo integration on pairwise Boltzmann machines.
//!
//! The numerical core is generic over the floating point type (`f32` or
//! `f64`, see [`scalar::Scalar`]); the aliases below fix it to `f64`, which
//! is what the experiment drivers and the command line tool use.

pub mod error;
pub mod estimators;
pub mod exact;
pub mod experiments;
pub mod graph;
pub mod io;
pub mod learning;
pub mod model;
pub mod sampling;
pub mod scalar;

pub use error::{Error, Result};
pub use estimators::{EstimatorKind, Method, MomentEstimate};
pub use graph::{PairwiseGraph, Region, Vertex};
pub use model::{SampleSet, SpinConfig};

/// Model parameters in double precision.
pub type Model = model::PbmParams<f64>;
pub type Moments = exact::Moments<f64>;
pub type Gradient = learning::Gradient<f64>;
pub type LearnTrace = learning::LearnTrace<f64>;

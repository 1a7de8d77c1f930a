//! Bidirectional point displacement networks: two PointNet++-style branches
//! learn displacement fields between paired point sets of two domains.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod autodiff;
pub mod cli;
pub mod datasynth;
pub mod error;
pub mod gradsuite;
pub mod io;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod scalar;
pub mod spatial;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PointSet64 = spatial::PointSet<f64>;
pub type PointSet32 = spatial::PointSet<f32>;
pub type Branch64 = layers::Branch<f64>;
pub type Branch32 = layers::Branch<f32>;
pub type Checkpoint64 = trainer::Checkpoint<f64>;
pub type Checkpoint32 = trainer::Checkpoint<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Dataset64 = trainer::PairedDataset<f64>;

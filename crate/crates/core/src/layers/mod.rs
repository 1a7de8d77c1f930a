//! Hierarchical point-set encoder/decoder predicting per-point displacements.

mod config;
mod field;
mod forward;
mod params;

pub use config::{FpSpec, LayerSpec, NetworkConfig, SaSpec, DEFAULT_GROUP_SIZE};
pub use field::{apply_displacements, DisplacementField};
pub use forward::{
    branch_forward, feature_propagation, interpolation_weights, noise_augment, set_abstraction,
    Branch, CentroidSeed, Level,
};
pub use params::{BranchParams, Dense, DenseVars, Layout};

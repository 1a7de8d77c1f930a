//! Joint optimization of the two directional branches and dense inference.

mod adam;
mod config;
mod dataset;
mod train;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use config::{Ablation, TrainConfig};
pub use dataset::{Pair, PairedDataset};
pub use train::{ablated, infer_multipass, train, Checkpoint, Direction, EpochRecord};

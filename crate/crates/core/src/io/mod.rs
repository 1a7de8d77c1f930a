//! File formats: point sets, checkpoints, run configs, dataset directories
//! and SVG plots.

mod checkpoint;
mod config;
mod dataset;
mod pointset;
mod svg;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION,
};
pub use config::{NetworkSection, RunConfig};
pub use dataset::{read_dataset, write_dataset, MANIFEST};
pub use pointset::{read_ply, read_points, read_xyz, write_ply, write_points, write_xyz};
pub use svg::{render_svg, write_svg, Overlay, Style};

//! Point sets and exact neighbor queries over them.

mod index;
mod pointset;

pub use index::{farthest_point_sample, Neighbor, SpatialIndex};
pub use pointset::{dist, dist2, Features, PointSet};

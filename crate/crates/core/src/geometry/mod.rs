//! Camera geometry, depth metrics, similarity alignment and voxelization.

mod align;
mod camera;
mod depth;
mod voxel;

pub use align::{umeyama_align, SimilarityTransform};
pub use camera::{project, unproject, CameraParams};
pub use depth::{abs_rel, inlier_ratio, INLIER_THRESHOLD};
pub use voxel::{voxel_miou, voxelize, VoxelGrid, VoxelIndex, VoxelMiou, DEFAULT_VOXEL_SIZE};

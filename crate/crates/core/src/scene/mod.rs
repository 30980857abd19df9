//! Deterministic synthetic multi-view scenes and their on-disk format.

mod io;
mod render;
mod spec;

pub use io::{read_dataset, write_dataset, MANIFEST, REGISTRY};
pub use render::{
    category_color, orbit_cameras, sample_surface_points, synth_scene, SceneDataset, ViewBundle,
};
pub use spec::{Primitive, PrimitiveKind, SceneSpec};

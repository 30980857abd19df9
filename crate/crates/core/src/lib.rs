//! Multi-view instance feature fields.
//!
//! The crate covers the whole desk-scale pipeline: synthetic multi-view
//! scenes ([`scene`]), camera geometry and reconstruction metrics
//! ([`geometry`]), the trainable instance field with its contrastive loss and
//! window cross-attention fusion ([`field`]), HDBSCAN clustering into
//! view-consistent masks ([`cluster`]), mask curation engines
//! ([`curation`]) and open-vocabulary / tracking metrics ([`semantics`]).

pub mod cluster;
pub mod curation;
pub mod error;
pub mod field;
pub mod format;
pub mod geometry;
pub mod masks;
pub mod raster;
pub mod scene;
pub mod semantics;

pub use error::{Error, Result};
pub use nalgebra;
pub use masks::MaskSet;
pub use raster::{LabelMap, Mask, Raster};

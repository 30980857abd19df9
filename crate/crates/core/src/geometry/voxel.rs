use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Point3;

use crate::error::{Error, Result};

/// Default voxel edge length in scene units.
pub const DEFAULT_VOXEL_SIZE: f64 = 0.05;

pub type VoxelIndex = [i64; 3];

/// Sparse labeled voxel occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Point3<f64>,
    pub voxel_size: f64,
    pub cells: BTreeMap<VoxelIndex, u32>,
}

impl VoxelGrid {
    pub fn cell_of(&self, p: &Point3<f64>) -> VoxelIndex {
        cell_index(p, &self.origin, self.voxel_size)
    }

    fn same_frame(&self, other: &VoxelGrid) -> bool {
        self.origin == other.origin && self.voxel_size == other.voxel_size
    }
}

fn cell_index(p: &Point3<f64>, origin: &Point3<f64>, size: f64) -> VoxelIndex {
    let r = (p - origin) / size;
    [r.x.floor() as i64, r.y.floor() as i64, r.z.floor() as i64]
}

/// Buckets labeled points into cells; each cell takes the majority label of
/// its points, ties going to the smaller label.
pub fn voxelize(points: &[(Point3<f64>, u32)], voxel_size: f64, origin: Point3<f64>) -> Result<VoxelGrid> {
    if !(voxel_size > 0.0) {
        return Err(Error::InvalidInput(format!("voxel size must be positive, got {voxel_size}")));
    }
    let mut counts: BTreeMap<VoxelIndex, BTreeMap<u32, usize>> = BTreeMap::new();
    for (p, label) in points {
        *counts
            .entry(cell_index(p, &origin, voxel_size))
            .or_default()
            .entry(*label)
            .or_default() += 1;
    }
    let cells = counts
        .into_iter()
        .map(|(idx, hist)| {
            // BTreeMap iterates labels ascending; strict > keeps the smallest on ties
            let mut best = (0u32, 0usize);
            for (label, n) in hist {
                if n > best.1 {
                    best = (label, n);
                }
            }
            (idx, best.0)
        })
        .collect();
    Ok(VoxelGrid {
        origin,
        voxel_size,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMiou {
    /// IoU per evaluated class (classes present in the ground truth).
    pub per_class: BTreeMap<u32, f64>,
    pub mean: f64,
}

/// Per-class voxel IoU and its mean over the requested classes that occur in
/// `gt`. An empty evaluation set yields a mean of 0.
pub fn voxel_miou(pred: &VoxelGrid, gt: &VoxelGrid, classes: &[u32]) -> Result<VoxelMiou> {
    if !pred.same_frame(gt) {
        return Err(Error::FrameMismatch(format!(
            "origin {:?} / size {} vs origin {:?} / size {}",
            pred.origin, pred.voxel_size, gt.origin, gt.voxel_size
        )));
    }
    let present: BTreeSet<u32> = gt.cells.values().copied().collect();
    let mut per_class = BTreeMap::new();
    for &c in classes.iter().filter(|c| present.contains(c)) {
        let p: BTreeSet<&VoxelIndex> = pred.cells.iter().filter(|(_, &l)| l == c).map(|(k, _)| k).collect();
        let g: BTreeSet<&VoxelIndex> = gt.cells.iter().filter(|(_, &l)| l == c).map(|(k, _)| k).collect();
        let inter = p.intersection(&g).count();
        let union = p.union(&g).count();
        per_class.insert(c, inter as f64 / union as f64);
    }
    let mean = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok(VoxelMiou { per_class, mean })
}

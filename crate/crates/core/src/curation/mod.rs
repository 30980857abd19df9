//! Mask curation engines: video propagation with keyframe re-detection, and
//! refinement of projected 3D annotations with matched proposals.

mod hungarian;
mod oracle;
mod quality;
mod rgbd;
mod video;

pub use hungarian::max_weight_assignment;
pub use oracle::{Boundary, GtProposals, GtTracker, ProposalOracle, TrackerOracle};
pub use quality::{id_conflicts, mask_quality, MaskQuality, OverlapTable};
pub use rgbd::{match_proposals, project_annotation, project_annotation_with, refine_rgbd, RefineOutput, SPLAT_RADIUS};
pub use video::{propagate_video, VideoOutput, SAME_OBJECT_IOU};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CurationConfig {
    /// Growth of the unsegmented image fraction that opens a keyframe.
    pub theta_new: f64,
    /// IoU floor for giving a proposal an ID.
    pub tau_match: f64,
    pub coverage_target: f64,
    pub max_iters: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            theta_new: 0.10,
            tau_match: 0.30,
            coverage_target: 0.95,
            max_iters: 5,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("theta_new", self.theta_new),
            ("tau_match", self.tau_match),
            ("coverage_target", self.coverage_target),
        ] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::InvalidInput(format!("{name} must lie in (0, 1], got {x}")));
            }
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidInput("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

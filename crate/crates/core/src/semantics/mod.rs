//! Open-vocabulary grounding over instance masks, and the 2D semantic and
//! temporal tracking metrics.

mod language;
mod metrics;
mod qa;

pub use language::{assign_categories, mask_pool, pixel_argmax, LanguageFeatureMap, TextEmbeddingSet};
pub use metrics::{match_instances, mean, semantic_metrics, t_miou, t_sr, SemanticScores};
pub use qa::{qa_ground, GtQaOracle, QaOracle, QaOutput};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::masks::MaskSet;
use crate::raster::{LabelMap, Mask};

/// Instance-level category prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSemantics {
    /// Instance ID → text index.
    pub categories: BTreeMap<u32, usize>,
    /// Per-view category maps (`index + 1`, 0 where no instance).
    pub maps: Vec<LabelMap>,
}

/// Pools language features over each instance's masks in all views, assigns
/// the nearest text by cosine similarity and paints the result.
pub fn instance_semantics(
    masks: &MaskSet,
    features: &LanguageFeatureMap,
    texts: &TextEmbeddingSet,
) -> Result<InstanceSemantics> {
    if masks.num_views() != features.views() {
        return Err(Error::FrameMismatch(format!(
            "{} mask views vs {} feature views",
            masks.num_views(),
            features.views()
        )));
    }
    let ids = masks.ids();
    let mut pooled = Vec::with_capacity(ids.len());
    for &id in &ids {
        let per_view: Vec<(usize, Mask)> = (0..masks.num_views()).map(|k| (k, masks.mask(k, id))).collect();
        let parts: Vec<(usize, &Mask)> = per_view.iter().map(|(k, m)| (*k, m)).collect();
        pooled.push(language::pool(features, &parts)?);
    }
    let assigned = assign_categories(&pooled, texts)?;
    let categories: BTreeMap<u32, usize> = ids.into_iter().zip(assigned).collect();
    let maps = masks
        .maps()
        .iter()
        .map(|m| m.map(|l| categories.get(l).map_or(0, |&c| c as u32 + 1)))
        .collect();
    Ok(InstanceSemantics { categories, maps })
}

use std::collections::BTreeMap;

use crate::curation::OverlapTable;
use crate::error::{Error, Result};
use crate::masks::MaskSet;
use crate::raster::LabelMap;

/// 2D segmentation scores over a set of classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemanticScores {
    pub miou: f64,
    pub macc: f64,
    /// Classes present in the ground truth.
    pub classes: usize,
}

/// Class-wise IoU and pixel recall, pooled over all views, averaged over
/// the listed classes that appear in `gt`. Pixels with ground truth 0 are
/// ignored.
pub fn semantic_metrics(pred: &[LabelMap], gt: &[LabelMap], classes: &[u32]) -> Result<SemanticScores> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!("{} predicted views vs {} ground-truth views", pred.len(), gt.len())));
    }
    let mut tp: BTreeMap<u32, usize> = BTreeMap::new();
    let mut fp: BTreeMap<u32, usize> = BTreeMap::new();
    let mut gt_count: BTreeMap<u32, usize> = BTreeMap::new();
    for (k, (p, g)) in pred.iter().zip(gt).enumerate() {
        if !p.same_size(g) {
            return Err(Error::Shape(format!("view {k} sizes differ")));
        }
        for (&a, &b) in p.as_slice().iter().zip(g.as_slice()) {
            if b == 0 {
                continue;
            }
            *gt_count.entry(b).or_default() += 1;
            if a == b {
                *tp.entry(b).or_default() += 1;
            } else if a != 0 {
                *fp.entry(a).or_default() += 1;
            }
        }
    }
    if gt_count.is_empty() {
        return Err(Error::EmptySupport("ground truth has no labeled pixels".into()));
    }
    let present: Vec<u32> = classes.iter().copied().filter(|c| gt_count.contains_key(c)).collect();
    if present.is_empty() {
        return Err(Error::EmptySupport("none of the classes appear in the ground truth".into()));
    }
    let (mut iou, mut acc) = (0.0, 0.0);
    for c in &present {
        let t = tp.get(c).copied().unwrap_or(0) as f64;
        let n = gt_count[c] as f64;
        let f = fp.get(c).copied().unwrap_or(0) as f64;
        iou += t / (n + f);
        acc += t / n;
    }
    let k = present.len() as f64;
    Ok(SemanticScores {
        miou: iou / k,
        macc: acc / k,
        classes: present.len(),
    })
}

/// Hungarian matching of ground-truth IDs to predicted IDs by total mean
/// IoU.
pub fn match_instances(pred: &MaskSet, gt: &MaskSet) -> Result<BTreeMap<u32, u32>> {
    Ok(OverlapTable::new(pred, gt)?.hungarian())
}

/// Temporal mIoU of every ground-truth object: mean per-view IoU with its
/// matched prediction over the views where either is nonempty. Unmatched
/// objects score 0.
pub fn t_miou(pred: &MaskSet, gt: &MaskSet, matching: &BTreeMap<u32, u32>) -> Result<BTreeMap<u32, f64>> {
    let table = OverlapTable::new(pred, gt)?;
    Ok(table
        .gt_ids()
        .into_iter()
        .map(|g| (g, matching.get(&g).map_or(0.0, |&p| table.mean_iou(p, g))))
        .collect())
}

/// Temporal success of every ground-truth object: 1 iff its matched
/// prediction is nonempty in every view where the object appears. Returns
/// the per-object indicators and their mean.
pub fn t_sr(pred: &MaskSet, gt: &MaskSet, matching: &BTreeMap<u32, u32>) -> Result<(BTreeMap<u32, f64>, f64)> {
    pred.check_compatible(gt)?;
    let per: BTreeMap<u32, f64> = gt
        .ids()
        .into_iter()
        .map(|g| {
            let ok = matching.get(&g).is_some_and(|&p| {
                (0..gt.num_views()).all(|k| !gt.ids_in(k).contains(&g) || pred.ids_in(k).contains(&p))
            });
            (g, if ok { 1.0 } else { 0.0 })
        })
        .collect();
    Ok((per.clone(), mean(&per)))
}

pub fn mean(values: &BTreeMap<u32, f64>) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.values().sum::<f64>() / values.len() as f64
    }
}

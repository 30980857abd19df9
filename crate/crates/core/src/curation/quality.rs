use std::collections::{BTreeMap, BTreeSet};

use super::hungarian::max_weight_assignment;
use crate::error::Result;
use crate::masks::MaskSet;

/// Result of [`mask_quality`]. Maps are keyed by ground-truth ID.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskQuality {
    /// Ground-truth ID → matched predicted ID.
    pub matching: BTreeMap<u32, u32>,
    /// Mean per-view IoU of each ground-truth instance with its match
    /// (0 when unmatched).
    pub per_instance: BTreeMap<u32, f64>,
    /// Mean of `per_instance`.
    pub mean: f64,
}

/// Per-view pixel counts needed for IoU between every predicted and
/// ground-truth ID.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    pub pred_area: Vec<BTreeMap<u32, usize>>,
    pub gt_area: Vec<BTreeMap<u32, usize>>,
    pub inter: Vec<BTreeMap<(u32, u32), usize>>,
}

impl OverlapTable {
    pub fn new(pred: &MaskSet, gt: &MaskSet) -> Result<Self> {
        pred.check_compatible(gt)?;
        let mut inter = Vec::with_capacity(gt.num_views());
        for (p, g) in pred.maps().iter().zip(gt.maps()) {
            let mut m = BTreeMap::new();
            for (&a, &b) in p.as_slice().iter().zip(g.as_slice()) {
                if a != 0 && b != 0 {
                    *m.entry((a, b)).or_insert(0) += 1;
                }
            }
            inter.push(m);
        }
        Ok(Self {
            pred_area: pred.areas(),
            gt_area: gt.areas(),
            inter,
        })
    }

    pub fn views(&self) -> usize {
        self.inter.len()
    }

    /// IoU of predicted `p` and ground-truth `g` in one view; `None` when
    /// both are empty there.
    pub fn view_iou(&self, view: usize, p: u32, g: u32) -> Option<f64> {
        let a = self.pred_area[view].get(&p).copied().unwrap_or(0);
        let b = self.gt_area[view].get(&g).copied().unwrap_or(0);
        if a + b == 0 {
            return None;
        }
        let i = self.inter[view].get(&(p, g)).copied().unwrap_or(0);
        Some(i as f64 / (a + b - i) as f64)
    }

    /// Mean IoU over the views where either mask appears.
    pub fn mean_iou(&self, p: u32, g: u32) -> f64 {
        let vals: Vec<f64> = (0..self.views()).filter_map(|k| self.view_iou(k, p, g)).collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    pub fn pred_ids(&self) -> BTreeSet<u32> {
        self.pred_area.iter().flat_map(|m| m.keys().copied()).collect()
    }

    pub fn gt_ids(&self) -> BTreeSet<u32> {
        self.gt_area.iter().flat_map(|m| m.keys().copied()).collect()
    }

    /// Optimal one-to-one matching maximizing total mean IoU. Pairs with
    /// zero IoU are left unmatched.
    pub fn hungarian(&self) -> BTreeMap<u32, u32> {
        let gt: Vec<u32> = self.gt_ids().into_iter().collect();
        let pred: Vec<u32> = self.pred_ids().into_iter().collect();
        let w: Vec<Vec<f64>> = gt.iter().map(|&g| pred.iter().map(|&p| self.mean_iou(p, g)).collect()).collect();
        max_weight_assignment(&w)
            .into_iter()
            .enumerate()
            .filter_map(|(i, j)| j.filter(|&j| w[i][j] > 0.0).map(|j| (gt[i], pred[j])))
            .collect()
    }
}

/// Matches predicted IDs to ground truth and scores each ground-truth
/// instance by mean IoU across the views where either mask appears.
pub fn mask_quality(pred: &MaskSet, gt: &MaskSet) -> Result<MaskQuality> {
    let table = OverlapTable::new(pred, gt)?;
    let matching = table.hungarian();
    let per_instance: BTreeMap<u32, f64> = table
        .gt_ids()
        .into_iter()
        .map(|g| (g, matching.get(&g).map_or(0.0, |&p| table.mean_iou(p, g))))
        .collect();
    let mean = if per_instance.is_empty() {
        if table.pred_ids().is_empty() { 1.0 } else { 0.0 }
    } else {
        per_instance.values().sum::<f64>() / per_instance.len() as f64
    };
    Ok(MaskQuality {
        matching,
        per_instance,
        mean,
    })
}

/// Number of predicted IDs whose majority ground-truth object differs
/// between views.
pub fn id_conflicts(pred: &MaskSet, gt: &MaskSet) -> Result<usize> {
    let table = OverlapTable::new(pred, gt)?;
    let mut owners: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for view in &table.inter {
        let mut best: BTreeMap<u32, (usize, u32)> = BTreeMap::new();
        for (&(p, g), &c) in view {
            let e = best.entry(p).or_insert((0, 0));
            if c > e.0 {
                *e = (c, g);
            }
        }
        for (p, (_, g)) in best {
            owners.entry(p).or_default().insert(g);
        }
    }
    Ok(owners.values().filter(|s| s.len() > 1).count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::LabelMap;

    fn gt() -> MaskSet {
        let a = LabelMap::from_fn(8, 4, |u, _| if u < 4 { 1 } else { 2 });
        let b = LabelMap::from_fn(8, 4, |u, v| if u < 4 && v < 2 { 1 } else if u >= 4 { 2 } else { 0 });
        MaskSet::new(vec![a, b])
    }

    #[test]
    fn identical_masks_score_one() {
        let q = mask_quality(&gt(), &gt()).unwrap();
        assert_eq!(q.mean, 1.0);
        assert_eq!(q.matching, BTreeMap::from([(1, 1), (2, 2)]));
    }

    #[test]
    fn permuted_ids_score_one() {
        let pred = gt().relabeled(|l| 10 - l);
        let q = mask_quality(&pred, &gt()).unwrap();
        assert_eq!(q.mean, 1.0);
        assert_eq!(q.matching, BTreeMap::from([(1, 9), (2, 8)]));
    }

    #[test]
    fn half_overlap_scores_one_half() {
        // each predicted mask covers its object plus an equal-sized strip of empty space
        let g = MaskSet::new(vec![LabelMap::from_fn(8, 2, |u, _| match u {
            0 | 1 => 1,
            4 | 5 => 2,
            _ => 0,
        })]);
        let p = MaskSet::new(vec![LabelMap::from_fn(8, 2, |u, _| match u {
            0..=3 => 1,
            4..=7 => 2,
            _ => 0,
        })]);
        let q = mask_quality(&p, &g).unwrap();
        assert!((q.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unmatched_gt_counts_zero() {
        let pred = gt().relabeled(|l| if l == 2 { 0 } else { l });
        let q = mask_quality(&pred, &gt()).unwrap();
        assert_eq!(q.per_instance[&2], 0.0);
        assert!((q.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn conflicts_counted_across_views() {
        let g = gt();
        assert_eq!(id_conflicts(&g, &g).unwrap(), 0);
        // view 1 swaps the two IDs
        let swapped = MaskSet::new(vec![g.view(0).clone(), g.view(1).map(|&l| if l == 0 { 0 } else { 3 - l })]);
        assert_eq!(id_conflicts(&swapped, &g).unwrap(), 2);
    }
}

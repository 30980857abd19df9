//! Depth reconstruction metrics. Valid pixels are those with `gt > 0`.

use crate::error::{Error, Result};

/// Default ratio threshold for [`inlier_ratio`].
pub const INLIER_THRESHOLD: f64 = 1.03;

fn valid_pairs<'a, T: Copy + Into<f64>>(
    pred: &'a [T],
    gt: &'a [T],
) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    if pred.len() != gt.len() {
        return Err(Error::Shape(format!(
            "prediction has {} pixels, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if !gt.iter().any(|&g| g.into() > 0.0) {
        return Err(Error::EmptySupport("no ground-truth pixel with depth > 0".into()));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| (p.into(), g.into()))
        .filter(|&(_, g)| g > 0.0))
}

/// Mean of `|pred − gt| / gt` over valid pixels.
pub fn abs_rel<T: Copy + Into<f64>>(pred: &[T], gt: &[T]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, g) in valid_pairs(pred, gt)? {
        sum += (p - g).abs() / g;
        n += 1;
    }
    Ok(sum / n as f64)
}

/// Fraction of valid pixels with `max(pred/gt, gt/pred) < threshold`.
///
/// Non-positive predictions never count as inliers.
pub fn inlier_ratio<T: Copy + Into<f64>>(pred: &[T], gt: &[T], threshold: f64) -> Result<f64> {
    let mut inliers = 0usize;
    let mut n = 0usize;
    for (p, g) in valid_pairs(pred, gt)? {
        n += 1;
        if p > 0.0 && (p / g).max(g / p) < threshold {
            inliers += 1;
        }
    }
    Ok(inliers as f64 / n as f64)
}

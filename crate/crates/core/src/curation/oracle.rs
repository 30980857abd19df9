//! Mask proposal and tracking oracles.
//!
//! The pipelines only see the two traits. The ground-truth oracles stand in
//! for a promptable segmenter and a video tracker by perturbing known masks.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::masks::MaskSet;
use crate::raster::Mask;

/// Dense mask proposals inside a region of interest.
pub trait ProposalOracle {
    /// ID-free, possibly overlapping masks, all inside `roi`.
    fn propose(&mut self, view: usize, roi: &Mask) -> Result<Vec<Mask>>;
}

/// Carries identified masks from one view to another.
pub trait TrackerOracle {
    /// Masks for the carried IDs in view `to`. IDs may go missing.
    fn carry(&mut self, masks: &BTreeMap<u32, Mask>, from: usize, to: usize) -> Result<BTreeMap<u32, Mask>>;
}

/// Boundary perturbation applied to a ground-truth mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Exact,
    Erode(usize),
    Dilate(usize),
    /// Erode or dilate by a uniform offset in `-r..=r`.
    Random(usize),
}

impl Boundary {
    pub fn apply(self, mask: &Mask, rng: &mut ChaCha8Rng) -> Mask {
        match self {
            Boundary::Exact => mask.clone(),
            Boundary::Erode(r) => mask.eroded(r),
            Boundary::Dilate(r) => mask.dilated(r),
            Boundary::Random(r) => {
                let k = rng.random_range(-(r as i64)..=r as i64);
                if k < 0 {
                    mask.eroded(k.unsigned_abs() as usize)
                } else {
                    mask.dilated(k as usize)
                }
            }
        }
    }
}

/// Independent deterministic stream for one `(seed, parts...)` key.
pub(crate) fn substream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &p in parts {
        h = (h ^ p).wrapping_mul(0x0000_0100_0000_01b3);
        h ^= h >> 29;
    }
    rng.set_stream(h);
    rng
}

fn check_view(gt: &MaskSet, view: usize, roi: Option<&Mask>) -> Result<()> {
    if view >= gt.num_views() {
        return Err(Error::Oracle {
            view,
            msg: format!("only {} views available", gt.num_views()),
        });
    }
    if let Some(roi) = roi {
        if !roi.same_size(gt.view(view)) {
            return Err(Error::Oracle {
                view,
                msg: "region of interest size differs from the image".into(),
            });
        }
    }
    Ok(())
}

/// Splits a mask at the midline of its bounding box along the longer side.
fn split_mask(mask: &Mask) -> Option<(Mask, Mask)> {
    let (mut u0, mut u1, mut v0, mut v1) = (usize::MAX, 0, usize::MAX, 0);
    for v in 0..mask.height() {
        for u in 0..mask.width() {
            if *mask.get(u, v) {
                (u0, u1, v0, v1) = (u0.min(u), u1.max(u), v0.min(v), v1.max(v));
            }
        }
    }
    if u0 == usize::MAX {
        return None;
    }
    let by_u = u1 - u0 >= v1 - v0;
    let cut = if by_u { (u0 + u1).div_ceil(2) } else { (v0 + v1).div_ceil(2) };
    let first = Mask::from_fn(mask.width(), mask.height(), |u, v| {
        *mask.get(u, v) && if by_u { u < cut } else { v < cut }
    });
    let second = mask.and(&first.not());
    (first.any() && second.any()).then_some((first, second))
}

/// Proposals derived from ground-truth instance masks.
#[derive(Debug, Clone)]
pub struct GtProposals {
    gt: MaskSet,
    pub boundary: Boundary,
    pub split_prob: f64,
    pub drop_prob: f64,
    /// A proposal is returned only if at least this fraction of it lies
    /// inside the region of interest.
    pub min_inside: f64,
    pub seed: u64,
}

impl GtProposals {
    /// Unperturbed ground-truth proposals.
    pub fn exact(gt: MaskSet) -> Self {
        Self {
            gt,
            boundary: Boundary::Exact,
            split_prob: 0.0,
            drop_prob: 0.0,
            min_inside: 0.5,
            seed: 0,
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

impl ProposalOracle for GtProposals {
    fn propose(&mut self, view: usize, roi: &Mask) -> Result<Vec<Mask>> {
        check_view(&self.gt, view, Some(roi))?;
        let mut out = Vec::new();
        for &id in self.gt.ids_in(view) {
            let mut rng = substream(self.seed, &[view as u64, u64::from(id)]);
            if rng.random_bool(self.drop_prob.clamp(0.0, 1.0)) {
                continue;
            }
            let mask = self.boundary.apply(&self.gt.mask(view, id), &mut rng);
            let parts = match rng.random_bool(self.split_prob.clamp(0.0, 1.0)) {
                true => match split_mask(&mask) {
                    Some((a, b)) => vec![a, b],
                    None => vec![mask],
                },
                false => vec![mask],
            };
            for p in parts {
                let total = p.count();
                let inside = p.and(roi);
                let n = inside.count();
                if n > 0 && n as f64 >= self.min_inside * total as f64 {
                    out.push(inside);
                }
            }
        }
        Ok(out)
    }
}

/// Tracker that follows ground-truth objects.
///
/// A carried mask is identified with the ground-truth object holding the
/// majority of its pixels in the source view; the object's mask in the target
/// view is returned with boundary jitter. A carry step `(object, from, to)`
/// fails if it is listed in `drops` or with probability `loss_rate`.
#[derive(Debug, Clone)]
pub struct GtTracker {
    gt: MaskSet,
    pub boundary: Boundary,
    pub loss_rate: f64,
    pub drops: BTreeSet<(u32, usize, usize)>,
    pub seed: u64,
}

impl GtTracker {
    pub fn lossless(gt: MaskSet) -> Self {
        Self {
            gt,
            boundary: Boundary::Exact,
            loss_rate: 0.0,
            drops: BTreeSet::new(),
            seed: 0,
        }
    }

    /// Makes the carry of ground-truth object `object` from `from` to `to` fail.
    pub fn drop_step(mut self, object: u32, from: usize, to: usize) -> Self {
        self.drops.insert((object, from, to));
        self
    }

    fn majority(&self, view: usize, mask: &Mask) -> Option<u32> {
        let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
        for (&m, &l) in mask.as_slice().iter().zip(self.gt.view(view).as_slice()) {
            if m && l != 0 {
                *votes.entry(l).or_default() += 1;
            }
        }
        // ties go to the lower ID
        votes.into_iter().rev().max_by_key(|&(_, c)| c).map(|(l, _)| l)
    }
}

impl TrackerOracle for GtTracker {
    fn carry(&mut self, masks: &BTreeMap<u32, Mask>, from: usize, to: usize) -> Result<BTreeMap<u32, Mask>> {
        check_view(&self.gt, from, None)?;
        check_view(&self.gt, to, None)?;
        let mut out = BTreeMap::new();
        for (&id, mask) in masks {
            if !mask.same_size(self.gt.view(from)) {
                return Err(Error::Oracle {
                    view: from,
                    msg: format!("mask {id} size differs from the image"),
                });
            }
            let Some(object) = self.majority(from, mask) else {
                continue;
            };
            let mut rng = substream(self.seed, &[u64::from(object), from as u64, to as u64]);
            if self.drops.contains(&(object, from, to)) || rng.random_bool(self.loss_rate.clamp(0.0, 1.0)) {
                continue;
            }
            let carried = self.boundary.apply(&self.gt.mask(to, object), &mut rng);
            if carried.any() {
                out.insert(id, carried);
            }
        }
        Ok(out)
    }
}

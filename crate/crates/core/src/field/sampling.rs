use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::ContrastiveConfig;
use crate::error::{Error, Result};
use crate::raster::LabelMap;
use crate::scene::SceneDataset;

/// One sampled pixel and its instance ID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PixelRef {
    pub view: usize,
    pub u: usize,
    pub v: usize,
    pub id: u32,
}

/// The sampled pixel set shared by the loss and its gradient.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PixelSample {
    pub pixels: Vec<PixelRef>,
}

impl PixelSample {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Sample count per instance ID.
    pub fn counts(&self) -> BTreeMap<u32, usize> {
        let mut out = BTreeMap::new();
        for p in &self.pixels {
            *out.entry(p.id).or_default() += 1;
        }
        out
    }
}

/// Splits a budget of `budget` samples over instances with the given areas.
///
/// Shares are proportional to area (largest remainder, earlier instances win
/// ties), then every instance is lifted to `min(2, area)`. If the floor pushes
/// the total over budget, the largest allocations above their floor give back
/// one sample at a time. When the whole area fits in the budget every pixel
/// is taken.
pub fn allocate_samples(areas: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = areas.iter().sum();
    if total <= budget {
        return areas.to_vec();
    }
    let mut alloc: Vec<usize> = areas.iter().map(|&a| budget * a / total).collect();
    let mut order: Vec<usize> = (0..areas.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((budget * areas[i]) % total));
    let mut left = budget - alloc.iter().sum::<usize>();
    for &i in order.iter().cycle().take(areas.len() * 2) {
        if left == 0 {
            break;
        }
        if alloc[i] < areas[i] {
            alloc[i] += 1;
            left -= 1;
        }
    }
    let floor: Vec<usize> = areas.iter().map(|&a| a.min(2)).collect();
    for (a, f) in alloc.iter_mut().zip(&floor) {
        *a = (*a).max(*f);
    }
    let mut sum: usize = alloc.iter().sum();
    while sum > budget {
        let pick = (0..alloc.len())
            .filter(|&i| alloc[i] > floor[i])
            .max_by_key(|&i| (alloc[i], std::cmp::Reverse(i)));
        match pick {
            Some(i) => {
                alloc[i] -= 1;
                sum -= 1;
            }
            None => break,
        }
    }
    alloc
}

/// Stratified sampling over labeled pixels, drawing from `rng`.
pub fn sample_pixels_with(maps: &[LabelMap], per_view: usize, rng: &mut ChaCha8Rng) -> Result<PixelSample> {
    let mut pixels = Vec::new();
    for (view, map) in maps.iter().enumerate() {
        let mut by_id: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, &id) in map.as_slice().iter().enumerate() {
            if id != 0 {
                by_id.entry(id).or_default().push(i);
            }
        }
        let areas: Vec<usize> = by_id.values().map(Vec::len).collect();
        let alloc = allocate_samples(&areas, per_view);
        for ((&id, idx), k) in by_id.iter().zip(alloc) {
            let mut chosen = index::sample(rng, idx.len(), k).into_vec();
            chosen.sort_unstable();
            for c in chosen {
                let i = idx[c];
                pixels.push(PixelRef {
                    view,
                    u: i % map.width(),
                    v: i / map.width(),
                    id,
                });
            }
        }
    }
    if pixels.is_empty() {
        return Err(Error::EmptySupport("no labeled pixels to sample".into()));
    }
    Ok(PixelSample { pixels })
}

/// Deterministic stratified sample of the dataset's labeled pixels.
pub fn sample_pixels(dataset: &SceneDataset, config: &ContrastiveConfig) -> Result<PixelSample> {
    let maps: Vec<LabelMap> = dataset.views.iter().map(|v| v.instance_map.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    sample_pixels_with(&maps, config.samples_per_view, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn maps_with(areas: &[usize], w: usize, h: usize) -> LabelMap {
        let mut data = vec![0u32; w * h];
        let mut at = 0;
        for (k, &a) in areas.iter().enumerate() {
            for d in data.iter_mut().skip(at).take(a) {
                *d = k as u32 + 1;
            }
            at += a;
        }
        LabelMap::from_vec(w, h, data).unwrap()
    }

    #[test]
    fn proportional_with_floor() {
        assert_eq!(allocate_samples(&[300, 100], 8), vec![6, 2]);
        assert_eq!(allocate_samples(&[1000, 1], 8), vec![7, 1]);
        assert_eq!(allocate_samples(&[1000, 5], 8), vec![6, 2]);
        assert_eq!(allocate_samples(&[3, 2], 8), vec![3, 2]);
    }

    #[test]
    fn single_pixel_instance() {
        let map = maps_with(&[1], 4, 4);
        let s = sample_pixels_with(&[map], 8, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.pixels, vec![PixelRef { view: 0, u: 0, v: 0, id: 1 }]);
    }

    #[test]
    fn counts_per_instance() {
        let map = maps_with(&[300, 100], 20, 20);
        let s = sample_pixels_with(&[map], 8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(s.counts(), BTreeMap::from([(1, 6), (2, 2)]));
    }

    #[test]
    fn empty_is_error() {
        let map = LabelMap::filled(4, 4, 0);
        assert!(matches!(
            sample_pixels_with(&[map], 8, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::EmptySupport(_))
        ));
    }

    #[test]
    fn seeded() {
        let map = maps_with(&[50, 30, 9], 10, 10);
        let a = sample_pixels_with(&[map.clone(), map.clone()], 16, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_pixels_with(&[map.clone(), map], 16, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn allocation_invariants(areas in prop::collection::vec(1usize..200, 1..12), budget in 2usize..64) {
            let alloc = allocate_samples(&areas, budget);
            let total: usize = areas.iter().sum();
            let sum: usize = alloc.iter().sum();
            for (a, n) in areas.iter().zip(&alloc) {
                prop_assert!(n <= a);
                prop_assert!(*n >= (*a).min(2));
            }
            if total <= budget {
                prop_assert_eq!(sum, total);
            } else {
                let floor: usize = areas.iter().map(|a| (*a).min(2)).sum();
                prop_assert_eq!(sum, budget.max(floor));
            }
        }

        #[test]
        fn samples_are_labeled_and_distinct(seed in 0u64..1000, areas in prop::collection::vec(1usize..40, 1..5)) {
            let map = maps_with(&areas, 16, 16);
            let s = sample_pixels_with(std::slice::from_ref(&map), 12, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let mut seen = std::collections::BTreeSet::new();
            for p in &s.pixels {
                prop_assert_eq!(*map.get(p.u, p.v), p.id);
                prop_assert!(p.id > 0);
                prop_assert!(seen.insert((p.u, p.v)));
            }
            for (id, n) in s.counts() {
                if areas[id as usize - 1] >= 2 {
                    prop_assert!(n >= 2);
                }
            }
        }
    }
}

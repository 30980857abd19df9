//! Density-based clustering of instance features into view-consistent masks.
//!
//! [`cluster_field`] subsamples pixels from every view, normalizes their
//! features and runs HDBSCAN; [`assign_masks`] carries the cluster labels back
//! to every pixel by exemplar proximity and cleans them with a 3×3 majority
//! vote. Cluster `k` becomes mask ID `k + 1` in every view.

mod hdbscan;

pub use hdbscan::{
    condense, core_distances, hdbscan_points, mst_prim, mutual_reachability, select_clusters, single_linkage,
    stability, CondensedEdge, Hdbscan, Merge, MstEdge, Points,
};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::FeatureField;
use crate::masks::MaskSet;
use crate::raster::LabelMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterConfig {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub max_points: usize,
    /// Multiplier on a cluster's largest exemplar core distance.
    pub assign_radius: f64,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            min_cluster_size: 25,
            min_samples: 10,
            max_points: 20_000,
            assign_radius: 1.5,
            seed: 0,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 || self.min_samples < 1 || self.max_points < self.min_cluster_size {
            return Err(Error::InvalidInput(format!(
                "need min_cluster_size ≥ 2, min_samples ≥ 1, max_points ≥ min_cluster_size (got {}, {}, {})",
                self.min_cluster_size, self.min_samples, self.max_points
            )));
        }
        if !(self.assign_radius >= 0.0) {
            return Err(Error::InvalidInput("assign_radius must be non-negative".into()));
        }
        Ok(())
    }
}

/// Exemplar features of one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct Exemplars {
    pub features: Vec<Vec<f64>>,
    pub core_distances: Vec<f64>,
}

impl Exemplars {
    /// Largest core distance among the exemplars.
    pub fn radius(&self) -> f64 {
        self.core_distances.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// `(view, u, v)` of each clustered pixel.
    pub sample_points: Vec<(usize, usize, usize)>,
    /// Per sample, `0..K` or −1 for noise.
    pub labels: Vec<i32>,
    pub exemplars: Vec<Exemplars>,
    pub hierarchy: Vec<CondensedEdge>,
}

impl ClusterResult {
    pub fn num_clusters(&self) -> usize {
        self.exemplars.len()
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        v
    }
}

/// HDBSCAN over raw feature vectors.
pub fn hdbscan(points: &[Vec<f64>], config: &ClusterConfig) -> Result<Hdbscan> {
    config.validate()?;
    let dim = points.first().map(Vec::len).unwrap_or(1);
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("feature vectors differ in length".into()));
    }
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    hdbscan_points(Points::new(&flat, dim)?, config.min_cluster_size, config.min_samples)
}

/// Clusters a seeded uniform subsample of all pixels of all views. Features
/// are L2-normalized first; zero vectors stay at the origin.
pub fn cluster_field(features: &FeatureField, config: &ClusterConfig) -> Result<ClusterResult> {
    config.validate()?;
    if !features.is_finite() {
        return Err(Error::Numeric("feature field has non-finite values".into()));
    }
    let [n, c, h, w] = features.shape();
    let total = n * h * w;
    let mut chosen: Vec<usize> = if total <= config.max_points {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        index::sample(&mut rng, total, config.max_points).into_vec()
    };
    chosen.sort_unstable();
    let sample_points: Vec<(usize, usize, usize)> = chosen
        .iter()
        .map(|&i| (i / (h * w), i % w, (i / w) % h))
        .collect();
    let vectors: Vec<Vec<f64>> = sample_points
        .iter()
        .map(|&(view, u, v)| normalized(features.pixel(view, u, v)))
        .collect();
    let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
    let r = hdbscan_points(Points::new(&flat, c)?, config.min_cluster_size, config.min_samples)?;
    let exemplars = r
        .exemplars
        .iter()
        .map(|ex| Exemplars {
            features: ex.iter().map(|&p| vectors[p].clone()).collect(),
            core_distances: ex.iter().map(|&p| r.core_distances[p]).collect(),
        })
        .collect();
    Ok(ClusterResult {
        sample_points,
        labels: r.labels,
        exemplars,
        hierarchy: r.condensed,
    })
}

/// One pass of 3×3 majority voting: a pixel takes a nonzero label held by at
/// least 5 of the pixels in its window; otherwise it keeps its own.
pub fn majority_smooth(map: &LabelMap) -> LabelMap {
    let (w, h) = (map.width(), map.height());
    LabelMap::from_fn(w, h, |u, v| {
        let mut votes: Vec<(u32, usize)> = Vec::with_capacity(9);
        for y in v.saturating_sub(1)..(v + 2).min(h) {
            for x in u.saturating_sub(1)..(u + 2).min(w) {
                let l = *map.get(x, y);
                if l == 0 {
                    continue;
                }
                match votes.iter_mut().find(|(k, _)| *k == l) {
                    Some(e) => e.1 += 1,
                    None => votes.push((l, 1)),
                }
            }
        }
        votes
            .into_iter()
            .find(|&(_, n)| n >= 5)
            .map(|(l, _)| l)
            .unwrap_or(*map.get(u, v))
    })
}

/// Per-view label maps before smoothing.
pub fn assign_labels(features: &FeatureField, result: &ClusterResult, config: &ClusterConfig) -> Result<Vec<LabelMap>> {
    let [n, c, h, w] = features.shape();
    if result.sample_points.len() != result.labels.len() {
        return Err(Error::Shape("cluster result has mismatched samples and labels".into()));
    }
    if result.exemplars.iter().flat_map(|e| &e.features).any(|f| f.len() != c) {
        return Err(Error::Shape("exemplar width differs from the field".into()));
    }
    let mut fixed: Vec<Option<u32>> = vec![None; n * h * w];
    for (&(view, u, v), &l) in result.sample_points.iter().zip(&result.labels) {
        if view >= n || u >= w || v >= h {
            return Err(Error::Shape("cluster sample outside the field".into()));
        }
        fixed[(view * h + v) * w + u] = Some(if l >= 0 { l as u32 + 1 } else { 0 });
    }
    let gates: Vec<f64> = result.exemplars.iter().map(|e| config.assign_radius * e.radius()).collect();
    (0..n)
        .into_par_iter()
        .map(|view| {
            let data = (0..h * w)
                .map(|p| {
                    if let Some(l) = fixed[view * h * w + p] {
                        return l;
                    }
                    let x = normalized(features.pixel(view, p % w, p / w));
                    let mut best = (f64::INFINITY, 0usize);
                    for (k, ex) in result.exemplars.iter().enumerate() {
                        for e in &ex.features {
                            let d = x.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                            if d < best.0 {
                                best = (d, k);
                            }
                        }
                    }
                    if best.0 <= gates.get(best.1).copied().unwrap_or(-1.0) {
                        best.1 as u32 + 1
                    } else {
                        0
                    }
                })
                .collect();
            LabelMap::from_vec(w, h, data)
        })
        .collect()
}

/// Labels for every pixel of every view: cluster `k` → ID `k + 1`, 0 for
/// noise and pixels outside every cluster's radius.
pub fn assign_masks(features: &FeatureField, result: &ClusterResult, config: &ClusterConfig) -> Result<MaskSet> {
    let maps = assign_labels(features, result, config)?;
    Ok(MaskSet::new(maps.iter().map(majority_smooth).collect()))
}

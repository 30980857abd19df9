use rayon::prelude::*;

use super::sampling::PixelSample;
use super::FeatureField;
use crate::error::{Error, Result};

/// Weights of the pull/push contrastive objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveConfig {
    pub lambda_pull: f64,
    pub lambda_push: f64,
    pub margin: f64,
    pub samples_per_view: usize,
    pub seed: u64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            lambda_pull: 2.0,
            lambda_push: 1.0,
            margin: 1.0,
            samples_per_view: 256,
            seed: 0,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_pull >= 0.0 && self.lambda_push >= 0.0) {
            return Err(Error::InvalidInput("loss weights must be non-negative".into()));
        }
        if !(self.margin > 0.0) {
            return Err(Error::InvalidInput(format!("margin must be positive, got {}", self.margin)));
        }
        if self.samples_per_view < 2 {
            return Err(Error::InvalidInput("need at least 2 samples per view".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// d loss / d feature, one C-vector per sample (pre-normalization).
    pub grads: Vec<Vec<f64>>,
}

/// Loss and gradient over explicit feature vectors with instance IDs.
pub fn contrastive_loss_vectors(features: &[Vec<f64>], ids: &[u32], config: &ContrastiveConfig) -> Result<LossOutput> {
    if features.len() != ids.len() {
        return Err(Error::Shape("one ID per feature required".into()));
    }
    if features.len() < 2 {
        return Err(Error::InvalidInput("contrastive loss needs at least 2 samples".into()));
    }
    let mut norms = Vec::with_capacity(features.len());
    let mut unit = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let n = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm(i));
        }
        norms.push(n);
        unit.push(f.iter().map(|x| x / n).collect::<Vec<_>>());
    }
    let m = config.margin;

    // each row owns pairs (i, j > i) for the loss and all j for its gradient
    let rows: Vec<(f64, Vec<f64>)> = (0..unit.len())
        .into_par_iter()
        .map(|i| {
            let yi = &unit[i];
            let mut loss = 0.0;
            let mut g = vec![0.0; yi.len()];
            for (j, yj) in unit.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = yi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let (term, slope) = if ids[i] == ids[j] {
                    (config.lambda_pull * d, config.lambda_pull)
                } else if d < m {
                    (config.lambda_push * (m - d), -config.lambda_push)
                } else {
                    (0.0, 0.0)
                };
                if j > i {
                    loss += term;
                }
                if slope != 0.0 && d > 0.0 {
                    for (gk, (a, b)) in g.iter_mut().zip(yi.iter().zip(yj)) {
                        *gk += slope * (a - b) / d;
                    }
                }
            }
            let dot: f64 = g.iter().zip(yi).map(|(a, b)| a * b).sum();
            let grad = g.iter().zip(yi).map(|(gk, yk)| (gk - yk * dot) / norms[i]).collect();
            (loss, grad)
        })
        .collect();

    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(rows.len());
    for (l, g) in rows {
        loss += l;
        grads.push(g);
    }
    Ok(LossOutput { loss, grads })
}

/// Pull/push loss over all unordered pairs of the sampled pixels.
pub fn contrastive_loss(features: &FeatureField, samples: &PixelSample, config: &ContrastiveConfig) -> Result<LossOutput> {
    let mut vecs = Vec::with_capacity(samples.len());
    let mut ids = Vec::with_capacity(samples.len());
    for p in &samples.pixels {
        if p.view >= features.views() || p.u >= features.width() || p.v >= features.height() {
            return Err(Error::InvalidInput(format!(
                "sample (view {}, u {}, v {}) outside field {:?}",
                p.view,
                p.u,
                p.v,
                features.shape()
            )));
        }
        vecs.push(features.pixel(p.view, p.u, p.v));
        ids.push(p.id);
    }
    contrastive_loss_vectors(&vecs, &ids, config)
}

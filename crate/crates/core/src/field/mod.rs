//! The instance feature field and everything that produces it.
//!
//! A [`FeatureField`] holds one `C`-dimensional embedding per pixel per view
//! (`N × C × H × W`). It is produced by an embedder ([`embed`]) that is
//! either a free per-pixel table or a small per-pixel network followed by two
//! window cross-attention passes that fuse geometric input. The field is
//! trained with a multi-view pull/push contrastive loss over sampled pixels
//! ([`contrastive_loss`]).

mod attention;
mod checkpoint;
mod embedder;
mod loss;
mod pca;
mod sampling;
mod train;

pub use attention::{window_cross_attention, window_partition, FeatureLevel, FusionBlock, FusionGrads};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use embedder::{embed, embed_backward, embed_inputs, EmbedderMode, EmbedderParams, Linear, MlpParams, PixelInputs};
pub use loss::{contrastive_loss, contrastive_loss_vectors, ContrastiveConfig, LossOutput};
pub use pca::pca_visualize;
pub use sampling::{allocate_samples, sample_pixels, sample_pixels_with, PixelRef, PixelSample};
pub use train::{train, train_from, Adam, TrainConfig, TrainReport};

use std::path::Path;

use crate::error::{Error, Result};
use crate::format::Tensor;

/// Default embedding width.
pub const DEFAULT_CHANNELS: usize = 8;

/// `N × C × H × W` real-valued instance features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    views: usize,
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureField {
    pub fn zeros(views: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            views,
            channels,
            height,
            width,
            values: vec![0.0; views * channels * height * width],
        }
    }

    pub fn from_vec(views: usize, channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != views * channels * height * width {
            return Err(Error::Shape(format!(
                "field {views}x{channels}x{height}x{width} needs {} values, got {}",
                views * channels * height * width,
                values.len()
            )));
        }
        Ok(Self {
            views,
            channels,
            height,
            width,
            values,
        })
    }

    pub fn views(&self) -> usize {
        self.views
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.views, self.channels, self.height, self.width]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn offset(&self, view: usize, channel: usize, u: usize, v: usize) -> usize {
        ((view * self.channels + channel) * self.height + v) * self.width + u
    }

    #[inline]
    pub fn get(&self, view: usize, channel: usize, u: usize, v: usize) -> f64 {
        self.values[self.offset(view, channel, u, v)]
    }

    /// The `C`-vector at pixel `(u, v)` of `view`.
    pub fn pixel(&self, view: usize, u: usize, v: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(view, c, u, v)).collect()
    }

    pub fn set_pixel(&mut self, view: usize, u: usize, v: usize, value: &[f64]) {
        for (c, &x) in value.iter().enumerate().take(self.channels) {
            let i = self.offset(view, c, u, v);
            self.values[i] = x;
        }
    }

    /// One view as a `C × H × W` level.
    pub fn level(&self, view: usize) -> FeatureLevel {
        let n = self.channels * self.height * self.width;
        FeatureLevel::from_vec(
            self.channels,
            self.height,
            self.width,
            self.values[view * n..(view + 1) * n].to_vec(),
        )
        .expect("level slice has the right length")
    }

    pub fn from_levels(levels: &[FeatureLevel]) -> Result<Self> {
        let first = levels
            .first()
            .ok_or_else(|| Error::InvalidInput("no levels".into()))?;
        let (c, h, w) = (first.channels(), first.height(), first.width());
        let mut values = Vec::with_capacity(levels.len() * c * h * w);
        for l in levels {
            if (l.channels(), l.height(), l.width()) != (c, h, w) {
                return Err(Error::Shape("levels disagree on shape".into()));
            }
            values.extend_from_slice(l.values());
        }
        Self::from_vec(levels.len(), c, h, w, values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    /// Stored as an f32 rank-4 NTF tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::f32(
            self.shape().to_vec(),
            self.values.iter().map(|&x| x as f32).collect(),
        )
        .expect("shape matches values")
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        let dims = t.dims().to_vec();
        if dims.len() != 4 {
            return Err(Error::Shape(format!("feature field must be rank 4, found {dims:?}")));
        }
        let vals = t.into_f32()?.into_iter().map(f64::from).collect();
        Self::from_vec(dims[0], dims[1], dims[2], dims[3], vals)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_tensor().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_tensor(Tensor::read(path)?)
    }
}

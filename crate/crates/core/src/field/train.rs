use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::embedder::{embed_backward, embed_inputs, EmbedderMode, EmbedderParams, PixelInputs};
use super::loss::{contrastive_loss, ContrastiveConfig};
use super::sampling::sample_pixels_with;
use super::{FeatureField, DEFAULT_CHANNELS};
use crate::error::{Error, Result};
use crate::raster::LabelMap;
use crate::scene::SceneDataset;

/// Adaptive moment estimation over a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) {
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (t, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[t], &mut self.v[t]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: EmbedderMode,
    pub steps: usize,
    pub lr: f64,
    pub channels: usize,
    pub hidden: usize,
    pub window: usize,
    pub contrastive: ContrastiveConfig,
}

impl TrainConfig {
    /// Defaults for `mode`; the learning rate is 1e-2 for the table and 1e-3
    /// for the network.
    pub fn new(mode: EmbedderMode) -> Self {
        Self {
            mode,
            steps: 200,
            lr: match mode {
                EmbedderMode::FreeTable => 1e-2,
                EmbedderMode::Mlp => 1e-3,
            },
            channels: DEFAULT_CHANNELS,
            hidden: 32,
            window: 8,
            contrastive: ContrastiveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub params: EmbedderParams,
    /// Raw loss per step.
    pub losses: Vec<f64>,
    /// Running minimum of an exponential moving average of `losses`.
    pub smoothed: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

fn smooth(losses: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(losses.len());
    let mut ema = None;
    let mut best = f64::INFINITY;
    for &l in losses {
        let e = match ema {
            None => l,
            Some(prev) => 0.9 * prev + 0.1 * l,
        };
        ema = Some(e);
        best = best.min(e);
        out.push(best);
    }
    out
}

/// Contrastive training from a seeded initialization. Each step draws a fresh
/// pixel sample from one RNG stream seeded by the contrastive seed.
pub fn train(dataset: &SceneDataset, config: &TrainConfig) -> Result<TrainReport> {
    dataset.validate()?;
    config.contrastive.validate()?;
    if config.channels == 0 || !(config.lr > 0.0) {
        return Err(Error::InvalidInput("channels and learning rate must be positive".into()));
    }
    let seed = config.contrastive.seed;
    let params = EmbedderParams::init(config.mode, dataset, config.channels, config.hidden, config.window, seed ^ 0x5eed);
    train_from(dataset, config, params)
}

/// Like [`train`] but starting from given parameters.
pub fn train_from(dataset: &SceneDataset, config: &TrainConfig, mut params: EmbedderParams) -> Result<TrainReport> {
    let inputs = PixelInputs::from_dataset(dataset);
    let maps: Vec<LabelMap> = dataset.views.iter().map(|v| v.instance_map.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.contrastive.seed);
    let mut adam = Adam::new(config.lr);
    let mut losses = Vec::with_capacity(config.steps);

    for step in 0..config.steps {
        let samples = sample_pixels_with(&maps, config.contrastive.samples_per_view, &mut rng)?;
        let field = embed_inputs(&params, &inputs)?;
        let out = contrastive_loss(&field, &samples, &config.contrastive).map_err(|e| match e {
            Error::ZeroNorm(_) | Error::Numeric(_) => Error::Diverged { step, loss: f64::NAN },
            other => other,
        })?;
        if !out.loss.is_finite() {
            return Err(Error::Diverged { step, loss: out.loss });
        }
        losses.push(out.loss);

        let [n, c, h, w] = field.shape();
        let mut dfield = FeatureField::zeros(n, c, h, w);
        for (p, g) in samples.pixels.iter().zip(&out.grads) {
            for (ch, &x) in g.iter().enumerate() {
                let i = dfield.offset(p.view, ch, p.u, p.v);
                dfield.values_mut()[i] += x;
            }
        }
        let grads = embed_backward(&params, &inputs, &dfield)?;
        let grad_views: Vec<&[f64]> = grads.tensors().into_iter().map(|t| t.2).collect();
        adam.update(params.tensors_mut(), &grad_views);
        if !params.is_finite() {
            return Err(Error::Diverged { step, loss: out.loss });
        }
    }
    let smoothed = smooth(&losses);
    Ok(TrainReport {
        params,
        losses,
        smoothed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synth_scene, SceneSpec};

    fn scene() -> SceneDataset {
        synth_scene(&SceneSpec::random_layout(7, 2, 2, 3, (32, 24))).unwrap()
    }

    fn quick(mode: EmbedderMode, steps: usize) -> TrainConfig {
        let mut c = TrainConfig::new(mode);
        c.steps = steps;
        c.contrastive.samples_per_view = 32;
        c
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut adam = Adam::new(0.1);
        let mut p = vec![1.0, -2.0];
        adam.update(vec![&mut p], &[&[3.0, -0.5]]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 1.9).abs() < 1e-6);
    }

    #[test]
    fn free_table_converges() {
        let ds = scene();
        let r = train(&ds, &quick(EmbedderMode::FreeTable, 200)).unwrap();
        let first = r.losses[0];
        let last = *r.losses.last().unwrap();
        assert!(last < 0.05 * first, "{first} -> {last}");
        assert!(r.smoothed.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn zero_weights_leave_params_unchanged() {
        let ds = scene();
        let mut cfg = quick(EmbedderMode::FreeTable, 10);
        cfg.contrastive.lambda_pull = 0.0;
        cfg.contrastive.lambda_push = 0.0;
        let init = EmbedderParams::init(cfg.mode, &ds, cfg.channels, cfg.hidden, cfg.window, cfg.contrastive.seed ^ 0x5eed);
        let r = train(&ds, &cfg).unwrap();
        assert!(r.losses.iter().all(|&l| l == 0.0));
        assert_eq!(r.params, init);
    }

    #[test]
    fn deterministic_under_seed() {
        let ds = scene();
        let cfg = quick(EmbedderMode::Mlp, 5);
        let a = train(&ds, &cfg).unwrap();
        let b = train(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mlp_loss_decreases() {
        let ds = scene();
        let mut cfg = quick(EmbedderMode::Mlp, 60);
        cfg.lr = 1e-2;
        let r = train(&ds, &cfg).unwrap();
        assert!(r.smoothed.last().unwrap() < &r.losses[0]);
    }

    #[test]
    fn divergence_names_step() {
        let ds = scene();
        let mut cfg = quick(EmbedderMode::FreeTable, 5);
        cfg.lr = f64::MAX;
        match train(&ds, &cfg) {
            Err(Error::Diverged { step, .. }) => assert!(step < 5),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}

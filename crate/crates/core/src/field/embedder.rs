use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::attention::{accumulate_outer, linear_rows, linear_rows_transpose, FusionBlock, FusionCache};
use super::FeatureField;
use crate::error::{Error, Result};
use crate::scene::SceneDataset;

/// Per-pixel input width: normalized point, RGB, view direction.
pub const INPUT_DIM: usize = 9;
/// Width of the geometric input fed to the fusion passes.
pub const GEO_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderMode {
    FreeTable,
    Mlp,
}

impl EmbedderMode {
    pub fn name(self) -> &'static str {
        match self {
            EmbedderMode::FreeTable => "free-table",
            EmbedderMode::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "free-table" | "table" => Ok(EmbedderMode::FreeTable),
            "mlp" => Ok(EmbedderMode::Mlp),
            _ => Err(Error::InvalidInput(format!("unknown embedder mode '{s}'"))),
        }
    }
}

/// Dense layer, `weight` is `out × inp` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub out: usize,
    pub inp: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out: usize, inp: usize) -> Self {
        Self {
            out,
            inp,
            weight: vec![0.0; out * inp],
            bias: vec![0.0; out],
        }
    }

    fn random(out: usize, inp: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (1.0 / inp as f64).sqrt()).expect("positive std");
        Self {
            out,
            inp,
            weight: (0..out * inp).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; out],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = linear_rows(x, self.inp, &self.weight, self.out);
        for row in y.chunks_exact_mut(self.out) {
            for (a, b) in row.iter_mut().zip(&self.bias) {
                *a += b;
            }
        }
        y
    }

    /// Accumulates parameter grads into `grad`, returns `d x`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        accumulate_outer(&mut grad.weight, dy, self.out, x, self.inp);
        for row in dy.chunks_exact(self.out) {
            for (a, b) in grad.bias.iter_mut().zip(row) {
                *a += b;
            }
        }
        linear_rows_transpose(dy, self.out, &self.weight, self.inp)
    }
}

/// Per-pixel network plus one plain and one shifted fusion pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub channels: usize,
    pub hidden: usize,
    pub window: usize,
    /// `9 → hidden → hidden → C`, tanh between layers.
    pub layers: [Linear; 3],
    /// Geometric input to `C` dims, one map per fusion pass.
    pub geo: [Linear; 2],
    pub fusion: [FusionBlock; 2],
}

impl MlpParams {
    pub fn zeros(channels: usize, hidden: usize, window: usize) -> Self {
        Self {
            channels,
            hidden,
            window,
            layers: [
                Linear::zeros(hidden, INPUT_DIM),
                Linear::zeros(hidden, hidden),
                Linear::zeros(channels, hidden),
            ],
            geo: [Linear::zeros(channels, GEO_DIM), Linear::zeros(channels, GEO_DIM)],
            fusion: [
                FusionBlock::zeros(channels, window, false),
                FusionBlock::zeros(channels, window, true),
            ],
        }
    }

    pub fn random(channels: usize, hidden: usize, window: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = |shifted: bool, rng: &mut ChaCha8Rng| {
            let mut b = FusionBlock::zeros(channels, window, shifted);
            b.wq = Linear::random(channels, channels, rng).weight;
            b.wk = Linear::random(channels, channels, rng).weight;
            b.wv = Linear::random(channels, channels, rng).weight;
            b.wo = Linear::random(channels, channels, rng).weight.iter().map(|w| 0.5 * w).collect();
            b
        };
        let layers = [
            Linear::random(hidden, INPUT_DIM, &mut rng),
            Linear::random(hidden, hidden, &mut rng),
            Linear::random(channels, hidden, &mut rng),
        ];
        let geo = [
            Linear::random(channels, GEO_DIM, &mut rng),
            Linear::random(channels, GEO_DIM, &mut rng),
        ];
        let fusion = [block(false, &mut rng), block(true, &mut rng)];
        Self {
            channels,
            hidden,
            window,
            layers,
            geo,
            fusion,
        }
    }
}

/// Trainable embedder state.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbedderParams {
    /// One free C-vector per pixel per view.
    FreeTable(FeatureField),
    Mlp(MlpParams),
}

impl EmbedderParams {
    pub fn mode(&self) -> EmbedderMode {
        match self {
            EmbedderParams::FreeTable(_) => EmbedderMode::FreeTable,
            EmbedderParams::Mlp(_) => EmbedderMode::Mlp,
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            EmbedderParams::FreeTable(t) => t.channels(),
            EmbedderParams::Mlp(m) => m.channels,
        }
    }

    /// Table entries drawn from N(0, 0.1²), or fan-in scaled network weights.
    pub fn init(mode: EmbedderMode, dataset: &SceneDataset, channels: usize, hidden: usize, window: usize, seed: u64) -> Self {
        match mode {
            EmbedderMode::FreeTable => {
                let (w, h) = dataset.image_size();
                let n = dataset.num_views() * channels * h * w;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, 0.1).expect("positive std");
                let values = (0..n).map(|_| normal.sample(&mut rng)).collect();
                EmbedderParams::FreeTable(
                    FeatureField::from_vec(dataset.num_views(), channels, h, w, values).expect("sized from dataset"),
                )
            }
            EmbedderMode::Mlp => EmbedderParams::Mlp(MlpParams::random(channels, hidden, window, seed)),
        }
    }

    /// Same structure, all zeros.
    pub fn zeros_like(&self) -> Self {
        match self {
            EmbedderParams::FreeTable(t) => {
                let [n, c, h, w] = t.shape();
                EmbedderParams::FreeTable(FeatureField::zeros(n, c, h, w))
            }
            EmbedderParams::Mlp(m) => EmbedderParams::Mlp(MlpParams::zeros(m.channels, m.hidden, m.window)),
        }
    }

    /// Named parameter tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        match self {
            EmbedderParams::FreeTable(t) => vec![("table".into(), t.shape().to_vec(), t.values())],
            EmbedderParams::Mlp(m) => {
                let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
                for (i, l) in m.layers.iter().enumerate() {
                    out.push((format!("layer{i}.weight"), vec![l.out, l.inp], &l.weight));
                    out.push((format!("layer{i}.bias"), vec![l.out], &l.bias));
                }
                for (i, (g, f)) in m.geo.iter().zip(&m.fusion).enumerate() {
                    let c = f.channels;
                    out.push((format!("fusion{i}.geo.weight"), vec![g.out, g.inp], &g.weight));
                    out.push((format!("fusion{i}.geo.bias"), vec![g.out], &g.bias));
                    out.push((format!("fusion{i}.wq"), vec![c, c], &f.wq));
                    out.push((format!("fusion{i}.wk"), vec![c, c], &f.wk));
                    out.push((format!("fusion{i}.wv"), vec![c, c], &f.wv));
                    out.push((format!("fusion{i}.wo"), vec![c, c], &f.wo));
                }
                out
            }
        }
    }

    /// Mutable views of the tensors, same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            EmbedderParams::FreeTable(t) => vec![t.values_mut()],
            EmbedderParams::Mlp(m) => {
                let mut out: Vec<&mut [f64]> = Vec::new();
                for l in m.layers.iter_mut() {
                    out.push(&mut l.weight);
                    out.push(&mut l.bias);
                }
                for (g, f) in m.geo.iter_mut().zip(m.fusion.iter_mut()) {
                    out.push(&mut g.weight);
                    out.push(&mut g.bias);
                    out.push(&mut f.wq);
                    out.push(&mut f.wk);
                    out.push(&mut f.wv);
                    out.push(&mut f.wo);
                }
                out
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|x| x.is_finite()))
    }

    fn add_assign(&mut self, other: &EmbedderParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b.2) {
                *x += y;
            }
        }
    }
}

/// Network inputs derived once from a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelInputs {
    pub views: usize,
    pub height: usize,
    pub width: usize,
    /// Per view, `(H·W) × 9` rows.
    pub features: Vec<Vec<f64>>,
    /// Per view, `(H·W) × 3` normalized points.
    pub geometry: Vec<Vec<f64>>,
}

impl PixelInputs {
    /// Points are centred on the mean valid point and scaled by the largest
    /// distance from it; pixels without depth get a zero point.
    pub fn from_dataset(dataset: &SceneDataset) -> Self {
        let (width, height) = dataset.image_size();
        let mut sum = [0.0f64; 3];
        let mut count = 0usize;
        for view in &dataset.views {
            for (p, &d) in view.point_map.as_slice().iter().zip(view.depth.as_slice()) {
                if d > 0.0 {
                    for k in 0..3 {
                        sum[k] += f64::from(p[k]);
                    }
                    count += 1;
                }
            }
        }
        let center = if count > 0 { sum.map(|s| s / count as f64) } else { [0.0; 3] };
        let mut radius: f64 = 0.0;
        for view in &dataset.views {
            for (p, &d) in view.point_map.as_slice().iter().zip(view.depth.as_slice()) {
                if d > 0.0 {
                    let r = (0..3).map(|k| (f64::from(p[k]) - center[k]).powi(2)).sum::<f64>().sqrt();
                    radius = radius.max(r);
                }
            }
        }
        let scale = if radius > 0.0 { 1.0 / radius } else { 1.0 };

        let mut features = Vec::with_capacity(dataset.num_views());
        let mut geometry = Vec::with_capacity(dataset.num_views());
        for view in &dataset.views {
            let mut f = Vec::with_capacity(width * height * INPUT_DIM);
            let mut g = Vec::with_capacity(width * height * GEO_DIM);
            for v in 0..height {
                for u in 0..width {
                    let p = view.point_map.get(u, v);
                    let pt: [f64; 3] = if *view.depth.get(u, v) > 0.0 {
                        std::array::from_fn(|k| (f64::from(p[k]) - center[k]) * scale)
                    } else {
                        [0.0; 3]
                    };
                    let rgb = view.rgb.get(u, v);
                    let dir = view.camera.ray_direction(u as f64, v as f64);
                    f.extend_from_slice(&pt);
                    f.extend(rgb.iter().map(|&x| f64::from(x)));
                    f.extend(dir.iter().copied());
                    g.extend_from_slice(&pt);
                }
            }
            features.push(f);
            geometry.push(g);
        }
        Self {
            views: dataset.num_views(),
            height,
            width,
            features,
            geometry,
        }
    }
}

struct ViewCache {
    h1: Vec<f64>,
    h2: Vec<f64>,
    e0: Vec<f64>,
    g: [Vec<f64>; 2],
    e1: Vec<f64>,
    fusion: [FusionCache; 2],
}

fn tanh_in_place(x: &mut [f64]) {
    for v in x {
        *v = v.tanh();
    }
}

fn mlp_view(m: &MlpParams, x: &[f64], geo: &[f64], height: usize, width: usize) -> (Vec<f64>, ViewCache) {
    let mut h1 = m.layers[0].forward(x);
    tanh_in_place(&mut h1);
    let mut h2 = m.layers[1].forward(&h1);
    tanh_in_place(&mut h2);
    let e0 = m.layers[2].forward(&h2);
    let g0 = m.geo[0].forward(geo);
    let (e1, c0) = m.fusion[0].forward_rows(&e0, &g0, height, width);
    let g1 = m.geo[1].forward(geo);
    let (e2, c1) = m.fusion[1].forward_rows(&e1, &g1, height, width);
    (
        e2,
        ViewCache {
            h1,
            h2,
            e0,
            g: [g0, g1],
            e1,
            fusion: [c0, c1],
        },
    )
}

fn mlp_view_backward(m: &MlpParams, x: &[f64], geo: &[f64], cache: &ViewCache, de2: &[f64]) -> MlpParams {
    let mut grad = MlpParams::zeros(m.channels, m.hidden, m.window);
    let (de1, dg1, f1) = m.fusion[1].backward_rows(&cache.e1, &cache.g[1], &cache.fusion[1], de2);
    m.geo[1].backward(geo, &dg1, &mut grad.geo[1]);
    let (de0, dg0, f0) = m.fusion[0].backward_rows(&cache.e0, &cache.g[0], &cache.fusion[0], &de1);
    m.geo[0].backward(geo, &dg0, &mut grad.geo[0]);
    for (dst, src) in grad.fusion.iter_mut().zip([f0, f1]) {
        dst.wq = src.wq;
        dst.wk = src.wk;
        dst.wv = src.wv;
        dst.wo = src.wo;
    }
    let mut dh2 = m.layers[2].backward(&cache.h2, &de0, &mut grad.layers[2]);
    for (d, h) in dh2.iter_mut().zip(&cache.h2) {
        *d *= 1.0 - h * h;
    }
    let mut dh1 = m.layers[1].backward(&cache.h1, &dh2, &mut grad.layers[1]);
    for (d, h) in dh1.iter_mut().zip(&cache.h1) {
        *d *= 1.0 - h * h;
    }
    m.layers[0].backward(x, &dh1, &mut grad.layers[0]);
    grad
}

fn check_mlp(m: &MlpParams, inputs: &PixelInputs) -> Result<()> {
    let l = &m.layers;
    if l[0].inp != INPUT_DIM || l[0].out != m.hidden || l[1].inp != m.hidden || l[1].out != m.hidden || l[2].inp != m.hidden || l[2].out != m.channels {
        return Err(Error::Shape("network layer shapes are inconsistent".into()));
    }
    for (g, f) in m.geo.iter().zip(&m.fusion) {
        if g.inp != GEO_DIM || g.out != m.channels || f.channels != m.channels {
            return Err(Error::Shape("fusion shapes are inconsistent".into()));
        }
    }
    if inputs.features.len() != inputs.views {
        return Err(Error::Shape("inputs do not cover every view".into()));
    }
    Ok(())
}

fn to_field_values(rows: &[f64], c: usize, n: usize, out: &mut [f64]) {
    for p in 0..n {
        for k in 0..c {
            out[k * n + p] = rows[p * c + k];
        }
    }
}

/// Embeds precomputed inputs.
pub fn embed_inputs(params: &EmbedderParams, inputs: &PixelInputs) -> Result<FeatureField> {
    if !params.is_finite() {
        return Err(Error::Numeric("embedder parameters are not finite".into()));
    }
    match params {
        EmbedderParams::FreeTable(t) => {
            if t.views() != inputs.views || t.height() != inputs.height || t.width() != inputs.width {
                return Err(Error::Shape(format!(
                    "table {:?} does not match {} views of {}x{}",
                    t.shape(),
                    inputs.views,
                    inputs.height,
                    inputs.width
                )));
            }
            Ok(t.clone())
        }
        EmbedderParams::Mlp(m) => {
            check_mlp(m, inputs)?;
            let (h, w, c) = (inputs.height, inputs.width, m.channels);
            let rows: Vec<Vec<f64>> = (0..inputs.views)
                .into_par_iter()
                .map(|k| mlp_view(m, &inputs.features[k], &inputs.geometry[k], h, w).0)
                .collect();
            let mut field = FeatureField::zeros(inputs.views, c, h, w);
            let n = h * w;
            for (k, r) in rows.iter().enumerate() {
                to_field_values(r, c, n, &mut field.values_mut()[k * c * n..(k + 1) * c * n]);
            }
            Ok(field)
        }
    }
}

/// The feature field of a dataset under `params`.
pub fn embed(params: &EmbedderParams, dataset: &SceneDataset) -> Result<FeatureField> {
    embed_inputs(params, &PixelInputs::from_dataset(dataset))
}

/// Parameter gradient of a scalar loss given `d loss / d field`.
pub fn embed_backward(params: &EmbedderParams, inputs: &PixelInputs, dfield: &FeatureField) -> Result<EmbedderParams> {
    match params {
        EmbedderParams::FreeTable(t) => {
            if t.shape() != dfield.shape() {
                return Err(Error::Shape("field gradient does not match table".into()));
            }
            Ok(EmbedderParams::FreeTable(dfield.clone()))
        }
        EmbedderParams::Mlp(m) => {
            check_mlp(m, inputs)?;
            let (h, w, c) = (inputs.height, inputs.width, m.channels);
            if dfield.shape() != [inputs.views, c, h, w] {
                return Err(Error::Shape("field gradient does not match inputs".into()));
            }
            let n = h * w;
            let per_view: Vec<Option<MlpParams>> = (0..inputs.views)
                .into_par_iter()
                .map(|k| {
                    let level = &dfield.values()[k * c * n..(k + 1) * c * n];
                    if level.iter().all(|&x| x == 0.0) {
                        return None;
                    }
                    let mut rows = vec![0.0; n * c];
                    for p in 0..n {
                        for ch in 0..c {
                            rows[p * c + ch] = level[ch * n + p];
                        }
                    }
                    let (x, geo) = (&inputs.features[k], &inputs.geometry[k]);
                    let (_, cache) = mlp_view(m, x, geo, h, w);
                    Some(mlp_view_backward(m, x, geo, &cache, &rows))
                })
                .collect();
            let mut total = params.zeros_like();
            for g in per_view.into_iter().flatten() {
                total.add_assign(&EmbedderParams::Mlp(g));
            }
            Ok(total)
        }
    }
}

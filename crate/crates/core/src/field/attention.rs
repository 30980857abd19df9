use rayon::prelude::*;

use crate::error::{Error, Result};

/// One view's features, `C × H × W`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureLevel {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl FeatureLevel {
    pub fn from_vec(channels: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "level {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                values.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            values: vec![0.0; channels * height * width],
        }
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, c: usize, u: usize, v: usize) -> f64 {
        self.values[(c * self.height + v) * self.width + u]
    }

    /// Row-major `(H·W) × C` copy.
    pub(crate) fn to_pixel_major(&self) -> Vec<f64> {
        let n = self.height * self.width;
        let mut out = vec![0.0; n * self.channels];
        for c in 0..self.channels {
            for p in 0..n {
                out[p * self.channels + c] = self.values[c * n + p];
            }
        }
        out
    }

    pub(crate) fn from_pixel_major(channels: usize, height: usize, width: usize, pm: &[f64]) -> Self {
        let n = height * width;
        let mut values = vec![0.0; n * channels];
        for p in 0..n {
            for c in 0..channels {
                values[c * n + p] = pm[p * channels + c];
            }
        }
        Self {
            channels,
            height,
            width,
            values,
        }
    }
}

/// Pixel indices (`v·W + u`) of each attention window, in scan order.
///
/// Windows tile the image in `window × window` squares. The shifted variant
/// moves the tiling by `⌊window/2⌋`; windows cut by the image border keep only
/// their in-image pixels.
pub fn window_partition(height: usize, width: usize, window: usize, shifted: bool) -> Vec<Vec<usize>> {
    let w = window.max(1);
    let s = if shifted { w / 2 } else { 0 };
    let rows = (height + s).div_ceil(w);
    let cols = (width + s).div_ceil(w);
    let mut out = vec![Vec::new(); rows * cols];
    for v in 0..height {
        for u in 0..width {
            out[((v + s) / w) * cols + (u + s) / w].push(v * width + u);
        }
    }
    out.retain(|win| !win.is_empty());
    out
}

/// `x Wᵀ` for row-major `x` (`n × inp`) and `W` (`out × inp`).
pub(crate) fn linear_rows(x: &[f64], inp: usize, weight: &[f64], out: usize) -> Vec<f64> {
    let n = x.len() / inp;
    let mut y = vec![0.0; n * out];
    for p in 0..n {
        let xp = &x[p * inp..(p + 1) * inp];
        for o in 0..out {
            let wo = &weight[o * inp..(o + 1) * inp];
            y[p * out + o] = xp.iter().zip(wo).map(|(a, b)| a * b).sum();
        }
    }
    y
}

/// Accumulates `dyᵀ x` into `dw` (`out × inp`).
pub(crate) fn accumulate_outer(dw: &mut [f64], dy: &[f64], out: usize, x: &[f64], inp: usize) {
    let n = x.len() / inp;
    for p in 0..n {
        let dyp = &dy[p * out..(p + 1) * out];
        let xp = &x[p * inp..(p + 1) * inp];
        for (o, &g) in dyp.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, &xi) in dw[o * inp..(o + 1) * inp].iter_mut().zip(xp) {
                *d += g * xi;
            }
        }
    }
}

/// `dy W` for `dy` (`n × out`), `W` (`out × inp`).
pub(crate) fn linear_rows_transpose(dy: &[f64], out: usize, weight: &[f64], inp: usize) -> Vec<f64> {
    let n = dy.len() / out;
    let mut dx = vec![0.0; n * inp];
    for p in 0..n {
        let dxp = &mut dx[p * inp..(p + 1) * inp];
        for o in 0..out {
            let g = dy[p * out + o];
            if g == 0.0 {
                continue;
            }
            for (d, &w) in dxp.iter_mut().zip(&weight[o * inp..(o + 1) * inp]) {
                *d += g * w;
            }
        }
    }
    dx
}

fn identity(c: usize) -> Vec<f64> {
    let mut m = vec![0.0; c * c];
    for i in 0..c {
        m[i * c + i] = 1.0;
    }
    m
}

/// Single-head windowed cross-attention with a residual connection:
/// `out = h + Wo · attn(Wq h, Wk g, Wv g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionBlock {
    pub channels: usize,
    pub window: usize,
    pub shifted: bool,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
    pub wo: Vec<f64>,
}

pub(crate) struct FusionCache {
    windows: Vec<Vec<usize>>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    o: Vec<f64>,
    attn: Vec<Vec<f64>>,
}

impl FusionBlock {
    /// All projections are the identity.
    pub fn identity(channels: usize, window: usize, shifted: bool) -> Self {
        Self {
            channels,
            window,
            shifted,
            wq: identity(channels),
            wk: identity(channels),
            wv: identity(channels),
            wo: identity(channels),
        }
    }

    pub fn zeros(channels: usize, window: usize, shifted: bool) -> Self {
        let z = vec![0.0; channels * channels];
        Self {
            channels,
            window,
            shifted,
            wq: z.clone(),
            wk: z.clone(),
            wv: z.clone(),
            wo: z,
        }
    }

    fn check(&self, f_ins: &FeatureLevel, f_geo: &FeatureLevel) -> Result<()> {
        if f_ins.height != f_geo.height || f_ins.width != f_geo.width {
            return Err(Error::Shape(format!(
                "instance level {}x{} vs geometric level {}x{}",
                f_ins.height, f_ins.width, f_geo.height, f_geo.width
            )));
        }
        if f_ins.channels != self.channels || f_geo.channels != self.channels {
            return Err(Error::Shape(format!(
                "block expects {} channels, got {} and {}",
                self.channels, f_ins.channels, f_geo.channels
            )));
        }
        Ok(())
    }

    pub(crate) fn forward_rows(&self, h: &[f64], g: &[f64], height: usize, width: usize) -> (Vec<f64>, FusionCache) {
        let c = self.channels;
        let scale = 1.0 / (c as f64).sqrt();
        let q = linear_rows(h, c, &self.wq, c);
        let k = linear_rows(g, c, &self.wk, c);
        let v = linear_rows(g, c, &self.wv, c);
        let windows = window_partition(height, width, self.window, self.shifted);

        let per_window: Vec<(Vec<f64>, Vec<f64>)> = windows
            .par_iter()
            .map(|win| {
                let n = win.len();
                let mut attn = vec![0.0; n * n];
                let mut o = vec![0.0; n * c];
                for (a, &pa) in win.iter().enumerate() {
                    let qa = &q[pa * c..(pa + 1) * c];
                    let row = &mut attn[a * n..(a + 1) * n];
                    for (b, &pb) in win.iter().enumerate() {
                        row[b] = scale * qa.iter().zip(&k[pb * c..(pb + 1) * c]).map(|(x, y)| x * y).sum::<f64>();
                    }
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for s in row.iter_mut() {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    for s in row.iter_mut() {
                        *s /= z;
                    }
                    let oa = &mut o[a * c..(a + 1) * c];
                    for (b, &pb) in win.iter().enumerate() {
                        for (x, y) in oa.iter_mut().zip(&v[pb * c..(pb + 1) * c]) {
                            *x += row[b] * y;
                        }
                    }
                }
                (attn, o)
            })
            .collect();

        let mut o = vec![0.0; h.len()];
        let mut attn = Vec::with_capacity(windows.len());
        for (win, (a, ow)) in windows.iter().zip(per_window) {
            for (i, &p) in win.iter().enumerate() {
                o[p * c..(p + 1) * c].copy_from_slice(&ow[i * c..(i + 1) * c]);
            }
            attn.push(a);
        }
        let mut out = linear_rows(&o, c, &self.wo, c);
        for (x, y) in out.iter_mut().zip(h) {
            *x += y;
        }
        (
            out,
            FusionCache {
                windows,
                q,
                k,
                v,
                o,
                attn,
            },
        )
    }

    /// Returns `(d h, d g, parameter grads)` for upstream gradient `dout`.
    pub(crate) fn backward_rows(&self, h: &[f64], g: &[f64], cache: &FusionCache, dout: &[f64]) -> (Vec<f64>, Vec<f64>, FusionGrads) {
        let c = self.channels;
        let scale = 1.0 / (c as f64).sqrt();
        let mut grads = FusionGrads {
            wq: vec![0.0; c * c],
            wk: vec![0.0; c * c],
            wv: vec![0.0; c * c],
            wo: vec![0.0; c * c],
        };
        accumulate_outer(&mut grads.wo, dout, c, &cache.o, c);
        let d_o = linear_rows_transpose(dout, c, &self.wo, c);

        let per_window: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = cache
            .windows
            .par_iter()
            .zip(&cache.attn)
            .map(|(win, attn)| {
                let n = win.len();
                let mut dq = vec![0.0; n * c];
                let mut dk = vec![0.0; n * c];
                let mut dv = vec![0.0; n * c];
                let mut da = vec![0.0; n];
                for (a, &pa) in win.iter().enumerate() {
                    let doa = &d_o[pa * c..(pa + 1) * c];
                    let row = &attn[a * n..(a + 1) * n];
                    for (b, &pb) in win.iter().enumerate() {
                        da[b] = doa.iter().zip(&cache.v[pb * c..(pb + 1) * c]).map(|(x, y)| x * y).sum();
                        for (d, &x) in dv[b * c..(b + 1) * c].iter_mut().zip(doa) {
                            *d += row[b] * x;
                        }
                    }
                    let mean: f64 = row.iter().zip(&da).map(|(p, d)| p * d).sum();
                    for (b, &pb) in win.iter().enumerate() {
                        let ds = row[b] * (da[b] - mean) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for (d, &x) in dq[a * c..(a + 1) * c].iter_mut().zip(&cache.k[pb * c..(pb + 1) * c]) {
                            *d += ds * x;
                        }
                        for (d, &x) in dk[b * c..(b + 1) * c].iter_mut().zip(&cache.q[pa * c..(pa + 1) * c]) {
                            *d += ds * x;
                        }
                    }
                }
                (dq, dk, dv)
            })
            .collect();

        let mut dq = vec![0.0; h.len()];
        let mut dk = vec![0.0; h.len()];
        let mut dv = vec![0.0; h.len()];
        for (win, (q, k, v)) in cache.windows.iter().zip(per_window) {
            for (i, &p) in win.iter().enumerate() {
                dq[p * c..(p + 1) * c].copy_from_slice(&q[i * c..(i + 1) * c]);
                dk[p * c..(p + 1) * c].copy_from_slice(&k[i * c..(i + 1) * c]);
                dv[p * c..(p + 1) * c].copy_from_slice(&v[i * c..(i + 1) * c]);
            }
        }
        accumulate_outer(&mut grads.wq, &dq, c, h, c);
        accumulate_outer(&mut grads.wk, &dk, c, g, c);
        accumulate_outer(&mut grads.wv, &dv, c, g, c);

        let mut dh = linear_rows_transpose(&dq, c, &self.wq, c);
        for (x, y) in dh.iter_mut().zip(dout) {
            *x += y;
        }
        let mut dg = linear_rows_transpose(&dk, c, &self.wk, c);
        for (x, y) in dg.iter_mut().zip(linear_rows_transpose(&dv, c, &self.wv, c)) {
            *x += y;
        }
        (dh, dg, grads)
    }

    pub fn forward(&self, f_ins: &FeatureLevel, f_geo: &FeatureLevel) -> Result<FeatureLevel> {
        self.check(f_ins, f_geo)?;
        let (out, _) = self.forward_rows(&f_ins.to_pixel_major(), &f_geo.to_pixel_major(), f_ins.height, f_ins.width);
        Ok(FeatureLevel::from_pixel_major(self.channels, f_ins.height, f_ins.width, &out))
    }

    /// Gradients of a scalar loss given `d loss / d output`.
    pub fn backward(
        &self,
        f_ins: &FeatureLevel,
        f_geo: &FeatureLevel,
        dout: &FeatureLevel,
    ) -> Result<(FeatureLevel, FeatureLevel, FusionGrads)> {
        self.check(f_ins, f_geo)?;
        self.check(dout, f_geo)?;
        let (hh, ww) = (f_ins.height, f_ins.width);
        let h = f_ins.to_pixel_major();
        let g = f_geo.to_pixel_major();
        let (_, cache) = self.forward_rows(&h, &g, hh, ww);
        let (dh, dg, grads) = self.backward_rows(&h, &g, &cache, &dout.to_pixel_major());
        Ok((
            FeatureLevel::from_pixel_major(self.channels, hh, ww, &dh),
            FeatureLevel::from_pixel_major(self.channels, hh, ww, &dg),
            grads,
        ))
    }
}

/// `f_ins + attn(Q = f_ins, K = V = f_geo)` within each window, scaled by
/// `1/√C`.
pub fn window_cross_attention(f_ins: &FeatureLevel, f_geo: &FeatureLevel, window: usize, shifted: bool) -> Result<FeatureLevel> {
    FusionBlock::identity(f_ins.channels, window, shifted).forward(f_ins, f_geo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_level(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureLevel {
        FeatureLevel::from_vec(c, h, w, (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn partition_shapes() {
        let plain = window_partition(5, 6, 4, false);
        assert_eq!(plain.iter().map(Vec::len).collect::<Vec<_>>(), vec![16, 8, 4, 2]);
        let shifted = window_partition(5, 6, 4, true);
        // offsets of 2: rows split 2+3, columns split 2+4
        assert_eq!(shifted.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 8, 6, 12]);
        assert_eq!(shifted[0], vec![0, 1, 6, 7]);
        for part in [plain, shifted] {
            let mut all: Vec<usize> = part.into_iter().flatten().collect();
            all.sort();
            assert_eq!(all, (0..30).collect::<Vec<_>>());
        }
    }

    #[test]
    fn identical_values_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_level(&mut rng, 3, 4, 4);
        let v = [0.3, -1.2, 0.7];
        let g = FeatureLevel::from_vec(3, 4, 4, v.iter().flat_map(|&x| std::iter::repeat_n(x, 16)).collect()).unwrap();
        let out = window_cross_attention(&h, &g, 4, false).unwrap();
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    assert!((out.get(c, x, y) - h.get(c, x, y) - v[c]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_queries_average_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = FeatureLevel::zeros(2, 4, 6);
        let g = random_level(&mut rng, 2, 4, 6);
        let out = window_cross_attention(&h, &g, 2, true).unwrap();
        for win in window_partition(4, 6, 2, true) {
            for c in 0..2 {
                let mean = win.iter().map(|&p| g.get(c, p % 6, p / 6)).sum::<f64>() / win.len() as f64;
                for &p in &win {
                    assert!((out.get(c, p % 6, p / 6) - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = FeatureLevel::zeros(2, 4, 4);
        let b = FeatureLevel::zeros(2, 4, 5);
        assert!(matches!(window_cross_attention(&a, &b, 2, false), Err(Error::Shape(_))));
    }

    fn global_attention(h: &FeatureLevel, g: &FeatureLevel) -> FeatureLevel {
        let c = h.channels();
        let n = h.height() * h.width();
        let mut out = h.clone();
        for p in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|q| (0..c).map(|k| h.values()[k * n + p] * g.values()[k * n + q]).sum::<f64>() / (c as f64).sqrt())
                .collect();
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let z: f64 = w.iter().sum();
            for k in 0..c {
                out.values[k * n + p] += (0..n).map(|q| w[q] / z * g.values()[k * n + q]).sum::<f64>();
            }
        }
        out
    }

    proptest! {
        #[test]
        fn one_window_is_global(seed in 0u64..200, hh in 1usize..6, ww in 1usize..6, extra in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h = random_level(&mut rng, 3, hh, ww);
            let g = random_level(&mut rng, 3, hh, ww);
            let win = window_cross_attention(&h, &g, hh.max(ww) + extra, false).unwrap();
            let glob = global_attention(&h, &g);
            for (a, b) in win.values().iter().zip(glob.values()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn random_block(rng: &mut ChaCha8Rng, c: usize, window: usize, shifted: bool) -> FusionBlock {
        let mut m = || (0..c * c).map(|_| rng.random_range(-0.8..0.8)).collect::<Vec<f64>>();
        FusionBlock {
            channels: c,
            window,
            shifted,
            wq: m(),
            wk: m(),
            wv: m(),
            wo: m(),
        }
    }

    // scalar loss: <r, out> for a fixed random r
    fn loss(block: &FusionBlock, h: &FeatureLevel, g: &FeatureLevel, r: &[f64]) -> f64 {
        block.forward(h, g).unwrap().values().iter().zip(r).map(|(a, b)| a * b).sum()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let eps = 1e-4;
        for seed in 0..6 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (c, hh, ww) = (3, 5, 6);
            let block = random_block(&mut rng, c, 4, seed % 2 == 1);
            let h = random_level(&mut rng, c, hh, ww);
            let g = random_level(&mut rng, c, hh, ww);
            let r: Vec<f64> = (0..c * hh * ww).map(|_| rng.random_range(-1.0..1.0)).collect();
            let dout = FeatureLevel::from_vec(c, hh, ww, r.clone()).unwrap();
            let (dh, dg, grads) = block.backward(&h, &g, &dout).unwrap();

            let mut worst: f64 = 0.0;
            let params: [(&Vec<f64>, fn(&mut FusionBlock) -> &mut Vec<f64>); 4] = [
                (&grads.wq, |b| &mut b.wq),
                (&grads.wk, |b| &mut b.wk),
                (&grads.wv, |b| &mut b.wv),
                (&grads.wo, |b| &mut b.wo),
            ];
            for (analytic, field) in params {
                for i in 0..c * c {
                    let mut p = block.clone();
                    field(&mut p)[i] += eps;
                    let mut m = block.clone();
                    field(&mut m)[i] -= eps;
                    let fd = (loss(&p, &h, &g, &r) - loss(&m, &h, &g, &r)) / (2.0 * eps);
                    worst = worst.max(rel(analytic[i], fd));
                }
            }
            for i in 0..h.values().len() {
                let mut p = h.clone();
                p.values[i] += eps;
                let mut m = h.clone();
                m.values[i] -= eps;
                let fd = (loss(&block, &p, &g, &r) - loss(&block, &m, &g, &r)) / (2.0 * eps);
                worst = worst.max(rel(dh.values()[i], fd));
                let mut p = g.clone();
                p.values[i] += eps;
                let mut m = g.clone();
                m.values[i] -= eps;
                let fd = (loss(&block, &h, &p, &r) - loss(&block, &h, &m, &r)) / (2.0 * eps);
                worst = worst.max(rel(dg.values()[i], fd));
            }
            assert!(worst < 1e-4, "seed {seed}: {worst}");
        }
    }
}

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::field::FeatureField;
use crate::format::Tensor;
use crate::raster::{LabelMap, Mask};

/// Per-view `D × H × W` language-aligned features.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageFeatureMap {
    field: FeatureField,
}

impl LanguageFeatureMap {
    pub fn new(field: FeatureField) -> Result<Self> {
        if !field.is_finite() {
            return Err(Error::Numeric("language features are not finite".into()));
        }
        Ok(Self { field })
    }

    pub fn field(&self) -> &FeatureField {
        &self.field
    }

    pub fn views(&self) -> usize {
        self.field.views()
    }

    pub fn dim(&self) -> usize {
        self.field.channels()
    }

    pub fn width(&self) -> usize {
        self.field.width()
    }

    pub fn height(&self) -> usize {
        self.field.height()
    }

    /// Pixel `(u, v)` of `view` plus a category embedding and isotropic
    /// Gaussian noise: category `c ≥ 1` uses embedding `c − 1`, category 0
    /// gets noise only.
    pub fn synthesize(categories: &[LabelMap], texts: &TextEmbeddingSet, sigma: f64, seed: u64) -> Result<Self> {
        let first = categories
            .first()
            .ok_or_else(|| Error::InvalidInput("no category maps".into()))?;
        let (w, h, d) = (first.width(), first.height(), texts.dim());
        let noise = Normal::new(0.0, sigma.max(0.0)).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = FeatureField::zeros(categories.len(), d, h, w);
        for (k, map) in categories.iter().enumerate() {
            if !map.same_size(first) {
                return Err(Error::Shape(format!("category map {k} differs in size")));
            }
            for v in 0..h {
                for u in 0..w {
                    let c = *map.get(u, v) as usize;
                    let base = match c {
                        0 => None,
                        c => Some(
                            texts
                                .entries()
                                .get(c - 1)
                                .ok_or_else(|| Error::InvalidInput(format!("category {c} has no text embedding")))?,
                        ),
                    };
                    let px: Vec<f64> = (0..d)
                        .map(|i| base.map_or(0.0, |(_, e)| e[i]) + noise.sample(&mut rng))
                        .collect();
                    field.set_pixel(k, u, v, &px);
                }
            }
        }
        Self::new(field)
    }

    /// Writes `lang_<k>.ntf` (f32, `D × H × W`) per view.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        let n = self.dim() * self.height() * self.width();
        for k in 0..self.views() {
            let vals = self.field.values()[k * n..(k + 1) * n].iter().map(|&x| x as f32).collect();
            Tensor::f32(vec![self.dim(), self.height(), self.width()], vals)?.write(&dir.join(format!("lang_{k}.ntf")))?;
        }
        Ok(())
    }

    /// Reads consecutive `lang_<k>.ntf` files starting at 0.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut dims: Option<Vec<usize>> = None;
        let mut values = Vec::new();
        let mut views = 0;
        loop {
            let p = dir.join(format!("lang_{views}.ntf"));
            if !p.exists() {
                break;
            }
            let t = Tensor::read(&p)?;
            match &dims {
                None if t.dims().len() == 3 => dims = Some(t.dims().to_vec()),
                None => return Err(Error::Shape(format!("{}: expected rank 3, found {:?}", p.display(), t.dims()))),
                Some(d) => t.expect_dims(d)?,
            }
            values.extend(t.into_f32()?.into_iter().map(f64::from));
            views += 1;
        }
        let d = dims.ok_or_else(|| Error::InvalidInput(format!("no lang_0.ntf in {}", dir.display())))?;
        Self::new(FeatureField::from_vec(views, d[0], d[1], d[2], values)?)
    }
}

/// Named text embeddings, in category order.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddingSet {
    entries: Vec<(String, Vec<f64>)>,
}

impl TextEmbeddingSet {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.1.len());
        if dim == 0 {
            return Err(Error::InvalidInput("text embeddings need at least one nonempty entry".into()));
        }
        let mut names = BTreeSet::new();
        for (name, v) in &entries {
            if !names.insert(name.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate category name '{name}'")));
            }
            if v.len() != dim {
                return Err(Error::Shape(format!("'{name}' has dimension {} instead of {dim}", v.len())));
            }
            if !v.iter().all(|x| x.is_finite()) || v.iter().all(|&x| x == 0.0) {
                return Err(Error::InvalidInput(format!("'{name}' embedding must be finite and nonzero")));
            }
        }
        Ok(Self { entries })
    }

    /// Unit basis vectors `e_0 .. e_{n−1}` in `dim` dimensions.
    pub fn orthonormal(names: &[&str], dim: usize) -> Result<Self> {
        if names.len() > dim {
            return Err(Error::InvalidInput(format!("{} orthonormal vectors do not fit in {dim} dimensions", names.len())));
        }
        Self::new(
            names
                .iter()
                .enumerate()
                .map(|(i, n)| {
                    let mut v = vec![0.0; dim];
                    v[i] = 1.0;
                    (n.to_string(), v)
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[(String, Vec<f64>)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.entries[0].1.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|(n, _)| n == name)
    }

    /// One `name<TAB>v1,v2,...` line per entry.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut offset = 0;
        for line in text.lines() {
            let at = offset;
            offset += line.len() + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (name, vals) = line
                .split_once('\t')
                .ok_or_else(|| Error::format(at, format!("expected name<TAB>values, got '{line}'")))?;
            let v = vals
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::format(at, format!("'{name}': {e}")))?;
            entries.push((name.to_string(), v));
        }
        Self::new(entries)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, v) in &self.entries {
            let vals: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            let _ = writeln!(s, "{name}\t{}", vals.join(","));
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Mean feature vector over the mask's pixels in one view.
pub fn mask_pool(features: &LanguageFeatureMap, view: usize, mask: &Mask) -> Result<Vec<f64>> {
    if view >= features.views() {
        return Err(Error::InvalidInput(format!("view {view} out of range")));
    }
    if mask.width() != features.width() || mask.height() != features.height() {
        return Err(Error::Shape("mask and feature map differ in size".into()));
    }
    pool(features, &[(view, mask)])
}

/// Mean over the union of several `(view, mask)` pairs.
pub(crate) fn pool(features: &LanguageFeatureMap, parts: &[(usize, &Mask)]) -> Result<Vec<f64>> {
    let f = features.field();
    let mut acc = vec![0.0; f.channels()];
    let mut n = 0usize;
    for &(view, mask) in parts {
        for v in 0..f.height() {
            for u in 0..f.width() {
                if *mask.get(u, v) {
                    n += 1;
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += f.get(view, c, u, v);
                    }
                }
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptySupport("cannot pool over an empty mask".into()));
    }
    acc.iter_mut().for_each(|a| *a /= n as f64);
    Ok(acc)
}

fn cosine_argmax(x: &[f64], texts: &TextEmbeddingSet) -> Option<usize> {
    let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(nx > 0.0) {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, (_, e)) in texts.entries().iter().enumerate() {
        let ne = e.iter().map(|a| a * a).sum::<f64>().sqrt();
        let cos = x.iter().zip(e).map(|(a, b)| a * b).sum::<f64>() / (nx * ne);
        if best.is_none_or(|(_, b)| cos > b) {
            best = Some((i, cos));
        }
    }
    best.map(|b| b.0)
}

/// Index of the most cosine-similar text embedding for each pooled vector;
/// ties go to the lower index.
pub fn assign_categories(pooled: &[Vec<f64>], texts: &TextEmbeddingSet) -> Result<Vec<usize>> {
    pooled
        .iter()
        .enumerate()
        .map(|(i, x)| {
            if x.len() != texts.dim() {
                return Err(Error::Shape(format!("pooled vector {i} has dimension {} instead of {}", x.len(), texts.dim())));
            }
            cosine_argmax(x, texts).ok_or_else(|| Error::Domain(format!("pooled vector {i} has zero norm; similarity is undefined")))
        })
        .collect()
}

/// Per-pixel argmax category (`index + 1`) without pooling; 0 where the
/// feature vector is zero.
pub fn pixel_argmax(features: &LanguageFeatureMap, texts: &TextEmbeddingSet) -> Result<Vec<LabelMap>> {
    if features.dim() != texts.dim() {
        return Err(Error::Shape(format!("features have dimension {}, texts {}", features.dim(), texts.dim())));
    }
    let f = features.field();
    Ok((0..f.views())
        .map(|k| {
            LabelMap::from_fn(f.width(), f.height(), |u, v| {
                cosine_argmax(&f.pixel(k, u, v), texts).map_or(0, |i| i as u32 + 1)
            })
        })
        .collect())
}

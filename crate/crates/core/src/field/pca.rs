use nalgebra::{DMatrix, SymmetricEigen};

use super::FeatureField;
use crate::raster::Raster;

/// Mean and up to three principal axes (unit rows), largest variance first.
pub(crate) fn principal_axes(field: &FeatureField) -> (Vec<f64>, Vec<Vec<f64>>) {
    let [n, c, h, w] = field.shape();
    let px = h * w;
    let count = (n * px) as f64;
    let mut mean = vec![0.0; c];
    for view in 0..n {
        for (ch, m) in mean.iter_mut().enumerate() {
            let base = (view * c + ch) * px;
            *m += field.values()[base..base + px].iter().sum::<f64>();
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    let mut cov = DMatrix::<f64>::zeros(c, c);
    let mut x = vec![0.0; c];
    for view in 0..n {
        for p in 0..px {
            for (ch, xc) in x.iter_mut().enumerate() {
                *xc = field.values()[(view * c + ch) * px + p] - mean[ch];
            }
            for i in 0..c {
                for j in i..c {
                    cov[(i, j)] += x[i] * x[j];
                }
            }
        }
    }
    for i in 0..c {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov /= count;

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = order.first().map(|&i| eig.eigenvalues[i]).unwrap_or(0.0);
    let axes = order
        .into_iter()
        .take(3)
        .filter(|&i| top > 0.0 && eig.eigenvalues[i] > 1e-12 * top)
        .map(|i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // sign convention: the largest-magnitude entry is positive
            let lead = v.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    (mean, axes)
}

/// Projects every pixel of every view onto the top three principal axes of
/// the pooled features and min-max scales each channel to `[0, 1]` over all
/// views. Missing axes and constant channels come out as 0.5.
pub fn pca_visualize(field: &FeatureField) -> Vec<Raster<[f64; 3]>> {
    let [n, c, h, w] = field.shape();
    let (mean, axes) = principal_axes(field);
    let px = h * w;
    let mut proj = vec![[0.0f64; 3]; n * px];
    for view in 0..n {
        for p in 0..px {
            for (k, axis) in axes.iter().enumerate() {
                proj[view * px + p][k] = (0..c)
                    .map(|ch| (field.values()[(view * c + ch) * px + p] - mean[ch]) * axis[ch])
                    .sum();
            }
        }
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &proj {
        for k in 0..3 {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    (0..n)
        .map(|view| {
            let data = proj[view * px..(view + 1) * px]
                .iter()
                .map(|v| {
                    std::array::from_fn(|k| {
                        let range = hi[k] - lo[k];
                        if range > 1e-12 {
                            (v[k] - lo[k]) / range
                        } else {
                            0.5
                        }
                    })
                })
                .collect();
            Raster::from_vec(w, h, data).expect("sized from field")
        })
        .collect()
}

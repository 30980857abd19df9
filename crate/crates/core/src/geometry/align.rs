use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

/// `x ↦ scale · rotation · x + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.scale * (self.rotation * p.coords) + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    /// Sum of squared residuals `Σ‖T(src) − dst‖²`.
    pub fn residual(&self, src: &[Point3<f64>], dst: &[Point3<f64>]) -> f64 {
        src.iter()
            .zip(dst)
            .map(|(s, d)| (self.apply(s) - d).norm_squared())
            .sum()
    }
}

/// Relative eigenvalue floor below which the source scatter is treated as
/// rank-deficient.
const RANK_TOL: f64 = 1e-12;

/// Closed-form least-squares similarity mapping `src` onto `dst`
/// (Umeyama 1991).
pub fn umeyama_align(src: &[Point3<f64>], dst: &[Point3<f64>]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(Error::Shape(format!(
            "{} source points vs {} target points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::RankDeficient(format!(
            "need at least 3 correspondences, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mean_s = src.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mean_d = dst.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;

    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let sc = s.coords - mean_s;
        let dc = d.coords - mean_d;
        cov += dc * sc.transpose();
        scatter += sc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cov /= n;
    scatter /= n;
    var_s /= n;

    let mut eig = SymmetricEigen::new(scatter).eigenvalues.as_slice().to_vec();
    eig.sort_by(|a, b| b.total_cmp(a));
    if !(eig[0] > 0.0) || eig[1] <= RANK_TOL * eig[0] {
        return Err(Error::RankDeficient(
            "source points are coincident or collinear".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut sign = Vector3::new(1.0, 1.0, 1.0);
    if (u.determinant() * v_t.determinant()) < 0.0 {
        sign.z = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&sign) * v_t;
    let scale = svd.singular_values.dot(&sign) / var_s;
    let translation = mean_d - scale * (rotation * mean_s);
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

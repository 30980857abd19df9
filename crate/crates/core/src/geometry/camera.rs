use nalgebra::{Matrix3, Point3, Vector3};

use crate::error::{Error, Result};

/// Pinhole intrinsics plus a rigid world-to-camera pose.
///
/// Camera frame: `x` right, `y` down, `z` forward. A world point `p` maps to
/// camera coordinates `R·p + t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraParams {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

const ROTATION_TOL: f64 = 1e-6;

impl CameraParams {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        if ortho > ROTATION_TOL || (self.rotation.determinant() - 1.0).abs() > ROTATION_TOL {
            return Err(Error::InvalidInput(
                "camera rotation is not a proper rotation".into(),
            ));
        }
        if !self.translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("camera translation is not finite".into()));
        }
        Ok(())
    }

    /// Camera looking from `eye` toward `target`, with world `up` projected to
    /// image-up.
    pub fn look_at(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        eye: Point3<f64>,
        target: Point3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidInput("eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidInput("up vector parallel to view direction".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye.coords);
        Self::new(fx, fy, cx, cy, rotation, translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    /// Unit ray direction (world frame) through pixel `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        let dir_cam = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (self.rotation.transpose() * dir_cam).normalize()
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation * p.coords + self.translation
    }
}

/// Projects a world point to `(u, v, depth)`; depth is the camera-frame `z`.
pub fn project(point: &Point3<f64>, camera: &CameraParams) -> Result<(f64, f64, f64)> {
    if !point.coords.iter().all(|x| x.is_finite()) {
        return Err(Error::Domain("point is not finite".into()));
    }
    let pc = camera.world_to_camera(point);
    if pc.z <= 0.0 {
        return Err(Error::BehindCamera(pc.z));
    }
    Ok((
        camera.fx * pc.x / pc.z + camera.cx,
        camera.fy * pc.y / pc.z + camera.cy,
        pc.z,
    ))
}

/// Lifts pixel `(u, v)` at camera-frame depth `depth` back to the world.
pub fn unproject(u: f64, v: f64, depth: f64, camera: &CameraParams) -> Result<Point3<f64>> {
    if !(depth > 0.0) {
        return Err(Error::Domain(format!("depth must be positive, got {depth}")));
    }
    let pc = Vector3::new(
        (u - camera.cx) / camera.fx * depth,
        (v - camera.cy) / camera.fy * depth,
        depth,
    );
    Ok(Point3::from(camera.rotation.transpose() * (pc - camera.translation)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn hand_camera() -> CameraParams {
        CameraParams::new(100.0, 100.0, 50.0, 50.0, Matrix3::identity(), Vector3::zeros()).unwrap()
    }

    #[test]
    fn principal_point_on_axis() {
        let cam = hand_camera();
        let (u, v, d) = project(&Point3::new(0.0, 0.0, 2.0), &cam).unwrap();
        assert_eq!((u, v, d), (50.0, 50.0, 2.0));
    }

    #[test]
    fn hand_case_forward_and_back() {
        let cam = hand_camera();
        let (u, v, d) = project(&Point3::new(0.1, 0.0, 1.0), &cam).unwrap();
        assert_relative_eq!(u, 60.0, epsilon = 1e-12);
        assert_relative_eq!(v, 50.0, epsilon = 1e-12);
        assert_relative_eq!(d, 1.0, epsilon = 1e-12);
        let p = unproject(60.0, 50.0, 1.0, &cam).unwrap();
        assert_relative_eq!(p, Point3::new(0.1, 0.0, 1.0), epsilon = 1e-12);
    }

    #[test]
    fn behind_camera_and_bad_depth() {
        let cam = hand_camera();
        assert!(matches!(
            project(&Point3::new(0.0, 0.0, -1.0), &cam),
            Err(Error::BehindCamera(_))
        ));
        assert!(matches!(unproject(1.0, 1.0, 0.0, &cam), Err(Error::Domain(_))));
    }

    #[test]
    fn principal_ray_hits_center_plus_axis() {
        let cam = CameraParams::look_at(
            80.0,
            80.0,
            32.0,
            24.0,
            Point3::new(3.0, -2.0, 1.5),
            Point3::origin(),
            Vector3::z(),
        )
        .unwrap();
        let p = unproject(32.0, 24.0, 2.0, &cam).unwrap();
        let axis = (Point3::origin() - Point3::new(3.0, -2.0, 1.5)).normalize();
        assert_relative_eq!(p, cam.center() + axis * 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_improper_rotation() {
        let flip = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(CameraParams::new(1.0, 1.0, 0.0, 0.0, flip, Vector3::zeros()).is_err());
        assert!(CameraParams::new(0.0, 1.0, 0.0, 0.0, Matrix3::identity(), Vector3::zeros()).is_err());
    }

    proptest! {
        #[test]
        fn project_unproject_inverse(
            ax in -3.0f64..3.0, ay in -3.0f64..3.0, az in -3.0f64..3.0,
            tx in -1.0f64..1.0, ty in -1.0f64..1.0, tz in -1.0f64..1.0,
            u in 0.0f64..64.0, v in 0.0f64..48.0, d in 0.1f64..20.0,
        ) {
            let r = Rotation3::from_euler_angles(ax, ay, az).into_inner();
            let cam = CameraParams::new(70.0, 65.0, 32.0, 24.0, r, Vector3::new(tx, ty, tz)).unwrap();
            let p = unproject(u, v, d, &cam).unwrap();
            let (u2, v2, d2) = project(&p, &cam).unwrap();
            prop_assert!((u - u2).abs() < 1e-6 && (v - v2).abs() < 1e-6 && (d - d2).abs() < 1e-6);
            let p2 = unproject(u2, v2, d2, &cam).unwrap();
            prop_assert!((p - p2).norm() < 1e-6);
        }
    }
}

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrimitiveKind {
    Sphere,
    /// Axis-aligned cube.
    Box,
}

/// One scene object. `size` is the sphere radius or the cube half-edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub center: Point3<f64>,
    pub size: f64,
    pub category: u32,
}

impl Primitive {
    pub fn sphere(center: [f64; 3], radius: f64, category: u32) -> Self {
        Self {
            kind: PrimitiveKind::Sphere,
            center: Point3::from(center),
            size: radius,
            category,
        }
    }

    pub fn cube(center: [f64; 3], half_edge: f64, category: u32) -> Self {
        Self {
            kind: PrimitiveKind::Box,
            center: Point3::from(center),
            size: half_edge,
            category,
        }
    }

    /// Radius of the bounding sphere.
    pub fn radius(&self) -> f64 {
        match self.kind {
            PrimitiveKind::Sphere => self.size,
            PrimitiveKind::Box => self.size * 3f64.sqrt(),
        }
    }

    pub fn bottom(&self) -> f64 {
        self.center.z - self.size
    }

    /// Nearest ray parameter `t > eps` at which `o + t·d` enters the surface.
    pub fn intersect(&self, o: &Point3<f64>, d: &Vector3<f64>) -> Option<f64> {
        const EPS: f64 = 1e-9;
        match self.kind {
            PrimitiveKind::Sphere => {
                let oc = o - self.center;
                let b = oc.dot(d);
                let c = oc.norm_squared() - self.size * self.size;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [-b - s, -b + s].into_iter().find(|&t| t > EPS)
            }
            PrimitiveKind::Box => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                for a in 0..3 {
                    let lo = self.center[a] - self.size;
                    let hi = self.center[a] + self.size;
                    if d[a].abs() < 1e-15 {
                        if o[a] < lo || o[a] > hi {
                            return None;
                        }
                        continue;
                    }
                    let (mut ta, mut tb) = ((lo - o[a]) / d[a], (hi - o[a]) / d[a]);
                    if ta > tb {
                        std::mem::swap(&mut ta, &mut tb);
                    }
                    t0 = t0.max(ta);
                    t1 = t1.min(tb);
                }
                if t0 > t1 {
                    return None;
                }
                [t0, t1].into_iter().find(|&t| t > EPS)
            }
        }
    }

    /// Outward surface normal at a surface point.
    pub fn normal_at(&self, p: &Point3<f64>) -> Vector3<f64> {
        let r = p - self.center;
        match self.kind {
            PrimitiveKind::Sphere => r.normalize(),
            PrimitiveKind::Box => {
                let a = r.iamax();
                let mut n = Vector3::zeros();
                n[a] = r[a].signum();
                n
            }
        }
    }
}

/// Everything needed to render one synthetic multi-view scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub num_views: usize,
    pub height: usize,
    pub width: usize,
    pub objects: Vec<Primitive>,
    pub orbit_radius: f64,
    /// Camera elevation above the horizontal plane, radians.
    pub orbit_elevation: f64,
    /// Vertical field of view, radians.
    pub fov_y: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            num_views: 6,
            height: 48,
            width: 64,
            objects: Vec::new(),
            orbit_radius: 4.0,
            orbit_elevation: 0.9,
            fov_y: 50f64.to_radians(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_views < 1 {
            return Err(Error::InvalidInput("num_views must be at least 1".into()));
        }
        if self.height < 16 || self.width < 16 {
            return Err(Error::InvalidInput(format!(
                "image must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.orbit_radius > 0.0) {
            return Err(Error::InvalidInput("orbit radius must be positive".into()));
        }
        if !(self.fov_y > 0.0 && self.fov_y < std::f64::consts::PI) {
            return Err(Error::InvalidInput("field of view must lie in (0, π)".into()));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !(o.size > 0.0) {
                return Err(Error::InvalidInput(format!("object {i} has non-positive size")));
            }
            if o.category < 1 {
                return Err(Error::InvalidInput(format!("object {i} has category 0")));
            }
            if !o.center.coords.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidInput(format!("object {i} center is not finite")));
            }
        }
        Ok(())
    }

    /// Centroid the cameras look at (origin for an empty scene).
    pub fn centroid(&self) -> Point3<f64> {
        if self.objects.is_empty() {
            return Point3::origin();
        }
        let sum = self.objects.iter().fold(Vector3::zeros(), |a, o| a + o.center.coords);
        Point3::from(sum / self.objects.len() as f64)
    }

    /// Height of the ground plane: the lowest object bottom, or 0.
    pub fn ground_z(&self) -> f64 {
        self.objects
            .iter()
            .map(Primitive::bottom)
            .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.min(b))))
            .unwrap_or(0.0)
    }

    /// A seeded layout of `num_objects` non-overlapping spheres and cubes
    /// resting on the ground, categories cycling through
    /// `1..=num_categories`.
    pub fn random_layout(
        seed: u64,
        num_objects: usize,
        num_categories: u32,
        num_views: usize,
        (width, height): (usize, usize),
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce0_e5ce_0000_0001);
        let mut objects: Vec<Primitive> = Vec::with_capacity(num_objects);
        let spread = 0.6 + 0.35 * num_objects as f64;
        let mut attempts = 0;
        while objects.len() < num_objects {
            attempts += 1;
            let size = rng.random_range(0.3..0.5);
            let x = rng.random_range(-spread..spread);
            let y = rng.random_range(-spread..spread);
            let category = 1 + (objects.len() as u32 % num_categories.max(1));
            let cand = if rng.random_bool(0.5) {
                Primitive::sphere([x, y, size], size, category)
            } else {
                Primitive::cube([x, y, size * 0.8], size * 0.8, category)
            };
            let clear = objects
                .iter()
                .all(|o| (o.center - cand.center).norm() > o.radius() + cand.radius() + 0.15);
            if clear || attempts > 10_000 {
                objects.push(cand);
            }
        }
        Self {
            seed,
            num_views,
            height,
            width,
            objects,
            orbit_radius: 2.6 + spread * 1.6,
            ..Self::default()
        }
    }
}

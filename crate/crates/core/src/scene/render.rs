use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::spec::{Primitive, SceneSpec};
use crate::error::{Error, Result};
use crate::geometry::{unproject, CameraParams};
use crate::masks::MaskSet;
use crate::raster::{LabelMap, Raster};

/// One rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBundle {
    pub rgb: Raster<[f32; 3]>,
    /// Camera-frame depth in meters; 0 marks pixels whose ray hits nothing.
    pub depth: Raster<f32>,
    /// Instance IDs; 0 is background.
    pub instance_map: LabelMap,
    /// World-frame point per pixel; zero where depth is 0.
    pub point_map: Raster<[f32; 3]>,
    pub camera: CameraParams,
}

impl ViewBundle {
    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }
}

/// A multi-view scene whose instance IDs are shared across views.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneDataset {
    pub views: Vec<ViewBundle>,
    /// Instance ID → category ID.
    pub instance_registry: BTreeMap<u32, u32>,
}

impl SceneDataset {
    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    /// `(width, height)` shared by all views.
    pub fn image_size(&self) -> (usize, usize) {
        self.views
            .first()
            .map(|v| (v.width(), v.height()))
            .unwrap_or((0, 0))
    }

    pub fn instance_masks(&self) -> MaskSet {
        MaskSet::new(self.views.iter().map(|v| v.instance_map.clone()).collect())
    }

    /// Per-view category maps (0 where unlabeled).
    pub fn category_maps(&self) -> Vec<LabelMap> {
        self.views
            .iter()
            .map(|v| {
                v.instance_map
                    .map(|&id| if id == 0 { 0 } else { self.instance_registry.get(&id).copied().unwrap_or(0) })
            })
            .collect()
    }

    /// Checks shared raster sizes and registry coverage.
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size();
        for (k, v) in self.views.iter().enumerate() {
            if !(v.rgb.width() == w && v.rgb.height() == h)
                || !v.depth.same_size(&v.rgb)
                || !v.instance_map.same_size(&v.rgb)
                || !v.point_map.same_size(&v.rgb)
            {
                return Err(Error::Shape(format!("view {k} rasters disagree on size")));
            }
            for id in v.instance_map.labels() {
                if !self.instance_registry.contains_key(&id) {
                    return Err(Error::InvalidInput(format!(
                        "view {k} uses instance {id} missing from the registry"
                    )));
                }
            }
        }
        Ok(())
    }
}

struct Hit {
    t: f64,
    /// Index into the object list; `None` for the ground.
    object: Option<usize>,
    normal: Vector3<f64>,
}

/// Nearest hit along a ray; ties between objects go to the lower index, and
/// objects win ties against the ground.
fn trace(
    objects: &[Primitive],
    ground_z: f64,
    ground_center: &Point3<f64>,
    ground_radius: f64,
    o: &Point3<f64>,
    d: &Vector3<f64>,
) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, obj) in objects.iter().enumerate() {
        if let Some(t) = obj.intersect(o, d) {
            if best.as_ref().is_none_or(|b| t < b.t) {
                best = Some(Hit {
                    t,
                    object: Some(i),
                    normal: obj.normal_at(&(o + d * t)),
                });
            }
        }
    }
    if d.z < 0.0 && o.z > ground_z {
        let t = (ground_z - o.z) / d.z;
        let p = o + d * t;
        let within = (p.x - ground_center.x).hypot(p.y - ground_center.y) <= ground_radius;
        if within && best.as_ref().is_none_or(|b| t < b.t) {
            best = Some(Hit {
                t,
                object: None,
                normal: Vector3::z(),
            });
        }
    }
    best
}

/// Flat per-category albedo.
pub fn category_color(category: u32) -> [f64; 3] {
    const PALETTE: [[f64; 3]; 8] = [
        [0.85, 0.25, 0.20],
        [0.20, 0.55, 0.85],
        [0.30, 0.75, 0.30],
        [0.90, 0.75, 0.20],
        [0.60, 0.35, 0.75],
        [0.20, 0.75, 0.75],
        [0.90, 0.50, 0.60],
        [0.55, 0.45, 0.30],
    ];
    PALETTE[(category as usize + PALETTE.len() - 1) % PALETTE.len()]
}

const GROUND_ALBEDO: [f64; 3] = [0.5, 0.5, 0.5];

/// Cameras evenly spaced in azimuth on the orbit, all aimed at the scene
/// centroid. The seed only rotates the azimuth phase.
pub fn orbit_cameras(spec: &SceneSpec) -> Result<Vec<CameraParams>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let target = spec.centroid();
    let f = 0.5 * spec.height as f64 / (0.5 * spec.fov_y).tan();
    let cx = (spec.width as f64 - 1.0) / 2.0;
    let cy = (spec.height as f64 - 1.0) / 2.0;
    (0..spec.num_views)
        .map(|k| {
            let az = phase + std::f64::consts::TAU * k as f64 / spec.num_views as f64;
            let el = spec.orbit_elevation;
            let eye = target
                + Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin()) * spec.orbit_radius;
            CameraParams::look_at(f, f, cx, cy, eye, target, Vector3::z())
        })
        .collect()
}

/// Renders a deterministic multi-view dataset by analytic ray casting.
pub fn synth_scene(spec: &SceneSpec) -> Result<SceneDataset> {
    spec.validate()?;
    let cameras = orbit_cameras(spec)?;
    let ground_z = spec.ground_z();
    let ground_center = spec.centroid();
    let ground_radius = 2.0 * spec.orbit_radius;
    let light = Vector3::new(0.4, -0.3, 0.85).normalize();

    let views = cameras
        .into_par_iter()
        .enumerate()
        .map(|(k, camera)| {
            let (w, h) = (spec.width, spec.height);
            let eye = camera.center();
            let mut rgb = Raster::filled(w, h, [0f32; 3]);
            let mut depth = Raster::filled(w, h, 0f32);
            let mut inst = LabelMap::filled(w, h, 0);
            let mut points = Raster::filled(w, h, [0f32; 3]);
            let mut hits = 0usize;
            for v in 0..h {
                for u in 0..w {
                    let dir = camera.ray_direction(u as f64, v as f64);
                    let Some(hit) = trace(&spec.objects, ground_z, &ground_center, ground_radius, &eye, &dir) else {
                        continue;
                    };
                    hits += 1;
                    let world = eye + dir * hit.t;
                    let z = camera.world_to_camera(&world).z as f32;
                    let p = unproject(u as f64, v as f64, z as f64, &camera)?;
                    let albedo = match hit.object {
                        Some(i) => category_color(spec.objects[i].category),
                        None => GROUND_ALBEDO,
                    };
                    let shade = 0.25 + 0.75 * hit.normal.dot(&light).max(0.0);
                    rgb.set(u, v, albedo.map(|a| (a * shade) as f32));
                    depth.set(u, v, z);
                    inst.set(u, v, hit.object.map_or(0, |i| i as u32 + 1));
                    points.set(u, v, [p.x as f32, p.y as f32, p.z as f32]);
                }
            }
            if hits == 0 {
                return Err(Error::DegenerateScene(format!("view {k}: no ray hits any surface")));
            }
            Ok(ViewBundle {
                rgb,
                depth,
                instance_map: inst,
                point_map: points,
                camera,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let instance_registry = spec
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (i as u32 + 1, o.category))
        .collect();
    Ok(SceneDataset {
        views,
        instance_registry,
    })
}

/// Uniform random points on the surfaces of the scene objects, labeled by
/// instance ID, with optional isotropic position jitter.
pub fn sample_surface_points(
    spec: &SceneSpec,
    points_per_unit_area: f64,
    jitter: f64,
    seed: u64,
) -> Vec<(Point3<f64>, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, jitter.max(0.0)).unwrap();
    let mut out = Vec::new();
    for (i, o) in spec.objects.iter().enumerate() {
        let area = match o.kind {
            super::PrimitiveKind::Sphere => 4.0 * std::f64::consts::PI * o.size * o.size,
            super::PrimitiveKind::Box => 24.0 * o.size * o.size,
        };
        let n = (area * points_per_unit_area).ceil() as usize;
        for _ in 0..n {
            let p = match o.kind {
                super::PrimitiveKind::Sphere => {
                    let z: f64 = rng.random_range(-1.0..1.0);
                    let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let r = (1.0 - z * z).sqrt();
                    o.center + Vector3::new(r * phi.cos(), r * phi.sin(), z) * o.size
                }
                super::PrimitiveKind::Box => {
                    let face = rng.random_range(0..6usize);
                    let axis = face / 2;
                    let mut off = Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    off[axis] = if face % 2 == 0 { -1.0 } else { 1.0 };
                    o.center + off * o.size
                }
            };
            let p = if jitter > 0.0 {
                p + Vector3::new(rng.sample(normal), rng.sample(normal), rng.sample(normal))
            } else {
                p
            };
            out.push((p, i as u32 + 1));
        }
    }
    out
}

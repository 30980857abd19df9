//! Dataset directory layout.
//!
//! ```text
//! manifest.txt    one line per view: H W fx fy cx cy r00 r01 … r22 t0 t1 t2
//! registry.txt    one line per instance: id<TAB>category
//! depth_<k>.ntf   f32 [H, W]
//! points_<k>.ntf  f32 [H, W, 3]
//! rgb_<k>.ntf     f32 [H, W, 3]
//! inst_<k>.pgm    16-bit instance IDs
//! ```
//!
//! Floating-point camera values are written in shortest round-trip form, so
//! the round trip is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::render::{SceneDataset, ViewBundle};
use crate::error::{Error, Result};
use crate::format::{read_pgm16, write_pgm16, Tensor};
use crate::geometry::CameraParams;
use crate::raster::Raster;

pub const MANIFEST: &str = "manifest.txt";
pub const REGISTRY: &str = "registry.txt";

pub fn write_dataset(dataset: &SceneDataset, dir: &Path) -> Result<()> {
    dataset.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (k, view) in dataset.views.iter().enumerate() {
        let (w, h) = (view.width(), view.height());
        let c = &view.camera;
        let _ = write!(manifest, "{h} {w} {} {} {} {}", c.fx, c.fy, c.cx, c.cy);
        for r in 0..3 {
            for col in 0..3 {
                let _ = write!(manifest, " {}", c.rotation[(r, col)]);
            }
        }
        for i in 0..3 {
            let _ = write!(manifest, " {}", c.translation[i]);
        }
        manifest.push('\n');

        Tensor::f32(vec![h, w], view.depth.as_slice().to_vec())?
            .write(&dir.join(format!("depth_{k}.ntf")))?;
        Tensor::f32(vec![h, w, 3], view.point_map.as_slice().iter().flatten().copied().collect())?
            .write(&dir.join(format!("points_{k}.ntf")))?;
        Tensor::f32(vec![h, w, 3], view.rgb.as_slice().iter().flatten().copied().collect())?
            .write(&dir.join(format!("rgb_{k}.ntf")))?;
        write_pgm16(&dir.join(format!("inst_{k}.pgm")), &view.instance_map)?;
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;

    let mut registry = String::new();
    for (id, cat) in &dataset.instance_registry {
        let _ = writeln!(registry, "{id}\t{cat}");
    }
    let path = dir.join(REGISTRY);
    fs::write(&path, registry).map_err(|e| Error::io(&path, e))
}

fn parse_manifest_line(line: &str, lineno: usize, offset: usize) -> Result<(usize, usize, CameraParams)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 2 + 4 + 9 + 3 {
        return Err(Error::format(
            offset,
            format!("manifest line {lineno}: expected 18 fields, found {}", fields.len()),
        ));
    }
    let bad = |what: &str| Error::format(offset, format!("manifest line {lineno}: bad {what}"));
    let h: usize = fields[0].parse().map_err(|_| bad("height"))?;
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let nums: Vec<f64> = fields[2..]
        .iter()
        .map(|f| f.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("number"))?;
    let rotation = Matrix3::from_row_slice(&nums[4..13]);
    let translation = Vector3::from_row_slice(&nums[13..16]);
    let camera = CameraParams::new(nums[0], nums[1], nums[2], nums[3], rotation, translation)
        .map_err(|e| Error::format(offset, format!("manifest line {lineno}: {e}")))?;
    Ok((h, w, camera))
}

fn vec3_raster(t: Tensor, h: usize, w: usize) -> Result<Raster<[f32; 3]>> {
    t.expect_dims(&[h, w, 3])?;
    let flat = t.into_f32()?;
    Raster::from_vec(w, h, flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

pub fn read_dataset(dir: &Path) -> Result<SceneDataset> {
    let path = dir.join(MANIFEST);
    let manifest = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut views = Vec::new();
    let mut offset = 0;
    for (lineno, line) in manifest.lines().enumerate() {
        let line_offset = offset;
        offset += line.len() + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (h, w, camera) = parse_manifest_line(line, lineno + 1, line_offset)?;
        let k = views.len();
        let depth = Tensor::read(&dir.join(format!("depth_{k}.ntf")))?;
        depth.expect_dims(&[h, w])?;
        let depth = Raster::from_vec(w, h, depth.into_f32()?)?;
        let point_map = vec3_raster(Tensor::read(&dir.join(format!("points_{k}.ntf")))?, h, w)?;
        let rgb = vec3_raster(Tensor::read(&dir.join(format!("rgb_{k}.ntf")))?, h, w)?;
        let instance_map = read_pgm16(&dir.join(format!("inst_{k}.pgm")))?;
        if !instance_map.same_size(&depth) {
            return Err(Error::Shape(format!("inst_{k}.pgm does not match manifest size")));
        }
        views.push(ViewBundle {
            rgb,
            depth,
            instance_map,
            point_map,
            camera,
        });
    }

    let path = dir.join(REGISTRY);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut instance_registry = BTreeMap::new();
    let mut offset = 0;
    for (lineno, line) in text.lines().enumerate() {
        let at = offset;
        offset += line.len() + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = line
            .split_once('\t')
            .and_then(|(a, b)| Some((a.trim().parse::<u32>().ok()?, b.trim().parse::<u32>().ok()?)));
        let (id, cat) = parsed
            .ok_or_else(|| Error::format(at, format!("registry line {}: expected id<TAB>category", lineno + 1)))?;
        instance_registry.insert(id, cat);
    }
    let ds = SceneDataset {
        views,
        instance_registry,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synth_scene, SceneSpec};

    #[test]
    fn round_trip_is_exact() {
        let ds = synth_scene(&SceneSpec::random_layout(4, 3, 2, 3, (24, 16))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn truncated_tensor_is_format_error() {
        let ds = synth_scene(&SceneSpec::random_layout(4, 2, 2, 2, (16, 16))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let p = dir.path().join("depth_1.ntf");
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() / 2);
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Format { .. })));
    }

    #[test]
    fn malformed_manifest() {
        let ds = synth_scene(&SceneSpec::random_layout(4, 2, 2, 2, (16, 16))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        fs::write(dir.path().join(MANIFEST), "16 16 1 2 3\n").unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Format { offset: 0, .. })));
    }
}

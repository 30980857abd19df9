use std::collections::BTreeMap;

use nalgebra::Point3;

use super::oracle::ProposalOracle;
use super::CurationConfig;
use crate::error::{Error, Result};
use crate::geometry::{project, CameraParams};
use crate::masks::MaskSet;
use crate::raster::{LabelMap, Mask};

/// Default splat radius for [`project_annotation`], in pixels.
pub const SPLAT_RADIUS: f64 = 1.0;

/// Z-buffered splat of labeled world points with the default radius.
pub fn project_annotation(points: &[(Point3<f64>, u32)], camera: &CameraParams, width: usize, height: usize) -> LabelMap {
    project_annotation_with(points, camera, width, height, SPLAT_RADIUS)
}

/// Each point covers its nearest pixel and every pixel whose centre lies
/// strictly closer than `radius` to its projection; a pixel takes the label
/// of the nearest point covering it. Points behind the camera, off-image or
/// labeled 0 are skipped.
pub fn project_annotation_with(
    points: &[(Point3<f64>, u32)],
    camera: &CameraParams,
    width: usize,
    height: usize,
    radius: f64,
) -> LabelMap {
    let mut labels = LabelMap::filled(width, height, 0);
    let mut zbuf = vec![f64::INFINITY; width * height];
    let reach = radius.max(0.0).ceil() as i64 + 1;
    for (p, label) in points {
        if *label == 0 {
            continue;
        }
        let Ok((u, v, z)) = project(p, camera) else {
            continue;
        };
        if !(u.is_finite() && v.is_finite()) {
            continue;
        }
        let (ur, vr) = (u.round() as i64, v.round() as i64);
        for y in vr - reach..=vr + reach {
            for x in ur - reach..=ur + reach {
                if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
                    continue;
                }
                let d2 = (x as f64 - u).powi(2) + (y as f64 - v).powi(2);
                if !((x, y) == (ur, vr) || d2 < radius * radius - 1e-9) {
                    continue;
                }
                let i = y as usize * width + x as usize;
                if z < zbuf[i] {
                    zbuf[i] = z;
                    labels.as_mut_slice()[i] = *label;
                }
            }
        }
    }
    labels
}

/// ID for each proposal, or `None` when its best IoU against the coarse
/// masks is below `tau_match`.
///
/// Proposals do not compete for IDs, so the assignment maximizing total IoU
/// gives every proposal its own best-IoU ID (ties to the lower ID).
pub fn match_proposals(proposals: &[Mask], coarse: &LabelMap, tau_match: f64) -> Result<Vec<Option<u32>>> {
    let areas = label_areas(coarse);
    proposals
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if !p.same_size(coarse) {
                return Err(Error::Shape(format!("proposal {i} size differs from the coarse map")));
            }
            Ok(best_match(p, coarse, &areas).filter(|&(_, iou)| iou >= tau_match).map(|(id, _)| id))
        })
        .collect()
}

fn label_areas(map: &LabelMap) -> BTreeMap<u32, usize> {
    let mut areas = BTreeMap::new();
    for &l in map.as_slice().iter().filter(|&&l| l != 0) {
        *areas.entry(l).or_default() += 1;
    }
    areas
}

fn best_match(p: &Mask, coarse: &LabelMap, areas: &BTreeMap<u32, usize>) -> Option<(u32, f64)> {
    let mut inter: BTreeMap<u32, usize> = BTreeMap::new();
    let mut n = 0;
    for (&m, &l) in p.as_slice().iter().zip(coarse.as_slice()) {
        if m {
            n += 1;
            if l != 0 {
                *inter.entry(l).or_default() += 1;
            }
        }
    }
    let mut best: Option<(u32, f64)> = None;
    for (id, i) in inter {
        let iou = i as f64 / (n + areas[&id] - i) as f64;
        if best.is_none_or(|(_, b)| iou > b) {
            best = Some((id, iou));
        }
    }
    best
}

/// Output of [`refine_rgbd`].
#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutput {
    pub masks: MaskSet,
    /// The projected annotation of every view.
    pub coarse: MaskSet,
    /// Fraction of coarse-labeled pixels covered by the output, per view.
    pub coverage: Vec<f64>,
    /// Proposal rounds run per view.
    pub iterations: Vec<usize>,
}

/// Replaces projected coarse annotations with matched proposals.
///
/// Per view: project the labeled points, request proposals on the whole
/// image, give each proposal its best coarse ID and paint them (higher IoU
/// first, never overwriting). While coverage of the coarse pixels is below
/// the target and rounds remain, proposals are requested again on the
/// unpainted region. Output IDs are the annotation's IDs.
pub fn refine_rgbd(
    cameras: &[CameraParams],
    (width, height): (usize, usize),
    points: &[(Point3<f64>, u32)],
    proposal: &mut dyn ProposalOracle,
    config: &CurationConfig,
) -> Result<RefineOutput> {
    config.validate()?;
    let mut maps = Vec::with_capacity(cameras.len());
    let mut coarse_maps = Vec::with_capacity(cameras.len());
    let mut coverage = Vec::with_capacity(cameras.len());
    let mut iterations = Vec::with_capacity(cameras.len());
    for (view, cam) in cameras.iter().enumerate() {
        let coarse = project_annotation(points, cam, width, height);
        let areas = label_areas(&coarse);
        let target: usize = areas.values().sum();
        let mut out = LabelMap::filled(width, height, 0);
        let mut roi = Mask::filled(width, height, true);
        let mut rounds = 0;
        let mut covered = 0.0;
        while rounds < config.max_iters {
            rounds += 1;
            let props = proposal.propose(view, &roi)?;
            let ids = match_proposals(&props, &coarse, config.tau_match)?;
            let mut order: Vec<(usize, u32, f64)> = props
                .iter()
                .zip(&ids)
                .enumerate()
                .filter_map(|(i, (p, id))| id.map(|id| (i, id, best_match(p, &coarse, &areas).map_or(0.0, |b| b.1))))
                .collect();
            order.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.1.cmp(&b.1)).then(a.0.cmp(&b.0)));
            for (i, id, _) in order {
                for (o, &m) in out.as_mut_slice().iter_mut().zip(props[i].as_slice()) {
                    if m && *o == 0 {
                        *o = id;
                    }
                }
            }
            let hit = out
                .as_slice()
                .iter()
                .zip(coarse.as_slice())
                .filter(|(&o, &c)| o != 0 && c != 0)
                .count();
            covered = if target == 0 { 1.0 } else { hit as f64 / target as f64 };
            if covered >= config.coverage_target {
                break;
            }
            roi = out.map(|&l| l == 0);
        }
        maps.push(out);
        coarse_maps.push(coarse);
        coverage.push(covered);
        iterations.push(rounds);
    }
    Ok(RefineOutput {
        masks: MaskSet::new(maps),
        coarse: MaskSet::new(coarse_maps),
        coverage,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curation::oracle::{Boundary, GtProposals};
    use crate::curation::quality::{id_conflicts, mask_quality};
    use crate::scene::{sample_surface_points, synth_scene, Primitive, SceneSpec};

    fn camera() -> CameraParams {
        CameraParams::look_at(50.0, 50.0, 15.5, 11.5, Point3::new(0.0, 0.0, -5.0), Point3::origin(), nalgebra::Vector3::y()).unwrap()
    }

    #[test]
    fn single_point_marks_its_pixel() {
        let cam = camera();
        let p = crate::geometry::unproject(7.0, 4.0, 5.0, &cam).unwrap();
        let m = project_annotation(&[(p, 3)], &cam, 32, 24);
        assert_eq!(m.labels(), vec![3]);
        assert_eq!(*m.get(7, 4), 3);
        assert_eq!(m.mask_of(3).count(), 1);
        // halfway between two pixel centres both are within reach
        let q = crate::geometry::unproject(7.5, 4.0, 5.0, &cam).unwrap();
        assert_eq!(project_annotation(&[(q, 3)], &cam, 32, 24).mask_of(3).count(), 2);
    }

    #[test]
    fn nearer_point_wins_on_a_ray() {
        let cam = camera();
        let near = crate::geometry::unproject(10.0, 10.0, 3.0, &cam).unwrap();
        let far = crate::geometry::unproject(10.0, 10.0, 6.0, &cam).unwrap();
        for pts in [[(far, 2), (near, 1)], [(near, 1), (far, 2)]] {
            let m = project_annotation_with(&pts, &cam, 32, 24, 0.0);
            assert_eq!(*m.get(10, 10), 1);
        }
    }

    #[test]
    fn empty_and_behind_points() {
        let cam = camera();
        assert!(project_annotation(&[], &cam, 32, 24).labels().is_empty());
        let behind = Point3::new(0.0, 0.0, -10.0);
        assert!(project_annotation(&[(behind, 1)], &cam, 32, 24).labels().is_empty());
    }

    fn square(u0: usize, u1: usize) -> Mask {
        Mask::from_fn(10, 4, |u, _| (u0..u1).contains(&u))
    }

    #[test]
    fn identical_proposal_gets_its_id_and_weak_one_none() {
        let coarse = LabelMap::from_fn(10, 4, |u, _| if u < 5 { 4 } else { 0 });
        let ids = match_proposals(&[square(0, 5), square(4, 10)], &coarse, 0.3).unwrap();
        // second proposal overlaps 4 of 24+20-4 pixels: IoU 0.1
        assert_eq!(ids, vec![Some(4), None]);
    }

    /// Best total over every way of giving each proposal one ID or none.
    fn brute(iou: &[Vec<f64>], tau: f64) -> f64 {
        fn go(iou: &[Vec<f64>], tau: f64, i: usize) -> f64 {
            if i == iou.len() {
                return 0.0;
            }
            let rest = go(iou, tau, i + 1);
            iou[i].iter().filter(|&&x| x >= tau).fold(rest, |best, &x| best.max(x + rest))
        }
        go(iou, tau, 0)
    }

    proptest::proptest! {
        #[test]
        fn assignment_total_is_optimal(seed in 0u64..10_000, np in 1usize..=4, nid in 1usize..=4) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let coarse = LabelMap::from_fn(12, 6, |_, _| rng.random_range(0..=nid as u32));
            let props: Vec<Mask> = (0..np).map(|_| Mask::from_fn(12, 6, |_, _| rng.random_bool(0.4))).collect();
            let ids = match_proposals(&props, &coarse, 0.3).unwrap();
            let table: Vec<Vec<f64>> = props
                .iter()
                .map(|p| (1..=nid as u32).map(|id| p.iou(&coarse.mask_of(id))).collect())
                .collect();
            let got: f64 = ids.iter().enumerate().filter_map(|(i, id)| id.map(|id| table[i][id as usize - 1])).sum();
            proptest::prop_assert!((got - brute(&table, 0.3)).abs() < 1e-12);
        }
    }

    #[test]
    fn three_by_two_matches_enumeration() {
        // coarse: ID 1 on columns 0..4, ID 2 on columns 4..8
        let coarse = LabelMap::from_fn(10, 4, |u, _| match u {
            0..=3 => 1,
            4..=7 => 2,
            _ => 0,
        });
        let props = [square(0, 4), square(2, 6), square(5, 10)];
        let ids = match_proposals(&props, &coarse, 0.3).unwrap();
        let table: Vec<Vec<f64>> = props.iter().map(|p| vec![p.iou(&coarse.mask_of(1)), p.iou(&coarse.mask_of(2))]).collect();
        let got: f64 = ids.iter().enumerate().filter_map(|(i, id)| id.map(|id| table[i][id as usize - 1])).sum();
        assert!((got - brute(&table, 0.3)).abs() < 1e-12);
        assert_eq!(ids, vec![Some(1), Some(1), Some(2)]);
    }

    const SIZE: (usize, usize) = (256, 192);

    fn spec() -> SceneSpec {
        SceneSpec {
            num_views: 3,
            width: SIZE.0,
            height: SIZE.1,
            objects: vec![
                Primitive::sphere([-0.7, 0.0, 0.5], 0.5, 1),
                Primitive::cube([0.7, 0.2, 0.4], 0.4, 2),
            ],
            ..SceneSpec::default()
        }
    }

    /// Rendered views plus an annotation cloud of the given density and noise.
    fn scene(density: f64, jitter: f64) -> (crate::scene::SceneDataset, Vec<(Point3<f64>, u32)>) {
        let spec = spec();
        (synth_scene(&spec).unwrap(), sample_surface_points(&spec, density, jitter, 1))
    }

    #[test]
    fn dense_projection_is_a_fair_coarse_mask() {
        let (data, pts) = scene(2000.0, 0.0);
        let coarse = MaskSet::new(data.views.iter().map(|v| project_annotation(&pts, &v.camera, SIZE.0, SIZE.1)).collect());
        let q = mask_quality(&coarse, &data.instance_masks()).unwrap();
        for (&id, &iou) in &q.per_instance {
            assert!(iou >= 0.7, "instance {id}: {iou}");
        }
    }

    #[test]
    fn exact_proposals_recover_gt_and_are_a_fixed_point() {
        let (data, pts) = scene(200.0, 0.02);
        let cams: Vec<_> = data.views.iter().map(|v| v.camera.clone()).collect();
        let gt = data.instance_masks();
        let cfg = CurationConfig::default();
        let first = refine_rgbd(&cams, SIZE, &pts, &mut GtProposals::exact(gt.clone()), &cfg).unwrap();
        assert_eq!(first.masks, gt);
        let again = refine_rgbd(&cams, SIZE, &pts, &mut GtProposals::exact(first.masks.clone()), &cfg).unwrap();
        assert_eq!(again.masks, first.masks);
        assert_eq!(id_conflicts(&first.masks, &gt).unwrap(), 0);
    }

    #[test]
    fn eroded_proposals_beat_the_projection() {
        let (data, pts) = scene(200.0, 0.02);
        let cams: Vec<_> = data.views.iter().map(|v| v.camera.clone()).collect();
        let gt = data.instance_masks();
        let mut oracle = GtProposals::exact(gt.clone()).with_boundary(Boundary::Erode(2));
        let out = refine_rgbd(&cams, SIZE, &pts, &mut oracle, &CurationConfig::default()).unwrap();
        let refined = mask_quality(&out.masks, &gt).unwrap();
        let coarse = mask_quality(&out.coarse, &gt).unwrap();
        for id in gt.ids() {
            assert!(
                refined.per_instance[&id] > coarse.per_instance[&id],
                "instance {id}: refined {} coarse {}",
                refined.per_instance[&id],
                coarse.per_instance[&id]
            );
        }
    }

    #[test]
    fn stops_after_max_iters_when_coverage_is_unreachable() {
        let (data, pts) = scene(200.0, 0.02);
        let cams: Vec<_> = data.views.iter().map(|v| v.camera.clone()).collect();
        let mut oracle = GtProposals::exact(data.instance_masks()).with_boundary(Boundary::Erode(3));
        let cfg = CurationConfig {
            coverage_target: 1.0,
            max_iters: 3,
            ..CurationConfig::default()
        };
        let out = refine_rgbd(&cams, SIZE, &pts, &mut oracle, &cfg).unwrap();
        assert_eq!(out.iterations, vec![3; 3]);
        assert!(out.coverage.iter().all(|&c| c < 1.0));
    }
}

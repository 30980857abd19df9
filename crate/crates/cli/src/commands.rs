use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use instfield_core::cluster::{assign_masks, cluster_field, ClusterConfig};
use instfield_core::curation::{
    id_conflicts, mask_quality, propagate_video, refine_rgbd, Boundary, CurationConfig, GtProposals, GtTracker,
};
use instfield_core::field::{
    embed, pca_visualize, train, write_checkpoint, ContrastiveConfig, EmbedderMode, FeatureField, TrainConfig,
};
use instfield_core::format::encode_ppm;
use instfield_core::geometry::{abs_rel, inlier_ratio, umeyama_align, voxel_miou, voxelize};
use instfield_core::nalgebra::Point3;
use instfield_core::scene::{read_dataset, synth_scene, write_dataset, SceneDataset, SceneSpec};
use instfield_core::semantics::{
    instance_semantics, match_instances, mean, pixel_argmax, qa_ground, semantic_metrics, t_miou, t_sr, GtQaOracle,
    LanguageFeatureMap, TextEmbeddingSet,
};
use instfield_core::MaskSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::report::{write_file, Report};
use crate::CliError;

pub const FIELD: &str = "field.ntf";
pub const CHECKPOINT: &str = "params.ckpt";
pub const MASK_PREFIX: &str = "mask";

fn config_err(e: instfield_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn dataset(dir: &Path) -> Result<SceneDataset, CliError> {
    Ok(read_dataset(dir)?)
}

pub fn scene_spec(cfg: &RunConfig) -> Result<SceneSpec, CliError> {
    let spec = SceneSpec::random_layout(
        cfg.seed()?,
        cfg.get("scene.objects")?,
        cfg.get("scene.categories")?,
        cfg.get("scene.views")?,
        (cfg.get("scene.width")?, cfg.get("scene.height")?),
    );
    spec.validate().map_err(config_err)?;
    Ok(spec)
}

pub fn train_config(cfg: &RunConfig) -> Result<TrainConfig, CliError> {
    let mode = EmbedderMode::parse(cfg.str("train.mode")).map_err(config_err)?;
    let mut tc = TrainConfig::new(mode);
    tc.steps = cfg.get("train.steps")?;
    tc.lr = cfg.get("train.lr")?;
    tc.channels = cfg.get("train.channels")?;
    tc.hidden = cfg.get("train.hidden")?;
    tc.window = cfg.get("train.window")?;
    tc.contrastive = ContrastiveConfig {
        lambda_pull: cfg.get("train.lambda_pull")?,
        lambda_push: cfg.get("train.lambda_push")?,
        margin: cfg.get("train.margin")?,
        samples_per_view: cfg.get("train.samples_per_view")?,
        seed: cfg.seed()?,
    };
    tc.contrastive.validate().map_err(config_err)?;
    if tc.channels == 0 || !(tc.lr > 0.0) {
        return Err(CliError::Config("train.channels and train.lr must be positive".into()));
    }
    Ok(tc)
}

pub fn cluster_config(cfg: &RunConfig) -> Result<ClusterConfig, CliError> {
    let cc = ClusterConfig {
        min_cluster_size: cfg.get("cluster.min_cluster_size")?,
        min_samples: cfg.get("cluster.min_samples")?,
        max_points: cfg.get("cluster.max_points")?,
        assign_radius: cfg.get("cluster.assign_radius")?,
        seed: cfg.seed()?,
    };
    cc.validate().map_err(config_err)?;
    Ok(cc)
}

pub fn curation_config(cfg: &RunConfig) -> Result<CurationConfig, CliError> {
    let c = CurationConfig {
        theta_new: cfg.get("curate.theta_new")?,
        tau_match: cfg.get("curate.tau_match")?,
        coverage_target: cfg.get("curate.coverage_target")?,
        max_iters: cfg.get("curate.max_iters")?,
    };
    c.validate().map_err(config_err)?;
    Ok(c)
}

fn boundary(cfg: &RunConfig) -> Result<Boundary, CliError> {
    let r: usize = cfg.get("oracles.radius")?;
    Ok(match cfg.str("oracles.boundary") {
        "exact" => Boundary::Exact,
        "erode" => Boundary::Erode(r),
        "dilate" => Boundary::Dilate(r),
        "random" => Boundary::Random(r),
        other => {
            return Err(CliError::Config(format!(
                "oracles.boundary must be exact, erode, dilate or random, got `{other}`"
            )))
        }
    })
}

fn probability(cfg: &RunConfig, key: &str) -> Result<f64, CliError> {
    let p: f64 = cfg.get(key)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(CliError::Config(format!("{key} must lie in [0, 1], got {p}")));
    }
    Ok(p)
}

fn proposals(cfg: &RunConfig, gt: MaskSet) -> Result<GtProposals, CliError> {
    let mut p = GtProposals::exact(gt).with_boundary(boundary(cfg)?).with_seed(cfg.seed()?);
    p.split_prob = probability(cfg, "oracles.split_prob")?;
    p.drop_prob = probability(cfg, "oracles.drop_prob")?;
    Ok(p)
}

/// `object:from:to` triples separated by `;`.
fn parse_drops(text: &str) -> Result<Vec<(u32, usize, usize)>, CliError> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let bad = || CliError::Config(format!("oracles.drops entry `{s}` is not object:from:to"));
            let parts: Vec<&str> = s.split(':').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            Ok((
                parts[0].parse().map_err(|_| bad())?,
                parts[1].parse().map_err(|_| bad())?,
                parts[2].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

fn tracker(cfg: &RunConfig, gt: MaskSet) -> Result<GtTracker, CliError> {
    let mut t = GtTracker::lossless(gt);
    t.loss_rate = probability(cfg, "oracles.loss_rate")?;
    t.seed = cfg.seed()?;
    for (o, from, to) in parse_drops(cfg.str("oracles.drops"))? {
        t = t.drop_step(o, from, to);
    }
    Ok(t)
}

/// Checks every section so a bad value fails before any input is read.
pub fn validate(cfg: &RunConfig) -> Result<(), CliError> {
    scene_spec(cfg)?;
    train_config(cfg)?;
    cluster_config(cfg)?;
    curation_config(cfg)?;
    boundary(cfg)?;
    for key in ["oracles.split_prob", "oracles.drop_prob", "oracles.loss_rate", "curate.annotation_fraction"] {
        probability(cfg, key)?;
    }
    parse_drops(cfg.str("oracles.drops"))?;
    let jitter: f64 = cfg.get("curate.annotation_jitter")?;
    let sigma: f64 = cfg.get("eval.sigma")?;
    let threshold: f64 = cfg.get("eval.inlier_threshold")?;
    let voxel: f64 = cfg.get("eval.voxel_size")?;
    let dim: usize = cfg.get("eval.text_dim")?;
    if !(jitter >= 0.0) || !(sigma >= 0.0) {
        return Err(CliError::Config("curate.annotation_jitter and eval.sigma must be non-negative".into()));
    }
    if !(threshold > 1.0) || !(voxel > 0.0) || dim == 0 {
        return Err(CliError::Config(
            "eval.inlier_threshold must exceed 1, eval.voxel_size and eval.text_dim be positive".into(),
        ));
    }
    Ok(())
}

fn tracking_rows(report: &mut Report, pred: &MaskSet, gt: &MaskSet) -> Result<(), CliError> {
    let matching = match_instances(pred, gt)?;
    let per = t_miou(pred, gt, &matching)?;
    let (per_sr, sr) = t_sr(pred, gt, &matching)?;
    report.add("t_miou", mean(&per)).add("t_sr", sr);
    report.add("matched", matching.len() as f64);
    for (id, v) in &per {
        report.add(format!("t_miou_{id}"), *v);
    }
    for (id, v) in &per_sr {
        report.add(format!("t_sr_{id}"), *v);
    }
    Ok(())
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<Report, CliError> {
    let spec = scene_spec(cfg)?;
    let ds = synth_scene(&spec)?;
    write_dataset(&ds, out)?;
    let labeled: usize = ds.instance_masks().areas().iter().flat_map(|a| a.values()).sum();
    let (w, h) = ds.image_size();
    let mut r = Report::default();
    r.add("views", ds.num_views() as f64)
        .add("instances", ds.instance_registry.len() as f64)
        .add("labeled_fraction", labeled as f64 / (w * h * ds.num_views()) as f64);
    Ok(r)
}

pub fn train_cmd(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Report, CliError> {
    let tc = train_config(cfg)?;
    let ds = dataset(input)?;
    let rep = train(&ds, &tc)?;
    let field = embed(&rep.params, &ds)?;
    write_checkpoint(&out.join(CHECKPOINT), &rep.params)?;
    field.write(&out.join(FIELD))?;
    for (k, img) in pca_visualize(&field).iter().enumerate() {
        let bytes = encode_ppm(img.width(), img.height(), img.as_slice())?;
        write_file(&out.join(format!("pca_{k}.ppm")), &bytes)?;
    }
    let mut curve = String::from("step\tloss\n");
    for (i, l) in rep.losses.iter().enumerate() {
        let _ = writeln!(curve, "{i}\t{l:.6}");
    }
    write_file(&out.join("loss.tsv"), curve.as_bytes())?;
    let mut r = Report::default();
    r.add("steps", rep.losses.len() as f64)
        .add("initial_loss", rep.losses.first().copied().unwrap_or(0.0))
        .add("final_loss", rep.final_loss().unwrap_or(0.0));
    Ok(r)
}

pub fn cluster_cmd(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Report, CliError> {
    let cc = cluster_config(cfg)?;
    let field = FeatureField::read(&input.join(FIELD))?;
    let result = cluster_field(&field, &cc)?;
    let masks = assign_masks(&field, &result, &cc)?;
    masks.write_pgm(out, MASK_PREFIX)?;
    let noise = result.labels.iter().filter(|&&l| l < 0).count();
    let mut r = Report::default();
    r.add("clusters", result.num_clusters() as f64)
        .add("samples", result.labels.len() as f64)
        .add("noise_fraction", noise as f64 / result.labels.len().max(1) as f64);
    Ok(r)
}

pub fn track_eval(input: &Path, gt: &Path) -> Result<Report, CliError> {
    let pred = MaskSet::read_pgm(input, MASK_PREFIX)?;
    let gt = dataset(gt)?.instance_masks();
    let mut r = Report::default();
    tracking_rows(&mut r, &pred, &gt)?;
    Ok(r)
}

fn category_names(n: u32) -> Vec<String> {
    (1..=n).map(|c| format!("category_{c}")).collect()
}

pub fn ovseg_eval(cfg: &RunConfig, input: &Path, gt_dir: &Path, out: &Path) -> Result<Report, CliError> {
    let sigma: f64 = cfg.get("eval.sigma")?;
    let dim: usize = cfg.get("eval.text_dim")?;
    let masks = MaskSet::read_pgm(input, MASK_PREFIX)?;
    let ds = dataset(gt_dir)?;
    let num_cat = ds.instance_registry.values().copied().max().unwrap_or(0);
    let names = category_names(num_cat);
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let texts = TextEmbeddingSet::orthonormal(&name_refs, dim).map_err(config_err)?;
    let categories = ds.category_maps();
    let lang = LanguageFeatureMap::synthesize(&categories, &texts, sigma, cfg.seed()?)?;
    lang.write_dir(out)?;
    texts.write(&out.join("texts.tsv"))?;

    let sem = instance_semantics(&masks, &lang, &texts)?;
    MaskSet::new(sem.maps.clone()).write_pgm(out, "semantic")?;
    let classes: Vec<u32> = (1..=num_cat).collect();
    let pooled = semantic_metrics(&sem.maps, &categories, &classes)?;
    let pixel = semantic_metrics(&pixel_argmax(&lang, &texts)?, &categories, &classes)?;

    let gt = ds.instance_masks();
    let matching = match_instances(&masks, &gt)?;
    let correct = ds
        .instance_registry
        .iter()
        .filter(|(id, &cat)| {
            matching
                .get(id)
                .and_then(|p| sem.categories.get(p))
                .is_some_and(|&c| c as u32 + 1 == cat)
        })
        .count();

    let mut r = Report::default();
    r.add("miou", pooled.miou)
        .add("macc", pooled.macc)
        .add("pixel_miou", pixel.miou)
        .add("pixel_macc", pixel.macc)
        .add("category_accuracy", correct as f64 / ds.instance_registry.len().max(1) as f64);

    let question = cfg.str("eval.question");
    if !question.is_empty() {
        let owner: BTreeMap<u32, String> = ds
            .instance_registry
            .iter()
            .map(|(&id, &c)| (id, format!("category_{c}")))
            .collect();
        let mut oracle = GtQaOracle::new(gt, owner);
        let qa = qa_ground(&masks, &mut oracle, question)?;
        write_file(&out.join("qa_transcript.txt"), qa.transcript_text().as_bytes())?;
        qa.masks.write_pgm(out, "qa")?;
        r.add("qa_instances", qa.included.len() as f64);
    }
    Ok(r)
}

/// World points of every pixel with positive depth, labeled by category.
fn labeled_points(ds: &SceneDataset) -> Vec<(Point3<f64>, u32)> {
    let mut out = Vec::new();
    for view in &ds.views {
        for ((d, p), &id) in view
            .depth
            .as_slice()
            .iter()
            .zip(view.point_map.as_slice())
            .zip(view.instance_map.as_slice())
        {
            if *d > 0.0 {
                let cat = ds.instance_registry.get(&id).copied().unwrap_or(0);
                out.push((Point3::new(p[0] as f64, p[1] as f64, p[2] as f64), cat));
            }
        }
    }
    out
}

pub fn recon_eval(cfg: &RunConfig, input: &Path, gt_dir: &Path) -> Result<Report, CliError> {
    let threshold: f64 = cfg.get("eval.inlier_threshold")?;
    let voxel: f64 = cfg.get("eval.voxel_size")?;
    let pred = dataset(input)?;
    let gt = dataset(gt_dir)?;
    if pred.num_views() != gt.num_views() || pred.image_size() != gt.image_size() {
        return Err(CliError::Pipeline("prediction and ground truth differ in views or image size".into()));
    }
    let flat = |ds: &SceneDataset| -> Vec<f32> { ds.views.iter().flat_map(|v| v.depth.as_slice().to_vec()).collect() };
    let (pd, gd) = (flat(&pred), flat(&gt));
    let rel = abs_rel(&pd, &gd)?;
    let tau = inlier_ratio(&pd, &gd, threshold)?;

    let mut src = Vec::new();
    let mut dst = Vec::new();
    for (pv, gv) in pred.views.iter().zip(&gt.views) {
        for (((dp, pp), dg), pg) in pv
            .depth
            .as_slice()
            .iter()
            .zip(pv.point_map.as_slice())
            .zip(gv.depth.as_slice())
            .zip(gv.point_map.as_slice())
        {
            if *dp > 0.0 && *dg > 0.0 {
                src.push(Point3::new(pp[0] as f64, pp[1] as f64, pp[2] as f64));
                dst.push(Point3::new(pg[0] as f64, pg[1] as f64, pg[2] as f64));
            }
        }
    }
    let t = umeyama_align(&src, &dst)?;
    let n = src.len() as f64;
    let before = (instfield_core::geometry::SimilarityTransform::identity().residual(&src, &dst) / n).sqrt();
    let after = (t.residual(&src, &dst) / n).sqrt();

    let origin = Point3::origin();
    let pred_pts: Vec<(Point3<f64>, u32)> = labeled_points(&pred).into_iter().map(|(p, c)| (t.apply(&p), c)).collect();
    let pg = voxelize(&pred_pts, voxel, origin)?;
    let gg = voxelize(&labeled_points(&gt), voxel, origin)?;
    let classes: Vec<u32> = gt.instance_registry.values().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let vm = voxel_miou(&pg, &gg, &classes)?;

    let mut r = Report::default();
    r.add("abs_rel", rel)
        .add("tau", tau)
        .add("align_scale", t.scale)
        .add("rmse_unaligned", before)
        .add("rmse_aligned", after)
        .add("voxel_miou", vm.mean);
    Ok(r)
}

pub fn curate_video(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Report, CliError> {
    let cc = curation_config(cfg)?;
    let ds = dataset(input)?;
    let gt = ds.instance_masks();
    let mut props = proposals(cfg, gt.clone())?;
    let mut track = tracker(cfg, gt.clone())?;
    let res = propagate_video(ds.num_views(), ds.image_size(), &mut props, &mut track, &cc)?;
    res.masks.write_pgm(out, MASK_PREFIX)?;
    let mut log = String::new();
    for k in &res.keyframes {
        let _ = writeln!(log, "keyframe\t{k}");
    }
    for (t, id) in &res.restored {
        let _ = writeln!(log, "restored\t{t}\t{id}");
    }
    write_file(&out.join("events.tsv"), log.as_bytes())?;
    let mut r = Report::default();
    r.add("keyframes", res.keyframes.len() as f64)
        .add("restored", res.restored.len() as f64)
        .add("mask_quality", mask_quality(&res.masks, &gt)?.mean);
    tracking_rows(&mut r, &res.masks, &gt)?;
    Ok(r)
}

/// A seeded fraction of the dataset's labeled pixels lifted to world
/// points with isotropic jitter.
fn annotation(ds: &SceneDataset, fraction: f64, jitter: f64, seed: u64) -> Vec<(Point3<f64>, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for view in &ds.views {
        for (p, &id) in view.point_map.as_slice().iter().zip(view.instance_map.as_slice()) {
            if id == 0 || !rng.random_bool(fraction) {
                continue;
            }
            let mut q = Point3::new(p[0] as f64, p[1] as f64, p[2] as f64);
            for c in q.coords.iter_mut() {
                *c += jitter * (2.0 * rng.random::<f64>() - 1.0);
            }
            out.push((q, id));
        }
    }
    out
}

pub fn curate_rgbd(cfg: &RunConfig, input: &Path, out: &Path) -> Result<Report, CliError> {
    let cc = curation_config(cfg)?;
    let fraction = probability(cfg, "curate.annotation_fraction")?;
    let jitter: f64 = cfg.get("curate.annotation_jitter")?;
    let ds = dataset(input)?;
    let gt = ds.instance_masks();
    let points = annotation(&ds, fraction, jitter, cfg.seed()?);
    let cameras: Vec<_> = ds.views.iter().map(|v| v.camera.clone()).collect();
    let mut props = proposals(cfg, gt.clone())?;
    let res = refine_rgbd(&cameras, ds.image_size(), &points, &mut props, &cc)?;
    res.masks.write_pgm(out, MASK_PREFIX)?;
    res.coarse.write_pgm(out, "coarse")?;
    let mut r = Report::default();
    r.add("annotation_points", points.len() as f64)
        .add("coarse_iou", mask_quality(&res.coarse, &gt)?.mean)
        .add("refined_iou", mask_quality(&res.masks, &gt)?.mean)
        .add("id_conflicts", id_conflicts(&res.masks, &gt)? as f64)
        .add("mean_coverage", res.coverage.iter().sum::<f64>() / res.coverage.len().max(1) as f64)
        .add("iterations", res.iterations.iter().sum::<usize>() as f64);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_parse() {
        assert_eq!(parse_drops("2:2:3; 3:1:2").unwrap(), vec![(2, 2, 3), (3, 1, 2)]);
        assert!(parse_drops("").unwrap().is_empty());
        assert!(matches!(parse_drops("2:x:3"), Err(CliError::Config(_))));
    }

    #[test]
    fn bad_boundary_is_a_config_error() {
        let mut c = RunConfig::default();
        c.set("oracles.boundary", "blur").unwrap();
        assert!(matches!(boundary(&c), Err(CliError::Config(_))));
    }
}

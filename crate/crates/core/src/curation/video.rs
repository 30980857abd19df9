use std::collections::BTreeMap;

use super::oracle::{ProposalOracle, TrackerOracle};
use super::CurationConfig;
use crate::error::{Error, Result};
use crate::masks::MaskSet;
use crate::raster::{LabelMap, Mask};

/// Two tracks whose masks overlap above this IoU are the same object.
pub const SAME_OBJECT_IOU: f64 = 0.5;

/// Output of [`propagate_video`].
#[derive(Debug, Clone, PartialEq)]
pub struct VideoOutput {
    pub masks: MaskSet,
    /// Frames after the first where proposals were re-run.
    pub keyframes: Vec<usize>,
    /// `(frame, id)` pairs filled in by the backward pass.
    pub restored: Vec<(usize, u32)>,
}

/// Union-find over track IDs; the smallest ID of a class is its root.
#[derive(Debug, Default)]
struct Equivalence {
    parent: BTreeMap<u32, u32>,
}

impl Equivalence {
    fn find(&self, mut id: u32) -> u32 {
        while let Some(&p) = self.parent.get(&id) {
            if p == id {
                break;
            }
            id = p;
        }
        id
    }

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent.insert(hi, lo);
        }
    }
}

fn oracle_err(view: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Oracle { .. } => e,
        other => Error::Oracle {
            view,
            msg: other.to_string(),
        },
    }
}

fn paint(map: &mut LabelMap, mask: &Mask, id: u32) {
    for (o, &m) in map.as_mut_slice().iter_mut().zip(mask.as_slice()) {
        if m && *o == 0 {
            *o = id;
        }
    }
}

fn unsegmented(map: &LabelMap) -> usize {
    map.as_slice().iter().filter(|&&l| l == 0).count()
}

/// Carries every remembered track to frame `to`, calling the tracker once
/// per group of tracks last seen in the same frame.
fn carry_all(
    tracker: &mut dyn TrackerOracle,
    memory: &BTreeMap<u32, (usize, Mask)>,
    to: usize,
) -> Result<BTreeMap<u32, Mask>> {
    let mut groups: BTreeMap<usize, BTreeMap<u32, Mask>> = BTreeMap::new();
    for (&id, (frame, mask)) in memory {
        groups.entry(*frame).or_default().insert(id, mask.clone());
    }
    let mut out = BTreeMap::new();
    for (from, group) in groups {
        let carried = tracker.carry(&group, from, to).map_err(oracle_err(to))?;
        for (id, m) in carried {
            if group.contains_key(&id) && m.any() {
                out.insert(id, m);
            }
        }
    }
    Ok(out)
}

/// Propagates masks through `frames` frames of size `width × height`.
///
/// Frame 0 is segmented from dense proposals (IDs 1..k in proposal order).
/// Each later frame receives every known track from the tracker, starting
/// from the track's most recent mask, so a track lost for one frame can
/// return. When the unsegmented area has grown by more than `theta_new` of
/// the image since its lowest value after the last keyframe, the frame
/// becomes a keyframe and proposals on the unsegmented region mint new IDs.
/// Carried tracks overlapping above [`SAME_OBJECT_IOU`] are merged.
///
/// A backward pass then re-carries every track from its last frame toward
/// frame 0. Where the forward pass lacks a track that the backward pass
/// found, the backward mask either identifies the track with an overlapping
/// forward track or is painted into unlabeled pixels.
pub fn propagate_video(
    frames: usize,
    (width, height): (usize, usize),
    proposal: &mut dyn ProposalOracle,
    tracker: &mut dyn TrackerOracle,
    config: &CurationConfig,
) -> Result<VideoOutput> {
    config.validate()?;
    if frames == 0 {
        return Err(Error::InvalidInput("video needs at least one frame".into()));
    }
    let pixels = (width * height) as f64;
    let mut eq = Equivalence::default();
    let mut next_id = 1u32;
    let mut memory: BTreeMap<u32, (usize, Mask)> = BTreeMap::new();
    let mut forward: Vec<LabelMap> = Vec::with_capacity(frames);
    let mut keyframes = Vec::new();
    let mut baseline = 0usize;

    for t in 0..frames {
        let mut map = LabelMap::filled(width, height, 0);
        let mut current: BTreeMap<u32, Mask> = BTreeMap::new();
        if t > 0 {
            let carried = carry_all(tracker, &memory, t)?;
            let ids: Vec<u32> = carried.keys().copied().collect();
            for (i, &a) in ids.iter().enumerate() {
                for &b in &ids[i + 1..] {
                    if carried[&a].iou(&carried[&b]) > SAME_OBJECT_IOU {
                        eq.union(a, b);
                    }
                }
            }
            for (id, m) in carried {
                let root = eq.find(id);
                if root != id {
                    memory.remove(&id);
                }
                current.entry(root).or_insert(m);
            }
            for (&id, m) in &current {
                paint(&mut map, m, id);
            }
            let open = unsegmented(&map);
            baseline = baseline.min(open);
            if (open - baseline) as f64 / pixels <= config.theta_new {
                for (id, m) in current {
                    memory.insert(id, (t, m));
                }
                forward.push(map);
                continue;
            }
            keyframes.push(t);
        }
        let roi = map.map(|&l| l == 0);
        for p in proposal.propose(t, &roi).map_err(oracle_err(t))? {
            if p.any() {
                paint(&mut map, &p, next_id);
                current.insert(next_id, p);
                next_id += 1;
            }
        }
        baseline = unsegmented(&map);
        for (id, m) in current {
            memory.insert(id, (t, m));
        }
        forward.push(map);
    }

    // backward pass from each track's last forward frame
    let forward: Vec<LabelMap> = forward.iter().map(|m| m.map(|&l| if l == 0 { 0 } else { eq.find(l) })).collect();
    let mut last: BTreeMap<u32, usize> = BTreeMap::new();
    for (t, m) in forward.iter().enumerate() {
        for id in m.labels() {
            last.insert(id, t);
        }
    }
    let mut back_memory: BTreeMap<u32, (usize, Mask)> = BTreeMap::new();
    let mut backward: Vec<BTreeMap<u32, Mask>> = vec![BTreeMap::new(); frames];
    for t in (0..frames).rev() {
        let mut here = carry_all(tracker, &back_memory, t)?;
        for (&id, _) in last.iter().filter(|(_, &l)| l == t) {
            here.insert(id, forward[t].mask_of(id));
        }
        for (&id, m) in &here {
            back_memory.insert(id, (t, m.clone()));
        }
        backward[t] = here;
    }

    let mut out = forward.clone();
    let mut restored = Vec::new();
    for t in 0..frames {
        let present = forward[t].labels();
        for (&b, m) in &backward[t] {
            if present.binary_search(&b).is_ok() {
                continue;
            }
            let same = present
                .iter()
                .map(|&c| (c, forward[t].mask_of(c).iou(m)))
                .filter(|&(_, iou)| iou > SAME_OBJECT_IOU)
                .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
            match same {
                Some((c, _)) => eq.union(b, c),
                None => {
                    paint(&mut out[t], m, b);
                    restored.push((t, b));
                }
            }
        }
    }
    let restored = restored.into_iter().map(|(t, id)| (t, eq.find(id))).collect();
    let masks = MaskSet::new(out).relabeled(|l| eq.find(l));
    Ok(VideoOutput {
        masks,
        keyframes,
        restored,
    })
}

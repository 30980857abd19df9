use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::masks::MaskSet;
use crate::raster::{LabelMap, Mask};

/// Yes/no verifier for one highlighted mask.
pub trait QaOracle {
    fn ask(&mut self, view: usize, mask: &Mask, question: &str) -> Result<bool>;
}

/// Answers from ground truth: "yes" iff the ground-truth instance holding
/// most of the mask has the category named by the question. Listed
/// `(view, gt instance)` pairs get the opposite answer.
#[derive(Debug, Clone)]
pub struct GtQaOracle {
    instances: MaskSet,
    /// Instance ID → category name.
    names: BTreeMap<u32, String>,
    pub flips: BTreeSet<(usize, u32)>,
}

impl GtQaOracle {
    pub fn new(instances: MaskSet, names: BTreeMap<u32, String>) -> Self {
        Self {
            instances,
            names,
            flips: BTreeSet::new(),
        }
    }

    pub fn flip(mut self, view: usize, instance: u32) -> Self {
        self.flips.insert((view, instance));
        self
    }
}

impl QaOracle for GtQaOracle {
    fn ask(&mut self, view: usize, mask: &Mask, question: &str) -> Result<bool> {
        if view >= self.instances.num_views() || !mask.same_size(self.instances.view(view)) {
            return Err(Error::Oracle {
                view,
                msg: "mask does not fit the view".into(),
            });
        }
        let mut votes: BTreeMap<u32, usize> = BTreeMap::new();
        for (&m, &l) in mask.as_slice().iter().zip(self.instances.view(view).as_slice()) {
            if m && l != 0 {
                *votes.entry(l).or_default() += 1;
            }
        }
        let Some((owner, _)) = votes.into_iter().rev().max_by_key(|&(_, c)| c) else {
            return Ok(false);
        };
        let yes = self.names.get(&owner).is_some_and(|n| n == question);
        Ok(yes != self.flips.contains(&(view, owner)))
    }
}

/// Output of [`qa_ground`].
#[derive(Debug, Clone, PartialEq)]
pub struct QaOutput {
    /// Union of the included instances' masks, keeping their IDs.
    pub masks: MaskSet,
    pub included: Vec<u32>,
    /// `(view, instance, answer)` in the order asked.
    pub transcript: Vec<(usize, u32, bool)>,
}

impl QaOutput {
    /// One `view,instance,answer` line per question.
    pub fn transcript_text(&self) -> String {
        let mut s = String::new();
        for (view, id, yes) in &self.transcript {
            let _ = writeln!(s, "{view},{id},{}", if *yes { "yes" } else { "no" });
        }
        s
    }
}

/// Asks the oracle about every instance in every view where it is visible
/// and keeps the instances with a strict majority of "yes".
pub fn qa_ground(masks: &MaskSet, oracle: &mut dyn QaOracle, question: &str) -> Result<QaOutput> {
    let mut included = Vec::new();
    let mut transcript = Vec::new();
    for id in masks.ids() {
        let (mut yes, mut asked) = (0, 0);
        for view in 0..masks.num_views() {
            if !masks.ids_in(view).contains(&id) {
                continue;
            }
            let answer = oracle.ask(view, &masks.mask(view, id), question).map_err(|e| Error::Oracle {
                view,
                msg: format!("instance {id}: {e}"),
            })?;
            asked += 1;
            yes += usize::from(answer);
            transcript.push((view, id, answer));
        }
        if 2 * yes > asked {
            included.push(id);
        }
    }
    let keep: BTreeSet<u32> = included.iter().copied().collect();
    let maps: Vec<LabelMap> = masks
        .maps()
        .iter()
        .map(|m| m.map(|l| if keep.contains(l) { *l } else { 0 }))
        .collect();
    Ok(QaOutput {
        masks: MaskSet::new(maps),
        included,
        transcript,
    })
}

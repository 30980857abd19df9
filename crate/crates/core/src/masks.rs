use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::format::{read_pgm16, write_pgm16};
use crate::raster::{LabelMap, Mask};

/// Per-view label maps sharing one global instance-ID space
/// (0 = unassigned).
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    maps: Vec<LabelMap>,
    id_index: Vec<BTreeSet<u32>>,
}

impl MaskSet {
    pub fn new(maps: Vec<LabelMap>) -> Self {
        let id_index = maps.iter().map(|m| m.labels().into_iter().collect()).collect();
        Self { maps, id_index }
    }

    pub fn empty_like(width: usize, height: usize, views: usize) -> Self {
        Self::new(vec![LabelMap::filled(width, height, 0); views])
    }

    pub fn num_views(&self) -> usize {
        self.maps.len()
    }

    pub fn view(&self, k: usize) -> &LabelMap {
        &self.maps[k]
    }

    pub fn maps(&self) -> &[LabelMap] {
        &self.maps
    }

    pub fn into_maps(self) -> Vec<LabelMap> {
        self.maps
    }

    /// IDs present in view `k`.
    pub fn ids_in(&self, k: usize) -> &BTreeSet<u32> {
        &self.id_index[k]
    }

    /// All IDs present in any view, ascending.
    pub fn ids(&self) -> BTreeSet<u32> {
        self.id_index.iter().flatten().copied().collect()
    }

    pub fn mask(&self, view: usize, id: u32) -> Mask {
        self.maps[view].mask_of(id)
    }

    /// Pixel count per `(view, id)`.
    pub fn areas(&self) -> Vec<BTreeMap<u32, usize>> {
        self.maps
            .iter()
            .map(|m| {
                let mut a = BTreeMap::new();
                for &l in m.as_slice().iter().filter(|&&l| l != 0) {
                    *a.entry(l).or_insert(0) += 1;
                }
                a
            })
            .collect()
    }

    /// Relabels every ID through `f`; IDs mapped to 0 are erased.
    pub fn relabeled(&self, mut f: impl FnMut(u32) -> u32) -> MaskSet {
        MaskSet::new(
            self.maps
                .iter()
                .map(|m| m.map(|&l| if l == 0 { 0 } else { f(l) }))
                .collect(),
        )
    }

    pub fn check_compatible(&self, other: &MaskSet) -> Result<()> {
        if self.maps.len() != other.maps.len() {
            return Err(Error::Shape(format!(
                "{} views vs {} views",
                self.maps.len(),
                other.maps.len()
            )));
        }
        for (k, (a, b)) in self.maps.iter().zip(&other.maps).enumerate() {
            if !a.same_size(b) {
                return Err(Error::Shape(format!(
                    "view {k}: {}x{} vs {}x{}",
                    a.width(),
                    a.height(),
                    b.width(),
                    b.height()
                )));
            }
        }
        Ok(())
    }

    /// Writes `<prefix>_<k>.pgm` for every view.
    pub fn write_pgm(&self, dir: &Path, prefix: &str) -> Result<()> {
        for (k, m) in self.maps.iter().enumerate() {
            write_pgm16(&dir.join(format!("{prefix}_{k}.pgm")), m)?;
        }
        Ok(())
    }

    /// Reads consecutive `<prefix>_<k>.pgm` files starting at 0.
    pub fn read_pgm(dir: &Path, prefix: &str) -> Result<Self> {
        let mut maps = Vec::new();
        loop {
            let p = dir.join(format!("{prefix}_{}.pgm", maps.len()));
            if !p.exists() {
                break;
            }
            maps.push(read_pgm16(&p)?);
        }
        if maps.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no {prefix}_0.pgm in {}",
                dir.display()
            )));
        }
        Ok(Self::new(maps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_tracks_labels() {
        let a = LabelMap::from_vec(2, 2, vec![0, 3, 3, 1]).unwrap();
        let b = LabelMap::from_vec(2, 2, vec![0, 0, 0, 1]).unwrap();
        let s = MaskSet::new(vec![a, b]);
        assert_eq!(s.ids_in(0).iter().copied().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(s.ids_in(1).iter().copied().collect::<Vec<_>>(), vec![1]);
        let r = s.relabeled(|l| if l == 3 { 0 } else { 9 });
        assert_eq!(r.ids().into_iter().collect::<Vec<_>>(), vec![9]);
        assert_eq!(s.areas()[0][&3], 2);
    }
}

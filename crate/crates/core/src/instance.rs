use serde::{Deserialize, Serialize};

use crate::catalog::ClassCatalog;
use crate::error::{Error, Result};
use crate::raster::{Mask, PixelBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    GroundTruth,
    Predicted,
}

/// One object: mask, class, confidence and the tight box of the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    id: u32,
    class_id: u16,
    score: f64,
    mask: Mask,
    bbox: PixelBox,
}

impl InstanceRecord {
    pub fn new(id: u32, class_id: u16, score: f64, mask: Mask) -> Result<Self> {
        if id == 0 {
            return Err(Error::InvalidValue("instance ids are positive".into()));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidValue(format!("instance score {score} outside [0,1]")));
        }
        let bbox = mask
            .bounding_box()
            .ok_or_else(|| Error::InvalidValue(format!("instance {id} has an empty mask")))?;
        Ok(Self {
            id,
            class_id,
            score,
            mask,
            bbox,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn class_id(&self) -> u16 {
        self.class_id
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn bbox(&self) -> PixelBox {
        self.bbox
    }

    pub fn area(&self) -> usize {
        self.mask.count()
    }

    pub fn with_id(mut self, id: u32) -> Self {
        assert!(id > 0);
        self.id = id;
        self
    }

    pub fn with_score(mut self, score: f64) -> Self {
        assert!((0.0..=1.0).contains(&score));
        self.score = score;
        self
    }

    /// Same record restricted to `mask`; `None` if nothing is left.
    pub fn restricted(&self, keep: &Mask) -> Option<Self> {
        let mask = Mask::from_fn(self.mask.height(), self.mask.width(), |i| {
            self.mask.get(i) && keep.get(i)
        });
        InstanceRecord::new(self.id, self.class_id, self.score, mask).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    records: Vec<InstanceRecord>,
    provenance: Provenance,
}

impl InstanceSet {
    pub fn new(records: Vec<InstanceRecord>, provenance: Provenance) -> Result<Self> {
        let set = Self {
            records,
            provenance,
        };
        set.check_structure()?;
        Ok(set)
    }

    pub fn empty(provenance: Provenance) -> Self {
        Self {
            records: Vec::new(),
            provenance,
        }
    }

    pub fn records(&self) -> &[InstanceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<InstanceRecord> {
        self.records
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&InstanceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Pixelwise OR of all masks.
    pub fn union_mask(&self, height: usize, width: usize) -> Mask {
        let mut m = Mask::zeros(height, width);
        for r in &self.records {
            m.or_assign(&r.mask);
        }
        m
    }

    fn check_structure(&self) -> Result<()> {
        let mut ids: Vec<u32> = self.records.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invariant("duplicate instance ids".into()));
        }
        if let Some(first) = self.records.first() {
            let dims = first.mask.dims();
            if self.records.iter().any(|r| r.mask.dims() != dims) {
                return Err(Error::Shape("instance masks differ in size".into()));
            }
        }
        if self.provenance == Provenance::GroundTruth {
            if let Some(r) = self.records.iter().find(|r| r.score != 1.0) {
                return Err(Error::Invariant(format!(
                    "ground-truth instance {} has score {}",
                    r.id, r.score
                )));
            }
            self.check_disjoint()?;
        }
        Ok(())
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let Some(first) = self.records.first() else {
            return Ok(());
        };
        let mut owner = vec![0u32; first.mask.bits().len()];
        for r in &self.records {
            for i in r.mask.ones() {
                if owner[i] != 0 {
                    return Err(Error::Invariant(format!(
                        "instances {} and {} overlap",
                        owner[i], r.id
                    )));
                }
                owner[i] = r.id;
            }
        }
        Ok(())
    }

    /// Classes must be thing classes of `catalog`.
    pub fn validate(&self, catalog: &ClassCatalog) -> Result<()> {
        for r in &self.records {
            if !catalog.contains(r.class_id) {
                return Err(Error::InvalidValue(format!(
                    "instance {} has unknown class {}",
                    r.id, r.class_id
                )));
            }
            if !catalog.is_thing(r.class_id) {
                return Err(Error::Invariant(format!(
                    "instance {} has stuff class {}",
                    r.id, r.class_id
                )));
            }
        }
        Ok(())
    }
}

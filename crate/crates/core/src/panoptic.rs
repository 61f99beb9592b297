use crate::catalog::ClassCatalog;
use crate::error::{Error, Result};
use crate::instance::InstanceSet;
use crate::raster::{check_dims, LabelMap2D, IGNORE};

/// Semantic map plus disjoint instance masks that agree with it.
#[derive(Debug, Clone, PartialEq)]
pub struct PanopticLabel {
    semantic: LabelMap2D,
    instances: InstanceSet,
}

/// One panoptic segment: a stuff region or a single instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentKey {
    pub class_id: u16,
    /// `None` for stuff.
    pub instance_id: Option<u32>,
}

impl PanopticLabel {
    pub fn new(semantic: LabelMap2D, instances: InstanceSet, catalog: &ClassCatalog) -> Result<Self> {
        let label = Self { semantic, instances };
        label.check(catalog)?;
        Ok(label)
    }

    pub fn semantic(&self) -> &LabelMap2D {
        &self.semantic
    }

    pub fn instances(&self) -> &InstanceSet {
        &self.instances
    }

    pub fn dims(&self) -> (usize, usize) {
        self.semantic.dims()
    }

    pub fn into_parts(self) -> (LabelMap2D, InstanceSet) {
        (self.semantic, self.instances)
    }

    /// Full consistency check against `catalog`.
    pub fn check(&self, catalog: &ClassCatalog) -> Result<()> {
        let (h, w) = self.semantic.dims();
        self.semantic.validate(catalog.len())?;
        self.instances.validate(catalog)?;
        self.instances.check_disjoint()?;
        let mut owned = vec![false; h * w];
        for r in self.instances.records() {
            check_dims("instance mask vs semantic map", r.mask().dims(), (h, w))?;
            for i in r.mask().ones() {
                if self.semantic.get(i) != r.class_id() {
                    return Err(Error::Invariant(format!(
                        "pixel {i} of instance {} (class {}) has semantic value {}",
                        r.id(),
                        r.class_id(),
                        self.semantic.get(i)
                    )));
                }
                owned[i] = true;
            }
        }
        for (i, &v) in self.semantic.values().iter().enumerate() {
            if v != IGNORE && catalog.is_thing(v) && !owned[i] {
                return Err(Error::Invariant(format!(
                    "thing pixel {i} (class {v}) belongs to no instance"
                )));
            }
        }
        Ok(())
    }

    /// Per-pixel segment index into the returned key list; `None` marks IGNORE.
    /// Stuff segments come first in ascending class order, then instances in
    /// record order.
    pub fn segment_map(&self) -> (Vec<SegmentKey>, Vec<Option<usize>>) {
        let n = self.semantic.len();
        let mut keys = Vec::new();
        let mut map = vec![None; n];
        let mut stuff_index = std::collections::BTreeMap::new();
        let mut owned = vec![false; n];
        for r in self.instances.records() {
            for i in r.mask().ones() {
                owned[i] = true;
            }
        }
        for (i, &v) in self.semantic.values().iter().enumerate() {
            if v != IGNORE && !owned[i] {
                stuff_index.entry(v).or_insert(());
            }
        }
        let stuff_index: std::collections::BTreeMap<u16, usize> = stuff_index
            .into_keys()
            .enumerate()
            .map(|(k, c)| {
                keys.push(SegmentKey {
                    class_id: c,
                    instance_id: None,
                });
                (c, k)
            })
            .collect();
        for (i, &v) in self.semantic.values().iter().enumerate() {
            if v != IGNORE && !owned[i] {
                map[i] = Some(stuff_index[&v]);
            }
        }
        for r in self.instances.records() {
            let k = keys.len();
            keys.push(SegmentKey {
                class_id: r.class_id(),
                instance_id: Some(r.id()),
            });
            for i in r.mask().ones() {
                map[i] = Some(k);
            }
        }
        (keys, map)
    }
}

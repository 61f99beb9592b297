//! Merging a semantic prediction with scored instances into one panoptic label.

use serde::{Deserialize, Serialize};

use crate::catalog::ClassCatalog;
use crate::error::{Error, Result};
use crate::instance::{InstanceRecord, InstanceSet};
use crate::panoptic::PanopticLabel;
use crate::pseudo::argmax_f32;
use crate::raster::{check_dims, LabelMap2D, Mask, IGNORE};
use crate::volume::ProbVolume;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    score_floor: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { score_floor: 0.5 }
    }
}

impl FusionConfig {
    pub fn new(score_floor: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&score_floor) {
            return Err(Error::InvalidValue(format!("score floor {score_floor} outside [0,1]")));
        }
        Ok(Self { score_floor })
    }

    pub fn score_floor(&self) -> f64 {
        self.score_floor
    }
}

#[derive(Debug, Clone, Copy)]
pub enum SemanticInput<'a> {
    Probs(&'a ProbVolume),
    Labels(&'a LabelMap2D),
}

impl SemanticInput<'_> {
    fn labels(&self) -> LabelMap2D {
        match self {
            SemanticInput::Labels(l) => (*l).clone(),
            SemanticInput::Probs(p) => {
                let v = p.pixels().map(|px| argmax_f32(px).0 as u16).collect();
                LabelMap2D::new(p.height(), p.width(), v).expect("dims from volume")
            }
        }
    }
}

/// Instances at or above the score floor claim pixels in descending score
/// order (ties by ascending id); later instances keep only unclaimed pixels
/// and vanish when nothing is left. Remaining pixels take the semantic class,
/// except thing classes, which become IGNORE. Instance ids and scores are
/// preserved, as is the input record order.
pub fn merge(sem: SemanticInput<'_>, inst: &InstanceSet, cfg: &FusionConfig, catalog: &ClassCatalog) -> Result<PanopticLabel> {
    let base = sem.labels();
    let (h, w) = base.dims();
    base.validate(catalog.len())?;
    inst.validate(catalog)?;
    let mut order: Vec<(usize, &InstanceRecord)> = inst
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.score() >= cfg.score_floor)
        .collect();
    for (_, r) in &order {
        check_dims("fusion instance", r.mask().dims(), (h, w))?;
    }
    order.sort_by(|(_, a), (_, b)| b.score().total_cmp(&a.score()).then(a.id().cmp(&b.id())));

    let mut claimed = Mask::zeros(h, w);
    let mut kept = Vec::new();
    for (k, r) in order {
        let free = r.mask().and_not(&claimed);
        if let Some(rec) = r.restricted(&free) {
            claimed.or_assign(rec.mask());
            kept.push((k, rec));
        }
    }
    // output keeps the input record order
    kept.sort_by_key(|(k, _)| *k);
    let kept: Vec<InstanceRecord> = kept.into_iter().map(|(_, r)| r).collect();
    let mut semantic = base;
    for v in semantic.values_mut() {
        if *v != IGNORE && catalog.is_thing(*v) {
            *v = IGNORE;
        }
    }
    for r in &kept {
        let vals = semantic.values_mut();
        for p in r.mask().ones() {
            vals[p] = r.class_id();
        }
    }
    PanopticLabel::new(semantic, InstanceSet::new(kept, inst.provenance())?, catalog)
}

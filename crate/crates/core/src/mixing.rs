//! Cross-domain mixed sampling.
//!
//! * ClassMix mask selection and DACS composition: half of the source classes
//!   are pasted over a target image whose remaining pixels carry teacher
//!   pseudo-labels.
//! * IMix: confidence-filtered target instances are pasted over a source
//!   image so every visible object keeps an instance label. The reverse
//!   direction exists only for ablations and does not keep that guarantee.

use crate::catalog::ClassCatalog;
use crate::error::{Error, Result};
use crate::instance::{InstanceRecord, InstanceSet, Provenance};
use crate::panoptic::PanopticLabel;
use crate::raster::{check_dims, ImageRGB, LabelMap2D, Mask, IGNORE};
use crate::rng::SeededRng;

pub const DEFAULT_OCCLUSION_EPS: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Semantic,
    Instance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixMask {
    pub mask: Mask,
    pub kind: MaskKind,
}

impl MixMask {
    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixDirection {
    TargetToSource,
    SourceToTarget,
}

impl std::str::FromStr for MixDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "t2s" | "target_to_source" => Ok(Self::TargetToSource),
            "s2t" | "source_to_target" => Ok(Self::SourceToTarget),
            other => Err(Error::InvalidValue(format!("unknown mixing direction '{other}'"))),
        }
    }
}

/// A mixed training image with its supervision.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedSample {
    pub image: ImageRGB,
    pub semantic: LabelMap2D,
    pub origin: Vec<Origin>,
    pub instance_supervision: InstanceSet,
    /// 1 on source pixels, the pseudo-label confidence on target pixels.
    pub pixel_confidence: Vec<f64>,
}

impl MixedSample {
    pub fn target_fraction(&self) -> f64 {
        let n = self.origin.iter().filter(|&&o| o == Origin::Target).count();
        n as f64 / self.origin.len().max(1) as f64
    }

    /// The semantic map and instance supervision as one panoptic label.
    pub fn to_panoptic(&self, catalog: &ClassCatalog) -> Result<PanopticLabel> {
        PanopticLabel::new(self.semantic.clone(), self.instance_supervision.clone(), catalog)
    }
}

/// Picks `ceil(k/2)` of the `k` classes present in `source` uniformly at
/// random and masks their pixels.
pub fn classmix_select(source: &LabelMap2D, rng: &mut SeededRng) -> Result<MixMask> {
    let present = source.present_classes();
    if present.is_empty() {
        return Err(Error::InvalidValue("source label is entirely IGNORE".into()));
    }
    let chosen = rng.choose_k(&present, present.len().div_ceil(2));
    let mask = Mask::from_fn(source.height(), source.width(), |i| chosen.contains(&source.get(i)));
    Ok(MixMask {
        mask,
        kind: MaskKind::Semantic,
    })
}

/// Pixelwise selection: source operand where the mask is set, target elsewhere.
pub fn dacs_compose(
    source_image: &ImageRGB,
    source_labels: &LabelMap2D,
    target_image: &ImageRGB,
    target_pseudo: &LabelMap2D,
    target_confidence: &[f64],
    mix: &MixMask,
) -> Result<MixedSample> {
    let dims = source_image.dims();
    check_dims("source label", source_labels.dims(), dims)?;
    check_dims("target image", target_image.dims(), dims)?;
    check_dims("target pseudo-label", target_pseudo.dims(), dims)?;
    check_dims("mix mask", mix.dims(), dims)?;
    let n = dims.0 * dims.1;
    if target_confidence.len() != n {
        return Err(Error::Shape(format!(
            "{} confidences for {n} pixels",
            target_confidence.len()
        )));
    }
    if let Some(k) = target_confidence.iter().find(|k| !(0.0..=1.0).contains(*k)) {
        return Err(Error::InvalidValue(format!("confidence {k} outside [0,1]")));
    }

    let mut image = target_image.clone();
    let mut semantic = target_pseudo.clone();
    let mut origin = vec![Origin::Target; n];
    let mut confidence = target_confidence.to_vec();
    for i in mix.mask.ones() {
        image.set_pixel(i, source_image.pixel(i));
        semantic.values_mut()[i] = source_labels.get(i);
        origin[i] = Origin::Source;
        confidence[i] = 1.0;
    }
    Ok(MixedSample {
        image,
        semantic,
        origin,
        instance_supervision: InstanceSet::empty(Provenance::Predicted),
        pixel_confidence: confidence,
    })
}

/// Union of ground-truth and pseudo records with fresh ids `1..=n`, ground
/// truth first. Ground-truth records must be pairwise disjoint.
pub fn assemble_instance_supervision(source_gt: &InstanceSet, pasted: &InstanceSet) -> Result<InstanceSet> {
    source_gt.check_disjoint()?;
    let mut records = Vec::with_capacity(source_gt.len() + pasted.len());
    for r in source_gt.records() {
        records.push(r.clone().with_score(1.0));
    }
    records.extend(pasted.records().iter().cloned());
    let records = records
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.with_id(k as u32 + 1))
        .collect();
    InstanceSet::new(records, Provenance::Predicted)
}

/// Visible parts of `records` when painted in ascending score order (ties by
/// id), so higher-confidence masks end on top. Fully hidden records vanish.
fn paint_in_score_order(records: &[InstanceRecord]) -> Vec<InstanceRecord> {
    let mut order: Vec<&InstanceRecord> = records.iter().collect();
    order.sort_by(|a, b| a.score().total_cmp(&b.score()).then(a.id().cmp(&b.id())));
    let Some(first) = order.first() else {
        return Vec::new();
    };
    let (h, w) = first.mask().dims();
    let mut covered = Mask::zeros(h, w);
    let mut visible = Vec::new();
    for r in order.iter().rev() {
        let keep = Mask::from_fn(h, w, |i| !covered.get(i));
        if let Some(v) = r.restricted(&keep) {
            visible.push(v);
        }
        covered.or_assign(r.mask());
    }
    visible.reverse();
    visible
}

/// Records still visible under `occluder`, keeping only those that retain at
/// least `eps` of their original area.
fn prune_occluded(records: &[InstanceRecord], occluder: &Mask, eps: f64) -> (Vec<InstanceRecord>, Vec<InstanceRecord>) {
    let (h, w) = occluder.dims();
    let keep = Mask::from_fn(h, w, |i| !occluder.get(i));
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for r in records {
        match r.restricted(&keep) {
            Some(v) if v.area() as f64 >= eps * r.area() as f64 => kept.push(v),
            Some(v) => dropped.push(v),
            None => {}
        }
    }
    (kept, dropped)
}

/// Instance-aware mixing.
///
/// Target-to-source pastes `filtered` (already thresholded teacher
/// predictions) onto the source image; the supervision is the union of the
/// source ground truth that stays visible and the visible pasted records.
/// Source-to-target pastes the source ground truth onto the target image;
/// the remaining supervision comes from `filtered` alone.
pub fn imix_compose(
    target_image: &ImageRGB,
    filtered: &InstanceSet,
    source_image: &ImageRGB,
    source_label: &PanopticLabel,
    direction: MixDirection,
    occlusion_eps: f64,
) -> Result<MixedSample> {
    let dims = source_image.dims();
    if dims.0 * dims.1 == 0 {
        return Err(Error::Shape("empty image".into()));
    }
    check_dims("target image", target_image.dims(), dims)?;
    check_dims("source label", source_label.dims(), dims)?;
    if let Some(r) = filtered.records().first() {
        check_dims("filtered instance mask", r.mask().dims(), dims)?;
    }
    if !(0.0..=1.0).contains(&occlusion_eps) {
        return Err(Error::InvalidValue(format!("occlusion_eps {occlusion_eps} outside [0,1]")));
    }
    let (h, w) = dims;
    let n = h * w;

    match direction {
        MixDirection::TargetToSource => {
            if filtered.provenance() == Provenance::GroundTruth {
                return Err(Error::InvalidValue(
                    "target-to-source mixing pastes predictions, got ground truth".into(),
                ));
            }
            let pasted = paint_in_score_order(filtered.records());
            let paste_mask = filtered.union_mask(h, w);
            let (kept, dropped) = prune_occluded(source_label.instances().records(), &paste_mask, occlusion_eps);

            let mut image = source_image.clone();
            let mut semantic = source_label.semantic().clone();
            let mut origin = vec![Origin::Source; n];
            let mut confidence = vec![1.0; n];
            for r in &dropped {
                for i in r.mask().ones() {
                    semantic.values_mut()[i] = IGNORE;
                }
            }
            for r in &pasted {
                for i in r.mask().ones() {
                    image.set_pixel(i, target_image.pixel(i));
                    semantic.values_mut()[i] = r.class_id();
                    origin[i] = Origin::Target;
                    confidence[i] = r.score();
                }
            }
            let gt = InstanceSet::new(kept, Provenance::GroundTruth)?;
            let pseudo = InstanceSet::new(pasted, Provenance::Predicted)?;
            Ok(MixedSample {
                image,
                semantic,
                origin,
                instance_supervision: assemble_instance_supervision(&gt, &pseudo)?,
                pixel_confidence: confidence,
            })
        }
        MixDirection::SourceToTarget => {
            let paste_mask = source_label.instances().union_mask(h, w);
            let background = paint_in_score_order(filtered.records());
            let (kept, _) = prune_occluded(&background, &paste_mask, occlusion_eps);

            let mut image = target_image.clone();
            let mut semantic = LabelMap2D::filled(h, w, IGNORE);
            let mut origin = vec![Origin::Target; n];
            let mut confidence = vec![0.0; n];
            for r in &kept {
                for i in r.mask().ones() {
                    semantic.values_mut()[i] = r.class_id();
                    confidence[i] = r.score();
                }
            }
            for i in paste_mask.ones() {
                image.set_pixel(i, source_image.pixel(i));
                semantic.values_mut()[i] = source_label.semantic().get(i);
                origin[i] = Origin::Source;
                confidence[i] = 1.0;
            }
            let pseudo = InstanceSet::new(kept, Provenance::Predicted)?;
            Ok(MixedSample {
                image,
                semantic,
                origin,
                instance_supervision: assemble_instance_supervision(source_label.instances(), &pseudo)?,
                pixel_confidence: confidence,
            })
        }
    }
}

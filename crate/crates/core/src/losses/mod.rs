//! Training losses as pure functions returning the value and the analytic
//! gradient with respect to the pre-activation inputs (logits for softmax and
//! sigmoid heads, raw offsets for box regression, features for the distance
//! regularizer).
//!
//! Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before any log.

pub mod gradcheck;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::mixing::{MixedSample, Origin};
use crate::raster::{check_dims, LabelMap2D, Mask, IGNORE};
use crate::volume::{log_sum_exp, softmax, FeatureMap, LogitVolume, ProbVolume};

pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<G = Vec<f64>> {
    pub value: f64,
    pub grad: G,
}

/// Box regression target `(x, y, w, h)` offsets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoxOffset {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxOffset {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.y, self.w, self.h]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    fn l1_to(&self, target: &BoxOffset) -> f64 {
        self.as_array()
            .iter()
            .zip(target.as_array())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    fn l1_grad(&self, target: &BoxOffset, scale: f64) -> BoxOffset {
        let a = self.as_array();
        let b = target.as_array();
        BoxOffset::from_array(std::array::from_fn(|i| scale * sign(a[i] - b[i])))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub rpn_box: f64,
    pub refinement_box: f64,
    pub cda: f64,
    /// Feature-distance regularizer; off unless explicitly enabled.
    pub feature_distance: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rpn_box: 1.0,
            refinement_box: 1.0,
            cda: 1.0,
            feature_distance: 0.0,
        }
    }
}

fn clamped_neg_log(p: f64) -> f64 {
    -p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln()
}

fn stable_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Pixelwise weighted softmax cross-entropy shared by the semantic losses.
/// `weight(p)` scales pixel `p`; the sum is divided by `normalizer`.
fn weighted_ce(
    logits: &LogitVolume,
    labels: &LabelMap2D,
    normalizer: f64,
    weight: impl Fn(usize) -> f64,
) -> Result<LossOutput> {
    let c = logits.classes();
    let mut value = 0.0;
    let mut grad = vec![0.0; logits.data().len()];
    for (p, &y) in labels.values().iter().enumerate() {
        if y == IGNORE {
            continue;
        }
        if y as usize >= c {
            return Err(Error::InvalidValue(format!("label {y} outside {c} classes")));
        }
        let w = weight(p);
        if w == 0.0 {
            continue;
        }
        let z = logits.pixel(p);
        let nll = log_sum_exp(z) - z[y as usize];
        value += w * nll.min(-PROB_CLAMP.ln());
        if nll < -PROB_CLAMP.ln() {
            let probs = softmax(z);
            let g = &mut grad[p * c..(p + 1) * c];
            for (k, (gk, pk)) in g.iter_mut().zip(probs).enumerate() {
                let onehot = if k == y as usize { 1.0 } else { 0.0 };
                *gk = w * (pk - onehot) / normalizer;
            }
        }
    }
    Ok(LossOutput {
        value: value / normalizer,
        grad,
    })
}

fn counted_pixels(labels: &LabelMap2D) -> usize {
    labels.values().iter().filter(|&&v| v != IGNORE).count()
}

/// Mean per-pixel cross-entropy over non-IGNORE pixels.
pub fn semantic_ce(logits: &LogitVolume, labels: &LabelMap2D) -> Result<LossOutput> {
    check_dims("semantic_ce", logits.dims(), labels.dims())?;
    let n = counted_pixels(labels);
    if n == 0 {
        return Err(Error::InvalidValue("every pixel is IGNORE".into()));
    }
    weighted_ce(logits, labels, n as f64, |_| 1.0)
}

/// [`semantic_ce`] on a probability volume, whose logits are its clamped logs.
pub fn semantic_ce_from_probs(probs: &ProbVolume, labels: &LabelMap2D) -> Result<LossOutput> {
    let logits = probs
        .data()
        .iter()
        .map(|&p| (p as f64).max(PROB_CLAMP).ln())
        .collect();
    semantic_ce(
        &LogitVolume::new(probs.height(), probs.width(), probs.classes(), logits)?,
        labels,
    )
}

/// Cross-entropy on a mixed sample: source pixels count fully, target pixels
/// are weighted by the pseudo-label confidence.
pub fn mixed_semantic_ce(logits: &LogitVolume, mixed: &MixedSample) -> Result<LossOutput> {
    check_dims("mixed_semantic_ce", logits.dims(), mixed.semantic.dims())?;
    if mixed.origin.len() != mixed.semantic.len() || mixed.pixel_confidence.len() != mixed.semantic.len() {
        return shape_err("origin/confidence length differs from the label map");
    }
    let n = counted_pixels(&mixed.semantic);
    if n == 0 {
        return Err(Error::InvalidValue("every pixel is IGNORE".into()));
    }
    weighted_ce(logits, &mixed.semantic, n as f64, |p| match mixed.origin[p] {
        Origin::Source => 1.0,
        Origin::Target => mixed.pixel_confidence[p],
    })
}

/// Similarity-map alignment loss: softmax over classes of the similarity
/// logits, negative log-likelihood of the labeled class, divided by
/// `scored_pixels · C`.
pub fn cda_loss(sim: &LogitVolume, labels: &LabelMap2D) -> Result<LossOutput> {
    check_dims("cda_loss", sim.dims(), labels.dims())?;
    let n = counted_pixels(labels);
    if n == 0 {
        return Ok(LossOutput {
            value: 0.0,
            grad: vec![0.0; sim.data().len()],
        });
    }
    weighted_ce(sim, labels, (n * sim.classes()) as f64, |_| 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpnGrad {
    pub objectness: Vec<f64>,
    pub boxes: Vec<BoxOffset>,
}

/// Objectness BCE (mean over anchors) plus `lambda` times the L1 box error
/// summed over coordinates and averaged over positive anchors.
pub fn rpn_loss(
    objectness_logits: &[f64],
    objectness_gt: &[bool],
    box_pred: &[BoxOffset],
    box_gt: &[BoxOffset],
    positives: &[bool],
    lambda: f64,
) -> Result<LossOutput<RpnGrad>> {
    let a = objectness_logits.len();
    if [objectness_gt.len(), box_pred.len(), box_gt.len(), positives.len()]
        .iter()
        .any(|&n| n != a)
    {
        return shape_err("rpn inputs differ in anchor count");
    }
    if objectness_logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidValue("non-finite objectness".into()));
    }
    let mut value = 0.0;
    let mut g_obj = vec![0.0; a];
    for (k, (&z, &l)) in objectness_logits.iter().zip(objectness_gt).enumerate() {
        let l = if l { 1.0 } else { 0.0 };
        value += (softplus(z) - l * z) / a as f64;
        g_obj[k] = (stable_sigmoid(z) - l) / a as f64;
    }
    let npos = positives.iter().filter(|&&p| p).count();
    let mut g_box = vec![BoxOffset::default(); a];
    if npos > 0 {
        let scale = lambda / npos as f64;
        for k in (0..a).filter(|&k| positives[k]) {
            value += scale * box_pred[k].l1_to(&box_gt[k]);
            g_box[k] = box_pred[k].l1_grad(&box_gt[k], scale);
        }
    }
    Ok(LossOutput {
        value,
        grad: RpnGrad {
            objectness: g_obj,
            boxes: g_box,
        },
    })
}

/// [`rpn_loss`] with objectness given as probabilities in (0, 1).
pub fn rpn_loss_from_probs(
    objectness: &[f64],
    objectness_gt: &[bool],
    box_pred: &[BoxOffset],
    box_gt: &[BoxOffset],
    positives: &[bool],
    lambda: f64,
) -> Result<LossOutput<RpnGrad>> {
    if let Some(p) = objectness.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidValue(format!("objectness {p} outside (0,1)")));
    }
    let logits: Vec<f64> = objectness
        .iter()
        .map(|&p| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            (p / (1.0 - p)).ln()
        })
        .collect();
    rpn_loss(&logits, objectness_gt, box_pred, box_gt, positives, lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementGrad {
    /// `rois × (things + 1)`.
    pub class_logits: Vec<f64>,
    /// `rois × things`.
    pub boxes: Vec<BoxOffset>,
}

/// Box-head loss for matched RoIs. `class_logits` holds `things + 1` scores
/// per RoI, the last being background; `box_pred` holds one offset per thing
/// class per RoI and only the ground-truth class column is penalized.
/// Both terms are averaged over RoIs.
pub fn refinement_loss(
    class_logits: &[f64],
    class_gt: &[usize],
    box_pred: &[BoxOffset],
    box_gt: &[BoxOffset],
    things: usize,
    lambda: f64,
) -> Result<LossOutput<RefinementGrad>> {
    let r = class_gt.len();
    let k = things + 1;
    if class_logits.len() != r * k || box_pred.len() != r * things || box_gt.len() != r {
        return shape_err("refinement inputs do not match the RoI count");
    }
    let background = things;
    let mut value = 0.0;
    let mut g_cls = vec![0.0; r * k];
    let mut g_box = vec![BoxOffset::default(); r * things];
    for roi in 0..r {
        let u = class_gt[roi];
        if u > background {
            return Err(Error::InvalidValue(format!("class {u} outside {k} classes")));
        }
        let z = &class_logits[roi * k..(roi + 1) * k];
        let nll = log_sum_exp(z) - z[u];
        value += nll / r as f64;
        for (c, p) in softmax(z).into_iter().enumerate() {
            g_cls[roi * k + c] = (p - if c == u { 1.0 } else { 0.0 }) / r as f64;
        }
        if u != background {
            let pred = &box_pred[roi * things + u];
            value += lambda * pred.l1_to(&box_gt[roi]) / r as f64;
            g_box[roi * things + u] = pred.l1_grad(&box_gt[roi], lambda / r as f64);
        }
    }
    Ok(LossOutput {
        value,
        grad: RefinementGrad {
            class_logits: g_cls,
            boxes: g_box,
        },
    })
}

/// Per-pixel BCE on the ground-truth class channel of `things × h × w` mask
/// logits, averaged over the `h × w` pixels.
pub fn mask_bce(mask_logits: &[f64], mask_gt: &Mask, class_gt: usize, things: usize) -> Result<LossOutput> {
    let hw = mask_gt.bits().len();
    if mask_logits.len() != things * hw {
        return shape_err(format!("{} mask logits for {things}x{hw}", mask_logits.len()));
    }
    if class_gt >= things {
        return Err(Error::InvalidValue(format!("class {class_gt} outside {things} thing classes")));
    }
    let mut grad = vec![0.0; mask_logits.len()];
    let mut value = 0.0;
    let off = class_gt * hw;
    for (i, &m) in mask_gt.bits().iter().enumerate() {
        let z = mask_logits[off + i];
        let m = if m { 1.0 } else { 0.0 };
        value += (softplus(z) - m * z) / hw as f64;
        grad[off + i] = (stable_sigmoid(z) - m) / hw as f64;
    }
    Ok(LossOutput { value, grad })
}

/// [`mask_bce`] on probabilities; values must lie in (0, 1) before clamping.
pub fn mask_bce_from_probs(mask_probs: &[f64], mask_gt: &Mask, class_gt: usize, things: usize) -> Result<LossOutput> {
    if let Some(p) = mask_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidValue(format!("mask probability {p} outside [0,1]")));
    }
    let hw = mask_gt.bits().len();
    if mask_probs.len() != things * hw || class_gt >= things {
        return shape_err("mask probabilities do not match the mask");
    }
    let off = class_gt * hw;
    let value = mask_gt
        .bits()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let p = mask_probs[off + i];
            if m {
                clamped_neg_log(p)
            } else {
                clamped_neg_log(1.0 - p)
            }
        })
        .sum::<f64>()
        / hw as f64;
    let logits: Vec<f64> = mask_probs
        .iter()
        .map(|&p| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            (p / (1.0 - p)).ln()
        })
        .collect();
    let grad = mask_bce(&logits, mask_gt, class_gt, things)?.grad;
    Ok(LossOutput { value, grad })
}

/// Mean L2 distance between two feature maps over the masked pixels; the
/// gradient is taken with respect to `trained`. Empty masks give 0.
pub fn feature_distance(anchor: &FeatureMap, trained: &FeatureMap, thing_mask: &Mask) -> Result<LossOutput> {
    check_dims("feature_distance", anchor.dims(), trained.dims())?;
    check_dims("feature_distance mask", anchor.dims(), thing_mask.dims())?;
    if anchor.dim() != trained.dim() {
        return shape_err("feature dimensions differ");
    }
    let d = anchor.dim();
    let n = thing_mask.count();
    let mut grad = vec![0.0; trained.data().len()];
    if n == 0 {
        return Ok(LossOutput { value: 0.0, grad });
    }
    let mut value = 0.0;
    for p in thing_mask.ones() {
        let a = anchor.pixel(p);
        let b = trained.pixel(p);
        let dist = a.iter().zip(b).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt();
        value += dist / n as f64;
        if dist > 0.0 {
            for i in 0..d {
                grad[p * d + i] = (b[i] - a[i]) / (dist * n as f64);
            }
        }
    }
    Ok(LossOutput { value, grad })
}

/// Instance-branch total: RPN terms plus refinement (class, box, mask) terms.
pub fn instance_loss(rpn: f64, refinement: f64, mask: f64) -> f64 {
    rpn + refinement + mask
}

/// Every term of the self-training objective. Semantic terms are augmented
/// by the weighted alignment losses; absent terms count as zero.
#[derive(Debug, Clone, Default)]
pub struct PanopticLossParts {
    pub source_semantic: Option<LossOutput>,
    pub source_instance: Option<LossOutput>,
    pub source_cda: Option<LossOutput>,
    pub mixed_semantic: Option<LossOutput>,
    pub mixed_instance: Option<LossOutput>,
    pub mixed_cda: Option<LossOutput>,
    pub feature_distance: Option<LossOutput>,
}

impl PanopticLossParts {
    fn weighted(&self, w: &LossWeights) -> [(f64, Option<&LossOutput>); 7] {
        [
            (1.0, self.source_semantic.as_ref()),
            (w.cda, self.source_cda.as_ref()),
            (1.0, self.source_instance.as_ref()),
            (1.0, self.mixed_semantic.as_ref()),
            (w.cda, self.mixed_cda.as_ref()),
            (1.0, self.mixed_instance.as_ref()),
            (w.feature_distance, self.feature_distance.as_ref()),
        ]
    }
}

/// Source panoptic loss plus self-supervised panoptic loss. Gradients are
/// summed elementwise, so every present term must share one input shape;
/// terms with weight 0 are skipped entirely.
pub fn total_panoptic_loss(parts: &PanopticLossParts, weights: &LossWeights) -> Result<LossOutput> {
    let mut value = 0.0;
    let mut grad: Option<Vec<f64>> = None;
    for (w, term) in parts.weighted(weights) {
        let Some(term) = term else { continue };
        if w == 0.0 {
            continue;
        }
        value += w * term.value;
        match grad.as_mut() {
            None => grad = Some(term.grad.iter().map(|g| w * g).collect()),
            Some(acc) => {
                if acc.len() != term.grad.len() {
                    return shape_err("loss terms have gradients of different shapes");
                }
                for (a, g) in acc.iter_mut().zip(&term.grad) {
                    *a += w * g;
                }
            }
        }
    }
    Ok(LossOutput {
        value,
        grad: grad.unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceSet, Provenance};
    use crate::raster::ImageRGB;

    fn logits(h: usize, w: usize, c: usize, f: impl Fn(usize) -> f64) -> LogitVolume {
        LogitVolume::new(h, w, c, (0..h * w * c).map(f).collect()).unwrap()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let labels = LabelMap2D::new(1, 3, vec![0, 2, 1]).unwrap();
        let probs = ProbVolume::one_hot(&labels, 4).unwrap();
        let out = semantic_ce_from_probs(&probs, &labels).unwrap();
        assert!(out.value >= 0.0 && out.value < 1e-11, "{}", out.value);
    }

    #[test]
    fn uniform_prediction_is_ln_c() {
        let labels = LabelMap2D::new(2, 2, vec![0, 1, 2, 3]).unwrap();
        let out = semantic_ce(&logits(2, 2, 4, |_| 0.3), &labels).unwrap();
        assert!((out.value - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_ignore_is_error() {
        let labels = LabelMap2D::filled(1, 2, IGNORE);
        assert!(semantic_ce(&logits(1, 2, 3, |_| 0.0), &labels).is_err());
    }

    #[test]
    fn ignore_pixels_have_zero_gradient() {
        let labels = LabelMap2D::new(1, 2, vec![IGNORE, 1]).unwrap();
        let out = semantic_ce(&logits(1, 2, 3, |i| i as f64 * 0.1), &labels).unwrap();
        assert!(out.grad[..3].iter().all(|&g| g == 0.0));
        assert!(out.grad[3..].iter().any(|&g| g != 0.0));
    }

    fn mixed(origin: Vec<Origin>, k: f64) -> MixedSample {
        let n = origin.len();
        MixedSample {
            image: ImageRGB::filled(1, n, [0; 3]),
            semantic: LabelMap2D::new(1, n, (0..n as u16).map(|v| v % 3).collect()).unwrap(),
            pixel_confidence: origin.iter().map(|o| if *o == Origin::Source { 1.0 } else { k }).collect(),
            origin,
            instance_supervision: InstanceSet::empty(Provenance::Predicted),
        }
    }

    #[test]
    fn mixed_ce_branches() {
        let z = logits(1, 4, 3, |i| (i as f64 * 0.7).sin());
        let all_src = mixed(vec![Origin::Source; 4], 0.3);
        let a = mixed_semantic_ce(&z, &all_src).unwrap();
        let b = semantic_ce(&z, &all_src.semantic).unwrap();
        assert_eq!(a, b);

        let zero_k = mixed(vec![Origin::Source, Origin::Target, Origin::Target, Origin::Source], 0.0);
        let out = mixed_semantic_ce(&z, &zero_k).unwrap();
        assert!(out.grad[3..9].iter().all(|&g| g == 0.0));
        let src_only: f64 = [0usize, 3]
            .iter()
            .map(|&p| log_sum_exp(z.pixel(p)) - z.pixel(p)[zero_k.semantic.get(p) as usize])
            .sum();
        assert!((out.value - src_only / 4.0).abs() < 1e-12);
    }

    #[test]
    fn cda_uniform_two_classes() {
        let labels = LabelMap2D::new(2, 3, vec![0, 1, 1, 0, 0, 1]).unwrap();
        let out = cda_loss(&logits(2, 3, 2, |_| 1.5), &labels).unwrap();
        assert!((out.value - 2f64.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn cda_large_margin_goes_to_zero() {
        let labels = LabelMap2D::new(1, 2, vec![1, 0]).unwrap();
        let z = LogitVolume::new(1, 2, 2, vec![0.0, 60.0, 60.0, 0.0]).unwrap();
        assert!(cda_loss(&z, &labels).unwrap().value < 1e-20);
    }

    #[test]
    fn rpn_examples() {
        let b = BoxOffset::new(0.1, -0.2, 0.3, 0.4);
        let perfect = rpn_loss(&[40.0, -40.0], &[true, false], &[b, b], &[b, b], &[true, false], 1.0).unwrap();
        assert!(perfect.value < 1e-12);
        let off = BoxOffset { x: 0.1 + 0.25, ..b };
        let out = rpn_loss(&[40.0], &[true], &[off], &[b], &[true], 2.0).unwrap();
        assert!((out.value - 2.0 * 0.25).abs() < 1e-9);
        assert!(rpn_loss_from_probs(&[1.0], &[true], &[b], &[b], &[true], 1.0).is_err());
        assert!(rpn_loss_from_probs(&[0.5], &[true], &[b], &[b], &[true], 1.0).is_ok());
    }

    #[test]
    fn rpn_ignores_boxes_of_negatives() {
        let b = BoxOffset::new(0.0, 0.0, 0.0, 0.0);
        let far = BoxOffset::new(5.0, 5.0, 5.0, 5.0);
        let out = rpn_loss(&[-40.0], &[false], &[far], &[b], &[false], 1.0).unwrap();
        assert!(out.value < 1e-12);
        assert_eq!(out.grad.boxes[0], BoxOffset::default());
    }

    #[test]
    fn refinement_examples() {
        let things = 2;
        let gt = BoxOffset::new(0.5, 0.5, 1.0, 1.0);
        let preds = vec![gt, BoxOffset::new(9.0, 9.0, 9.0, 9.0)];
        let out = refinement_loss(&[40.0, 0.0, 0.0], &[0], &preds, &[gt], things, 1.0).unwrap();
        assert!(out.value < 1e-12);
        // background RoI: boxes never penalized
        let bg = refinement_loss(&[0.0, 0.0, 40.0], &[2], &[BoxOffset::new(3.0, 3.0, 3.0, 3.0); 2], &[gt], things, 1.0).unwrap();
        assert!(bg.value < 1e-12);
        assert!(bg.grad.boxes.iter().all(|b| *b == BoxOffset::default()));
        assert!(refinement_loss(&[0.0; 3], &[3], &preds, &[gt], things, 1.0).is_err());
    }

    #[test]
    fn mask_examples() {
        let m = Mask::from_fn(3, 3, |i| i % 2 == 0);
        let exact: Vec<f64> = (0..2)
            .flat_map(|_| m.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }))
            .collect();
        let out = mask_bce_from_probs(&exact, &m, 1, 2).unwrap();
        assert!(out.value < 1e-11);
        let half = vec![0.5; 18];
        let out = mask_bce_from_probs(&half, &m, 0, 2).unwrap();
        assert!((out.value - 2f64.ln()).abs() < 1e-12);
        assert!(mask_bce_from_probs(&[1.5; 18], &m, 0, 2).is_err());
        // only the class-1 channel receives gradient
        let g = mask_bce(&vec![0.3; 18], &m, 1, 2).unwrap().grad;
        assert!(g[..9].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_distance_examples() {
        let a = FeatureMap::new(1, 2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let mask = Mask::from_fn(1, 2, |i| i == 0);
        assert_eq!(feature_distance(&a, &a, &mask).unwrap().value, 0.0);
        let b = FeatureMap::new(1, 2, 2, vec![0.6, 0.8, 7.0, 7.0]).unwrap();
        assert!((feature_distance(&a, &b, &mask).unwrap().value - 1.0).abs() < 1e-12);
        assert_eq!(feature_distance(&a, &b, &Mask::zeros(1, 2)).unwrap().value, 0.0);
    }

    #[test]
    fn total_is_weighted_sum() {
        let t = |v: f64, g: Vec<f64>| Some(LossOutput { value: v, grad: g });
        let parts = PanopticLossParts {
            source_semantic: t(1.0, vec![1.0, 0.0]),
            mixed_semantic: t(2.0, vec![0.0, 1.0]),
            mixed_instance: t(0.5, vec![1.0, 1.0]),
            ..Default::default()
        };
        let out = total_panoptic_loss(&parts, &LossWeights::default()).unwrap();
        assert_eq!(out.value, 3.5);
        assert_eq!(out.grad, vec![2.0, 2.0]);
        assert_eq!(total_panoptic_loss(&PanopticLossParts::default(), &LossWeights::default()).unwrap().value, 0.0);
        let bad = PanopticLossParts {
            source_semantic: t(1.0, vec![1.0]),
            source_cda: t(1.0, vec![1.0, 2.0]),
            ..Default::default()
        };
        assert!(total_panoptic_loss(&bad, &LossWeights::default()).is_err());
    }

    #[test]
    fn total_gradient_is_linear_on_shared_input() {
        let z = logits(2, 2, 3, |i| ((i * 7) as f64).cos());
        let labels = LabelMap2D::new(2, 2, vec![0, 1, 2, IGNORE]).unwrap();
        let sem = semantic_ce(&z, &labels).unwrap();
        let cda = cda_loss(&z, &labels).unwrap();
        let parts = PanopticLossParts {
            source_semantic: Some(sem.clone()),
            source_cda: Some(cda.clone()),
            ..Default::default()
        };
        let total = total_panoptic_loss(&parts, &LossWeights::default()).unwrap();
        for i in 0..total.grad.len() {
            assert!((total.grad[i] - sem.grad[i] - cda.grad[i]).abs() < 1e-15);
        }
        assert!((total.value - sem.value - cda.value).abs() < 1e-15);
    }
}

//! Teacher-output post-processing: per-pixel argmax pseudo-labels with a
//! confidence weight, and confidence filtering of predicted instances.

use crate::error::{Error, Result};
use crate::instance::{InstanceSet, Provenance};
use crate::mixing::{MaskKind, MixMask};
use crate::raster::LabelMap2D;
use crate::volume::ProbVolume;

/// Max-probability cut used for the image-level confidence weight.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.968;

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSemantic {
    pub labels: LabelMap2D,
    /// Share of pixels whose max probability reaches the threshold.
    pub k: f64,
    /// Per-pixel max probability.
    pub pixel_confidence: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceMode {
    /// `k` broadcast to every pixel.
    PerImage,
    /// Each pixel weighted by its own max probability.
    PerPixel,
}

impl PseudoSemantic {
    pub fn weights(&self, mode: ConfidenceMode) -> Vec<f64> {
        match mode {
            ConfidenceMode::PerImage => vec![self.k; self.labels.len()],
            ConfidenceMode::PerPixel => self.pixel_confidence.clone(),
        }
    }
}

/// Per-pixel argmax (lowest class id wins ties).
pub fn semantic_argmax(probs: &ProbVolume, conf_threshold: f64) -> PseudoSemantic {
    let n = probs.height() * probs.width();
    let mut labels = Vec::with_capacity(n);
    let mut conf = Vec::with_capacity(n);
    let mut confident = 0usize;
    for px in probs.pixels() {
        let (best, p) = argmax_f32(px);
        labels.push(best as u16);
        conf.push(p as f64);
        if p as f64 >= conf_threshold {
            confident += 1;
        }
    }
    PseudoSemantic {
        labels: LabelMap2D::new(probs.height(), probs.width(), labels).expect("dims from volume"),
        k: if n == 0 { 0.0 } else { confident as f64 / n as f64 },
        pixel_confidence: conf,
    }
}

pub(crate) fn argmax_f32(px: &[f32]) -> (usize, f32) {
    let mut best = 0;
    for (c, &v) in px.iter().enumerate().skip(1) {
        if v > px[best] {
            best = c;
        }
    }
    (best, px[best])
}

pub(crate) fn argmax_f64(px: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (c, &v) in px.iter().enumerate().skip(1) {
        if v > px[best] {
            best = c;
        }
    }
    (best, px[best])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    tau: f64,
}

impl FilterConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidValue(format!("tau {tau} outside [0,1]")));
        }
        Ok(Self { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

/// Keeps records with score strictly above tau; the mask is the OR of the
/// kept masks.
pub fn filter_instances(pred: &InstanceSet, cfg: FilterConfig, height: usize, width: usize) -> (InstanceSet, MixMask) {
    let kept: Vec<_> = pred
        .records()
        .iter()
        .filter(|r| r.score() > cfg.tau)
        .cloned()
        .collect();
    let kept = InstanceSet::new(kept, Provenance::Predicted).expect("subset of a valid set");
    let mask = kept.union_mask(height, width);
    (
        kept,
        MixMask {
            mask,
            kind: MaskKind::Instance,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::InstanceRecord;
    use crate::raster::Mask;
    use proptest::prelude::*;

    #[test]
    fn one_hot_volume() {
        let labels = LabelMap2D::new(2, 2, vec![0, 3, 2, 1]).unwrap();
        let probs = ProbVolume::one_hot(&labels, 4).unwrap();
        let p = semantic_argmax(&probs, DEFAULT_CONF_THRESHOLD);
        assert_eq!(p.labels, labels);
        assert_eq!(p.k, 1.0);
    }

    #[test]
    fn uniform_volume_ties_to_zero() {
        let probs = ProbVolume::new(2, 2, 4, vec![0.25; 16]).unwrap();
        let p = semantic_argmax(&probs, DEFAULT_CONF_THRESHOLD);
        assert!(p.labels.values().iter().all(|&v| v == 0));
        assert_eq!(p.k, 0.0);
    }

    #[test]
    fn half_confident() {
        let mut data = Vec::new();
        for i in 0..8 {
            if i % 2 == 0 {
                data.extend([0.99f32, 0.01]);
            } else {
                data.extend([0.5f32, 0.5]);
            }
        }
        let probs = ProbVolume::new(2, 4, 2, data).unwrap();
        let p = semantic_argmax(&probs, DEFAULT_CONF_THRESHOLD);
        assert_eq!(p.k, 0.5);
        assert_eq!(p.weights(ConfidenceMode::PerImage), vec![0.5; 8]);
        assert!((p.weights(ConfidenceMode::PerPixel)[0] - 0.99).abs() < 1e-6);
    }

    fn preds(scores: &[f64]) -> InstanceSet {
        let n = scores.len();
        let recs = scores
            .iter()
            .enumerate()
            .map(|(k, &s)| InstanceRecord::new(k as u32 + 1, 1, s, Mask::from_fn(1, n, |i| i == k)).unwrap())
            .collect();
        InstanceSet::new(recs, Provenance::Predicted).unwrap()
    }

    #[test]
    fn threshold_endpoints() {
        let p = preds(&[0.0, 0.3, 1.0, 0.9]);
        let (all, m) = filter_instances(&p, FilterConfig::new(0.0).unwrap(), 1, 4);
        // 0.0 is not strictly above 0, every other record is
        assert_eq!(all.len(), 3);
        assert_eq!(m.mask.count(), 3);
        let (none, m) = filter_instances(&p, FilterConfig::new(1.0).unwrap(), 1, 4);
        assert!(none.is_empty());
        assert!(m.mask.is_empty());
        let (one, _) = filter_instances(&preds(&[0.9, 0.5]), FilterConfig::new(0.75).unwrap(), 1, 2);
        assert_eq!(one.records()[0].score(), 0.9);
        assert_eq!(one.len(), 1);
        assert!(FilterConfig::new(1.5).is_err());
    }

    proptest! {
        #[test]
        fn filtering_is_monotone(scores in proptest::collection::vec(0.0f64..=1.0, 1..12), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let n = scores.len();
            let p = preds(&scores);
            let (a, ma) = filter_instances(&p, FilterConfig::new(lo).unwrap(), 1, n);
            let (b, mb) = filter_instances(&p, FilterConfig::new(hi).unwrap(), 1, n);
            for r in b.records() {
                prop_assert!(a.get(r.id()).is_some());
            }
            prop_assert!(mb.mask.ones().all(|i| ma.mask.get(i)));
        }

        #[test]
        fn argmax_maximizes_and_k_is_permutation_invariant(seed in any::<u64>()) {
            let mut rng = crate::rng::SeededRng::new(seed);
            let (h, w, c) = (3, 4, 3);
            let logits: Vec<f64> = (0..h * w * c).map(|_| rng.normal() * 3.0).collect();
            let probs = ProbVolume::from_logits(&crate::volume::LogitVolume::new(h, w, c, logits).unwrap());
            let p = semantic_argmax(&probs, 0.6);
            for (i, px) in probs.pixels().enumerate() {
                let l = p.labels.get(i) as usize;
                prop_assert!(px.iter().all(|&v| v <= px[l]));
            }
            let mut order: Vec<usize> = (0..h * w).collect();
            rng.shuffle(&mut order);
            let permuted: Vec<f32> = order.iter().flat_map(|&i| probs.pixel(i).to_vec()).collect();
            let q = semantic_argmax(&ProbVolume::new(h, w, c, permuted).unwrap(), 0.6);
            prop_assert_eq!(p.k, q.k);
        }
    }
}

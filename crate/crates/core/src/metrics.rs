//! Panoptic quality, mean IoU and mask AP. All statistics are tallies that can
//! be merged across images before the final ratios are taken.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::catalog::ClassCatalog;
use crate::error::{Error, Result};
use crate::instance::InstanceSet;
use crate::panoptic::{PanopticLabel, SegmentKey};
use crate::raster::{check_dims, LabelMap2D, IGNORE};

/// IoU a segment pair must strictly exceed to count as a panoptic match.
pub const PQ_MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassTally {
    pub iou_sum: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassTally {
    pub fn sq(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.iou_sum / self.tp as f64
        }
    }

    pub fn rq(&self) -> f64 {
        let denom = self.tp as f64 + 0.5 * self.fp as f64 + 0.5 * self.fn_ as f64;
        if denom == 0.0 {
            0.0
        } else {
            self.tp as f64 / denom
        }
    }

    pub fn pq(&self) -> f64 {
        self.sq() * self.rq()
    }

    /// Whether the class occurred in either ground truth or prediction.
    pub fn is_present(&self) -> bool {
        self.tp + self.fp + self.fn_ > 0
    }

    fn add(&mut self, o: &ClassTally) {
        self.iou_sum += o.iou_sum;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqStats {
    pub per_class: Vec<ClassTally>,
}

fn present_mean(values: impl Iterator<Item = (bool, f64)>) -> f64 {
    let (n, s) = values
        .filter(|(p, _)| *p)
        .fold((0usize, 0.0), |(n, s), (_, v)| (n + 1, s + v));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

impl PqStats {
    pub fn new(classes: usize) -> Self {
        Self {
            per_class: vec![ClassTally::default(); classes],
        }
    }

    pub fn merge(&mut self, other: &PqStats) -> Result<()> {
        if other.per_class.len() != self.per_class.len() {
            return Err(Error::Shape("merging statistics over different class counts".into()));
        }
        for (a, b) in self.per_class.iter_mut().zip(&other.per_class) {
            a.add(b);
        }
        Ok(())
    }

    pub fn msq(&self) -> f64 {
        present_mean(self.per_class.iter().map(|t| (t.is_present(), t.sq())))
    }

    pub fn mrq(&self) -> f64 {
        present_mean(self.per_class.iter().map(|t| (t.is_present(), t.rq())))
    }

    pub fn mpq(&self) -> f64 {
        present_mean(self.per_class.iter().map(|t| (t.is_present(), t.pq())))
    }

    /// Mean PQ restricted to thing (`true`) or stuff (`false`) classes.
    pub fn mpq_where(&self, catalog: &ClassCatalog, things: bool) -> f64 {
        present_mean(
            self.per_class
                .iter()
                .enumerate()
                .map(|(c, t)| (t.is_present() && catalog.is_thing(c as u16) == things, t.pq())),
        )
    }
}

#[derive(Debug, Clone, Default)]
struct SegmentAreas {
    class: Vec<u16>,
    area: Vec<u64>,
}

/// Segment classes and areas, skipping pixels where `valid` is false.
fn areas(keys: &[SegmentKey], map: &[Option<usize>], valid: &[bool]) -> SegmentAreas {
    let mut area = vec![0u64; keys.len()];
    for (i, s) in map.iter().enumerate() {
        if let (Some(s), true) = (s, valid[i]) {
            area[*s] += 1;
        }
    }
    SegmentAreas {
        class: keys.iter().map(|k| k.class_id).collect(),
        area,
    }
}

/// Per-class PQ tallies for one image. Pixels whose ground truth is IGNORE
/// are removed from every segment before areas and overlaps are counted.
pub fn panoptic_quality(gt: &PanopticLabel, pred: &PanopticLabel, catalog: &ClassCatalog) -> Result<PqStats> {
    check_dims("panoptic_quality", gt.dims(), pred.dims())?;
    gt.check(catalog)?;
    pred.check(catalog)?;
    let valid: Vec<bool> = gt.semantic().values().iter().map(|&v| v != IGNORE).collect();
    let (gkeys, gmap) = gt.segment_map();
    let (pkeys, pmap) = pred.segment_map();
    let ga = areas(&gkeys, &gmap, &valid);
    let pa = areas(&pkeys, &pmap, &valid);

    let mut inter: HashMap<(usize, usize), u64> = HashMap::new();
    for i in 0..valid.len() {
        if let (Some(g), Some(p), true) = (gmap[i], pmap[i], valid[i]) {
            *inter.entry((g, p)).or_default() += 1;
        }
    }
    let mut stats = PqStats::new(catalog.len());
    let mut g_matched = vec![false; ga.area.len()];
    let mut p_matched = vec![false; pa.area.len()];
    let mut pairs: Vec<_> = inter.into_iter().collect();
    pairs.sort_unstable_by_key(|&(k, _)| k);
    for ((g, p), n) in pairs {
        if ga.class[g] != pa.class[p] {
            continue;
        }
        let union = ga.area[g] + pa.area[p] - n;
        let iou = n as f64 / union as f64;
        if iou > PQ_MATCH_IOU {
            g_matched[g] = true;
            p_matched[p] = true;
            let t = &mut stats.per_class[ga.class[g] as usize];
            t.tp += 1;
            t.iou_sum += iou;
        }
    }
    for (g, m) in g_matched.iter().enumerate() {
        if !m && ga.area[g] > 0 {
            stats.per_class[ga.class[g] as usize].fn_ += 1;
        }
    }
    for (p, m) in p_matched.iter().enumerate() {
        if !m && pa.area[p] > 0 {
            stats.per_class[pa.class[p] as usize].fp += 1;
        }
    }
    Ok(stats)
}

/// Intersection and union pixel counts per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IouStats {
    pub intersection: Vec<u64>,
    pub union: Vec<u64>,
}

impl IouStats {
    pub fn new(classes: usize) -> Self {
        Self {
            intersection: vec![0; classes],
            union: vec![0; classes],
        }
    }

    pub fn merge(&mut self, other: &IouStats) -> Result<()> {
        if other.union.len() != self.union.len() {
            return Err(Error::Shape("merging statistics over different class counts".into()));
        }
        for c in 0..self.union.len() {
            self.intersection[c] += other.intersection[c];
            self.union[c] += other.union[c];
        }
        Ok(())
    }

    /// `None` for classes absent from both maps.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        self.intersection
            .iter()
            .zip(&self.union)
            .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
            .collect()
    }

    pub fn miou(&self) -> f64 {
        present_mean(self.per_class().into_iter().map(|v| (v.is_some(), v.unwrap_or(0.0))))
    }
}

/// Per-class IoU tallies; pixels with IGNORE ground truth are skipped.
pub fn mean_iou(gt: &LabelMap2D, pred: &LabelMap2D, classes: usize) -> Result<IouStats> {
    check_dims("mean_iou", gt.dims(), pred.dims())?;
    let mut s = IouStats::new(classes);
    for (&g, &p) in gt.values().iter().zip(pred.values()) {
        if g == IGNORE {
            continue;
        }
        if g as usize >= classes || (p != IGNORE && p as usize >= classes) {
            return Err(Error::InvalidValue(format!("label outside {classes} classes")));
        }
        if g == p {
            s.intersection[g as usize] += 1;
            s.union[g as usize] += 1;
        } else {
            s.union[g as usize] += 1;
            if p != IGNORE {
                s.union[p as usize] += 1;
            }
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    iou_thresholds: Vec<f64>,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|k| 0.5 + 0.05 * k as f64).collect(),
        }
    }
}

impl ApConfig {
    pub fn new(iou_thresholds: Vec<f64>) -> Result<Self> {
        if iou_thresholds.is_empty()
            || iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0))
            || iou_thresholds.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::InvalidValue(
                "IoU thresholds must be strictly increasing values in (0, 1]".into(),
            ));
        }
        Ok(Self { iou_thresholds })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.iou_thresholds
    }
}

/// Scored detections and ground-truth counts accumulated over images.
#[derive(Debug, Clone, PartialEq)]
pub struct ApAccumulator {
    cfg: ApConfig,
    things: Vec<u16>,
    gt_count: HashMap<u16, u64>,
    /// class -> (score, per-threshold hit flags) in insertion order.
    detections: HashMap<u16, Vec<(f64, Vec<bool>)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// `(class, AP)` for thing classes with ground truth.
    pub per_class: Vec<(u16, f64)>,
    pub map: f64,
}

impl ApAccumulator {
    pub fn new(cfg: ApConfig, catalog: &ClassCatalog) -> Self {
        Self {
            cfg,
            things: catalog.thing_classes().collect(),
            gt_count: HashMap::new(),
            detections: HashMap::new(),
        }
    }

    /// Matches one image's predictions greedily by descending score (ties by
    /// id) to the highest-IoU unmatched ground truth of the same class.
    pub fn add_image(&mut self, gt: &InstanceSet, pred: &InstanceSet) -> Result<()> {
        if let (Some(a), Some(b)) = (gt.records().first(), pred.records().first()) {
            check_dims("average_precision", a.mask().dims(), b.mask().dims())?;
        }
        for &c in &self.things {
            let gts: Vec<_> = gt.records().iter().filter(|r| r.class_id() == c).collect();
            let mut preds: Vec<_> = pred.records().iter().filter(|r| r.class_id() == c).collect();
            preds.sort_by(|a, b| b.score().total_cmp(&a.score()).then(a.id().cmp(&b.id())));
            *self.gt_count.entry(c).or_default() += gts.len() as u64;
            let ious: Vec<Vec<f64>> = preds
                .iter()
                .map(|p| gts.iter().map(|g| p.mask().iou(g.mask())).collect())
                .collect();
            let nt = self.cfg.iou_thresholds.len();
            let mut hits = vec![vec![false; nt]; preds.len()];
            for (t, &thr) in self.cfg.iou_thresholds.iter().enumerate() {
                let mut taken = vec![false; gts.len()];
                for (k, row) in ious.iter().enumerate() {
                    let best = row
                        .iter()
                        .enumerate()
                        .filter(|&(g, &iou)| !taken[g] && iou >= thr)
                        .fold(None, |best: Option<(usize, f64)>, (g, &iou)| match best {
                            Some((_, b)) if b >= iou => best,
                            _ => Some((g, iou)),
                        });
                    if let Some((g, _)) = best {
                        taken[g] = true;
                        hits[k][t] = true;
                    }
                }
            }
            let entry = self.detections.entry(c).or_default();
            for (p, h) in preds.iter().zip(hits) {
                entry.push((p.score(), h));
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ApAccumulator) -> Result<()> {
        if other.cfg != self.cfg || other.things != self.things {
            return Err(Error::InvalidValue("merging AP statistics with different settings".into()));
        }
        for (c, n) in &other.gt_count {
            *self.gt_count.entry(*c).or_default() += n;
        }
        for (c, d) in &other.detections {
            self.detections.entry(*c).or_default().extend(d.iter().cloned());
        }
        Ok(())
    }

    pub fn report(&self) -> ApReport {
        let mut per_class = Vec::new();
        for &c in &self.things {
            let n_gt = self.gt_count.get(&c).copied().unwrap_or(0);
            if n_gt == 0 {
                continue;
            }
            let mut dets: Vec<&(f64, Vec<bool>)> = self.detections.get(&c).map(|d| d.iter().collect()).unwrap_or_default();
            dets.sort_by(|a, b| b.0.total_cmp(&a.0));
            let nt = self.cfg.iou_thresholds.len();
            let ap = (0..nt)
                .map(|t| interpolated_ap(&dets.iter().map(|d| d.1[t]).collect::<Vec<_>>(), n_gt))
                .sum::<f64>()
                / nt as f64;
            per_class.push((c, ap));
        }
        let map = if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(|(_, a)| a).sum::<f64>() / per_class.len() as f64
        };
        ApReport { per_class, map }
    }
}

/// 101-point interpolated area under the precision/recall curve for
/// detections already sorted by descending score.
pub fn interpolated_ap(hits: &[bool], n_gt: u64) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0u64;
    let mut curve = Vec::with_capacity(hits.len());
    for (k, &h) in hits.iter().enumerate() {
        tp += h as u64;
        curve.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    // precision envelope: max precision at any recall >= r
    for k in (0..curve.len().saturating_sub(1)).rev() {
        curve[k].1 = curve[k].1.max(curve[k + 1].1);
    }
    (0..=100)
        .map(|i| {
            let r = i as f64 / 100.0;
            curve
                .iter()
                .find(|(rec, _)| *rec >= r - 1e-12)
                .map_or(0.0, |(_, p)| *p)
        })
        .sum::<f64>()
        / 101.0
}

/// Single-image convenience wrapper around [`ApAccumulator`].
pub fn average_precision(gt: &InstanceSet, pred: &InstanceSet, cfg: &ApConfig, catalog: &ClassCatalog) -> Result<ApReport> {
    let mut acc = ApAccumulator::new(cfg.clone(), catalog);
    acc.add_image(gt, pred)?;
    Ok(acc.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{InstanceRecord, Provenance};
    use crate::raster::Mask;

    fn catalog() -> ClassCatalog {
        ClassCatalog::from_pairs(&[("ground", false), ("sky", false), ("car", true), ("person", true)]).unwrap()
    }

    fn label(h: usize, w: usize, sem: Vec<u16>, inst: Vec<(u32, u16, Vec<usize>)>, prov: Provenance) -> PanopticLabel {
        let recs = inst
            .into_iter()
            .map(|(id, c, px)| {
                let score = if prov == Provenance::GroundTruth { 1.0 } else { 0.9 };
                InstanceRecord::new(id, c, score, Mask::from_fn(h, w, |i| px.contains(&i))).unwrap()
            })
            .collect();
        PanopticLabel::new(LabelMap2D::new(h, w, sem).unwrap(), InstanceSet::new(recs, prov).unwrap(), &catalog()).unwrap()
    }

    #[test]
    fn hand_case_iou_06_plus_fn() {
        // GT: two cars; pred: one car overlapping the first at IoU 0.6.
        // GT car A = pixels 0..5, pred = pixels 2..6 -> inter 3, union 5.
        let mut gsem = vec![0u16; 10];
        for i in 0..5 {
            gsem[i] = 2;
        }
        gsem[8] = 2;
        gsem[9] = 2;
        let gt = label(1, 10, gsem, vec![(1, 2, (0..5).collect()), (2, 2, vec![8, 9])], Provenance::GroundTruth);
        let mut psem = vec![0u16; 10];
        for i in 2..5 {
            psem[i] = 2;
        }
        psem[0] = IGNORE;
        psem[1] = IGNORE;
        let pred = label(1, 10, psem, vec![(7, 2, (2..5).collect())], Provenance::Predicted);
        let s = panoptic_quality(&gt, &pred, &catalog()).unwrap();
        let car = s.per_class[2];
        assert_eq!((car.tp, car.fp, car.fn_), (1, 0, 1));
        assert!((car.sq() - 0.6).abs() < 1e-12);
        assert!((car.rq() - 2.0 / 3.0).abs() < 1e-12);
        assert!((car.pq() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        let gt = label(2, 2, vec![0, 1, 2, 2], vec![(1, 2, vec![2, 3])], Provenance::GroundTruth);
        let s = panoptic_quality(&gt, &gt, &catalog()).unwrap();
        assert_eq!(s.mpq(), 1.0);
        assert_eq!(s.msq(), 1.0);
        let other = label(2, 2, vec![1, 0, 0, 1], vec![], Provenance::Predicted);
        assert_eq!(panoptic_quality(&gt, &other, &catalog()).unwrap().mpq(), 0.0);
    }

    #[test]
    fn gt_ignore_pixels_do_not_count() {
        let gt = label(1, 4, vec![0, 0, IGNORE, IGNORE], vec![], Provenance::GroundTruth);
        let pred = label(1, 4, vec![0, 0, 1, 1], vec![], Provenance::Predicted);
        let s = panoptic_quality(&gt, &pred, &catalog()).unwrap();
        assert_eq!(s.mpq(), 1.0);
        assert!(!s.per_class[1].is_present());
    }

    #[test]
    fn merge_adds_tallies() {
        let gt = label(1, 2, vec![0, 1], vec![], Provenance::GroundTruth);
        let a = panoptic_quality(&gt, &gt, &catalog()).unwrap();
        let mut b = a.clone();
        b.merge(&a).unwrap();
        assert_eq!(b.per_class[0].tp, 2);
        assert!(b.merge(&PqStats::new(2)).is_err());
    }

    #[test]
    fn miou_cases() {
        let a = LabelMap2D::new(1, 4, vec![0, 1, 0, 1]).unwrap();
        assert_eq!(mean_iou(&a, &a, 3).unwrap().miou(), 1.0);
        let b = LabelMap2D::new(1, 4, vec![1, 0, 1, 0]).unwrap();
        let s = mean_iou(&a, &b, 3).unwrap();
        assert_eq!(s.per_class(), vec![Some(0.0), Some(0.0), None]);
    }

    #[test]
    fn miou_matches_set_counting() {
        let mut rng = crate::rng::SeededRng::new(3);
        for _ in 0..50 {
            let g: Vec<u16> = (0..64).map(|_| rng.below(3) as u16).collect();
            let p: Vec<u16> = (0..64).map(|_| rng.below(3) as u16).collect();
            let s = mean_iou(&LabelMap2D::new(8, 8, g.clone()).unwrap(), &LabelMap2D::new(8, 8, p.clone()).unwrap(), 3).unwrap();
            let mut ious = Vec::new();
            for c in 0..3u16 {
                let gs: std::collections::BTreeSet<usize> = (0..64).filter(|&i| g[i] == c).collect();
                let ps: std::collections::BTreeSet<usize> = (0..64).filter(|&i| p[i] == c).collect();
                let u = gs.union(&ps).count();
                if u > 0 {
                    ious.push(gs.intersection(&ps).count() as f64 / u as f64);
                }
            }
            let expect = ious.iter().sum::<f64>() / ious.len() as f64;
            assert!((s.miou() - expect).abs() < 1e-12);
        }
    }

    fn inst(h: usize, w: usize, items: &[(u32, u16, f64, &[usize])], prov: Provenance) -> InstanceSet {
        InstanceSet::new(
            items
                .iter()
                .map(|&(id, c, s, px)| InstanceRecord::new(id, c, s, Mask::from_fn(h, w, |i| px.contains(&i))).unwrap())
                .collect(),
            prov,
        )
        .unwrap()
    }

    #[test]
    fn ap_trivial_cases() {
        let gt = inst(2, 4, &[(1, 2, 1.0, &[0, 1]), (2, 3, 1.0, &[4, 5, 6])], Provenance::GroundTruth);
        let same = InstanceSet::new(gt.records().to_vec(), Provenance::Predicted).unwrap();
        let r = average_precision(&gt, &same, &ApConfig::default(), &catalog()).unwrap();
        assert!((r.map - 1.0).abs() < 1e-12);
        let none = InstanceSet::empty(Provenance::Predicted);
        assert_eq!(average_precision(&gt, &none, &ApConfig::default(), &catalog()).unwrap().map, 0.0);
    }

    #[test]
    fn ap_two_gt_three_preds_single_threshold() {
        // preds by score: hit, miss, hit -> precision 1, 1/2, 2/3 at recall 1/2, 1/2, 1
        let gt = inst(1, 8, &[(1, 2, 1.0, &[0, 1]), (2, 2, 1.0, &[4, 5])], Provenance::GroundTruth);
        let pred = inst(1, 8, &[(1, 2, 0.9, &[0, 1]), (2, 2, 0.8, &[7]), (3, 2, 0.7, &[4, 5])], Provenance::Predicted);
        let cfg = ApConfig::new(vec![0.5]).unwrap();
        let r = average_precision(&gt, &pred, &cfg, &catalog()).unwrap();
        let expect = (51.0 * 1.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((r.map - expect).abs() < 1e-12, "{} vs {}", r.map, expect);
    }

    #[test]
    fn ap_config_validation() {
        assert!(ApConfig::new(vec![0.5, 0.5]).is_err());
        assert!(ApConfig::new(vec![0.0]).is_err());
        assert!(ApConfig::new(vec![]).is_err());
        assert_eq!(ApConfig::default().thresholds().len(), 10);
    }

    #[test]
    fn spurious_prediction_never_helps() {
        let gt = inst(1, 8, &[(1, 2, 1.0, &[0, 1, 2])], Provenance::GroundTruth);
        let pred = inst(1, 8, &[(1, 2, 0.9, &[0, 1, 2])], Provenance::Predicted);
        let extra = inst(1, 8, &[(1, 2, 0.9, &[0, 1, 2]), (2, 2, 0.95, &[6, 7])], Provenance::Predicted);
        let a = average_precision(&gt, &pred, &ApConfig::default(), &catalog()).unwrap().map;
        let b = average_precision(&gt, &extra, &ApConfig::default(), &catalog()).unwrap().map;
        assert!(b <= a);
    }
}

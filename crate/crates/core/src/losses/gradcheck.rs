//! Central finite-difference checks of every analytic loss gradient on
//! randomly drawn inputs.

use std::time::Instant;

use serde::Serialize;

use super::*;
use crate::cda::{similarity_backward, similarity_map, ClassEmbeddingMatrix};
use crate::instance::{InstanceSet, Provenance};
use crate::raster::ImageRGB;
use crate::rng::SeededRng;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
const GRAD_FLOOR: f64 = 1e-6;
/// Minimum distance of L1 arguments from their kink.
const KINK_MARGIN: f64 = 0.05;

pub const LOSS_NAMES: [&str; 8] = [
    "semantic_ce",
    "mixed_semantic_ce",
    "cda",
    "cda_features",
    "rpn",
    "refinement",
    "mask_bce",
    "feature_distance",
];

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub loss: String,
    pub trials: usize,
    pub parameters_checked: usize,
    pub max_rel_error: f64,
    pub worst_trial: usize,
    pub seconds: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest elementwise `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR))
        .fold(0.0, f64::max)
}

/// One trial: flat parameters, the analytic gradient, and the value function.
struct Trial {
    x: Vec<f64>,
    analytic: Vec<f64>,
    value: Box<dyn Fn(&[f64]) -> f64>,
}

fn gauss_vec(rng: &mut SeededRng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.normal()).collect()
}

fn random_labels(rng: &mut SeededRng, h: usize, w: usize, c: usize, ignore_rate: f64) -> LabelMap2D {
    let mut v: Vec<u16> = (0..h * w)
        .map(|_| {
            if rng.next_f64() < ignore_rate {
                IGNORE
            } else {
                rng.below(c as u64) as u16
            }
        })
        .collect();
    if v.iter().all(|&x| x == IGNORE) {
        v[0] = 0;
    }
    LabelMap2D::new(h, w, v).unwrap()
}

fn dims(rng: &mut SeededRng) -> (usize, usize, usize) {
    (
        rng.range_inclusive(1, 4) as usize,
        rng.range_inclusive(1, 4) as usize,
        rng.range_inclusive(2, 5) as usize,
    )
}

/// A prediction at least [`KINK_MARGIN`] away from `gt` in every coordinate.
fn offset_near(rng: &mut SeededRng, gt: &BoxOffset) -> BoxOffset {
    let g = gt.as_array();
    BoxOffset::from_array(std::array::from_fn(|i| {
        let d = rng.uniform(KINK_MARGIN, 1.0);
        g[i] + if rng.next_u64() & 1 == 0 { d } else { -d }
    }))
}

fn offset_pair(rng: &mut SeededRng) -> (BoxOffset, BoxOffset) {
    let gt = BoxOffset::from_array(std::array::from_fn(|_| rng.normal()));
    (offset_near(rng, &gt), gt)
}

fn trial(name: &str, rng: &mut SeededRng) -> Result<Trial> {
    Ok(match name {
        "semantic_ce" | "cda" => {
            let (h, w, c) = dims(rng);
            let labels = random_labels(rng, h, w, c, 0.2);
            let x = gauss_vec(rng, h * w * c, 2.0);
            let is_cda = name == "cda";
            let eval = move |x: &[f64]| {
                let z = LogitVolume::new(h, w, c, x.to_vec()).unwrap();
                if is_cda {
                    cda_loss(&z, &labels).unwrap()
                } else {
                    semantic_ce(&z, &labels).unwrap()
                }
            };
            let analytic = eval(&x).grad;
            Trial {
                x,
                analytic,
                value: Box::new(move |x| eval(x).value),
            }
        }
        "mixed_semantic_ce" => {
            let (h, w, c) = dims(rng);
            let n = h * w;
            let origin: Vec<Origin> = (0..n)
                .map(|_| if rng.next_u64() & 1 == 0 { Origin::Source } else { Origin::Target })
                .collect();
            let pixel_confidence = origin
                .iter()
                .map(|o| if *o == Origin::Source { 1.0 } else { rng.next_f64() })
                .collect();
            let sample = MixedSample {
                image: ImageRGB::filled(h, w, [0; 3]),
                semantic: random_labels(rng, h, w, c, 0.2),
                origin,
                instance_supervision: InstanceSet::empty(Provenance::Predicted),
                pixel_confidence,
            };
            let x = gauss_vec(rng, n * c, 2.0);
            let eval = move |x: &[f64]| {
                mixed_semantic_ce(&LogitVolume::new(h, w, c, x.to_vec()).unwrap(), &sample).unwrap()
            };
            let analytic = eval(&x).grad;
            Trial {
                x,
                analytic,
                value: Box::new(move |x| eval(x).value),
            }
        }
        "cda_features" => {
            let (h, w, c) = dims(rng);
            let d = c + rng.below(3) as usize;
            let normalize = rng.next_u64() & 1 == 0;
            let labels = random_labels(rng, h, w, c, 0.2);
            let mut rows = gauss_vec(rng, c * d, 1.0);
            for r in rows.chunks_mut(d) {
                let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                r.iter_mut().for_each(|v| *v /= n);
            }
            let anchors = ClassEmbeddingMatrix::new(c, d, rows, true)?;
            let x = gauss_vec(rng, h * w * d, 1.0);
            let fwd = move |x: &[f64]| -> (f64, Vec<f64>) {
                let f = FeatureMap::new(h, w, d, x.to_vec()).unwrap();
                let sim = similarity_map(&f, &anchors, normalize).unwrap();
                let out = cda_loss(&sim, &labels).unwrap();
                let g = similarity_backward(&f, &anchors, normalize, &out.grad).unwrap();
                (out.value, g)
            };
            let analytic = fwd(&x).1;
            Trial {
                x,
                analytic,
                value: Box::new(move |x| fwd(x).0),
            }
        }
        "rpn" => {
            let a = rng.range_inclusive(1, 8) as usize;
            let obj_gt: Vec<bool> = (0..a).map(|_| rng.next_u64() & 1 == 0).collect();
            let positives: Vec<bool> = obj_gt.iter().map(|&g| g || rng.next_f64() < 0.2).collect();
            let (pred, gt): (Vec<_>, Vec<_>) = (0..a).map(|_| offset_pair(rng)).unzip();
            let lambda = rng.uniform(0.5, 2.0);
            let mut x = gauss_vec(rng, a, 3.0);
            x.extend(pred.iter().flat_map(|b| b.as_array()));
            let eval = move |x: &[f64]| {
                let boxes: Vec<BoxOffset> = x[a..]
                    .chunks(4)
                    .map(|c| BoxOffset::from_array([c[0], c[1], c[2], c[3]]))
                    .collect();
                rpn_loss(&x[..a], &obj_gt, &boxes, &gt, &positives, lambda).unwrap()
            };
            let out = eval(&x);
            let mut analytic = out.grad.objectness;
            analytic.extend(out.grad.boxes.iter().flat_map(|b| b.as_array()));
            Trial {
                x,
                analytic,
                value: Box::new(move |x| eval(x).value),
            }
        }
        "refinement" => {
            let r = rng.range_inclusive(1, 5) as usize;
            let things = rng.range_inclusive(1, 4) as usize;
            let class_gt: Vec<usize> = (0..r).map(|_| rng.below(things as u64 + 1) as usize).collect();
            let mut gt = Vec::new();
            let mut pred = Vec::new();
            for _ in 0..r {
                let (_, g) = offset_pair(rng);
                for _ in 0..things {
                    pred.push(offset_near(rng, &g));
                }
                gt.push(g);
            }
            let lambda = rng.uniform(0.5, 2.0);
            let nl = r * (things + 1);
            let mut x = gauss_vec(rng, nl, 2.0);
            x.extend(pred.iter().flat_map(|b| b.as_array()));
            let eval = move |x: &[f64]| {
                let boxes: Vec<BoxOffset> = x[nl..]
                    .chunks(4)
                    .map(|c| BoxOffset::from_array([c[0], c[1], c[2], c[3]]))
                    .collect();
                refinement_loss(&x[..nl], &class_gt, &boxes, &gt, things, lambda).unwrap()
            };
            let out = eval(&x);
            let mut analytic = out.grad.class_logits;
            analytic.extend(out.grad.boxes.iter().flat_map(|b| b.as_array()));
            Trial {
                x,
                analytic,
                value: Box::new(move |x| eval(x).value),
            }
        }
        "mask_bce" => {
            let (h, w, _) = dims(rng);
            let things = rng.range_inclusive(1, 3) as usize;
            let cls = rng.below(things as u64) as usize;
            let bits: Vec<bool> = (0..h * w).map(|_| rng.next_u64() & 1 == 0).collect();
            let mask = Mask::new(h, w, bits)?;
            let x = gauss_vec(rng, things * h * w, 3.0);
            let eval = move |x: &[f64]| mask_bce(x, &mask, cls, things).unwrap();
            let analytic = eval(&x).grad;
            Trial {
                x,
                analytic,
                value: Box::new(move |x| eval(x).value),
            }
        }
        "feature_distance" => {
            let (h, w, d) = dims(rng);
            let mask = Mask::from_fn(h, w, |_| true).and_not(&Mask::from_fn(h, w, |i| i % 3 == 1));
            let anchor = FeatureMap::new(h, w, d, gauss_vec(rng, h * w * d, 1.0))?;
            let x = gauss_vec(rng, h * w * d, 1.0);
            let eval = move |x: &[f64]| {
                feature_distance(&anchor, &FeatureMap::new(h, w, d, x.to_vec()).unwrap(), &mask).unwrap()
            };
            let analytic = eval(&x).grad;
            Trial {
                x,
                analytic,
                value: Box::new(move |x| eval(x).value),
            }
        }
        other => return Err(Error::InvalidValue(format!("unknown loss '{other}'"))),
    })
}

/// Runs `trials` random checks of one loss.
pub fn check_loss(name: &str, trials: usize, seed: u64) -> Result<GradCheckReport> {
    let start = Instant::now();
    let mut worst = (0.0f64, 0usize);
    let mut checked = 0;
    for t in 0..trials {
        let mut rng = SeededRng::derive(seed, t as u64);
        let tr = trial(name, &mut rng)?;
        let numeric = central_difference(&tr.value, &tr.x, FD_STEP);
        let err = relative_error(&tr.analytic, &numeric);
        checked += tr.x.len();
        if err > worst.0 || err.is_nan() {
            worst = (if err.is_nan() { f64::INFINITY } else { err }, t);
        }
    }
    Ok(GradCheckReport {
        loss: name.to_string(),
        trials,
        parameters_checked: checked,
        max_rel_error: worst.0,
        worst_trial: worst.1,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn check_all(trials: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    LOSS_NAMES.iter().map(|n| check_loss(n, trials, seed)).collect()
}

//! The toy segmentation model: a fixed per-pixel feature vector, a learned
//! linear projection to a decoder embedding, and a linear softmax classifier.
//! Instances are connected components of thing-class argmax regions.

use crate::catalog::ClassCatalog;
use crate::components::connected_components;
use crate::error::{shape_err, Error, Result};
use crate::instance::{InstanceRecord, InstanceSet, Provenance};
use crate::losses::LossOutput;
use crate::pseudo::argmax_f64;
use crate::raster::{ImageRGB, Mask};
use crate::rng::SeededRng;
use crate::volume::{log_sum_exp, softmax, FeatureMap, LogitVolume, ParamVector, ProbVolume};

/// RGB, normalized (y, x), 3x3 local mean RGB, constant.
pub const INPUT_FEATURES: usize = 9;

/// Per-pixel input features, centered around zero.
pub fn pixel_features(image: &ImageRGB) -> Vec<f64> {
    let (h, w) = image.dims();
    let mut out = Vec::with_capacity(h * w * INPUT_FEATURES);
    let scale = |v: u8| v as f64 / 127.5 - 1.0;
    for p in 0..h * w {
        let (y, x) = (p / w, p % w);
        let px = image.pixel(p);
        let mut sum = [0.0; 3];
        let mut n = 0.0;
        for yy in y.saturating_sub(1)..(y + 2).min(h) {
            for xx in x.saturating_sub(1)..(x + 2).min(w) {
                let q = image.pixel(yy * w + xx);
                for k in 0..3 {
                    sum[k] += scale(q[k]);
                }
                n += 1.0;
            }
        }
        out.extend(px.map(scale));
        out.push(y as f64 / (h.max(2) - 1) as f64 - 0.5);
        out.push(x as f64 / (w.max(2) - 1) as f64 - 0.5);
        out.extend(sum.map(|s| s / n));
        out.push(1.0);
    }
    out
}

/// Forward pass intermediates for one image.
#[derive(Debug, Clone)]
pub struct Activations {
    pub inputs: Vec<f64>,
    pub embedding: FeatureMap,
    pub logits: LogitVolume,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    classes: usize,
    hidden: usize,
    params: ParamVector,
}

impl ToyModel {
    pub fn param_count(classes: usize, hidden: usize) -> usize {
        hidden * INPUT_FEATURES + classes * hidden + classes
    }

    pub fn new(classes: usize, hidden: usize, params: ParamVector) -> Result<Self> {
        if classes < 2 || hidden == 0 {
            return Err(Error::InvalidValue("toy model needs at least 2 classes and 1 hidden unit".into()));
        }
        if params.len() != Self::param_count(classes, hidden) {
            return shape_err(format!(
                "{} parameters for {classes} classes and {hidden} hidden units",
                params.len()
            ));
        }
        Ok(Self { classes, hidden, params })
    }

    /// Small Gaussian initialization, deterministic in `seed`.
    pub fn init(classes: usize, hidden: usize, seed: u64) -> Result<Self> {
        let mut rng = SeededRng::new(seed);
        let n = Self::param_count(classes, hidden);
        let proj = hidden * INPUT_FEATURES;
        let data = (0..n)
            .map(|i| {
                if i < proj {
                    0.5 * rng.normal()
                } else if i < proj + classes * hidden {
                    0.3 * rng.normal()
                } else {
                    0.0
                }
            })
            .collect();
        Self::new(classes, hidden, ParamVector::new(data)?)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn set_params(&mut self, params: ParamVector) -> Result<()> {
        if params.len() != self.params.len() {
            return shape_err("parameter vector length changed");
        }
        self.params = params;
        Ok(())
    }

    fn split(&self) -> (&[f64], &[f64], &[f64]) {
        let p = self.params.as_slice();
        let a = self.hidden * INPUT_FEATURES;
        let b = a + self.classes * self.hidden;
        (&p[..a], &p[a..b], &p[b..])
    }

    pub fn forward(&self, image: &ImageRGB) -> Result<Activations> {
        let (h, w) = image.dims();
        let inputs = pixel_features(image);
        let (proj, cls, bias) = self.split();
        let (d, c) = (self.hidden, self.classes);
        let mut emb = vec![0.0; h * w * d];
        let mut logits = vec![0.0; h * w * c];
        for p in 0..h * w {
            let f = &inputs[p * INPUT_FEATURES..(p + 1) * INPUT_FEATURES];
            let g = &mut emb[p * d..(p + 1) * d];
            for (i, gi) in g.iter_mut().enumerate() {
                *gi = proj[i * INPUT_FEATURES..(i + 1) * INPUT_FEATURES].iter().zip(f).map(|(a, b)| a * b).sum();
            }
            for k in 0..c {
                logits[p * c + k] = bias[k] + cls[k * d..(k + 1) * d].iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        Ok(Activations {
            inputs,
            embedding: FeatureMap::new(h, w, d, emb)?,
            logits: LogitVolume::new(h, w, c, logits)?,
        })
    }

    pub fn predict(&self, image: &ImageRGB) -> Result<ProbVolume> {
        Ok(ProbVolume::from_logits(&self.forward(image)?.logits))
    }

    /// Parameter gradient from `dL/dlogits` and an extra `dL/dembedding`.
    pub fn backward(&self, act: &Activations, grad_logits: &[f64], grad_embedding: Option<&[f64]>) -> Result<Vec<f64>> {
        let (d, c) = (self.hidden, self.classes);
        let n = act.logits.height() * act.logits.width();
        if grad_logits.len() != n * c || grad_embedding.is_some_and(|g| g.len() != n * d) {
            return shape_err("gradient does not match activations");
        }
        let (_, cls, _) = self.split();
        let a = d * INPUT_FEATURES;
        let mut grad = vec![0.0; self.params.len()];
        let (g_proj, rest) = grad.split_at_mut(a);
        let (g_cls, g_bias) = rest.split_at_mut(c * d);
        let emb = act.embedding.data();
        let mut dg = vec![0.0; d];
        for p in 0..n {
            let dz = &grad_logits[p * c..(p + 1) * c];
            let g = &emb[p * d..(p + 1) * d];
            match grad_embedding {
                Some(ge) => dg.copy_from_slice(&ge[p * d..(p + 1) * d]),
                None => dg.fill(0.0),
            }
            for k in 0..c {
                if dz[k] == 0.0 {
                    continue;
                }
                g_bias[k] += dz[k];
                for i in 0..d {
                    g_cls[k * d + i] += dz[k] * g[i];
                    dg[i] += dz[k] * cls[k * d + i];
                }
            }
            let f = &act.inputs[p * INPUT_FEATURES..(p + 1) * INPUT_FEATURES];
            for i in 0..d {
                if dg[i] == 0.0 {
                    continue;
                }
                for (j, fj) in f.iter().enumerate() {
                    g_proj[i * INPUT_FEATURES + j] += dg[i] * fj;
                }
            }
        }
        Ok(grad)
    }
}

/// Connected components of each thing class's argmax region with at least
/// `min_area` pixels, scored by the mean probability of that class over the
/// component. Ids follow class order, then raster order.
pub fn extract_instances(probs: &ProbVolume, catalog: &ClassCatalog, min_area: usize) -> Result<InstanceSet> {
    let (h, w) = probs.dims();
    if probs.classes() != catalog.len() {
        return shape_err("probability volume and catalog disagree on class count");
    }
    let arg: Vec<usize> = probs
        .pixels()
        .map(|px| argmax_f64(&px.iter().map(|&v| v as f64).collect::<Vec<_>>()).0)
        .collect();
    let mut records = Vec::new();
    for c in catalog.thing_classes() {
        let region = Mask::from_fn(h, w, |p| arg[p] == c as usize);
        for comp in connected_components(&region) {
            if comp.count() < min_area.max(1) {
                continue;
            }
            let score = comp.ones().map(|p| probs.pixel(p)[c as usize] as f64).sum::<f64>() / comp.count() as f64;
            records.push(InstanceRecord::new(records.len() as u32 + 1, c, score.clamp(0.0, 1.0), comp)?);
        }
    }
    InstanceSet::new(records, Provenance::Predicted)
}

/// Instance-branch loss of the toy model. Pixels of a supervision record are
/// pushed toward its class with weight equal to its score; every other pixel
/// is background and pushed toward the stuff classes jointly. The sum is
/// divided by the pixel count.
pub fn toy_instance_loss(logits: &LogitVolume, supervision: &InstanceSet, catalog: &ClassCatalog) -> Result<LossOutput> {
    let (h, w) = logits.dims();
    let c = logits.classes();
    if c != catalog.len() {
        return shape_err("logit classes differ from the catalog");
    }
    let n = h * w;
    let mut owner: Vec<Option<(u16, f64)>> = vec![None; n];
    for r in supervision.records() {
        if r.mask().dims() != (h, w) {
            return shape_err("supervision mask size");
        }
        for p in r.mask().ones() {
            owner[p] = Some((r.class_id(), r.score()));
        }
    }
    let stuff: Vec<bool> = (0..c).map(|k| !catalog.is_thing(k as u16)).collect();
    let mut value = 0.0;
    let mut grad = vec![0.0; n * c];
    for p in 0..n {
        let z = logits.pixel(p);
        let probs = softmax(z);
        let g = &mut grad[p * c..(p + 1) * c];
        match owner[p] {
            Some((cls, weight)) => {
                value += weight * (log_sum_exp(z) - z[cls as usize]);
                for k in 0..c {
                    g[k] = weight * (probs[k] - if k == cls as usize { 1.0 } else { 0.0 }) / n as f64;
                }
            }
            None => {
                let s: f64 = (0..c).filter(|&k| stuff[k]).map(|k| probs[k]).sum();
                let s = s.max(crate::losses::PROB_CLAMP);
                value -= s.ln();
                for k in 0..c {
                    g[k] = (probs[k] - if stuff[k] { probs[k] / s } else { 0.0 }) / n as f64;
                }
            }
        }
    }
    Ok(LossOutput {
        value: value / n as f64,
        grad,
    })
}

/// `alpha * teacher + (1 - alpha) * student`, elementwise.
pub fn ema_update(teacher: &ParamVector, student: &ParamVector, alpha: f64) -> Result<ParamVector> {
    if teacher.len() != student.len() {
        return shape_err(format!("teacher has {} weights, student {}", teacher.len(), student.len()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidValue(format!("EMA coefficient {alpha} outside [0,1]")));
    }
    ParamVector::new(
        teacher
            .as_slice()
            .iter()
            .zip(student.as_slice())
            .map(|(t, s)| alpha * t + (1.0 - alpha) * s)
            .collect(),
    )
}

/// Adam with the usual bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

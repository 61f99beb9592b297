//! Dense per-pixel vectors: class distributions, logits, features, weights.

use crate::error::{shape_err, Error, Result};

const PROB_SUM_TOL: f64 = 1e-6;

/// Per-pixel class distribution, row-major and channel-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVolume {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f32>,
}

impl ProbVolume {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f32>) -> Result<Self> {
        if classes == 0 || height * width * classes != data.len() {
            return shape_err(format!(
                "probability volume {height}x{width}x{classes} vs {} values",
                data.len()
            ));
        }
        for (p, px) in data.chunks(classes).enumerate() {
            if px.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidValue(format!("pixel {p} has a negative or non-finite probability")));
            }
            let s: f64 = px.iter().map(|&v| v as f64).sum();
            if (s - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::InvalidValue(format!("pixel {p} probabilities sum to {s}")));
            }
        }
        Ok(Self {
            height,
            width,
            classes,
            data,
        })
    }

    /// Softmax of `logits`, rounded to f32 and renormalized so each pixel
    /// sums to 1 within tolerance.
    pub fn from_logits(logits: &LogitVolume) -> Self {
        let c = logits.classes();
        let mut data = Vec::with_capacity(logits.data().len());
        for px in logits.data().chunks(c) {
            for p in softmax(px) {
                data.push(p as f32);
            }
        }
        Self {
            height: logits.height(),
            width: logits.width(),
            classes: c,
            data,
        }
    }

    /// One-hot volume; IGNORE pixels become uniform.
    pub fn one_hot(labels: &crate::raster::LabelMap2D, classes: usize) -> Result<Self> {
        labels.validate(classes)?;
        let mut data = vec![0.0f32; labels.len() * classes];
        for (p, &v) in labels.values().iter().enumerate() {
            let px = &mut data[p * classes..(p + 1) * classes];
            if v == crate::raster::IGNORE {
                px.fill(1.0 / classes as f32);
            } else {
                px[v as usize] = 1.0;
            }
        }
        Ok(Self {
            height: labels.height(),
            width: labels.width(),
            classes,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, p: usize) -> &[f32] {
        &self.data[p * self.classes..(p + 1) * self.classes]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.classes)
    }
}

/// Unnormalized per-pixel scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVolume {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
}

impl LogitVolume {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if classes == 0 || height * width * classes != data.len() {
            return shape_err(format!(
                "logit volume {height}x{width}x{classes} vs {} values",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite logit".into()));
        }
        Ok(Self {
            height,
            width,
            classes,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.classes..(p + 1) * self.classes]
    }

    /// Per-pixel softmax (kept in f64).
    pub fn softmax(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for px in self.data.chunks(self.classes) {
            out.extend(softmax(px));
        }
        out
    }
}

/// Dense feature map of `dim` channels per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || height * width * dim != data.len() {
            return shape_err(format!(
                "feature map {height}x{width}x{dim} vs {} values",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite feature".into()));
        }
        Ok(Self {
            height,
            width,
            dim,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }
}

/// Flat model weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite parameter".into()));
        }
        Ok(Self(data))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn max_abs_diff(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn l2_distance(&self, other: &ParamVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Numerically stable softmax of one pixel.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// `log(sum(exp(z)))` without overflow.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

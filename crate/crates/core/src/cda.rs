//! Language-anchored alignment: class-mean text embeddings and per-pixel
//! similarity maps against decoder features. The loss lives in
//! [`crate::losses::cda_loss`].

use crate::error::{shape_err, Error, Result};
use crate::rng::SeededRng;
use crate::volume::{FeatureMap, LogitVolume};

const UNIT_NORM_TOL: f64 = 1e-6;

/// `classes × prompts × dim` text embeddings, class-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbeddingBank {
    classes: usize,
    prompts: usize,
    dim: usize,
    data: Vec<f32>,
}

impl PromptEmbeddingBank {
    pub fn new(classes: usize, prompts: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if prompts == 0 || dim == 0 || classes == 0 {
            return Err(Error::InvalidValue("bank dimensions must be positive".into()));
        }
        if classes * prompts * dim != data.len() {
            return shape_err(format!(
                "bank {classes}x{prompts}x{dim} vs {} values",
                data.len()
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite embedding".into()));
        }
        Ok(Self {
            classes,
            prompts,
            dim,
            data,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn prompts(&self) -> usize {
        self.prompts
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn prompt(&self, class: usize, prompt: usize) -> &[f32] {
        let o = (class * self.prompts + prompt) * self.dim;
        &self.data[o..o + self.dim]
    }
}

/// One anchor row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddingMatrix {
    classes: usize,
    dim: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl ClassEmbeddingMatrix {
    pub fn new(classes: usize, dim: usize, data: Vec<f64>, normalized: bool) -> Result<Self> {
        if classes * dim != data.len() || dim == 0 {
            return shape_err(format!("anchors {classes}x{dim} vs {} values", data.len()));
        }
        let m = Self {
            classes,
            dim,
            data,
            normalized,
        };
        if normalized {
            for c in 0..classes {
                let n = l2(m.row(c));
                if (n - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::InvalidValue(format!("anchor row {c} has norm {n}")));
                }
            }
        }
        Ok(m)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.dim..(c + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Rows reordered so that new row `k` is old row `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let data = order.iter().flat_map(|&c| self.row(c).to_vec()).collect();
        Self {
            classes: order.len(),
            dim: self.dim,
            data,
            normalized: self.normalized,
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean over each class's prompts, optionally scaled to unit length after pooling.
pub fn class_mean_embeddings(bank: &PromptEmbeddingBank, normalize: bool) -> Result<ClassEmbeddingMatrix> {
    let (c, p, d) = (bank.classes(), bank.prompts(), bank.dim());
    let mut data = vec![0.0f64; c * d];
    for class in 0..c {
        let row = &mut data[class * d..(class + 1) * d];
        for prompt in 0..p {
            for (acc, &v) in row.iter_mut().zip(bank.prompt(class, prompt)) {
                *acc += v as f64;
            }
        }
        for v in row.iter_mut() {
            *v /= p as f64;
        }
        if normalize {
            let n = l2(row);
            if n == 0.0 {
                return Err(Error::InvalidValue(format!("class {class} pools to a zero vector")));
            }
            for v in row.iter_mut() {
                *v /= n;
            }
        }
    }
    ClassEmbeddingMatrix::new(c, d, data, normalize)
}

/// `sim[h,w,c] = <f(h,w), anchor_c>`; with `normalize_features` the pixel
/// vector is L2-normalized first (zero vectors stay zero).
pub fn similarity_map(features: &FeatureMap, anchors: &ClassEmbeddingMatrix, normalize_features: bool) -> Result<LogitVolume> {
    if features.dim() != anchors.dim() {
        return shape_err(format!(
            "feature dim {} vs anchor dim {}",
            features.dim(),
            anchors.dim()
        ));
    }
    let c = anchors.classes();
    let n = features.height() * features.width();
    let mut out = Vec::with_capacity(n * c);
    for p in 0..n {
        let f = features.pixel(p);
        let scale = if normalize_features {
            let norm = l2(f);
            if norm > 0.0 {
                1.0 / norm
            } else {
                0.0
            }
        } else {
            1.0
        };
        for k in 0..c {
            out.push(scale * dot(f, anchors.row(k)));
        }
    }
    LogitVolume::new(features.height(), features.width(), c, out)
}

/// Back-propagates `dL/dsim` to `dL/df` through [`similarity_map`].
pub fn similarity_backward(
    features: &FeatureMap,
    anchors: &ClassEmbeddingMatrix,
    normalize_features: bool,
    grad_sim: &[f64],
) -> Result<Vec<f64>> {
    let (c, d) = (anchors.classes(), anchors.dim());
    let n = features.height() * features.width();
    if grad_sim.len() != n * c || features.dim() != d {
        return shape_err("similarity gradient shape");
    }
    let mut out = vec![0.0; n * d];
    for p in 0..n {
        let f = features.pixel(p);
        let g = &grad_sim[p * c..(p + 1) * c];
        // u = Σ_c g_c a_c
        let mut u = vec![0.0; d];
        for (k, &gk) in g.iter().enumerate() {
            for (ui, &a) in u.iter_mut().zip(anchors.row(k)) {
                *ui += gk * a;
            }
        }
        let dst = &mut out[p * d..(p + 1) * d];
        if normalize_features {
            let norm = l2(f);
            if norm == 0.0 {
                continue;
            }
            // d(f/|f|)/df = (I - f̂ f̂ᵀ)/|f|
            let fu = dot(f, &u) / (norm * norm);
            for i in 0..d {
                dst[i] = (u[i] - f[i] * fu) / norm;
            }
        } else {
            dst.copy_from_slice(&u);
        }
    }
    Ok(out)
}

/// Deterministic stand-in for real text embeddings: `prompts` noisy copies of
/// `classes` mutually orthogonal random directions in `dim` dimensions.
pub fn pseudo_embedding_bank(classes: usize, prompts: usize, dim: usize, seed: u64) -> Result<PromptEmbeddingBank> {
    if classes > dim {
        return Err(Error::InvalidValue(format!(
            "cannot orthogonalize {classes} directions in {dim} dimensions"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while basis.len() < classes {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for b in &basis {
            let proj = dot(&v, b);
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let n = l2(&v);
        if n < 1e-6 {
            continue;
        }
        basis.push(v.into_iter().map(|x| x / n).collect());
    }
    let mut data = Vec::with_capacity(classes * prompts * dim);
    for b in &basis {
        for _ in 0..prompts {
            for &x in b {
                data.push((x + 0.05 * rng.normal()) as f32);
            }
        }
    }
    PromptEmbeddingBank::new(classes, prompts, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_prompt_mean_is_identity() {
        let bank = PromptEmbeddingBank::new(2, 1, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
        let m = class_mean_embeddings(&bank, false).unwrap();
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(m.row(1), &[-1.0, 0.5, 0.0]);
    }

    #[test]
    fn equal_prompts_pool_to_themselves() {
        let v = [0.5f32, -0.25, 2.0];
        let data: Vec<f32> = (0..4).flat_map(|_| v).collect();
        let bank = PromptEmbeddingBank::new(1, 4, 3, data).unwrap();
        let m = class_mean_embeddings(&bank, false).unwrap();
        assert_eq!(m.row(0), &[0.5, -0.25, 2.0]);
    }

    #[test]
    fn zero_row_cannot_normalize() {
        let bank = PromptEmbeddingBank::new(1, 2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap();
        assert!(class_mean_embeddings(&bank, true).is_err());
        assert!(class_mean_embeddings(&bank, false).is_ok());
    }

    #[test]
    fn zero_features_give_zero_similarity() {
        let bank = pseudo_embedding_bank(3, 2, 4, 1).unwrap();
        let a = class_mean_embeddings(&bank, true).unwrap();
        let f = FeatureMap::new(2, 2, 4, vec![0.0; 16]).unwrap();
        for norm in [false, true] {
            let s = similarity_map(&f, &a, norm).unwrap();
            assert!(s.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn orthonormal_anchor_hit_is_one_hot() {
        let a = ClassEmbeddingMatrix::new(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], true).unwrap();
        let f = FeatureMap::new(1, 1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        let s = similarity_map(&f, &a, false).unwrap();
        assert_eq!(s.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let a = ClassEmbeddingMatrix::new(1, 2, vec![1.0, 0.0], true).unwrap();
        let f = FeatureMap::new(1, 1, 3, vec![0.0; 3]).unwrap();
        assert!(similarity_map(&f, &a, false).is_err());
    }

    #[test]
    fn pseudo_bank_is_nearly_orthogonal() {
        let bank = pseudo_embedding_bank(4, 3, 8, 9).unwrap();
        let a = class_mean_embeddings(&bank, true).unwrap();
        for i in 0..4 {
            for j in 0..i {
                assert!(dot(a.row(i), a.row(j)).abs() < 0.2);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeededRng::new(5);
        let bank = pseudo_embedding_bank(3, 2, 4, 2).unwrap();
        let a = class_mean_embeddings(&bank, true).unwrap();
        let data: Vec<f64> = (0..2 * 4).map(|_| rng.normal()).collect();
        let g: Vec<f64> = (0..2 * 3).map(|_| rng.normal()).collect();
        for norm in [false, true] {
            let f = FeatureMap::new(1, 2, 4, data.clone()).unwrap();
            let analytic = similarity_backward(&f, &a, norm, &g).unwrap();
            for i in 0..data.len() {
                let eval = |delta: f64| {
                    let mut d = data.clone();
                    d[i] += delta;
                    let s = similarity_map(&FeatureMap::new(1, 2, 4, d).unwrap(), &a, norm).unwrap();
                    dot(s.data(), &g)
                };
                let fd = (eval(1e-6) - eval(-1e-6)) / 2e-6;
                assert!((fd - analytic[i]).abs() < 1e-6, "{norm} {i}: {fd} vs {}", analytic[i]);
            }
        }
    }
}

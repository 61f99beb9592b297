//! The mean-teacher self-training loop and held-out evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cda::{class_mean_embeddings, pseudo_embedding_bank, similarity_backward, similarity_map, ClassEmbeddingMatrix};
use crate::catalog::ClassCatalog;
use crate::error::{Error, Result};
use crate::fusion::{merge, FusionConfig, SemanticInput};
use crate::instance::InstanceSet;
use crate::losses::{cda_loss, feature_distance, mixed_semantic_ce, semantic_ce, total_panoptic_loss, LossOutput, LossWeights, PanopticLossParts};
use crate::metrics::{mean_iou, panoptic_quality, ApAccumulator, ApConfig, IouStats, PqStats};
use crate::mixing::{classmix_select, dacs_compose, imix_compose, MixedSample};
use crate::panoptic::PanopticLabel;
use crate::pseudo::{filter_instances, semantic_argmax, FilterConfig};
use crate::raster::ImageRGB;
use crate::rng::SeededRng;
use crate::synthlab::config::TrainConfig;
use crate::synthlab::model::{ema_update, extract_instances, toy_instance_loss, Activations, Adam, ToyModel};
use crate::synthlab::scene::{lab_catalog, scene_at, DomainSpec};
use crate::volume::FeatureMap;

const SOURCE_STREAM: u64 = 0x736f_7572_6365;
const TARGET_STREAM: u64 = 0x7461_7267_6574;
const EVAL_STREAM: u64 = 0x6576_616c;
const MIX_STREAM: u64 = 0x006d_6978;
const INIT_STREAM: u64 = 0x696e_6974;
/// Fixed seed of the bundled anchor bank.
pub const ANCHOR_BANK_SEED: u64 = 0xC1_1A;
pub const ANCHOR_BANK_PROMPTS: usize = 4;
/// Weights beyond this magnitude would overflow the logits.
const MAX_WEIGHT: f64 = 1e100;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub msq: f64,
    pub mrq: f64,
    pub mpq: f64,
    pub miou: f64,
    pub map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub iteration: usize,
    pub mean_loss: f64,
    pub imix_steps: usize,
    /// L2 distance between teacher and student weights.
    pub teacher_gap: f64,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub student: ToyModel,
    pub teacher: ToyModel,
    pub trace: Vec<EpochMetrics>,
}

impl TrainOutcome {
    /// Metrics of the last evaluation; zeros when nothing was trained.
    pub fn final_metrics(&self) -> EvalMetrics {
        self.trace.last().map(|e| e.metrics).unwrap_or_default()
    }
}

/// Unit-norm class anchors from the bundled pseudo-embedding bank.
pub fn lab_anchors(classes: usize, dim: usize) -> Result<ClassEmbeddingMatrix> {
    class_mean_embeddings(&pseudo_embedding_bank(classes, ANCHOR_BANK_PROMPTS, dim, ANCHOR_BANK_SEED)?, true)
}

/// Student prediction as a panoptic label plus its raw scored instances.
pub fn predict_panoptic(model: &ToyModel, image: &ImageRGB, catalog: &ClassCatalog, min_area: usize) -> Result<(PanopticLabel, InstanceSet)> {
    let probs = model.predict(image)?;
    let inst = extract_instances(&probs, catalog, min_area)?;
    let label = merge(SemanticInput::Probs(&probs), &inst, &FusionConfig::new(0.0)?, catalog)?;
    Ok((label, inst))
}

/// PQ, mIoU and mask AP of `model` over `scenes` held-out scenes of `spec`.
pub fn evaluate(model: &ToyModel, spec: &DomainSpec, seed: u64, scenes: usize, min_area: usize) -> Result<EvalMetrics> {
    let cat = lab_catalog();
    let per_image: Vec<(PanopticLabel, PanopticLabel, InstanceSet)> = (0..scenes as u64)
        .into_par_iter()
        .map(|i| {
            let (img, gt) = scene_at(spec, seed ^ EVAL_STREAM, i)?;
            let (pred, inst) = predict_panoptic(model, &img, &cat, min_area)?;
            Ok((gt, pred, inst))
        })
        .collect::<Result<_>>()?;
    let mut pq = PqStats::new(cat.len());
    let mut iou = IouStats::new(cat.len());
    let mut ap = ApAccumulator::new(ApConfig::default(), &cat);
    for (gt, pred, inst) in &per_image {
        pq.merge(&panoptic_quality(gt, pred, &cat)?)?;
        iou.merge(&mean_iou(gt.semantic(), pred.semantic(), cat.len())?)?;
        ap.add_image(gt.instances(), inst)?;
    }
    Ok(EvalMetrics {
        msq: pq.msq(),
        mrq: pq.mrq(),
        mpq: pq.mpq(),
        miou: iou.miou(),
        map: ap.report().map,
    })
}

fn value_only(o: &LossOutput) -> Option<LossOutput> {
    Some(LossOutput {
        value: o.value,
        grad: Vec::new(),
    })
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

fn scaled(g: &[f64], w: f64) -> Vec<f64> {
    g.iter().map(|v| v * w).collect()
}

struct Step<'a> {
    cfg: &'a TrainConfig,
    catalog: &'a ClassCatalog,
    anchors: Option<&'a ClassEmbeddingMatrix>,
}

impl Step<'_> {
    /// CDA gradient with respect to the embedding, and its loss.
    fn cda(&self, act: &Activations, labels: &crate::raster::LabelMap2D) -> Result<Option<(LossOutput, Vec<f64>)>> {
        let Some(anchors) = self.anchors else {
            return Ok(None);
        };
        let sim = similarity_map(&act.embedding, anchors, true)?;
        let out = cda_loss(&sim, labels)?;
        let ge = similarity_backward(&act.embedding, anchors, true, &scaled(&out.grad, self.cfg.cda_weight))?;
        Ok(Some((out, ge)))
    }

    fn mixed_semantic(&self, student: &ToyModel, mixed: &MixedSample, parts: &mut PanopticLossParts, grad: &mut [f64]) -> Result<()> {
        let act = student.forward(&mixed.image)?;
        let sem = mixed_semantic_ce(&act.logits, mixed)?;
        let cda = self.cda(&act, &mixed.semantic)?;
        add_into(grad, &student.backward(&act, &sem.grad, cda.as_ref().map(|c| c.1.as_slice()))?);
        parts.mixed_semantic = value_only(&sem);
        parts.mixed_cda = cda.and_then(|c| value_only(&c.0));
        Ok(())
    }
}

/// Trains on the configured source and target domains.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_domains(cfg, &cfg.source_spec(), &cfg.target_spec())
}

pub fn train_with_domains(cfg: &TrainConfig, source: &DomainSpec, target: &DomainSpec) -> Result<TrainOutcome> {
    cfg.validate()?;
    source.validate()?;
    target.validate()?;
    if (source.height, source.width) != (target.height, target.width) {
        return Err(Error::Shape("source and target scenes differ in size".into()));
    }
    let cat = lab_catalog();
    let (h, w) = (source.height, source.width);
    let initial = ToyModel::init(cat.len(), cfg.hidden_dim, cfg.seed ^ INIT_STREAM)?;
    let mut student = initial.clone();
    let mut teacher = initial.clone();
    let mut opt = Adam::new(initial.params().len(), cfg.learning_rate);
    let anchors = if cfg.cda { Some(lab_anchors(cat.len(), cfg.hidden_dim)?) } else { None };
    let step = Step {
        cfg,
        catalog: &cat,
        anchors: anchors.as_ref(),
    };
    let weights = LossWeights {
        cda: if cfg.cda { cfg.cda_weight } else { 0.0 },
        feature_distance: cfg.fd_weight,
        ..Default::default()
    };
    let filter = FilterConfig::new(cfg.tau)?;
    let imix_start = cfg.imix_start_iteration();
    let epoch_len = cfg.iterations.div_ceil(cfg.epochs).max(1);

    let mut trace = Vec::new();
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let mut imix_steps = 0usize;
    for t in 0..cfg.iterations {
        let (xs, ys) = scene_at(source, cfg.seed ^ SOURCE_STREAM, t as u64)?;
        let (xt, _) = scene_at(target, cfg.seed ^ TARGET_STREAM, t as u64)?;
        let mut mix_rng = SeededRng::derive(cfg.seed ^ MIX_STREAM, t as u64);
        let mut grad = vec![0.0; student.params().len()];
        let mut parts = PanopticLossParts::default();

        // supervised source terms
        let act = student.forward(&xs)?;
        let sem = semantic_ce(&act.logits, ys.semantic())?;
        let inst = toy_instance_loss(&act.logits, ys.instances(), step.catalog)?;
        let mut glog = sem.grad.clone();
        add_into(&mut glog, &inst.grad);
        let cda = step.cda(&act, ys.semantic())?;
        let mut gemb = cda.as_ref().map(|c| c.1.clone());
        if cfg.fd_weight > 0.0 {
            let anchor: FeatureMap = initial.forward(&xs)?.embedding;
            let things = ys.instances().union_mask(h, w);
            let fd = feature_distance(&anchor, &act.embedding, &things)?;
            let g = scaled(&fd.grad, cfg.fd_weight);
            match gemb.as_mut() {
                Some(e) => add_into(e, &g),
                None => gemb = Some(g),
            }
            parts.feature_distance = value_only(&fd);
        }
        add_into(&mut grad, &student.backward(&act, &glog, gemb.as_deref())?);
        parts.source_semantic = value_only(&sem);
        parts.source_instance = value_only(&inst);
        parts.source_cda = cda.and_then(|c| value_only(&c.0));

        // class-mixed target terms with teacher pseudo-labels
        let tprobs = teacher.predict(&xt)?;
        let pseudo = semantic_argmax(&tprobs, cfg.conf_threshold);
        let mask = classmix_select(ys.semantic(), &mut mix_rng)?;
        let mixed = dacs_compose(&xs, ys.semantic(), &xt, &pseudo.labels, &pseudo.weights(cfg.confidence_mode), &mask)?;
        step.mixed_semantic(&student, &mixed, &mut parts, &mut grad)?;

        // instance mixing, skipped when the filter leaves nothing to paste
        if cfg.imix && t >= imix_start {
            let tinst = extract_instances(&tprobs, &cat, cfg.min_component_area)?;
            let (filtered, _) = filter_instances(&tinst, filter, h, w);
            if !filtered.is_empty() {
                let sample = imix_compose(&xt, &filtered, &xs, &ys, cfg.direction, cfg.occlusion_eps)?;
                let act = student.forward(&sample.image)?;
                let l = toy_instance_loss(&act.logits, &sample.instance_supervision, &cat)?;
                add_into(&mut grad, &student.backward(&act, &l.grad, None)?);
                parts.mixed_instance = value_only(&l);
                imix_steps += 1;
            }
        }

        let total = total_panoptic_loss(&parts, &weights)?.value;
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence {
                iteration: t,
                detail: format!("loss {total}, terms {:?}", parts_summary(&parts)),
            });
        }
        loss_sum += total;
        loss_count += 1;

        let mut params = student.params().clone();
        opt.step(params.as_mut_slice(), &grad);
        let largest = params.as_slice().iter().fold(0.0f64, |m, p| m.max(p.abs()));
        if largest.is_nan() || largest >= MAX_WEIGHT {
            return Err(Error::Divergence {
                iteration: t,
                detail: format!("weights exploded, max |w| = {largest:e}"),
            });
        }
        student.set_params(params)?;
        let alpha = cfg.ema_alpha.min(1.0 - 1.0 / (t as f64 + 1.0));
        teacher.set_params(ema_update(teacher.params(), student.params(), alpha)?)?;

        if (t + 1) % epoch_len == 0 || t + 1 == cfg.iterations {
            trace.push(EpochMetrics {
                epoch: trace.len() + 1,
                iteration: t + 1,
                mean_loss: loss_sum / loss_count as f64,
                imix_steps,
                teacher_gap: teacher.params().l2_distance(student.params()),
                metrics: evaluate(&student, target, cfg.seed, cfg.eval_scenes, cfg.min_component_area)?,
            });
            loss_sum = 0.0;
            loss_count = 0;
        }
    }
    Ok(TrainOutcome { student, teacher, trace })
}

fn parts_summary(p: &PanopticLossParts) -> Vec<(&'static str, f64)> {
    [
        ("source_semantic", &p.source_semantic),
        ("source_instance", &p.source_instance),
        ("source_cda", &p.source_cda),
        ("mixed_semantic", &p.mixed_semantic),
        ("mixed_instance", &p.mixed_instance),
        ("mixed_cda", &p.mixed_cda),
        ("feature_distance", &p.feature_distance),
    ]
    .into_iter()
    .filter_map(|(n, o)| o.as_ref().map(|o| (n, o.value)))
    .collect()
}

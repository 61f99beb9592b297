use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use panmix::io::write_volume_raw;
use panmix::mixing::{classmix_select, dacs_compose, imix_compose, MixedSample, Origin, DEFAULT_OCCLUSION_EPS};
use panmix::pseudo::{filter_instances, semantic_argmax, FilterConfig, DEFAULT_CONF_THRESHOLD};
use panmix::{ClassCatalog, Provenance, SeededRng};
use rayon::prelude::*;
use serde::Serialize;

use super::{ConfidenceArg, DirectionArg};
use crate::files;
use crate::manifest::{check_dims, Domain, Manifest, ManifestRecord};
use crate::report::{fmt4, table, to_rounded_json};
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Classmix,
    Imix,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Source manifest; records need `image` and `panoptic`.
    #[arg(long)]
    source: PathBuf,
    /// Target manifest; records need `probs` (classmix) or `instances` (imix).
    #[arg(long)]
    target: PathBuf,
    #[arg(long, value_enum, default_value = "imix")]
    mode: Mode,
    #[arg(long, value_enum, default_value = "t2s")]
    direction: DirectionArg,
    /// Instance confidence threshold; scores must exceed it.
    #[arg(long, default_value_t = 0.75)]
    tau: f64,
    /// Minimum visible fraction for partly covered ground-truth instances.
    #[arg(long, default_value_t = DEFAULT_OCCLUSION_EPS)]
    eps: f64,
    /// Probability cut for the image-level pseudo-label weight.
    #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
    conf_threshold: f64,
    #[arg(long, value_enum, default_value = "per-image")]
    confidence: ConfidenceArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct MixEntry {
    index: usize,
    source: PathBuf,
    target: PathBuf,
    image: String,
    target_fraction: f64,
    instances: usize,
}

#[derive(Debug, Serialize)]
struct MixReport {
    mode: &'static str,
    direction: &'static str,
    seed: u64,
    tau: f64,
    samples: Vec<MixEntry>,
}

fn compose(
    args: &Args,
    catalog: &ClassCatalog,
    seed: u64,
    index: usize,
    src: &ManifestRecord,
    tgt: &ManifestRecord,
) -> Result<MixedSample> {
    let src_image = files::load_image(&src.image)?;
    let dims = src_image.dims();
    let Some(src_pan) = &src.panoptic else {
        bail!("source record {} has no panoptic label", src.image.display());
    };
    let src_label = files::load_panoptic(src_pan, catalog)?;
    check_dims("panoptic label", src_label.dims(), dims, src_pan)?;
    let tgt_image = files::load_image(&tgt.image)?;
    check_dims("target image", tgt_image.dims(), dims, &tgt.image)?;
    match args.mode {
        Mode::Classmix => {
            let Some(probs_path) = &tgt.probs else {
                bail!("target record {} has no probability volume", tgt.image.display());
            };
            let probs = files::load_probs(probs_path)?;
            check_dims("probability volume", probs.dims(), dims, probs_path)?;
            let pseudo = semantic_argmax(&probs, args.conf_threshold);
            let mut rng = SeededRng::derive(seed, index as u64);
            let mask = classmix_select(src_label.semantic(), &mut rng)?;
            Ok(dacs_compose(
                &src_image,
                src_label.semantic(),
                &tgt_image,
                &pseudo.labels,
                &pseudo.weights(args.confidence.into()),
                &mask,
            )?)
        }
        Mode::Imix => {
            let Some(inst_path) = &tgt.instances else {
                bail!("target record {} has no instance predictions", tgt.image.display());
            };
            let preds = files::load_instances(inst_path, Provenance::Predicted)?;
            if let Some(r) = preds.records().first() {
                check_dims("instance mask", r.mask().dims(), dims, inst_path)?;
            }
            let (filtered, _) = filter_instances(&preds, FilterConfig::new(args.tau)?, dims.0, dims.1);
            Ok(imix_compose(
                &tgt_image,
                &filtered,
                &src_image,
                &src_label,
                args.direction.into(),
                args.eps,
            )?)
        }
    }
}

fn write_sample(out: &Path, stem: &str, sample: &MixedSample) -> Result<()> {
    let (h, w) = sample.image.dims();
    files::save_image(&out.join(format!("{stem}.png")), &sample.image)?;
    files::save_labels(&out.join(format!("{stem}_semantic.png")), &sample.semantic)?;
    files::save_instances(&out.join(format!("{stem}_instances.jsonl")), &sample.instance_supervision)?;
    // Two channels per pixel: 1 for target origin, then the loss weight.
    let weights: Vec<f32> = sample
        .origin
        .iter()
        .zip(&sample.pixel_confidence)
        .flat_map(|(o, &c)| [if *o == Origin::Target { 1.0 } else { 0.0 }, c as f32])
        .collect();
    files::write_atomic(&out.join(format!("{stem}_weights.prb")), &write_volume_raw(h, w, 2, &weights))
}

pub fn run(args: Args, g: &Global) -> Result<()> {
    let catalog = files::load_catalog(&g.catalog)?;
    let seed = g.seed_or(0);
    let source = Manifest::load(&args.source)?;
    source.expect_domain(Domain::Source, &args.source)?;
    let target = Manifest::load(&args.target)?;
    target.expect_domain(Domain::Target, &args.target)?;
    FilterConfig::new(args.tau)?;
    files::create_dir(&args.out)?;

    let n = source.records.len();
    let samples = g.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let src = &source.records[i];
                let tgt = &target.records[i % target.records.len()];
                let sample = compose(&args, &catalog, seed, i, src, tgt)
                    .with_context(|| format!("mixing pair {i} ({})", src.image.display()))?;
                let stem = format!("mix_{i:05}");
                write_sample(&args.out, &stem, &sample)?;
                Ok(MixEntry {
                    index: i,
                    source: src.image.clone(),
                    target: tgt.image.clone(),
                    image: format!("{stem}.png"),
                    target_fraction: sample.target_fraction(),
                    instances: sample.instance_supervision.len(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let rows: Vec<Vec<String>> = samples
        .iter()
        .map(|s| {
            vec![
                s.image.clone(),
                fmt4(s.target_fraction),
                s.instances.to_string(),
            ]
        })
        .collect();
    let report = MixReport {
        mode: match args.mode {
            Mode::Classmix => "classmix",
            Mode::Imix => "imix",
        },
        direction: match args.direction {
            DirectionArg::T2s => "t2s",
            DirectionArg::S2t => "s2t",
        },
        seed,
        tau: args.tau,
        samples,
    };
    files::write_json(&args.out.join("mix_report.json"), &to_rounded_json(&report)?)?;
    print!("{}", table(&["sample", "target_fraction", "instances"], &rows));
    Ok(())
}

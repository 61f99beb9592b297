use std::path::PathBuf;

use anyhow::Result;
use panmix::io::write_volume_raw;
use panmix::pseudo::{filter_instances, semantic_argmax, FilterConfig, DEFAULT_CONF_THRESHOLD};
use panmix::{InstanceSet, Provenance};
use serde::Serialize;

use crate::files;
use crate::manifest::check_dims;
use crate::report::{fmt4, table, to_rounded_json};
use crate::Global;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Teacher class probabilities (PRB1).
    #[arg(long)]
    probs: PathBuf,
    /// Teacher instance predictions (JSON lines).
    #[arg(long)]
    instances: Option<PathBuf>,
    /// Instance confidence threshold; scores must exceed it.
    #[arg(long, default_value_t = 0.75)]
    tau: f64,
    /// Probability cut for the image-level pseudo-label weight.
    #[arg(long, default_value_t = DEFAULT_CONF_THRESHOLD)]
    conf_threshold: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Serialize)]
struct PseudoReport {
    height: usize,
    width: usize,
    conf_threshold: f64,
    image_confidence: f64,
    tau: f64,
    instances_in: usize,
    instances_kept: usize,
    mask_pixels: usize,
}

pub fn run(args: Args, _g: &Global) -> Result<()> {
    let filter = FilterConfig::new(args.tau)?;
    let probs = files::load_probs(&args.probs)?;
    let (h, w) = probs.dims();
    let preds = match &args.instances {
        Some(p) => {
            let set = files::load_instances(p, Provenance::Predicted)?;
            if let Some(r) = set.records().first() {
                check_dims("instance mask", r.mask().dims(), (h, w), p)?;
            }
            set
        }
        None => InstanceSet::empty(Provenance::Predicted),
    };
    let pseudo = semantic_argmax(&probs, args.conf_threshold);
    let (kept, mask) = filter_instances(&preds, filter, h, w);

    files::create_dir(&args.out)?;
    files::save_labels(&args.out.join("pseudo_semantic.png"), &pseudo.labels)?;
    let conf: Vec<f32> = pseudo.pixel_confidence.iter().map(|&c| c as f32).collect();
    files::write_atomic(&args.out.join("pseudo_confidence.prb"), &write_volume_raw(h, w, 1, &conf))?;
    files::save_instances(&args.out.join("pseudo_instances.jsonl"), &kept)?;

    let report = PseudoReport {
        height: h,
        width: w,
        conf_threshold: args.conf_threshold,
        image_confidence: pseudo.k,
        tau: args.tau,
        instances_in: preds.len(),
        instances_kept: kept.len(),
        mask_pixels: mask.mask.count(),
    };
    files::write_json(&args.out.join("pseudo.json"), &to_rounded_json(&report)?)?;
    print!(
        "{}",
        table(
            &["image_confidence", "instances_in", "instances_kept", "mask_pixels"],
            &[vec![
                fmt4(report.image_confidence),
                report.instances_in.to_string(),
                report.instances_kept.to_string(),
                report.mask_pixels.to_string(),
            ]],
        )
    );
    Ok(())
}

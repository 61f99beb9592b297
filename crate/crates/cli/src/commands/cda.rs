use std::path::PathBuf;

use anyhow::{bail, Result};
use panmix::cda::{class_mean_embeddings, similarity_map};
use panmix::io::{read_embedding_bank, write_volume_raw};
use panmix::losses::cda_loss;
use panmix::{FeatureMap, IGNORE};
use serde::Serialize;

use crate::files;
use crate::manifest::check_dims;
use crate::report::{fmt4, table, to_rounded_json};
use crate::Global;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Prompt embedding bank (CEB1).
    #[arg(long)]
    bank: PathBuf,
    /// Pixel features: a PRB1-layout f32 volume with D channels.
    #[arg(long)]
    features: PathBuf,
    /// Semantic labels (16-bit PNG).
    #[arg(long)]
    labels: PathBuf,
    /// Use raw feature vectors instead of unit-normalized ones.
    #[arg(long)]
    raw_features: bool,
    /// Where to write the similarity volume (PRB1 layout, C channels).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CdaReport {
    height: usize,
    width: usize,
    classes: usize,
    prompts: usize,
    dim: usize,
    scored_pixels: usize,
    loss: f64,
}

pub fn run(args: Args, _g: &Global) -> Result<()> {
    let bank = read_embedding_bank(&files::read(&args.bank)?, None)?;
    let (h, w, d, data) = files::load_raw_volume(&args.features)?;
    if d != bank.dim() {
        bail!("features have {d} channels, the bank has dimension {}", bank.dim());
    }
    let labels = files::load_labels(&args.labels)?;
    check_dims("label map", labels.dims(), (h, w), &args.labels)?;
    labels.validate(bank.classes())?;

    let features = FeatureMap::new(h, w, d, data.into_iter().map(f64::from).collect())?;
    let anchors = class_mean_embeddings(&bank, true)?;
    let sim = similarity_map(&features, &anchors, !args.raw_features)?;
    let loss = cda_loss(&sim, &labels)?.value;
    if let Some(out) = &args.out {
        let values: Vec<f32> = sim.data().iter().map(|&v| v as f32).collect();
        files::write_atomic(out, &write_volume_raw(h, w, sim.classes(), &values))?;
    }
    let report = CdaReport {
        height: h,
        width: w,
        classes: bank.classes(),
        prompts: bank.prompts(),
        dim: d,
        scored_pixels: labels.values().iter().filter(|&&v| v != IGNORE).count(),
        loss,
    };
    if let Some(path) = &args.json {
        files::write_json(path, &to_rounded_json(&report)?)?;
    }
    print!(
        "{}",
        table(
            &["classes", "dim", "scored_pixels", "loss"],
            &[vec![
                report.classes.to_string(),
                report.dim.to_string(),
                report.scored_pixels.to_string(),
                fmt4(report.loss),
            ]],
        )
    );
    Ok(())
}

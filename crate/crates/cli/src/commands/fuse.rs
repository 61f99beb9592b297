use std::path::PathBuf;

use anyhow::{bail, Result};
use panmix::fusion::{merge, SemanticInput};
use panmix::{FusionConfig, Provenance};

use crate::files;
use crate::manifest::check_dims;
use crate::report::table;
use crate::Global;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Semantic probabilities (PRB1).
    #[arg(long, conflicts_with = "sem_labels")]
    sem: Option<PathBuf>,
    /// Semantic labels (16-bit PNG) instead of probabilities.
    #[arg(long)]
    sem_labels: Option<PathBuf>,
    /// Instance predictions (JSON lines).
    #[arg(long)]
    inst: PathBuf,
    /// Instances scoring below this are discarded.
    #[arg(long, default_value_t = 0.5)]
    score_floor: f64,
    /// Output panoptic PNG; the sidecar is written next to it as .json.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, g: &Global) -> Result<()> {
    let catalog = files::load_catalog(&g.catalog)?;
    let cfg = FusionConfig::new(args.score_floor)?;
    let inst = files::load_instances(&args.inst, Provenance::Predicted)?;
    let label = match (&args.sem, &args.sem_labels) {
        (Some(p), None) => {
            let probs = files::load_probs(p)?;
            if probs.classes() != catalog.len() {
                bail!("{} has {} classes, the catalog {}", p.display(), probs.classes(), catalog.len());
            }
            if let Some(r) = inst.records().first() {
                check_dims("instance mask", r.mask().dims(), probs.dims(), &args.inst)?;
            }
            merge(SemanticInput::Probs(&probs), &inst, &cfg, &catalog)?
        }
        (None, Some(p)) => {
            let labels = files::load_labels(p)?;
            if let Some(r) = inst.records().first() {
                check_dims("instance mask", r.mask().dims(), labels.dims(), &args.inst)?;
            }
            merge(SemanticInput::Labels(&labels), &inst, &cfg, &catalog)?
        }
        _ => bail!("pass exactly one of --sem or --sem-labels"),
    };
    files::save_panoptic(&args.out, &label, &catalog)?;
    print!(
        "{}",
        table(
            &["instances_in", "instances_out"],
            &[vec![inst.len().to_string(), label.instances().len().to_string()]],
        )
    );
    Ok(())
}

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Subcommand, ValueEnum};
use panmix::{LabelMap2D, PanopticLabel, Provenance, IGNORE};

use crate::files;
use crate::manifest::check_dims;
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProvenanceArg {
    Predicted,
    GroundTruth,
}

impl From<ProvenanceArg> for Provenance {
    fn from(p: ProvenanceArg) -> Self {
        match p {
            ProvenanceArg::Predicted => Provenance::Predicted,
            ProvenanceArg::GroundTruth => Provenance::GroundTruth,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a panoptic PNG into instance JSON lines and a semantic map.
    PanopticToJsonl {
        #[arg(long)]
        panoptic: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the semantic map as a 16-bit PNG.
        #[arg(long)]
        semantic_out: Option<PathBuf>,
    },
    /// Build a panoptic PNG from instance JSON lines.
    JsonlToPanoptic {
        #[arg(long)]
        instances: PathBuf,
        /// Stuff labels for pixels outside every instance; IGNORE otherwise.
        #[arg(long)]
        semantic: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "predicted")]
        provenance: ProvenanceArg,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cmd: Command, g: &Global) -> Result<()> {
    let catalog = files::load_catalog(&g.catalog)?;
    match cmd {
        Command::PanopticToJsonl {
            panoptic,
            out,
            semantic_out,
        } => {
            let label = files::load_panoptic(&panoptic, &catalog)?;
            files::save_instances(&out, label.instances())?;
            if let Some(s) = semantic_out {
                files::save_labels(&s, label.semantic())?;
            }
            Ok(())
        }
        Command::JsonlToPanoptic {
            instances,
            semantic,
            provenance,
            out,
        } => {
            let set = files::load_instances(&instances, provenance.into())?;
            let dims = match (&semantic, set.records().first()) {
                (Some(p), _) => files::load_labels(p)?.dims(),
                (None, Some(r)) => r.mask().dims(),
                (None, None) => bail!("{} is empty and no --semantic map was given", instances.display()),
            };
            let mut sem = match &semantic {
                Some(p) => {
                    let s = files::load_labels(p)?;
                    if let Some(r) = set.records().first() {
                        check_dims("instance mask", r.mask().dims(), s.dims(), &instances)?;
                    }
                    s
                }
                None => LabelMap2D::filled(dims.0, dims.1, IGNORE),
            };
            // Thing pixels must belong to an instance.
            for v in sem.values_mut() {
                if *v != IGNORE && catalog.contains(*v) && catalog.is_thing(*v) {
                    *v = IGNORE;
                }
            }
            for r in set.records() {
                for p in r.mask().ones() {
                    sem.values_mut()[p] = r.class_id();
                }
            }
            let label = PanopticLabel::new(sem, set, &catalog)?;
            files::save_panoptic(&out, &label, &catalog)
        }
    }
}

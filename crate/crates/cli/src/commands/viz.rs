use std::path::PathBuf;

use anyhow::Result;
use panmix::viz::{visualize, VizPalette};

use crate::files;
use crate::manifest::check_dims;
use crate::Global;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// RGB image the label belongs to.
    #[arg(long)]
    image: PathBuf,
    /// Panoptic PNG with its JSON sidecar next to it.
    #[arg(long)]
    panoptic: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: Args, g: &Global) -> Result<()> {
    let catalog = files::load_catalog(&g.catalog)?;
    let image = files::load_image(&args.image)?;
    let label = files::load_panoptic(&args.panoptic, &catalog)?;
    check_dims("panoptic label", label.dims(), image.dims(), &args.panoptic)?;
    let overlay = visualize(&label, &image, &VizPalette::for_catalog(&catalog))?;
    files::save_image(&args.out, &overlay)
}

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Subcommand, ValueEnum};
use panmix::io::write_prob_volume;
use panmix::synthlab::{
    extract_instances, lab_catalog, run_ablation, scene_at, train, AblationGrid, DomainSpec, TrainConfig,
    ABLATION_SCHEMA,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::files;
use crate::manifest::{relative_to, Domain, Manifest, ManifestRecord};
use crate::report::{fmt4, table, to_rounded_json};
use crate::Global;

/// Stream tag for exported target scenes, distinct from training streams.
const EXPORT_STREAM: u64 = 0xE7_9047;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Source,
    Target,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the toy model and write its metric trace.
    Run {
        /// Key-value config applied over the bundled defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also export teacher predictions on this many target scenes.
        #[arg(long, default_value_t = 0)]
        export_target: usize,
    },
    /// Train every variant of an ablation grid and tabulate the results.
    Ablate {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the JSON Schema of the report and exit.
        #[arg(long)]
        schema: bool,
    },
    /// Write labeled scenes of one domain plus a manifest.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, value_enum)]
        domain: DomainArg,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, overrides: &[String], g: &Global) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(p) = path {
        cfg = cfg
            .with_text(&files::read_text(p)?)
            .with_context(|| format!("config {}", p.display()))?;
    }
    for o in overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("override '{o}' is not KEY=VALUE");
        };
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct ModelFile<'a> {
    classes: usize,
    hidden: usize,
    params: &'a [f64],
}

fn trace_table(trace: &[panmix::synthlab::EpochMetrics]) -> String {
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|e| {
            let m = &e.metrics;
            vec![
                e.epoch.to_string(),
                e.iteration.to_string(),
                fmt4(e.mean_loss),
                e.imix_steps.to_string(),
                fmt4(m.mpq * 100.0),
                fmt4(m.miou * 100.0),
                fmt4(m.map * 100.0),
            ]
        })
        .collect();
    table(&["epoch", "iteration", "loss", "imix_steps", "mPQ", "mIoU", "mAP"], &rows)
}

fn write_scene(out: &Path, stem: &str, spec: &DomainSpec, seed: u64, index: u64) -> Result<ManifestRecord> {
    let catalog = lab_catalog();
    let (image, label) = scene_at(spec, seed, index)?;
    let image_path = out.join(format!("{stem}.png"));
    let label_path = out.join(format!("{stem}_panoptic.png"));
    files::save_image(&image_path, &image)?;
    files::save_panoptic(&label_path, &label, &catalog)?;
    Ok(ManifestRecord {
        image: relative_to(&image_path, out),
        panoptic: Some(relative_to(&label_path, out)),
        probs: None,
        instances: None,
    })
}

fn run_training(cfg: &TrainConfig, out: &Path, export: usize, g: &Global) -> Result<()> {
    files::create_dir(out)?;
    files::write_atomic(&out.join("config.cfg"), cfg.to_text().as_bytes())?;
    let outcome = train(cfg)?;
    files::write_json(&out.join("trace.json"), &to_rounded_json(&outcome.trace)?)?;
    let text = trace_table(&outcome.trace);
    files::write_atomic(&out.join("trace.txt"), text.as_bytes())?;
    let t = &outcome.teacher;
    files::write_json(
        &out.join("teacher.json"),
        &ModelFile {
            classes: t.classes(),
            hidden: t.hidden(),
            params: t.params().as_slice(),
        },
    )?;
    if export > 0 {
        let dir = out.join("target");
        files::create_dir(&dir)?;
        let spec = cfg.target_spec();
        let catalog = lab_catalog();
        let records = g.install(|| {
            (0..export)
                .into_par_iter()
                .map(|i| {
                    let stem = format!("scene_{i:05}");
                    let mut rec = write_scene(&dir, &stem, &spec, cfg.seed ^ EXPORT_STREAM, i as u64)?;
                    let image = files::load_image(&dir.join(&rec.image))?;
                    let probs = t.predict(&image)?;
                    let inst = extract_instances(&probs, &catalog, cfg.min_component_area)?;
                    let probs_name = format!("{stem}_probs.prb");
                    let inst_name = format!("{stem}_instances.jsonl");
                    files::write_atomic(&dir.join(&probs_name), &write_prob_volume(&probs))?;
                    files::save_instances(&dir.join(&inst_name), &inst)?;
                    rec.probs = Some(probs_name.into());
                    rec.instances = Some(inst_name.into());
                    Ok(rec)
                })
                .collect::<Result<Vec<_>>>()
        })??;
        files::write_json(
            &dir.join("manifest.json"),
            &Manifest {
                domain: Domain::Target,
                records,
            },
        )?;
    }
    print!("{text}");
    Ok(())
}

pub fn run(cmd: Command, g: &Global) -> Result<()> {
    match cmd {
        Command::Run {
            config,
            overrides,
            out,
            export_target,
        } => {
            let cfg = load_config(config.as_deref(), &overrides, g)?;
            run_training(&cfg, &out, export_target, g)
        }
        Command::Ablate { grid, out, schema } => {
            if schema {
                println!("{ABLATION_SCHEMA}");
                return Ok(());
            }
            let mut grid = AblationGrid::parse(&files::read_text(&grid)?)
                .with_context(|| format!("grid {}", grid.display()))?;
            if let Some(seed) = g.seed {
                grid.seeds = vec![seed];
            }
            let variants = grid.variants();
            let report = g.install(|| run_ablation(&grid.base, &variants, &grid.seeds))??;
            let text = report.to_text();
            if let Some(out) = &out {
                files::create_dir(out)?;
                files::write_json(&out.join("ablation.json"), &to_rounded_json(&report)?)?;
                files::write_atomic(&out.join("ablation.txt"), text.as_bytes())?;
            }
            print!("{text}");
            Ok(())
        }
        Command::Generate {
            config,
            overrides,
            domain,
            count,
            out,
        } => {
            let cfg = load_config(config.as_deref(), &overrides, g)?;
            let (spec, tag) = match domain {
                DomainArg::Source => (cfg.source_spec(), Domain::Source),
                DomainArg::Target => (cfg.target_spec(), Domain::Target),
            };
            files::create_dir(&out)?;
            let stream = match domain {
                DomainArg::Source => 0x5C,
                DomainArg::Target => 0x7A,
            };
            let records = g.install(|| {
                (0..count)
                    .into_par_iter()
                    .map(|i| write_scene(&out, &format!("scene_{i:05}"), &spec, cfg.seed ^ stream, i as u64))
                    .collect::<Result<Vec<_>>>()
            })??;
            files::write_json(&out.join("manifest.json"), &Manifest { domain: tag, records })?;
            println!("wrote {count} scenes to {}", out.display());
            Ok(())
        }
    }
}

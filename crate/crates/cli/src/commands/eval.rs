use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use panmix::metrics::{mean_iou, panoptic_quality, ApAccumulator, IouStats};
use panmix::{ApConfig, ClassCatalog, PqStats};
use rayon::prelude::*;
use serde::Serialize;

use crate::files;
use crate::report::{fmt4, table, to_rounded_json};
use crate::Global;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Directory of ground-truth panoptic PNGs with JSON sidecars.
    #[arg(long)]
    gt: PathBuf,
    /// Directory of predicted panoptic PNGs, matched by file name.
    #[arg(long)]
    pred: PathBuf,
    /// Comma-separated subset of pq, miou, ap.
    #[arg(long, default_value = "pq,miou,ap")]
    metrics: String,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print JSON instead of the text table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct Wanted {
    pq: bool,
    miou: bool,
    ap: bool,
}

fn parse_metrics(s: &str) -> Result<Wanted> {
    let mut w = Wanted::default();
    for m in s.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        match m {
            "pq" => w.pq = true,
            "miou" => w.miou = true,
            "ap" => w.ap = true,
            other => bail!("unknown metric '{other}' (expected pq, miou, ap)"),
        }
    }
    if !(w.pq || w.miou || w.ap) {
        bail!("no metrics requested");
    }
    Ok(w)
}

/// Panoptic PNGs in `dir` that have a sidecar, sorted by name.
fn label_files(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| files::PathError {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| files::PathError {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        if path.extension().is_some_and(|e| e == "png") && files::sidecar_path(&path).is_file() {
            names.push(path.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

#[derive(Debug, Serialize)]
struct PqClassRow {
    class_id: u16,
    name: String,
    sq: f64,
    rq: f64,
    pq: f64,
    tp: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
}

#[derive(Debug, Serialize)]
struct PqSection {
    msq: f64,
    mrq: f64,
    mpq: f64,
    mpq_things: f64,
    mpq_stuff: f64,
    per_class: Vec<PqClassRow>,
}

#[derive(Debug, Serialize)]
struct IouClassRow {
    class_id: u16,
    name: String,
    iou: f64,
}

#[derive(Debug, Serialize)]
struct IouSection {
    miou: f64,
    per_class: Vec<IouClassRow>,
}

#[derive(Debug, Serialize)]
struct ApClassRow {
    class_id: u16,
    name: String,
    ap: f64,
}

#[derive(Debug, Serialize)]
struct ApSection {
    map: f64,
    iou_thresholds: Vec<f64>,
    per_class: Vec<ApClassRow>,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    images: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pq: Option<PqSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    miou: Option<IouSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ap: Option<ApSection>,
}

struct Tallies {
    pq: PqStats,
    iou: IouStats,
    ap: ApAccumulator,
}

fn score_image(gt_path: &Path, pred_path: &Path, catalog: &ClassCatalog, want: Wanted, cfg: &ApConfig) -> Result<Tallies> {
    let gt = files::load_panoptic(gt_path, catalog)?;
    let pred = files::load_panoptic(pred_path, catalog)?;
    if gt.dims() != pred.dims() {
        bail!(
            "{} is {:?} but {} is {:?}",
            gt_path.display(),
            gt.dims(),
            pred_path.display(),
            pred.dims()
        );
    }
    let mut t = Tallies {
        pq: PqStats::new(catalog.len()),
        iou: IouStats::new(catalog.len()),
        ap: ApAccumulator::new(cfg.clone(), catalog),
    };
    if want.pq {
        t.pq = panoptic_quality(&gt, &pred, catalog)?;
    }
    if want.miou {
        t.iou = mean_iou(gt.semantic(), pred.semantic(), catalog.len())?;
    }
    if want.ap {
        t.ap.add_image(gt.instances(), pred.instances())?;
    }
    Ok(t)
}

fn build_report(images: usize, t: &Tallies, want: Wanted, catalog: &ClassCatalog, cfg: &ApConfig) -> EvalReport {
    let name = |c: u16| catalog.name(c).to_string();
    let pq = want.pq.then(|| PqSection {
        msq: t.pq.msq(),
        mrq: t.pq.mrq(),
        mpq: t.pq.mpq(),
        mpq_things: t.pq.mpq_where(catalog, true),
        mpq_stuff: t.pq.mpq_where(catalog, false),
        per_class: t
            .pq
            .per_class
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_present())
            .map(|(k, c)| PqClassRow {
                class_id: k as u16,
                name: name(k as u16),
                sq: c.sq(),
                rq: c.rq(),
                pq: c.pq(),
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
            })
            .collect(),
    });
    let miou = want.miou.then(|| IouSection {
        miou: t.iou.miou(),
        per_class: t
            .iou
            .per_class()
            .into_iter()
            .enumerate()
            .filter_map(|(k, v)| {
                v.map(|iou| IouClassRow {
                    class_id: k as u16,
                    name: name(k as u16),
                    iou,
                })
            })
            .collect(),
    });
    let ap = want.ap.then(|| {
        let r = t.ap.report();
        ApSection {
            map: r.map,
            iou_thresholds: cfg.thresholds().to_vec(),
            per_class: r
                .per_class
                .iter()
                .map(|&(c, ap)| ApClassRow {
                    class_id: c,
                    name: name(c),
                    ap,
                })
                .collect(),
        }
    });
    EvalReport { images, pq, miou, ap }
}

fn render_text(r: &EvalReport) -> String {
    let mut out = format!("images: {}\n", r.images);
    let mut summary = Vec::new();
    if let Some(pq) = &r.pq {
        summary.push(vec!["mSQ".to_string(), fmt4(pq.msq)]);
        summary.push(vec!["mRQ".to_string(), fmt4(pq.mrq)]);
        summary.push(vec!["mPQ".to_string(), fmt4(pq.mpq)]);
        summary.push(vec!["mPQ things".to_string(), fmt4(pq.mpq_things)]);
        summary.push(vec!["mPQ stuff".to_string(), fmt4(pq.mpq_stuff)]);
    }
    if let Some(m) = &r.miou {
        summary.push(vec!["mIoU".to_string(), fmt4(m.miou)]);
    }
    if let Some(a) = &r.ap {
        summary.push(vec!["mAP".to_string(), fmt4(a.map)]);
    }
    out.push_str(&table(&["metric", "value"], &summary));
    if let Some(pq) = &r.pq {
        out.push('\n');
        let rows: Vec<Vec<String>> = pq
            .per_class
            .iter()
            .map(|c| {
                vec![
                    c.name.clone(),
                    fmt4(c.sq),
                    fmt4(c.rq),
                    fmt4(c.pq),
                    c.tp.to_string(),
                    c.fp.to_string(),
                    c.fn_.to_string(),
                ]
            })
            .collect();
        out.push_str(&table(&["class", "SQ", "RQ", "PQ", "TP", "FP", "FN"], &rows));
    }
    out
}

pub fn run(args: Args, g: &Global) -> Result<()> {
    let want = parse_metrics(&args.metrics)?;
    let catalog = files::load_catalog(&g.catalog)?;
    let cfg = ApConfig::default();
    let names = label_files(&args.gt)?;
    if names.is_empty() {
        bail!("{} holds no panoptic PNGs with sidecars", args.gt.display());
    }
    for n in &names {
        files::require_exists(&args.pred.join(n))?;
    }
    let per_image = g.install(|| {
        names
            .par_iter()
            .map(|n| {
                score_image(&args.gt.join(n), &args.pred.join(n), &catalog, want, &cfg)
                    .with_context(|| format!("scoring {n}"))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut total = Tallies {
        pq: PqStats::new(catalog.len()),
        iou: IouStats::new(catalog.len()),
        ap: ApAccumulator::new(cfg.clone(), &catalog),
    };
    for t in &per_image {
        total.pq.merge(&t.pq)?;
        total.iou.merge(&t.iou)?;
        total.ap.merge(&t.ap)?;
    }
    let report = build_report(names.len(), &total, want, &catalog, &cfg);
    let json = to_rounded_json(&report)?;
    if let Some(out) = &args.out {
        files::write_json(out, &json)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&json)?);
    } else {
        print!("{}", render_text(&report));
    }
    Ok(())
}

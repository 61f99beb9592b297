//! Ablation sweeps over module toggles, mixing direction and filter threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::MixDirection;
use crate::synthlab::config::{direction_name, parse_pairs, TrainConfig};
use crate::synthlab::train::{train, EvalMetrics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub imix: bool,
    pub cda: bool,
    pub direction: String,
    pub tau: f64,
}

impl Variant {
    pub fn new(imix: bool, cda: bool, direction: MixDirection, tau: f64) -> Self {
        let base = match (imix, cda) {
            (false, false) => "baseline",
            (true, false) => "+imix",
            (false, true) => "+cda",
            (true, true) => "+imix+cda",
        };
        let name = if imix {
            format!("{base}[{},tau={tau}]", direction_name(direction))
        } else {
            base.to_string()
        };
        Self {
            name,
            imix,
            cda,
            direction: direction_name(direction).to_string(),
            tau,
        }
    }

    pub fn apply(&self, base: &TrainConfig, seed: u64) -> Result<TrainConfig> {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.imix = self.imix;
        cfg.cda = self.cda;
        cfg.direction = self.direction.parse()?;
        cfg.tau = self.tau;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sweep definition. Read from a flat key/value file with the keys
/// `variants` (any of baseline, imix, cda, both), `directions`, `taus` and
/// `seeds`, all comma separated; every other key overrides the base config.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationGrid {
    pub modules: Vec<String>,
    pub directions: Vec<MixDirection>,
    pub taus: Vec<f64>,
    pub seeds: Vec<u64>,
    pub base: TrainConfig,
}

fn list<T>(v: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(f).collect()
}

impl AblationGrid {
    pub fn parse(text: &str) -> Result<Self> {
        let mut grid = AblationGrid {
            modules: vec!["baseline".into(), "imix".into(), "cda".into(), "both".into()],
            directions: vec![MixDirection::TargetToSource],
            taus: vec![TrainConfig::default().tau],
            seeds: vec![1, 2, 3],
            base: TrainConfig::default(),
        };
        for (k, v) in parse_pairs(text)? {
            match k.as_str() {
                "variants" => {
                    grid.modules = list(&v, |s| match s {
                        "baseline" | "imix" | "cda" | "both" => Ok(s.to_string()),
                        other => Err(Error::InvalidValue(format!("unknown variant '{other}'"))),
                    })?
                }
                "directions" => grid.directions = list(&v, |s| s.parse())?,
                "taus" => {
                    grid.taus = list(&v, |s| {
                        s.parse::<f64>()
                            .ok()
                            .filter(|t| (0.0..=1.0).contains(t))
                            .ok_or_else(|| Error::InvalidValue(format!("bad tau '{s}'")))
                    })?
                }
                "seeds" => {
                    grid.seeds = list(&v, |s| s.parse().map_err(|_| Error::InvalidValue(format!("bad seed '{s}'"))))?
                }
                _ => grid.base.set(&k, &v)?,
            }
        }
        grid.base.validate()?;
        if grid.modules.is_empty() || grid.directions.is_empty() || grid.taus.is_empty() || grid.seeds.is_empty() {
            return Err(Error::InvalidValue("ablation grid has an empty axis".into()));
        }
        Ok(grid)
    }

    pub fn variants(&self) -> Vec<Variant> {
        expand_grid(&self.modules, &self.directions, &self.taus)
    }
}

/// Variants without instance mixing ignore direction and threshold, so they
/// appear once; the others are crossed with both axes.
pub fn expand_grid(modules: &[String], directions: &[MixDirection], taus: &[f64]) -> Vec<Variant> {
    let mut out = Vec::new();
    for m in modules {
        let (imix, cda) = match m.as_str() {
            "imix" => (true, false),
            "cda" => (false, true),
            "both" => (true, true),
            _ => (false, false),
        };
        if imix {
            for &d in directions {
                for &t in taus {
                    out.push(Variant::new(imix, cda, d, t));
                }
            }
        } else {
            out.push(Variant::new(false, cda, directions[0], taus[0]));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub runs: usize,
    pub mean: EvalMetrics,
    pub std: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub variants: Vec<Variant>,
    pub rows: Vec<AblationRow>,
    pub summary: Vec<SummaryRow>,
}

/// JSON Schema of [`AblationReport`].
pub const ABLATION_SCHEMA: &str = r##"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "AblationReport",
  "type": "object",
  "required": ["variants", "rows", "summary"],
  "$defs": {
    "metrics": {
      "type": "object",
      "required": ["msq", "mrq", "mpq", "miou", "map"],
      "properties": {
        "msq": {"type": "number"}, "mrq": {"type": "number"}, "mpq": {"type": "number"},
        "miou": {"type": "number"}, "map": {"type": "number"}
      }
    }
  },
  "properties": {
    "variants": {"type": "array", "items": {"type": "object",
      "required": ["name", "imix", "cda", "direction", "tau"],
      "properties": {"name": {"type": "string"}, "imix": {"type": "boolean"}, "cda": {"type": "boolean"},
        "direction": {"enum": ["t2s", "s2t"]}, "tau": {"type": "number"}}}},
    "rows": {"type": "array", "items": {"allOf": [{"$ref": "#/$defs/metrics"}, {"type": "object",
      "required": ["variant", "seed"],
      "properties": {"variant": {"type": "string"}, "seed": {"type": "integer", "minimum": 0}}}]}},
    "summary": {"type": "array", "items": {"type": "object",
      "required": ["variant", "runs", "mean", "std"],
      "properties": {"variant": {"type": "string"}, "runs": {"type": "integer", "minimum": 1},
        "mean": {"$ref": "#/$defs/metrics"}, "std": {"$ref": "#/$defs/metrics"}}}}
  }
}"##;

fn metric_array(m: &EvalMetrics) -> [f64; 5] {
    [m.msq, m.mrq, m.mpq, m.miou, m.map]
}

fn from_array(a: [f64; 5]) -> EvalMetrics {
    EvalMetrics {
        msq: a[0],
        mrq: a[1],
        mpq: a[2],
        miou: a[3],
        map: a[4],
    }
}

/// Sample mean and standard deviation (n - 1 denominator, 0 for one run).
fn summarize(variant: &str, rows: &[&AblationRow]) -> SummaryRow {
    let n = rows.len();
    let vals: Vec<[f64; 5]> = rows.iter().map(|r| metric_array(&r.metrics)).collect();
    let mean: [f64; 5] = std::array::from_fn(|k| vals.iter().map(|v| v[k]).sum::<f64>() / n as f64);
    let std: [f64; 5] = std::array::from_fn(|k| {
        if n < 2 {
            0.0
        } else {
            (vals.iter().map(|v| (v[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        }
    });
    SummaryRow {
        variant: variant.to_string(),
        runs: n,
        mean: from_array(mean),
        std: from_array(std),
    }
}

/// Trains every (variant, seed) pair, in parallel, and tabulates the final
/// held-out metrics.
pub fn run_ablation(base: &TrainConfig, variants: &[Variant], seeds: &[u64]) -> Result<AblationReport> {
    let jobs: Vec<(&Variant, u64)> = variants.iter().flat_map(|v| seeds.iter().map(move |&s| (v, s))).collect();
    let rows = jobs
        .par_iter()
        .map(|(v, s)| {
            let out = train(&v.apply(base, *s)?)?;
            Ok(AblationRow {
                variant: v.name.clone(),
                seed: *s,
                metrics: out.final_metrics(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = variants
        .iter()
        .map(|v| summarize(&v.name, &rows.iter().filter(|r| r.variant == v.name).collect::<Vec<_>>()))
        .collect();
    Ok(AblationReport {
        variants: variants.to_vec(),
        rows,
        summary,
    })
}

impl AblationReport {
    /// Aligned text table, values in percent.
    pub fn to_text(&self) -> String {
        let mut lines = vec![vec![
            "variant".to_string(),
            "seed".into(),
            "mSQ".into(),
            "mRQ".into(),
            "mPQ".into(),
            "mIoU".into(),
            "mAP".into(),
        ]];
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        for s in &self.summary {
            for r in self.rows.iter().filter(|r| r.variant == s.variant) {
                let mut l = vec![r.variant.clone(), r.seed.to_string()];
                l.extend(metric_array(&r.metrics).map(pct));
                lines.push(l);
            }
            let mut l = vec![s.variant.clone(), "mean±std".into()];
            let (m, d) = (metric_array(&s.mean), metric_array(&s.std));
            l.extend((0..5).map(|k| format!("{}±{}", pct(m[k]), pct(d[k]))));
            lines.push(l);
        }
        let widths: Vec<usize> = (0..7).map(|k| lines.iter().map(|l| l[k].chars().count()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let pad = widths[k] - c.chars().count();
                    if k == 0 {
                        format!("{c}{}", " ".repeat(pad))
                    } else {
                        format!("{}{c}", " ".repeat(pad))
                    }
                })
                .collect();
            out.push_str(cells.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

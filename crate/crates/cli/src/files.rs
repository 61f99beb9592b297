//! Path-aware reading and atomic writing of every artifact the CLI touches.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use panmix::io::{
    decode_image_png, decode_label_png, decode_panoptic, encode_image_png, encode_label_png, encode_panoptic,
    read_instances_jsonl, read_prob_volume, read_volume_raw, write_instances_jsonl, PanopticSidecar,
};
use panmix::{ClassCatalog, ImageRGB, InstanceSet, LabelMap2D, PanopticLabel, ProbVolume, Provenance};

/// An I/O failure tied to the path it happened on; maps to exit code 2.
#[derive(Debug)]
pub struct PathError {
    pub path: PathBuf,
    pub source: std::io::Error,
}

impl fmt::Display for PathError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.source)
    }
}

impl std::error::Error for PathError {}

fn path_err(path: &Path, source: std::io::Error) -> PathError {
    PathError {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read(path: &Path) -> Result<Vec<u8>> {
    Ok(std::fs::read(path).map_err(|e| path_err(path, e))?)
}

pub fn read_text(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path).map_err(|e| path_err(path, e))?)
}

pub fn require_exists(path: &Path) -> Result<()> {
    std::fs::metadata(path).map_err(|e| path_err(path, e))?;
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<()> {
    Ok(std::fs::create_dir_all(path).map_err(|e| path_err(path, e))?)
}

/// Writes through a temporary file in the destination directory and renames
/// it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    create_dir(&dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| path_err(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| path_err(path, e))?;
    tmp.persist(path).map_err(|e| path_err(path, e.error))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// `foo.png` -> `foo.json`.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

pub fn load_image(path: &Path) -> Result<ImageRGB> {
    decode_image_png(&read(path)?).with_context(|| format!("decoding image {}", path.display()))
}

pub fn save_image(path: &Path, image: &ImageRGB) -> Result<()> {
    write_atomic(path, &encode_image_png(image)?)
}

pub fn load_labels(path: &Path) -> Result<LabelMap2D> {
    decode_label_png(&read(path)?).with_context(|| format!("decoding label map {}", path.display()))
}

pub fn save_labels(path: &Path, labels: &LabelMap2D) -> Result<()> {
    write_atomic(path, &encode_label_png(labels)?)
}

pub fn load_panoptic(path: &Path, catalog: &ClassCatalog) -> Result<PanopticLabel> {
    let png = read(path)?;
    let side = sidecar_path(path);
    let sidecar: PanopticSidecar =
        serde_json::from_str(&read_text(&side)?).with_context(|| format!("parsing sidecar {}", side.display()))?;
    decode_panoptic(&png, &sidecar, catalog).with_context(|| format!("decoding panoptic label {}", path.display()))
}

/// Writes the PNG and its JSON sidecar next to it.
pub fn save_panoptic(path: &Path, label: &PanopticLabel, catalog: &ClassCatalog) -> Result<()> {
    let (png, sidecar) = encode_panoptic(label, catalog)?;
    write_atomic(path, &png)?;
    write_json(&sidecar_path(path), &sidecar)
}

pub fn load_probs(path: &Path) -> Result<ProbVolume> {
    read_prob_volume(&read(path)?).with_context(|| format!("decoding probability volume {}", path.display()))
}

pub fn load_raw_volume(path: &Path) -> Result<(usize, usize, usize, Vec<f32>)> {
    read_volume_raw(&read(path)?).with_context(|| format!("decoding volume {}", path.display()))
}

pub fn load_instances(path: &Path, provenance: Provenance) -> Result<InstanceSet> {
    read_instances_jsonl(&read_text(path)?, provenance).with_context(|| format!("decoding instances {}", path.display()))
}

pub fn save_instances(path: &Path, set: &InstanceSet) -> Result<()> {
    write_atomic(path, write_instances_jsonl(set)?.as_bytes())
}

/// `cityscapes16`, `lab`, or a JSON file `{"names": [...], "is_thing": [...]}`.
pub fn load_catalog(spec: &str) -> Result<ClassCatalog> {
    match spec {
        "cityscapes16" => Ok(ClassCatalog::cityscapes16()),
        "lab" => Ok(panmix::synthlab::lab_catalog()),
        path => {
            #[derive(serde::Deserialize)]
            struct Raw {
                names: Vec<String>,
                is_thing: Vec<bool>,
            }
            let path = Path::new(path);
            let raw: Raw = serde_json::from_str(&read_text(path)?)
                .with_context(|| format!("parsing catalog {}", path.display()))?;
            Ok(ClassCatalog::new(raw.names, raw.is_thing)?)
        }
    }
}

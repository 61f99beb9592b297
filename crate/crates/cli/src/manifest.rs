//! Dataset manifests: a domain tag and a list of per-image records whose
//! paths resolve relative to the manifest file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::files;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub image: PathBuf,
    #[serde(default)]
    pub panoptic: Option<PathBuf>,
    #[serde(default)]
    pub probs: Option<PathBuf>,
    #[serde(default)]
    pub instances: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub domain: Domain,
    pub records: Vec<ManifestRecord>,
}

impl ManifestRecord {
    fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        std::iter::once(&self.image)
            .chain(self.panoptic.iter())
            .chain(self.probs.iter())
            .chain(self.instances.iter())
    }

    fn resolved(&self, base: &Path) -> Self {
        let r = |p: &PathBuf| base.join(p);
        Self {
            image: r(&self.image),
            panoptic: self.panoptic.as_ref().map(r),
            probs: self.probs.as_ref().map(r),
            instances: self.instances.as_ref().map(r),
        }
    }
}

impl Manifest {
    /// Parses the manifest, resolves its paths and checks that every
    /// referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = files::read_text(path)?;
        let raw: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        if raw.records.is_empty() {
            bail!("manifest {} lists no records", path.display());
        }
        let base = path.parent().unwrap_or(Path::new(""));
        let records: Vec<ManifestRecord> = raw.records.iter().map(|r| r.resolved(base)).collect();
        for r in &records {
            for p in r.paths() {
                files::require_exists(p)?;
            }
        }
        Ok(Self {
            domain: raw.domain,
            records,
        })
    }

    pub fn expect_domain(&self, domain: Domain, path: &Path) -> Result<()> {
        if self.domain != domain {
            bail!(
                "manifest {} is tagged {:?}, expected {:?}",
                path.display(),
                self.domain,
                domain
            );
        }
        Ok(())
    }
}

pub fn check_dims(what: &str, got: (usize, usize), want: (usize, usize), path: &Path) -> Result<()> {
    if got != want {
        bail!(
            "{what} {} is {}x{}, the image is {}x{}",
            path.display(),
            got.0,
            got.1,
            want.0,
            want.1
        );
    }
    Ok(())
}

/// Relative form of `path` for manifests written into `base`.
pub fn relative_to(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

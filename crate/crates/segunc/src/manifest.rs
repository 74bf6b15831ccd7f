//! Case manifests: a TOML list of `[[case]]` tables naming the sample
//! volumes of each case. Relative paths resolve against the manifest's
//! directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Files belonging to one case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseManifest {
    pub case_id: String,
    pub samples: Vec<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub ct: Option<PathBuf>,
}

impl CaseManifest {
    /// Listed files that do not exist.
    pub fn missing_files(&self) -> Vec<&Path> {
        self.samples
            .iter()
            .chain(&self.ground_truth)
            .chain(&self.ct)
            .map(PathBuf::as_path)
            .filter(|p| !p.is_file())
            .collect()
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    #[serde(default, rename = "case")]
    cases: Vec<CaseEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CaseEntry {
    id: String,
    samples: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ct: Option<PathBuf>,
}

/// Parses and validates a manifest. File existence is not checked here;
/// see [`CaseManifest::missing_files`].
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<CaseManifest>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_manifest(path, &text, base)
}

fn parse_manifest(path: &Path, text: &str, base: &Path) -> Result<Vec<CaseManifest>> {
    let bad = |reason: String| Error::Manifest {
        path: path.into(),
        reason,
    };
    let file: ManifestFile = toml::from_str(text).map_err(|e| bad(e.message().to_owned()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(file.cases.len());
    for entry in file.cases {
        if entry.id.trim().is_empty() {
            return Err(bad("case id must not be empty".into()));
        }
        if !seen.insert(entry.id.clone()) {
            return Err(bad(format!("duplicate case id `{}`", entry.id)));
        }
        if entry.samples.len() < 2 {
            return Err(bad(format!(
                "case `{}` lists {} sample(s), at least 2 are required",
                entry.id,
                entry.samples.len()
            )));
        }
        let samples: Vec<PathBuf> = entry.samples.iter().map(|p| base.join(p)).collect();
        let distinct: HashSet<&PathBuf> = samples.iter().collect();
        if distinct.len() != samples.len() {
            return Err(bad(format!("case `{}` lists the same sample path twice", entry.id)));
        }
        out.push(CaseManifest {
            case_id: entry.id,
            samples,
            ground_truth: entry.ground_truth.map(|p| base.join(p)),
            ct: entry.ct.map(|p| base.join(p)),
        });
    }
    Ok(out)
}

/// Writes a manifest, storing paths relative to `path`'s directory when possible.
pub fn write_manifest(path: impl AsRef<Path>, cases: &[CaseManifest]) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &PathBuf| {
        p.strip_prefix(base)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| p.clone())
    };
    let file = ManifestFile {
        cases: cases
            .iter()
            .map(|c| CaseEntry {
                id: c.case_id.clone(),
                samples: c.samples.iter().map(rel).collect(),
                ground_truth: c.ground_truth.as_ref().map(rel),
                ct: c.ct.as_ref().map(rel),
            })
            .collect(),
    };
    let text = toml::to_string(&file).map_err(|e| Error::Manifest {
        path: path.into(),
        reason: e.to_string(),
    })?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

//! Image/mask pairs on disk, synthetic fixtures and materialized AE sets.
//!
//! A dataset root holds images under one directory and masks found by a
//! naming rule of the form `<image-dir> -> <mask-pattern>`, where the pattern
//! may use `{stem}` and end in `.*` to accept any supported extension. The
//! default rule is `images -> GT/{stem}.*`.

mod ae;
mod synth;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ae::{load_ae_set, materialize_ae_set, AeEntry, AeSetManifest, AeSetOutcome, MaterializeContext};
pub use synth::{synth_dataset, synth_samples, Difficulty, SynthParams, SynthSpec};

use crate::error::{Error, Result};
use crate::imagekit::io::{image_dims, is_supported};
use crate::imagekit::{load_image, load_mask, BinaryMask, Image};

/// One image with its ground-truth mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub image: Image,
    pub truth: BinaryMask,
}

impl Sample {
    pub fn new(id: impl Into<String>, image: Image, truth: BinaryMask) -> Self {
        Self {
            id: id.into(),
            image,
            truth,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
}

/// Paths are relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub id: String,
    pub image: String,
    pub mask: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub split: Split,
    pub pairs: Vec<Pair>,
}

/// A file that could not be paired or validated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanIssue {
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub manifest: DatasetManifest,
    pub issues: Vec<ScanIssue>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NamingRule {
    pub image_dir: String,
    pub mask_pattern: String,
}

impl Default for NamingRule {
    fn default() -> Self {
        "images -> GT/{stem}.*".parse().expect("default rule parses")
    }
}

impl FromStr for NamingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (dir, pattern) = s
            .split_once("->")
            .ok_or_else(|| Error::invalid("naming_rule", format!("`{s}` lacks `->`")))?;
        let (dir, pattern) = (dir.trim(), pattern.trim());
        if dir.is_empty() || !pattern.contains("{stem}") {
            return Err(Error::invalid("naming_rule", format!("`{s}` needs a directory and a `{{stem}}` pattern")));
        }
        Ok(Self {
            image_dir: dir.to_string(),
            mask_pattern: pattern.to_string(),
        })
    }
}

impl fmt::Display for NamingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.image_dir, self.mask_pattern)
    }
}

impl TryFrom<String> for NamingRule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<NamingRule> for String {
    fn from(r: NamingRule) -> String {
        r.to_string()
    }
}

impl NamingRule {
    /// Candidate mask paths (relative to the root) for an image stem.
    fn mask_candidates(&self, root: &Path, stem: &str) -> Vec<String> {
        let pattern = self.mask_pattern.replace("{stem}", stem);
        match pattern.strip_suffix(".*") {
            None => vec![pattern],
            Some(base) => {
                let full = root.join(base);
                let (Some(dir), Some(name)) = (full.parent(), full.file_name().and_then(|n| n.to_str())) else {
                    return vec![];
                };
                let mut found: Vec<String> = std::fs::read_dir(dir)
                    .into_iter()
                    .flatten()
                    .flatten()
                    .filter_map(|e| e.file_name().into_string().ok())
                    .filter(|f| Path::new(f).file_stem().and_then(|s| s.to_str()) == Some(name))
                    .filter(|f| is_supported(Path::new(f)))
                    .map(|f| {
                        let parent = Path::new(base).parent().map(|p| p.to_string_lossy().into_owned());
                        match parent.filter(|p| !p.is_empty()) {
                            Some(p) => format!("{p}/{f}"),
                            None => f,
                        }
                    })
                    .collect();
                found.sort();
                found
            }
        }
    }
}

/// Pairs images with masks under `root`, in lexicographic stem order.
/// Missing masks and dimension mismatches are reported per file; the
/// remaining pairs are still returned.
pub fn scan_dataset(root: impl AsRef<Path>, name: &str, split: Split, rule: &NamingRule) -> Result<ScanReport> {
    let root = root.as_ref();
    let image_dir = root.join(&rule.image_dir);
    let entries = std::fs::read_dir(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    let mut images: Vec<(String, String)> = entries
        .flatten()
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|f| is_supported(Path::new(f)))
        .filter_map(|f| {
            let stem = Path::new(&f).file_stem()?.to_str()?.to_string();
            Some((stem, f))
        })
        .collect();
    images.sort();
    let mut pairs = Vec::new();
    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    for (stem, file) in images {
        let image_rel = format!("{}/{}", rule.image_dir, file);
        if pairs.iter().any(|p: &Pair| p.id == stem) {
            issues.push(ScanIssue {
                path: image_rel,
                reason: format!("duplicate stem `{stem}`"),
            });
            continue;
        }
        let Some(mask_rel) = rule
            .mask_candidates(root, &stem)
            .into_iter()
            .find(|m| root.join(m).is_file())
        else {
            issues.push(ScanIssue {
                path: image_rel,
                reason: "orphan image: no mask".into(),
            });
            continue;
        };
        let dims = image_dims(root.join(&image_rel)).and_then(|a| image_dims(root.join(&mask_rel)).map(|b| (a, b)));
        match dims {
            Ok((a, b)) if a == b => pairs.push(Pair {
                id: stem,
                image: image_rel,
                mask: mask_rel,
            }),
            Ok((a, b)) => issues.push(ScanIssue {
                path: image_rel,
                reason: format!("dimension mismatch: image {}×{}, mask {}×{}", a.0, a.1, b.0, b.1),
            }),
            Err(e) => issues.push(ScanIssue {
                path: image_rel,
                reason: e.to_string(),
            }),
        }
    }
    if pairs.is_empty() {
        warnings.push(format!("no image/mask pairs found under {}", root.display()));
    }
    Ok(ScanReport {
        manifest: DatasetManifest {
            name: name.to_string(),
            split,
            pairs,
        },
        issues,
        warnings,
    })
}

impl DatasetManifest {
    /// Reads every pair; failures are returned per file alongside the loaded samples.
    pub fn load(&self, root: impl AsRef<Path>) -> (Vec<Sample>, Vec<ScanIssue>) {
        let root = root.as_ref();
        let mut samples = Vec::new();
        let mut issues = Vec::new();
        for p in &self.pairs {
            let loaded = load_image(root.join(&p.image)).and_then(|img| {
                let mask = load_mask(root.join(&p.mask))?;
                img.ensure_same_dims(mask.dims())?;
                Ok(Sample::new(p.id.clone(), img, mask))
            });
            match loaded {
                Ok(s) => samples.push(s),
                Err(e) => issues.push(ScanIssue {
                    path: p.image.clone(),
                    reason: e.to_string(),
                }),
            }
        }
        (samples, issues)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path.as_ref(), self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::NotFound(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub(crate) fn create_dir(path: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagekit::{save_image, save_mask};

    fn write_pair(root: &Path, stem: &str, img: (usize, usize), mask: (usize, usize)) {
        std::fs::create_dir_all(root.join("images")).unwrap();
        std::fs::create_dir_all(root.join("GT")).unwrap();
        save_image(&Image::filled(img.0, img.1, [9.0; 3]), root.join(format!("images/{stem}.png"))).unwrap();
        save_mask(&BinaryMask::from_fn(mask.0, mask.1, |y, _| y == 0), root.join(format!("GT/{stem}.png"))).unwrap();
    }

    #[test]
    fn empty_directory_warns() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("images")).unwrap();
        let r = scan_dataset(dir.path(), "e", Split::Test, &NamingRule::default()).unwrap();
        assert!(r.manifest.pairs.is_empty());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn pairs_come_in_stem_order() {
        let dir = tempfile::tempdir().unwrap();
        for stem in ["c", "a", "b"] {
            write_pair(dir.path(), stem, (4, 5), (4, 5));
        }
        let r = scan_dataset(dir.path(), "d", Split::Test, &NamingRule::default()).unwrap();
        let ids: Vec<&str> = r.manifest.pairs.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(r.manifest.pairs[0].mask, "GT/a.png");
        let (samples, issues) = r.manifest.load(dir.path());
        assert_eq!(samples.len(), 3);
        assert!(issues.is_empty());
    }

    #[test]
    fn partial_failures_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        write_pair(dir.path(), "good", (4, 4), (4, 4));
        write_pair(dir.path(), "rotated", (100, 80), (80, 100));
        save_image(&Image::filled(2, 2, [0.0; 3]), dir.path().join("images/orphan.ppm")).unwrap();
        let r = scan_dataset(dir.path(), "d", Split::Test, &NamingRule::default()).unwrap();
        assert_eq!(r.manifest.pairs.len(), 1);
        assert_eq!(r.issues.len(), 2);
        assert!(r.issues.iter().any(|i| i.reason.contains("dimension mismatch")));
        assert!(r.issues.iter().any(|i| i.reason.contains("orphan")));
    }

    #[test]
    fn alternate_naming_rule() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("img")).unwrap();
        save_image(&Image::filled(3, 3, [1.0; 3]), dir.path().join("img/x.png")).unwrap();
        save_mask(&BinaryMask::from_fn(3, 3, |_, _| true), dir.path().join("img/x_mask.pgm")).unwrap();
        let rule: NamingRule = "img -> img/{stem}_mask.pgm".parse().unwrap();
        let r = scan_dataset(dir.path(), "d", Split::Test, &rule).unwrap();
        // the mask itself is an image file in the same directory
        assert_eq!(r.manifest.pairs.len(), 1);
        assert_eq!(r.manifest.pairs[0].mask, "img/x_mask.pgm");
        assert!(r.issues.iter().all(|i| i.path.contains("x_mask")));
        assert!("no arrow".parse::<NamingRule>().is_err());
        assert_eq!(NamingRule::default().to_string(), "images -> GT/{stem}.*");
    }
}

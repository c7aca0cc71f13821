use std::io::Write;
use std::path::{Path, PathBuf};

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{create_dir, read_json, write_json, Sample, ScanIssue};
use crate::attacks::{
    apply_patch, coverage, fgsm, multipixel_attack, random_placement, train_patch, AttackKind, AttackSpec,
    MultipixelSpec, Patch, PatchPlacement, PixelEdit,
};
use crate::error::{Error, Result};
use crate::imagekit::io::quantize;
use crate::imagekit::{label_seed, load_image, load_mask, lp_distance, save_image, save_mask, Image, Norm, RngStream};
use crate::models::SodModel;

/// Inputs shared by every AE set of one run.
#[derive(Clone, Copy)]
pub struct MaterializeContext<'a> {
    pub dataset_name: &'a str,
    /// Model attacked by the white-box and query attacks.
    pub source_model: Option<&'a dyn SodModel>,
    /// Samples the patch is trained on; the attacked samples when `None`.
    pub patch_train: Option<&'a [Sample]>,
    pub seed: u64,
}

/// Per-image record. Distances compare the saved 8-bit AE with the source image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeEntry {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub l0: f64,
    pub linf: f64,
    pub l2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<PatchPlacement>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeSetManifest {
    pub source_dataset: String,
    pub attack: AttackSpec,
    pub source_model: Option<String>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_side: Option<usize>,
    /// Mean loss on the patch-training evaluation set, per step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patch_trace: Option<Vec<f64>>,
    pub entries: Vec<AeEntry>,
}

#[derive(Clone, Debug)]
pub struct AeSetOutcome {
    pub dir: PathBuf,
    pub manifest: AeSetManifest,
}

impl AeSetOutcome {
    pub fn errors(&self) -> usize {
        self.manifest.entries.iter().filter(|e| e.error.is_some()).count()
    }
}

#[derive(Serialize)]
struct EditLine<'a> {
    id: &'a str,
    edits: &'a [PixelEdit],
}

struct Crafted {
    image: Image,
    placement: Option<PatchPlacement>,
    edits: Vec<PixelEdit>,
}

fn require_source<'a>(ctx: &MaterializeContext<'a>, attack: &AttackSpec) -> Result<&'a dyn SodModel> {
    ctx.source_model
        .ok_or_else(|| Error::invalid("source_model", format!("attack `{}` needs a source model", attack.id)))
}

fn model_name(ctx: &MaterializeContext) -> String {
    ctx.source_model.map_or_else(String::new, |m| m.name().to_string())
}

fn prepare_patch(samples: &[Sample], attack: &AttackSpec, ctx: &MaterializeContext, root: &RngStream) -> Result<Option<(Patch, Vec<f64>)>> {
    let AttackKind::Patch { side, train, patch_file } = &attack.attack else {
        return Ok(None);
    };
    if let Some(file) = patch_file {
        return Ok(Some((Patch::load(file)?, vec![])));
    }
    let model = require_source(ctx, attack)?;
    let oracle = model.gradient_oracle().ok_or_else(|| Error::NoGradient(model_name(ctx)))?;
    let train_data = ctx.patch_train.unwrap_or(samples);
    let dims = train_data
        .iter()
        .chain(samples)
        .map(|s| s.image.dims())
        .min_by_key(|d| d.0.min(d.1))
        .ok_or(Error::EmptyDataset)?;
    let side = side.resolve(dims)?;
    let mut spec = train.clone();
    spec.seed = root.derive(0).seed();
    let trained = train_patch(train_data, oracle, &spec, side)?;
    Ok(Some((trained.patch, trained.trace)))
}

fn craft(
    sample: &Sample,
    attack: &AttackSpec,
    ctx: &MaterializeContext,
    patch: Option<&Patch>,
    rng: &mut RngStream,
) -> Result<Crafted> {
    let plain = |image| Crafted {
        image,
        placement: None,
        edits: vec![],
    };
    match &attack.attack {
        AttackKind::Identity => Ok(plain(sample.image.clone())),
        AttackKind::Fgsm { epsilon } => {
            let oracle = require_source(ctx, attack)?.gradient_oracle().ok_or_else(|| Error::NoGradient(model_name(ctx)))?;
            fgsm(&sample.image, &sample.truth, oracle, *epsilon).map(plain)
        }
        AttackKind::Multipixel { spec, budget_fraction } => {
            let model = require_source(ctx, attack)?;
            let pixels = sample.image.pixel_count();
            let d = match budget_fraction {
                Some(f) => ((f * pixels as f64).round() as usize).clamp(1, pixels),
                None => spec.d,
            };
            let spec = MultipixelSpec {
                d,
                seed: rng.next_u64(),
                ..spec.clone()
            };
            let out = multipixel_attack(&sample.image, &sample.truth, model, &spec)?;
            Ok(Crafted {
                image: out.image,
                placement: None,
                edits: out.edits,
            })
        }
        AttackKind::Patch { .. } => {
            let patch = patch.expect("patch prepared before crafting");
            let placement = random_placement(sample.image.dims(), patch, rng)?;
            Ok(Crafted {
                image: apply_patch(&sample.image, patch, &placement)?,
                placement: Some(placement),
                edits: vec![],
            })
        }
        AttackKind::Noise { noise } => noise.apply(&sample.image, rng).map(plain),
    }
}

fn reset_dir(path: &Path) -> Result<PathBuf> {
    if path.exists() {
        std::fs::remove_dir_all(path).map_err(|e| Error::io(path, e))?;
    }
    create_dir(path)
}

/// Crafts one AE per sample and writes
/// `<out>/<dataset>/<attack-id>/{images/, GT/, manifest.json}`, plus
/// `edits.jsonl` for pixel attacks and `patch.png` for patch attacks.
///
/// Image `id` draws from stream `label(id)` of stream `label(attack-id)` of
/// the run seed. Per-image failures are recorded in the manifest.
pub fn materialize_ae_set(samples: &[Sample], attack: &AttackSpec, ctx: &MaterializeContext, out: impl AsRef<Path>) -> Result<AeSetOutcome> {
    attack.validate()?;
    if attack.attack.needs_source_model() {
        require_source(ctx, attack)?;
    }
    let root = RngStream::new(ctx.seed).derive(label_seed(&attack.id));
    let patch = prepare_patch(samples, attack, ctx, &root)?;

    let dir = create_dir(&out.as_ref().join(ctx.dataset_name).join(&attack.id))?;
    let images = reset_dir(&dir.join("images"))?;
    let masks = reset_dir(&dir.join("GT"))?;
    for stale in ["edits.jsonl", "patch.png"] {
        let p = dir.join(stale);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }

    let crafted: Vec<Result<Crafted>> = samples
        .par_iter()
        .map(|s| {
            let mut rng = root.derive(label_seed(&s.id));
            craft(s, attack, ctx, patch.as_ref().map(|p| &p.0), &mut rng)
        })
        .collect();

    let mut entries = Vec::with_capacity(samples.len());
    let mut edit_lines = String::new();
    for (sample, result) in samples.iter().zip(crafted) {
        let entry = result.and_then(|c| {
            let q = c.image.map_entries(|_, v| f64::from(quantize(v)));
            let image_rel = format!("images/{}.png", sample.id);
            let mask_rel = format!("GT/{}.png", sample.id);
            save_image(&q, images.join(format!("{}.png", sample.id)))?;
            save_mask(&sample.truth, masks.join(format!("{}.png", sample.id)))?;
            if matches!(attack.attack, AttackKind::Multipixel { .. }) {
                edit_lines.push_str(&serde_json::to_string(&EditLine {
                    id: &sample.id,
                    edits: &c.edits,
                })?);
                edit_lines.push('\n');
            }
            Ok(AeEntry {
                id: sample.id.clone(),
                image: Some(image_rel),
                mask: Some(mask_rel),
                l0: lp_distance(&q, &sample.image, Norm::L0)?,
                linf: lp_distance(&q, &sample.image, Norm::Linf)?,
                l2: lp_distance(&q, &sample.image, Norm::L2)?,
                coverage: c.placement.map(|p| coverage(sample.image.dims(), patch.as_ref().map_or(1, |x| x.0.side()), &p)),
                placement: c.placement,
                error: None,
            })
        });
        entries.push(entry.unwrap_or_else(|e| AeEntry {
            id: sample.id.clone(),
            image: None,
            mask: None,
            l0: 0.0,
            linf: 0.0,
            l2: 0.0,
            placement: None,
            coverage: None,
            error: Some(e.to_string()),
        }));
    }

    if matches!(attack.attack, AttackKind::Multipixel { .. }) {
        let path = dir.join("edits.jsonl");
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(edit_lines.as_bytes()))
            .map_err(|e| Error::io(&path, e))?;
    }
    if let Some((p, _)) = &patch {
        p.save(dir.join("patch.png"))?;
    }
    let manifest = AeSetManifest {
        source_dataset: ctx.dataset_name.to_string(),
        attack: attack.clone(),
        source_model: if attack.attack.needs_source_model() {
            ctx.source_model.map(|m| m.name().to_string())
        } else {
            None
        },
        seed: ctx.seed,
        patch_side: patch.as_ref().map(|p| p.0.side()),
        patch_trace: patch.map(|p| p.1).filter(|t| !t.is_empty()),
        entries,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(AeSetOutcome { dir, manifest })
}

/// Reads a materialized AE set; entries that failed when crafting or that
/// cannot be loaded are returned as issues.
pub fn load_ae_set(dir: impl AsRef<Path>) -> Result<(AeSetManifest, Vec<Sample>, Vec<ScanIssue>)> {
    let dir = dir.as_ref();
    let manifest: AeSetManifest = read_json(&dir.join("manifest.json"))?;
    let mut samples = Vec::new();
    let mut issues = Vec::new();
    for e in &manifest.entries {
        let loaded = match (&e.image, &e.mask, &e.error) {
            (Some(img), Some(mask), None) => load_image(dir.join(img)).and_then(|i| {
                let m = load_mask(dir.join(mask))?;
                i.ensure_same_dims(m.dims())?;
                Ok(Sample::new(e.id.clone(), i, m))
            }),
            _ => Err(Error::invalid(
                "entry",
                e.error.clone().unwrap_or_else(|| "missing image or mask".into()),
            )),
        };
        match loaded {
            Ok(s) => samples.push(s),
            Err(err) => issues.push(ScanIssue {
                path: e.id.clone(),
                reason: err.to_string(),
            }),
        }
    }
    Ok((manifest, samples, issues))
}

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use sodbench_core::attacks::{original_column, AttackSpec};
use sodbench_core::dataset::{
    load_ae_set, materialize_ae_set, scan_dataset, synth_dataset, DatasetManifest, MaterializeContext, Sample,
    ScanIssue, Split, SynthSpec,
};
use sodbench_core::eval::{continuity_probe, dataset_score, summarize, DatasetScore, ImageScore};
use sodbench_core::imagekit::{derive_seed, label_seed, RngStream};
use sodbench_core::models::gp::{gp_train, GpModel, GpProgram};
use sodbench_core::models::{GradientOracle, HeuristicModel, LinearToyModel, SodModel};

use crate::config::{ModelEntry, Resolved};
use crate::report::{self, ErrorRecord};

/// Count of per-image, per-column and per-attack failures of a verb.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub errors: usize,
}

pub fn synth_seed(seed: u64, split: Split) -> u64 {
    let label = match split {
        Split::Train => "synth-data/train",
        Split::Test => "synth-data/test",
    };
    derive_seed(seed, label_seed(label))
}

pub fn attack_seed(seed: u64) -> u64 {
    derive_seed(seed, label_seed("attack"))
}

pub fn probe_seed(seed: u64) -> u64 {
    derive_seed(seed, label_seed("probe-continuity"))
}

pub fn synth_data(cfg: &Resolved) -> Result<Outcome> {
    let s = &cfg.synth;
    let root = cfg.out.join("data").join(&s.name);
    for (split, n, dir) in [(Split::Train, s.train, "train"), (Split::Test, s.test, "test")] {
        if n == 0 {
            continue;
        }
        let spec = SynthSpec {
            name: s.name.clone(),
            n,
            height: s.height,
            width: s.width,
            difficulty: s.difficulty,
            seed: synth_seed(cfg.seed, split),
        };
        synth_dataset(root.join(dir), &spec, split).with_context(|| format!("writing {dir} split"))?;
        info!("wrote {n} {dir} images to {}", root.join(dir).display());
    }
    Ok(Outcome::default())
}

/// Loads a split from its `manifest.json`, or by scanning with the naming rule.
pub fn load_split(cfg: &Resolved, dir: &Path, split: Split) -> Result<(Vec<Sample>, Vec<ScanIssue>)> {
    if !dir.is_dir() {
        bail!("dataset directory {} does not exist (run `synth-data` or set `dataset.*`)", dir.display());
    }
    let manifest_path = dir.join("manifest.json");
    let (manifest, mut issues) = if manifest_path.is_file() {
        (DatasetManifest::read(&manifest_path)?, Vec::new())
    } else {
        let report = scan_dataset(dir, &cfg.dataset_name, split, &cfg.naming_rule)?;
        (report.manifest, report.issues)
    };
    let (samples, load_issues) = manifest.load(dir);
    issues.extend(load_issues);
    if samples.is_empty() {
        bail!("no loadable image/mask pair in {}", dir.display());
    }
    Ok((samples, issues))
}

fn train_split(cfg: &Resolved) -> Result<Vec<Sample>> {
    let (samples, issues) = load_split(cfg, &cfg.train_dir, Split::Train)?;
    for i in &issues {
        warn!("train split: {}: {}", i.path, i.reason);
    }
    Ok(samples)
}

fn entry_path(cfg: &Resolved, kind: &str) -> Result<PathBuf> {
    cfg.models
        .iter()
        .find_map(|m| match (kind, m) {
            ("linear", ModelEntry::Linear { weights, .. }) => weights.clone(),
            ("gp", ModelEntry::Gp { program, .. }) => program.clone(),
            _ => None,
        })
        .ok_or_else(|| anyhow!("no `{kind}` model in the registry"))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

pub fn train_linear(cfg: &Resolved) -> Result<Outcome> {
    let samples = train_split(cfg)?;
    let model = LinearToyModel::fit(&samples, cfg.linear)?;
    let path = entry_path(cfg, "linear")?;
    create_parent(&path)?;
    model.save(&path)?;
    info!("wrote {}", path.display());
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct GpReport<'a> {
    config_hash: String,
    program: String,
    fitness: f64,
    mean_fbeta: f64,
    images: usize,
    params: &'a sodbench_core::models::gp::EvolutionParams,
}

pub fn train_gp(cfg: &Resolved) -> Result<Outcome> {
    let samples = train_split(cfg)?;
    let outcome = gp_train(&samples, &cfg.gp)?;
    let path = entry_path(cfg, "gp")?;
    create_parent(&path)?;
    outcome.program.save(&path)?;
    let reports = cfg.reports_dir();
    report::write_trace(&reports.join("gp_trace.csv"), &outcome.trace, &cfg.hash())?;
    report::write_json(
        &reports.join("gp_train.json"),
        &GpReport {
            config_hash: cfg.hash(),
            program: outcome.program.to_string(),
            fitness: outcome.fitness,
            mean_fbeta: outcome.mean_fbeta,
            images: samples.len(),
            params: &cfg.gp,
        },
    )?;
    info!("wrote {} (mean max-F-beta {:.4})", path.display(), outcome.mean_fbeta);
    Ok(Outcome::default())
}

/// A registry entry under its configured name.
pub struct Registered {
    name: String,
    inner: Box<dyn SodModel>,
}

impl SodModel for Registered {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, img: &sodbench_core::imagekit::Image) -> sodbench_core::Result<sodbench_core::imagekit::SaliencyMap> {
        self.inner.predict(img)
    }

    fn gradient_oracle(&self) -> Option<&dyn GradientOracle> {
        self.inner.gradient_oracle()
    }
}

pub fn load_model(entry: &ModelEntry) -> Result<Registered> {
    let inner: Box<dyn SodModel> = match entry {
        ModelEntry::Linear { weights, .. } => {
            let p = weights.as_ref().expect("resolved path");
            Box::new(LinearToyModel::load(p).with_context(|| format!("loading linear weights {}", p.display()))?)
        }
        ModelEntry::Heuristic { scales, .. } => Box::new(HeuristicModel::new(scales.clone())?),
        ModelEntry::Gp { name, program } => {
            let p = program.as_ref().expect("resolved path");
            let prog = GpProgram::load(p).with_context(|| format!("loading GP program {}", p.display()))?;
            Box::new(GpModel::new(name.clone(), prog))
        }
    };
    Ok(Registered {
        name: entry.name().to_string(),
        inner,
    })
}

#[derive(Serialize)]
struct AttackSetReport {
    id: String,
    label: String,
    dir: String,
    images: usize,
    errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct AttackReport {
    config_hash: String,
    dataset: String,
    source_model: String,
    seed: u64,
    sets: Vec<AttackSetReport>,
}

pub fn attack(cfg: &Resolved) -> Result<Outcome> {
    if cfg.attacks.is_empty() {
        warn!("attack suite is empty; nothing to do");
        return Ok(Outcome::default());
    }
    let (samples, issues) = load_split(cfg, &cfg.test_dir, Split::Test)?;
    let source = if cfg.attacks.iter().any(|a| a.attack.needs_source_model()) {
        cfg.model(&cfg.source_model)
            .ok_or_else(|| anyhow!("source model `{}` is not in the registry", cfg.source_model))
            .and_then(load_model)
            .map_err(|e| format!("{e:#}"))
    } else {
        Err("no attack needs a source model".to_string())
    };
    let patch_train = if cfg.attacks.iter().any(|a| matches!(a.attack, sodbench_core::attacks::AttackKind::Patch { .. })) {
        match load_split(cfg, &cfg.train_dir, Split::Train) {
            Ok((s, _)) => Some(s),
            Err(e) => {
                warn!("patch training falls back to the test split: {e:#}");
                None
            }
        }
    } else {
        None
    };
    let ctx = MaterializeContext {
        dataset_name: &cfg.dataset_name,
        source_model: source.as_ref().ok().map(|m| m as &dyn SodModel),
        patch_train: patch_train.as_deref(),
        seed: attack_seed(cfg.seed),
    };
    let root = cfg.ae_root();
    let mut sets = Vec::new();
    let mut errors = issues.len();
    for i in &issues {
        warn!("test split: {}: {}", i.path, i.reason);
    }
    for spec in &cfg.attacks {
        let dir = format!("ae/{}/{}", cfg.dataset_name, spec.id);
        let result = if spec.attack.needs_source_model() {
            match &source {
                Ok(_) => materialize_ae_set(&samples, spec, &ctx, &root).map_err(|e| e.to_string()),
                Err(e) => Err(format!("source model unavailable: {e}")),
            }
        } else {
            materialize_ae_set(&samples, spec, &ctx, &root).map_err(|e| e.to_string())
        };
        let record = match result {
            Ok(set) => {
                errors += set.errors();
                info!("{}: {} images, {} errors", spec.id, set.manifest.entries.len(), set.errors());
                AttackSetReport {
                    id: spec.id.clone(),
                    label: spec.label.clone(),
                    dir,
                    images: set.manifest.entries.len(),
                    errors: set.errors(),
                    error: None,
                }
            }
            Err(e) => {
                errors += 1;
                warn!("{}: {e}", spec.id);
                AttackSetReport {
                    id: spec.id.clone(),
                    label: spec.label.clone(),
                    dir,
                    images: 0,
                    errors: 0,
                    error: Some(e),
                }
            }
        };
        sets.push(record);
    }
    report::write_json(
        &cfg.reports_dir().join("attack.json"),
        &AttackReport {
            config_hash: cfg.hash(),
            dataset: cfg.dataset_name.clone(),
            source_model: cfg.source_model.clone(),
            seed: ctx.seed,
            sets,
        },
    )?;
    Ok(Outcome { errors })
}

/// The data behind one table column.
struct ColumnData {
    spec: AttackSpec,
    samples: Vec<Sample>,
    /// Images that could not be loaded or crafted.
    failed: Vec<ImageScore>,
}

fn load_column(cfg: &Resolved, spec: &AttackSpec) -> Result<ColumnData, String> {
    let dir = cfg.ae_root().join(&cfg.dataset_name).join(&spec.id);
    if !dir.join("manifest.json").is_file() {
        return Err(format!("AE set {} is missing (run `attack`)", dir.display()));
    }
    let (manifest, samples, issues) = load_ae_set(&dir).map_err(|e| e.to_string())?;
    if manifest.attack != *spec {
        return Err(format!("AE set {} was crafted with a different attack configuration", dir.display()));
    }
    let mut failed: Vec<ImageScore> = manifest
        .entries
        .iter()
        .filter_map(|e| {
            e.error.as_ref().map(|msg| ImageScore {
                id: e.id.clone(),
                score: None,
                error: Some(msg.clone()),
            })
        })
        .collect();
    failed.extend(issues.into_iter().map(|i| ImageScore {
        id: i.path,
        score: None,
        error: Some(i.reason),
    }));
    Ok(ColumnData {
        spec: spec.clone(),
        samples,
        failed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ColumnReport {
    pub id: String,
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<DatasetScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelReport {
    pub model: String,
    /// Population standard deviation of the available column means.
    pub cross_attack_std: Option<f64>,
    pub columns: Vec<ColumnReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityRecord {
    pub model: String,
    pub delta: f64,
    pub norm: sodbench_core::eval::ProbeNorm,
    pub samples: usize,
    pub images: Vec<String>,
    pub epsilon_hat: Vec<f64>,
    pub mean_epsilon_hat: f64,
    pub max_epsilon_hat: f64,
    /// Analytic upper bound, for models that have one.
    pub bound: Option<f64>,
}

fn score_column(cfg: &Resolved, model: &dyn SodModel, data: &ColumnData) -> Result<DatasetScore, String> {
    let fbeta = cfg.eval.fbeta();
    let mut images = if data.samples.is_empty() {
        Vec::new()
    } else {
        dataset_score(model, &data.samples, &fbeta, cfg.eval.std_mode)
            .map(|s| s.images)
            .map_err(|e| e.to_string())?
    };
    images.extend(data.failed.iter().cloned());
    images.sort_by(|a, b| a.id.cmp(&b.id));
    DatasetScore::from_images(images, cfg.eval.std_mode).map_err(|e| e.to_string())
}

pub fn evaluate_models(cfg: &Resolved) -> Result<(Vec<ModelReport>, Vec<ErrorRecord>)> {
    let (clean, issues) = load_split(cfg, &cfg.test_dir, Split::Test)?;
    let mut errors: Vec<ErrorRecord> = issues
        .iter()
        .map(|i| ErrorRecord::image(None, None, &i.path, &i.reason))
        .collect();
    let mut columns: Vec<Result<ColumnData, (AttackSpec, String)>> = vec![Ok(ColumnData {
        spec: original_column(),
        samples: clean,
        failed: Vec::new(),
    })];
    for spec in &cfg.attacks {
        columns.push(load_column(cfg, spec).map_err(|e| (spec.clone(), e)));
    }
    for c in &columns {
        if let Err((spec, e)) = c {
            errors.push(ErrorRecord::column(None, &spec.id, e));
        }
    }

    let mut reports = Vec::new();
    for entry in &cfg.models {
        let model = match load_model(entry) {
            Ok(m) => m,
            Err(e) => {
                errors.push(ErrorRecord::model(entry.name(), &format!("{e:#}")));
                reports.push(ModelReport {
                    model: entry.name().to_string(),
                    cross_attack_std: None,
                    columns: columns
                        .iter()
                        .map(|c| {
                            let spec = match c {
                                Ok(d) => &d.spec,
                                Err((s, _)) => s,
                            };
                            ColumnReport {
                                id: spec.id.clone(),
                                label: spec.label.clone(),
                                score: None,
                                error: Some("model unavailable".into()),
                            }
                        })
                        .collect(),
                });
                continue;
            }
        };
        let mut col_reports = Vec::new();
        for c in &columns {
            let r = match c {
                Ok(data) => match score_column(cfg, &model, data) {
                    Ok(score) => {
                        for img in score.images.iter().filter(|i| i.score.is_none()) {
                            let msg = img.error.as_deref().unwrap_or("unscored");
                            if !msg.starts_with("skipped") {
                                errors.push(ErrorRecord::image(Some(entry.name()), Some(&data.spec.id), &img.id, msg));
                            }
                        }
                        ColumnReport {
                            id: data.spec.id.clone(),
                            label: data.spec.label.clone(),
                            score: Some(score),
                            error: None,
                        }
                    }
                    Err(e) => {
                        errors.push(ErrorRecord::column(Some(entry.name()), &data.spec.id, &e));
                        ColumnReport {
                            id: data.spec.id.clone(),
                            label: data.spec.label.clone(),
                            score: None,
                            error: Some(e),
                        }
                    }
                },
                Err((spec, e)) => ColumnReport {
                    id: spec.id.clone(),
                    label: spec.label.clone(),
                    score: None,
                    error: Some(e.clone()),
                },
            };
            col_reports.push(r);
        }
        let scored: Vec<(String, DatasetScore)> = col_reports
            .iter()
            .filter_map(|c| c.score.clone().map(|s| (c.id.clone(), s)))
            .collect();
        let cross = summarize(entry.name(), &scored, cfg.eval.std_mode)
            .ok()
            .map(|s| s.cross_attack_std);
        reports.push(ModelReport {
            model: entry.name().to_string(),
            cross_attack_std: cross,
            columns: col_reports,
        });
    }
    Ok((reports, errors))
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    config_hash: String,
    dataset: &'a str,
    beta_squared: f64,
    thresholds: usize,
    std_mode: sodbench_core::eval::StdMode,
    models: &'a [ModelReport],
    continuity: &'a [ContinuityRecord],
}

pub fn evaluate(cfg: &Resolved) -> Result<Outcome> {
    let (models, mut errors) = evaluate_models(cfg)?;
    let (continuity, probe_errors) = continuity_records(cfg)?;
    let reports = cfg.reports_dir();
    let hash = cfg.hash();
    report::write_table(&reports.join("table.csv"), &models, &hash)?;
    report::write_json(
        &reports.join("report.json"),
        &EvaluationReport {
            config_hash: hash.clone(),
            dataset: &cfg.dataset_name,
            beta_squared: cfg.eval.beta_squared,
            thresholds: cfg.eval.thresholds,
            std_mode: cfg.eval.std_mode,
            models: &models,
            continuity: &continuity,
        },
    )?;
    report::write_continuity(&reports, &continuity, &probe_errors, &hash)?;
    errors.extend(probe_errors);
    report::write_errors(&reports.join("errors.json"), &errors, &hash)?;
    info!("wrote {}", reports.join("table.csv").display());
    Ok(Outcome { errors: errors.len() })
}

pub fn continuity_records(cfg: &Resolved) -> Result<(Vec<ContinuityRecord>, Vec<ErrorRecord>)> {
    let c = &cfg.continuity;
    let (clean, _) = load_split(cfg, &cfg.test_dir, Split::Test)?;
    let images: Vec<&Sample> = clean.iter().take(c.images).collect();
    let root = RngStream::new(probe_seed(cfg.seed));
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for entry in &cfg.models {
        let model = match load_model(entry) {
            Ok(m) => m,
            Err(e) => {
                errors.push(ErrorRecord::model(entry.name(), &format!("{e:#}")));
                continue;
            }
        };
        let linear = match entry {
            ModelEntry::Linear { weights: Some(p), .. } => LinearToyModel::load(p).ok(),
            _ => None,
        };
        let model_stream = root.derive(label_seed(entry.name()));
        for (k, &delta) in c.deltas.iter().enumerate() {
            let results: Vec<(String, Result<f64, String>)> = images
                .par_iter()
                .map(|s| {
                    let mut rng = model_stream.derive(label_seed(&s.id)).derive(k as u64);
                    let r = continuity_probe(&model, &s.image, delta, c.norm, c.samples, &mut rng)
                        .map(|e| e.epsilon_hat)
                        .map_err(|e| e.to_string());
                    (s.id.clone(), r)
                })
                .collect();
            let mut ids = Vec::new();
            let mut values = Vec::new();
            for (id, r) in results {
                match r {
                    Ok(v) => {
                        ids.push(id);
                        values.push(v);
                    }
                    Err(e) => errors.push(ErrorRecord::image(Some(entry.name()), Some("continuity"), &id, &e)),
                }
            }
            let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
            records.push(ContinuityRecord {
                model: entry.name().to_string(),
                delta,
                norm: c.norm,
                samples: c.samples,
                images: ids,
                max_epsilon_hat: values.iter().copied().fold(0.0, f64::max),
                mean_epsilon_hat: mean,
                epsilon_hat: values,
                bound: linear.as_ref().map(|m| m.rms_change_bound(delta, c.norm)),
            });
        }
    }
    Ok((records, errors))
}

pub fn probe_continuity(cfg: &Resolved) -> Result<Outcome> {
    let (records, errors) = continuity_records(cfg)?;
    let hash = cfg.hash();
    report::write_continuity(&cfg.reports_dir(), &records, &errors, &hash)?;
    Ok(Outcome { errors: errors.len() })
}

/// Every stage in order: data, both trainable models, the AE suite, the report.
pub fn run_all(cfg: &Resolved) -> Result<Outcome> {
    let mut errors = 0;
    for stage in [synth_data, train_linear, train_gp, attack, evaluate] {
        errors += stage(cfg)?.errors;
    }
    Ok(Outcome { errors })
}

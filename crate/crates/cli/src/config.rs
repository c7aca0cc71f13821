//! Run configuration, read from one TOML or JSON file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use sodbench_core::attacks::{published_suite, AttackSpec};
use sodbench_core::dataset::{Difficulty, NamingRule};
use sodbench_core::eval::{FBetaConfig, ProbeNorm, StdMode};
use sodbench_core::imagekit::{derive_seed, label_seed};
use sodbench_core::models::gp::EvolutionParams;
use sodbench_core::models::LinearFitParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub desk_scale: bool,
    pub synth: SynthConfig,
    pub dataset: DatasetConfig,
    /// Detectors to evaluate; the default registry when empty.
    pub models: Vec<ModelEntry>,
    /// Registry name of the model the white-box and query attacks target.
    pub source_model: String,
    /// Attack columns; the published suite when absent.
    pub attacks: Option<Vec<AttackSpec>>,
    pub linear: LinearFitParams,
    /// Evolution settings; a preset depending on `desk_scale` when absent.
    /// The seed field is replaced by a stream of the global seed.
    pub gp: Option<EvolutionParams>,
    pub eval: EvalConfig,
    pub continuity: ContinuityConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            desk_scale: false,
            synth: SynthConfig::default(),
            dataset: DatasetConfig::default(),
            models: Vec::new(),
            source_model: "linear".into(),
            attacks: None,
            linear: LinearFitParams::default(),
            gp: None,
            eval: EvalConfig::default(),
            continuity: ContinuityConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub name: String,
    pub difficulty: Difficulty,
    pub height: usize,
    pub width: usize,
    pub train: usize,
    pub test: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synth".into(),
            difficulty: Difficulty::LowContrast,
            height: 64,
            width: 64,
            train: 10,
            test: 10,
        }
    }
}

/// Where the image/mask pairs live. Unset entries point at the output of
/// `synth-data`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: Option<String>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Used when a split directory has no `manifest.json`.
    pub naming_rule: NamingRule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelEntry {
    Linear {
        name: String,
        /// Defaults to `<out>/models/linear.json`.
        #[serde(default)]
        weights: Option<PathBuf>,
    },
    Heuristic {
        name: String,
        #[serde(default = "default_scales")]
        scales: Vec<usize>,
    },
    Gp {
        name: String,
        /// Defaults to `<out>/models/gp.txt`.
        #[serde(default)]
        program: Option<PathBuf>,
    },
}

fn default_scales() -> Vec<usize> {
    vec![1, 3, 7]
}

impl ModelEntry {
    pub fn name(&self) -> &str {
        match self {
            ModelEntry::Linear { name, .. } | ModelEntry::Heuristic { name, .. } | ModelEntry::Gp { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub beta_squared: f64,
    pub thresholds: usize,
    pub std_mode: StdMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let f = FBetaConfig::default();
        Self {
            beta_squared: f.beta_squared,
            thresholds: f.thresholds,
            std_mode: StdMode::Population,
        }
    }
}

impl EvalConfig {
    pub fn fbeta(&self) -> FBetaConfig {
        FBetaConfig {
            beta_squared: self.beta_squared,
            thresholds: self.thresholds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuityConfig {
    pub deltas: Vec<f64>,
    pub norm: ProbeNorm,
    pub samples: usize,
    /// Probe at most this many test images, in dataset order.
    pub images: usize,
}

impl Default for ContinuityConfig {
    fn default() -> Self {
        Self {
            deltas: vec![1.0, 4.0, 16.0],
            norm: ProbeNorm::Linf,
            samples: 16,
            images: 10,
        }
    }
}

/// Paths and settings after defaults, presets and flag overrides.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub desk_scale: bool,
    pub synth: SynthConfig,
    pub dataset_name: String,
    pub train_dir: PathBuf,
    pub test_dir: PathBuf,
    pub naming_rule: NamingRule,
    pub models: Vec<ModelEntry>,
    pub source_model: String,
    pub attacks: Vec<AttackSpec>,
    pub linear: LinearFitParams,
    pub gp: EvolutionParams,
    pub eval: EvalConfig,
    pub continuity: ContinuityConfig,
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("config field `{}`: {}", e.path(), e.inner()))
    } else {
        let de = toml::Deserializer::new(&text);
        serde_path_to_error::deserialize(de).map_err(|e| anyhow::anyhow!("config field `{}`: {}", e.path(), e.inner()))
    };
    parsed.with_context(|| format!("parsing config {}", path.display()))
}

fn desk_gp() -> EvolutionParams {
    EvolutionParams {
        population_size: 30,
        generations: 15,
        ..Default::default()
    }
}

impl RunConfig {
    pub fn resolve(self) -> Result<Resolved> {
        let out = self.out;
        let name = self.dataset.name.unwrap_or_else(|| self.synth.name.clone());
        let data_root = out.join("data").join(&self.synth.name);
        let train_dir = self.dataset.train.unwrap_or_else(|| data_root.join("train"));
        let test_dir = self.dataset.test.unwrap_or_else(|| data_root.join("test"));
        let models = if self.models.is_empty() {
            vec![
                ModelEntry::Gp {
                    name: "gp".into(),
                    program: None,
                },
                ModelEntry::Linear {
                    name: "linear".into(),
                    weights: None,
                },
                ModelEntry::Heuristic {
                    name: "heuristic".into(),
                    scales: default_scales(),
                },
            ]
        } else {
            self.models
        };
        let models = models
            .into_iter()
            .map(|m| match m {
                ModelEntry::Linear { name, weights } => ModelEntry::Linear {
                    name,
                    weights: Some(weights.unwrap_or_else(|| out.join("models").join("linear.json"))),
                },
                ModelEntry::Gp { name, program } => ModelEntry::Gp {
                    name,
                    program: Some(program.unwrap_or_else(|| out.join("models").join("gp.txt"))),
                },
                other => other,
            })
            .collect();
        let mut gp = self.gp.unwrap_or_else(|| if self.desk_scale { desk_gp() } else { EvolutionParams::default() });
        gp.seed = derive_seed(self.seed, label_seed("train-gp"));
        let resolved = Resolved {
            seed: self.seed,
            gp,
            desk_scale: self.desk_scale,
            attacks: self.attacks.unwrap_or_else(|| published_suite(self.desk_scale)),
            out,
            synth: self.synth,
            dataset_name: name,
            train_dir,
            test_dir,
            naming_rule: self.dataset.naming_rule,
            models,
            source_model: self.source_model,
            linear: self.linear,
            eval: self.eval,
            continuity: self.continuity,
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl Resolved {
    fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for (i, a) in self.attacks.iter().enumerate() {
            a.validate().with_context(|| format!("config field `attacks[{i}]`"))?;
            if a.id == sodbench_core::attacks::ORIGINAL_ID {
                bail!("config field `attacks[{i}].id`: `{}` is reserved for the clean column", a.id);
            }
            if !ids.insert(a.id.as_str()) {
                bail!("config field `attacks[{i}].id`: duplicate id `{}`", a.id);
            }
        }
        let mut names = HashSet::new();
        for (i, m) in self.models.iter().enumerate() {
            if m.name().is_empty() || !names.insert(m.name()) {
                bail!("config field `models[{i}].name`: `{}` is empty or duplicated", m.name());
            }
            if let ModelEntry::Heuristic { scales, .. } = m {
                sodbench_core::models::HeuristicModel::new(scales.clone())
                    .with_context(|| format!("config field `models[{i}].scales`"))?;
            }
        }
        self.gp.validate().context("config field `gp`")?;
        self.eval.fbeta().validate().context("config field `eval`")?;
        if self.synth.name.is_empty() || self.dataset_name.is_empty() {
            bail!("config field `synth.name`: must be non-empty");
        }
        if self.continuity.deltas.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            bail!("config field `continuity.deltas`: every delta must be finite and > 0");
        }
        if self.continuity.samples == 0 {
            bail!("config field `continuity.samples`: must be >= 1");
        }
        Ok(())
    }

    /// SHA-256 of the resolved settings. Paths inside the output directory
    /// are hashed relative to it, so moving a run does not change the hash.
    pub fn hash(&self) -> String {
        let rel = |p: &Path| p.strip_prefix(&self.out).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
        let mut canon = self.clone();
        canon.train_dir = rel(&self.train_dir);
        canon.test_dir = rel(&self.test_dir);
        for m in &mut canon.models {
            match m {
                ModelEntry::Linear { weights: Some(p), .. } | ModelEntry::Gp { program: Some(p), .. } => *p = rel(p),
                _ => {}
            }
        }
        let text = serde_json::to_string(&canon).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn ae_root(&self) -> PathBuf {
        self.out.join("ae")
    }

    pub fn model(&self, name: &str) -> Option<&ModelEntry> {
        self.models.iter().find(|m| m.name() == name)
    }
}

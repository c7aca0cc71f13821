//! Adversarial and noise perturbations, and the attack suite description.

mod de;
mod fgsm;
mod multipixel;
mod patch;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use de::{de_step, DeConfig};
pub use fgsm::{fgsm, fgsm_sweep, PUBLISHED_EPSILONS};
pub use multipixel::{multipixel_attack, MultipixelOutcome, MultipixelSpec, ObjectiveMode, PixelEdit};
pub use patch::{
    apply_patch, coverage, footprint, random_placement, scaled_side, train_patch, Patch, PatchPlacement,
    PatchTrainSpec, PatchTraining, Rotation, INITIAL_PATCH_VALUE, SCALE_BUCKETS,
};

use crate::error::{Error, Result};
use crate::noise::{NoiseSpec, SaltPepperMode, SpeckleDistribution};

/// Patch size, either absolute or as a fraction of the image area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchSide {
    Pixels(usize),
    /// Side chosen so that `side² ≈ coverage · min(H, W)²`.
    Coverage(f64),
}

impl PatchSide {
    pub fn resolve(self, dims: (usize, usize)) -> Result<usize> {
        match self {
            PatchSide::Pixels(0) => Err(Error::invalid("side", "must be >= 1")),
            PatchSide::Pixels(s) => Ok(s),
            PatchSide::Coverage(c) if c > 0.0 && c <= 1.0 => {
                let base = dims.0.min(dims.1) as f64;
                Ok(((c.sqrt() * base).round() as usize).max(1))
            }
            PatchSide::Coverage(c) => Err(Error::invalid("coverage", format!("{c} outside (0, 1]"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackKind {
    Identity,
    Fgsm {
        epsilon: f64,
    },
    Multipixel {
        #[serde(default)]
        spec: MultipixelSpec,
        /// When set, `d` becomes this fraction of each image's pixel count.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget_fraction: Option<f64>,
    },
    Patch {
        side: PatchSide,
        #[serde(default)]
        train: PatchTrainSpec,
        /// Replay an external patch image instead of training one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        patch_file: Option<PathBuf>,
    },
    Noise {
        noise: NoiseSpec,
    },
}

impl AttackKind {
    /// Whether the attack needs a source model to run.
    pub fn needs_source_model(&self) -> bool {
        match self {
            AttackKind::Fgsm { .. } | AttackKind::Multipixel { .. } => true,
            AttackKind::Patch { patch_file, .. } => patch_file.is_none(),
            AttackKind::Identity | AttackKind::Noise { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AttackKind::Identity => Ok(()),
            AttackKind::Fgsm { epsilon } if *epsilon >= 0.0 && epsilon.is_finite() => Ok(()),
            AttackKind::Fgsm { epsilon } => Err(Error::invalid("epsilon", format!("{epsilon} must be >= 0"))),
            AttackKind::Multipixel { spec, budget_fraction } => {
                if let Some(f) = budget_fraction {
                    if !(*f > 0.0 && *f <= 1.0) {
                        return Err(Error::invalid("budget_fraction", format!("{f} outside (0, 1]")));
                    }
                }
                spec.validate()
            }
            AttackKind::Patch { side, train, .. } => {
                side.resolve((1, 1))?;
                train.validate()
            }
            AttackKind::Noise { noise } => noise.validate(),
        }
    }
}

/// One column of the robustness table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// File-system friendly identifier, also the AE directory name.
    pub id: String,
    /// Column header.
    pub label: String,
    pub attack: AttackKind,
}

impl AttackSpec {
    pub fn new(id: impl Into<String>, label: impl Into<String>, attack: AttackKind) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            attack,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = !self.id.is_empty()
            && self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.');
        if !ok {
            return Err(Error::invalid("id", format!("`{}` must be non-empty [A-Za-z0-9._-]", self.id)));
        }
        self.attack.validate()
    }
}

/// Column id of the unattacked data.
pub const ORIGINAL_ID: &str = "original";

pub fn original_column() -> AttackSpec {
    AttackSpec::new(ORIGINAL_ID, "Original", AttackKind::Identity)
}

/// Salt & pepper density used by the default suite.
pub const DEFAULT_SALT_PEPPER_DENSITY: f64 = 0.05;

/// The twelve perturbation columns of the published tables (the Original
/// column is evaluated on the clean data and is not part of the suite).
///
/// With `desk_scale` the search budgets shrink: the pixel budget becomes 3% of
/// each image, patch sides follow the published area fractions, and DE and
/// patch training run far fewer steps.
pub fn published_suite(desk_scale: bool) -> Vec<AttackSpec> {
    let mut suite: Vec<AttackSpec> = PUBLISHED_EPSILONS
        .iter()
        .map(|&e| AttackSpec::new(format!("fgsm-{e}"), format!("ε={e}"), AttackKind::Fgsm { epsilon: e }))
        .collect();
    let (spec, budget_fraction) = if desk_scale {
        (
            MultipixelSpec {
                pop_size: 12,
                max_iters: 8,
                ..Default::default()
            },
            Some(0.03),
        )
    } else {
        (MultipixelSpec::default(), None)
    };
    suite.push(AttackSpec::new(
        "multipixel",
        "Multipixel",
        AttackKind::Multipixel { spec, budget_fraction },
    ));
    let train = if desk_scale {
        PatchTrainSpec {
            iterations: 20,
            step_size: 8.0,
            placements_per_step: 4,
            eval_placements: 8,
            ..Default::default()
        }
    } else {
        PatchTrainSpec::default()
    };
    let (big, small) = if desk_scale {
        (PatchSide::Coverage(0.31), PatchSide::Coverage(0.22))
    } else {
        (PatchSide::Pixels(70), PatchSide::Pixels(50))
    };
    for (id, label, side) in [("patch", "Patch", big), ("patch-s", "Patch(S)", small)] {
        suite.push(AttackSpec::new(
            id,
            label,
            AttackKind::Patch {
                side,
                train: train.clone(),
                patch_file: None,
            },
        ));
    }
    suite.push(AttackSpec::new(
        "gaussian",
        "Gaussian",
        AttackKind::Noise {
            noise: NoiseSpec::Gaussian { sigma: 30.0 },
        },
    ));
    suite.push(AttackSpec::new(
        "salt-pepper",
        "S&P",
        AttackKind::Noise {
            noise: NoiseSpec::SaltPepper {
                density: DEFAULT_SALT_PEPPER_DENSITY,
                mode: SaltPepperMode::PerChannel,
            },
        },
    ));
    suite.push(AttackSpec::new(
        "speckle",
        "Speckle",
        AttackKind::Noise {
            noise: NoiseSpec::Speckle {
                variance: 0.3,
                distribution: SpeckleDistribution::Gaussian,
            },
        },
    ));
    suite
}

//! Random perturbation generators: Gaussian, salt & pepper and speckle.
//!
//! Every generator is a pure function of its input, its parameters and the
//! supplied [`RngStream`]. Results are clamped back into `[0, 255]`.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagekit::{Image, RngStream, CHANNELS};

/// How salt & pepper decides the fate of an entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SaltPepperMode {
    /// Each color band draws independently, producing colored dots.
    #[default]
    PerChannel,
    /// One draw per pixel applied to all three bands.
    Luma,
}

/// Distribution of the multiplicative speckle factor `m`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpeckleDistribution {
    #[default]
    Gaussian,
    /// Zero-mean uniform with the same variance.
    Uniform,
}

/// Parameters of one noise family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseSpec {
    Gaussian {
        sigma: f64,
    },
    SaltPepper {
        density: f64,
        #[serde(default)]
        mode: SaltPepperMode,
    },
    Speckle {
        variance: f64,
        #[serde(default)]
        distribution: SpeckleDistribution,
    },
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::invalid("sigma", format!("{sigma} must be finite and >= 0")))
            }
            NoiseSpec::SaltPepper { density, .. } if !(0.0..=1.0).contains(&density) => {
                Err(Error::invalid("density", format!("{density} outside [0, 1]")))
            }
            NoiseSpec::Speckle { variance, .. } if !(variance >= 0.0 && variance.is_finite()) => {
                Err(Error::invalid("variance", format!("{variance} must be finite and >= 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, img: &Image, rng: &mut RngStream) -> Result<Image> {
        match *self {
            NoiseSpec::Gaussian { sigma } => gaussian_noise(img, sigma, rng),
            NoiseSpec::SaltPepper { density, mode } => salt_pepper_noise(img, density, mode, rng),
            NoiseSpec::Speckle {
                variance,
                distribution,
            } => speckle_noise(img, variance, distribution, rng),
        }
    }
}

/// Additive zero-mean Gaussian noise with standard deviation `sigma` (byte units).
pub fn gaussian_noise(img: &Image, sigma: f64, rng: &mut RngStream) -> Result<Image> {
    NoiseSpec::Gaussian { sigma }.validate()?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid("sigma", e.to_string()))?;
    Ok(img.map_entries(|_, v| v + normal.sample(rng)))
}

/// Salt & pepper: with probability `density / 2` an entry becomes 0, with
/// probability `density / 2` it becomes 255, otherwise it is kept.
pub fn salt_pepper_noise(
    img: &Image,
    density: f64,
    mode: SaltPepperMode,
    rng: &mut RngStream,
) -> Result<Image> {
    NoiseSpec::SaltPepper { density, mode }.validate()?;
    if density == 0.0 {
        return Ok(img.clone());
    }
    let fate = |u: f64, v: f64| {
        if u < density / 2.0 {
            0.0
        } else if u < density {
            255.0
        } else {
            v
        }
    };
    let out = match mode {
        SaltPepperMode::PerChannel => img.map_entries(|_, v| fate(rng.random::<f64>(), v)),
        SaltPepperMode::Luma => {
            let mut u = 0.0;
            img.map_entries(|i, v| {
                if i % CHANNELS == 0 {
                    u = rng.random::<f64>();
                }
                fate(u, v)
            })
        }
    };
    Ok(out)
}

/// Multiplicative speckle `J = I + m * I`, with `m` zero-mean and variance `variance`.
pub fn speckle_noise(
    img: &Image,
    variance: f64,
    distribution: SpeckleDistribution,
    rng: &mut RngStream,
) -> Result<Image> {
    NoiseSpec::Speckle {
        variance,
        distribution,
    }
    .validate()?;
    if variance == 0.0 {
        return Ok(img.clone());
    }
    let std = variance.sqrt();
    let out = match distribution {
        SpeckleDistribution::Gaussian => {
            let normal = Normal::new(0.0, std).map_err(|e| Error::invalid("variance", e.to_string()))?;
            img.map_entries(|_, v| v + normal.sample(rng) * v)
        }
        SpeckleDistribution::Uniform => {
            // U(-a, a) has variance a^2 / 3.
            let a = (3.0 * variance).sqrt();
            let uniform = Uniform::new_inclusive(-a, a).map_err(|e| Error::invalid("variance", e.to_string()))?;
            img.map_entries(|_, v| v + uniform.sample(rng) * v)
        }
    };
    Ok(out)
}

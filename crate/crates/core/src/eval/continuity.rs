use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagekit::{Image, RngStream};
use crate::models::SodModel;

/// Norm of the input ball the probe samples from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeNorm {
    Linf,
    L2,
}

/// Largest output change observed inside a delta-ball around one image.
///
/// `epsilon_hat` is the RMS per-pixel saliency difference, so it is a lower
/// bound on the local modulus of continuity at radius `delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityEstimate {
    pub delta: f64,
    pub norm: ProbeNorm,
    pub epsilon_hat: f64,
    pub samples: usize,
}

fn ball_sample(img: &Image, delta: f64, norm: ProbeNorm, rng: &mut RngStream) -> Image {
    match norm {
        ProbeNorm::Linf => img.map_entries(|_, v| v + rng.random_range(-delta..=delta)),
        ProbeNorm::L2 => {
            let n = img.data().len();
            let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let len = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            // radius ~ delta * U^(1/n) gives a uniform draw from the ball
            let radius = delta * rng.random::<f64>().powf(1.0 / n as f64);
            let scale = if len > 0.0 { radius / len } else { 0.0 };
            img.map_entries(|i, v| v + dir[i] * scale)
        }
    }
}

/// Draws `samples` perturbed copies of `img` within the delta-ball (clamped
/// to valid pixels) and records the largest RMS change of the prediction.
///
/// Samples are drawn sequentially from `rng`, so for a fixed seed a larger
/// `samples` extends the same sequence and `epsilon_hat` cannot decrease.
pub fn continuity_probe(
    model: &dyn SodModel,
    img: &Image,
    delta: f64,
    norm: ProbeNorm,
    samples: usize,
    rng: &mut RngStream,
) -> Result<ContinuityEstimate> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid("delta", "must be finite and > 0"));
    }
    if samples == 0 {
        return Err(Error::invalid("samples", "must be >= 1"));
    }
    let base = model.predict(img)?;
    let pixels = (img.pixel_count().max(1)) as f64;
    let mut epsilon_hat: f64 = 0.0;
    for _ in 0..samples {
        let perturbed = ball_sample(img, delta, norm, rng);
        let out = model.predict(&perturbed)?;
        let sq: f64 = out
            .data()
            .iter()
            .zip(base.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        epsilon_hat = epsilon_hat.max((sq / pixels).sqrt());
    }
    Ok(ContinuityEstimate {
        delta,
        norm,
        epsilon_hat,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagekit::{lp_distance, Norm, SaliencyMap};
    use crate::models::{ConstantModel, LinearToyModel};

    fn toy() -> (LinearToyModel, Image) {
        let model = LinearToyModel::tied(6, 6, [0.01, -0.02, 0.015], -0.5);
        let img = Image::from_fn(6, 6, |y, x, c| (40 * y + 13 * x + 50 * c) as f64 % 255.0);
        (model, img)
    }

    #[test]
    fn constant_model_has_zero_modulus() {
        let model = ConstantModel::new("c", SaliencyMap::filled(6, 6, 0.3));
        let (_, img) = toy();
        for norm in [ProbeNorm::Linf, ProbeNorm::L2] {
            let e = continuity_probe(&model, &img, 50.0, norm, 20, &mut RngStream::new(1)).unwrap();
            assert_eq!(e.epsilon_hat, 0.0);
        }
    }

    #[test]
    fn vanishing_radius_gives_vanishing_change() {
        let (model, img) = toy();
        let e = continuity_probe(&model, &img, 1e-9, ProbeNorm::Linf, 10, &mut RngStream::new(2)).unwrap();
        assert!(e.epsilon_hat < 1e-6);
    }

    #[test]
    fn monotone_in_sample_count() {
        let (model, img) = toy();
        let mut last = 0.0;
        for samples in [1, 2, 5, 10, 40] {
            let e = continuity_probe(&model, &img, 8.0, ProbeNorm::L2, samples, &mut RngStream::new(3)).unwrap();
            assert!(e.epsilon_hat >= last);
            last = e.epsilon_hat;
        }
    }

    #[test]
    fn samples_stay_inside_the_ball() {
        let img = Image::filled(5, 5, [128.0; 3]);
        let mut rng = RngStream::new(4);
        for _ in 0..50 {
            let s = ball_sample(&img, 3.0, ProbeNorm::L2, &mut rng);
            assert!(lp_distance(&s, &img, Norm::L2).unwrap() <= 3.0 + 1e-9);
            let s = ball_sample(&img, 3.0, ProbeNorm::Linf, &mut rng);
            assert!(lp_distance(&s, &img, Norm::Linf).unwrap() <= 3.0);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let (model, img) = toy();
        assert!(continuity_probe(&model, &img, 0.0, ProbeNorm::L2, 1, &mut RngStream::new(0)).is_err());
        assert!(continuity_probe(&model, &img, 1.0, ProbeNorm::L2, 0, &mut RngStream::new(0)).is_err());
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GradientOracle, ImageGradient, SodModel};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::eval::ProbeNorm;
use crate::imagekit::{ensure_dims, BinaryMask, Image, SaliencyMap, CHANNELS};

/// Per-pixel linear detector squashed by the logistic function:
/// `s(y, x) = logistic(sum_c w[y, x, c] * I[y, x, c] + bias)`.
///
/// The loss used for gradients is the mean binary cross-entropy between the
/// prediction and the ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearToyModel {
    pub height: usize,
    pub width: usize,
    /// Row-major H×W×3, matching [`Image`] layout.
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFitParams {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for LinearFitParams {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 2.0,
        }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LinearToyModel {
    pub fn new(height: usize, width: usize, weights: Vec<f64>, bias: f64) -> Result<Self> {
        let model = Self {
            height,
            width,
            weights,
            bias,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            weights: vec![0.0; height * width * CHANNELS],
            bias: 0.0,
        }
    }

    /// Same color weights at every pixel.
    pub fn tied(height: usize, width: usize, color: [f64; 3], bias: f64) -> Self {
        let weights = (0..height * width).flat_map(|_| color).collect();
        Self {
            height,
            width,
            weights,
            bias,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.height * self.width * CHANNELS {
            return Err(Error::invalid(
                "weights",
                format!(
                    "{} entries for a {}x{}x3 model",
                    self.weights.len(),
                    self.height,
                    self.width
                ),
            ));
        }
        if !self.bias.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights", "non-finite value"));
        }
        Ok(())
    }

    /// Fits tied color weights by full-batch gradient descent on the mean
    /// cross-entropy over every pixel of the dataset. Features are scaled to
    /// `[0, 1]` during the fit and the result is rescaled to byte units.
    pub fn fit(dataset: &[Sample], params: LinearFitParams) -> Result<Self> {
        let first = dataset.first().ok_or(Error::EmptyDataset)?;
        let (height, width) = first.image.dims();
        for s in dataset {
            ensure_dims((height, width), s.image.dims())?;
            ensure_dims((height, width), s.truth.dims())?;
        }
        let total = (dataset.len() * height * width) as f64;
        let mut w = [0.0f64; 3];
        let mut b = 0.0f64;
        for _ in 0..params.epochs {
            let mut gw = [0.0f64; 3];
            let mut gb = 0.0;
            for sample in dataset {
                for (px, &g) in sample.image.data().chunks_exact(CHANNELS).zip(sample.truth.data()) {
                    let x = [px[0] / 255.0, px[1] / 255.0, px[2] / 255.0];
                    let z = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + b;
                    let r = logistic(z) - if g { 1.0 } else { 0.0 };
                    for c in 0..3 {
                        gw[c] += r * x[c];
                    }
                    gb += r;
                }
            }
            for c in 0..3 {
                w[c] -= params.learning_rate * gw[c] / total;
            }
            b -= params.learning_rate * gb / total;
        }
        Ok(Self::tied(height, width, [w[0] / 255.0, w[1] / 255.0, w[2] / 255.0], b))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    /// Pre-activation response per pixel.
    pub fn logits(&self, img: &Image) -> Result<Vec<f64>> {
        ensure_dims((self.height, self.width), img.dims())?;
        Ok(img
            .data()
            .chunks_exact(CHANNELS)
            .zip(self.weights.chunks_exact(CHANNELS))
            .map(|(i, w)| w[0] * i[0] + w[1] * i[1] + w[2] * i[2] + self.bias)
            .collect())
    }

    /// Per-pixel weight vectors, useful for analytic bounds.
    pub fn pixel_weights(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(CHANNELS)
    }

    /// Upper bound on the RMS per-pixel change of the prediction over every
    /// input perturbation in the `delta`-ball of `norm`, using the logistic
    /// slope bound of 1/4.
    pub fn rms_change_bound(&self, delta: f64, norm: ProbeNorm) -> f64 {
        let n = (self.height * self.width).max(1) as f64;
        match norm {
            ProbeNorm::Linf => {
                let sq: f64 = self.pixel_weights().map(|w| w.iter().map(|v| v.abs()).sum::<f64>().powi(2)).sum();
                0.25 * delta * (sq / n).sqrt()
            }
            ProbeNorm::L2 => {
                let worst = self
                    .pixel_weights()
                    .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                0.25 * delta * worst / n.sqrt()
            }
        }
    }
}

impl SodModel for LinearToyModel {
    fn name(&self) -> &str {
        "linear"
    }

    fn predict(&self, img: &Image) -> Result<SaliencyMap> {
        let s = self.logits(img)?.into_iter().map(logistic).collect();
        SaliencyMap::new(self.height, self.width, s)
    }

    fn gradient_oracle(&self) -> Option<&dyn GradientOracle> {
        Some(self)
    }
}

impl GradientOracle for LinearToyModel {
    fn loss(&self, img: &Image, truth: &BinaryMask) -> Result<f64> {
        ensure_dims((self.height, self.width), truth.dims())?;
        let z = self.logits(img)?;
        let n = z.len() as f64;
        // BCE(logistic(z), g) = softplus(z) - g z
        Ok(z
            .iter()
            .zip(truth.data())
            .map(|(&z, &g)| softplus(z) - if g { z } else { 0.0 })
            .sum::<f64>()
            / n)
    }

    fn loss_gradient(&self, img: &Image, truth: &BinaryMask) -> Result<ImageGradient> {
        ensure_dims((self.height, self.width), truth.dims())?;
        let z = self.logits(img)?;
        let n = z.len() as f64;
        let mut data = Vec::with_capacity(img.data().len());
        for ((&z, &g), w) in z.iter().zip(truth.data()).zip(self.weights.chunks_exact(CHANNELS)) {
            let r = (logistic(z) - if g { 1.0 } else { 0.0 }) / n;
            data.extend(w.iter().map(|wc| r * wc));
        }
        Ok(ImageGradient {
            height: self.height,
            width: self.width,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagekit::RngStream;
    use rand::Rng;

    fn random_model(h: usize, w: usize, rng: &mut RngStream) -> LinearToyModel {
        let weights = (0..h * w * 3).map(|_| rng.random_range(-0.02..0.02)).collect();
        LinearToyModel::new(h, w, weights, rng.random_range(-1.0..1.0)).unwrap()
    }

    fn random_image(h: usize, w: usize, rng: &mut RngStream) -> Image {
        Image::from_fn(h, w, |_, _, _| rng.random_range(0.0..=255.0))
    }

    #[test]
    fn zero_model_is_uniform_half() {
        let m = LinearToyModel::zeros(3, 4);
        let s = m.predict(&Image::filled(3, 4, [200.0; 3])).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn saturating_weight_on_white() {
        let mut m = LinearToyModel::zeros(2, 2);
        m.weights[0] = 1.0;
        let s = m.predict(&Image::filled(2, 2, [255.0; 3])).unwrap();
        assert!(s.get(0, 0) > 0.99);
        assert_eq!(s.get(1, 1), 0.5);
    }

    #[test]
    fn predict_matches_scalar_loop() {
        let mut rng = RngStream::new(21);
        let m = random_model(4, 4, &mut rng);
        let img = random_image(4, 4, &mut rng);
        let s = m.predict(&img).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let mut z = m.bias;
                for c in 0..3 {
                    z += m.weights[(y * 4 + x) * 3 + c] * img.get(y, x, c);
                }
                let oracle = 1.0 / (1.0 + (-z).exp());
                assert!((s.get(y, x) - oracle).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = RngStream::new(5);
        for _ in 0..10 {
            let m = random_model(3, 3, &mut rng);
            let img = random_image(3, 3, &mut rng);
            let truth = BinaryMask::from_fn(3, 3, |_, _| rng.random_bool(0.5));
            let grad = m.loss_gradient(&img, &truth).unwrap();
            let h = 1e-3;
            for i in 0..img.data().len() {
                let shifted = |d: f64| {
                    let mut data = img.data().to_vec();
                    data[i] += d;
                    // interior values stay in range for h = 1e-3
                    Image::new(3, 3, data).unwrap()
                };
                let fd = (m.loss(&shifted(h), &truth).unwrap() - m.loss(&shifted(-h), &truth).unwrap()) / (2.0 * h);
                let g = grad.data[i];
                assert!((g - fd).abs() <= 1e-4 * g.abs().max(1e-8), "entry {i}: {g} vs {fd}");
            }
        }
    }

    #[test]
    fn gradient_vanishes_at_perfect_prediction() {
        let truth = BinaryMask::from_fn(3, 3, |y, x| (y + x) % 2 == 0);
        let weights = (0..9)
            .flat_map(|p| {
                let w = if truth.data()[p] { 10.0 } else { -10.0 };
                [w; 3]
            })
            .collect();
        let m = LinearToyModel::new(3, 3, weights, 0.0).unwrap();
        let img = Image::filled(3, 3, [255.0; 3]);
        let grad = m.loss_gradient(&img, &truth).unwrap();
        assert!(grad.data.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-6);
    }

    #[test]
    fn zero_model_has_zero_gradient() {
        let m = LinearToyModel::zeros(3, 3);
        let truth = BinaryMask::from_fn(3, 3, |y, _| y == 1);
        let grad = m.loss_gradient(&Image::filled(3, 3, [9.0; 3]), &truth).unwrap();
        assert!(grad.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dimension_mismatch() {
        let m = LinearToyModel::zeros(3, 3);
        assert!(m.predict(&Image::filled(2, 3, [0.0; 3])).is_err());
        assert!(LinearToyModel::new(2, 2, vec![0.0; 5], 0.0).is_err());
    }

    #[test]
    fn fit_learns_darker_is_salient() {
        let mask = BinaryMask::from_fn(8, 8, |y, x| (2..5).contains(&y) && (2..5).contains(&x));
        let img = Image::from_fn(8, 8, |y, x, _| if mask.get(y, x) { 150.0 } else { 170.0 });
        let m = LinearToyModel::fit(&[Sample::new("a", img.clone(), mask.clone())], LinearFitParams::default()).unwrap();
        let s = m.predict(&img).unwrap();
        assert!(s.get(3, 3) > s.get(0, 0));
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = random_model(2, 3, &mut RngStream::new(1));
        let p = dir.path().join("w.json");
        m.save(&p).unwrap();
        assert_eq!(LinearToyModel::load(&p).unwrap(), m);
    }

    #[test]
    fn rms_bound_hand_values() {
        let m = LinearToyModel::new(1, 2, vec![1.0, 0.0, 0.0, 0.0, -2.0, 1.0], 0.0).unwrap();
        assert!((m.rms_change_bound(4.0, ProbeNorm::Linf) - 5f64.sqrt()).abs() < 1e-12);
        assert!((m.rms_change_bound(4.0, ProbeNorm::L2) - 2.5f64.sqrt()).abs() < 1e-12);
    }
}

//! Raster types shared by every other module.
//!
//! Pixel values live in a continuous `[0, 255]` domain and are only quantized
//! to 8 bits at file boundaries (see [`io`]). Attack magnitudes such as the
//! FGSM epsilon are therefore expressed directly in byte units.

pub mod io;
mod rng;

pub use io::{load_image, load_mask, save_image, save_mask, save_saliency};
pub use rng::{derive_seed, label_seed, RngStream};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;
pub const MAX_VALUE: f64 = 255.0;

/// Clamps a value into the byte range; NaN maps to 0.
#[inline]
pub fn clamp_byte(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, MAX_VALUE)
    }
}

#[inline]
fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Row-major H×W×3 raster with entries in `[0, 255]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, rejecting out-of-range or non-finite entries.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len(height, width, CHANNELS, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=MAX_VALUE).contains(*v)) {
            return Err(Error::invalid("data", format!("value {v} outside [0, 255]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image, clamping every entry into `[0, 255]`.
    pub fn from_vec_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        check_len(height, width, CHANNELS, data.len())?;
        data.iter_mut().for_each(|v| *v = clamp_byte(*v));
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(clamp_byte(f(y, x, c)));
                }
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Self {
        Self::from_fn(height, width, |_, _, c| rgb[c])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * CHANNELS + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f64; 3] {
        let i = self.index(y, x, 0);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Gray plane, `(R + G + B) / 3` per pixel.
    pub fn gray(&self) -> Vec<f64> {
        self.data
            .chunks_exact(CHANNELS)
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect()
    }

    /// One color channel as a plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(CHANNELS).copied().collect()
    }

    /// Returns a copy with `f` applied to every entry, clamped back into range.
    pub fn map_entries(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &v)| clamp_byte(f(i, v)))
            .collect();
        Self {
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Returns a copy with the given pixels overwritten (values clamped).
    pub fn with_pixels(&self, edits: impl IntoIterator<Item = (usize, usize, [f64; 3])>) -> Self {
        let mut out = self.clone();
        for (y, x, rgb) in edits {
            let i = out.index(y, x, 0);
            for (dst, v) in out.data[i..i + CHANNELS].iter_mut().zip(rgb) {
                *dst = clamp_byte(v);
            }
        }
        out
    }

    pub fn ensure_same_dims(&self, other: (usize, usize)) -> Result<()> {
        ensure_dims(self.dims(), other)
    }
}

/// Grayscale prediction with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len(height, width, 1, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("data", format!("saliency {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_vec_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        check_len(height, width, 1, data.len())?;
        data.iter_mut().for_each(|v| *v = clamp_unit(*v));
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self {
            height,
            width,
            data: vec![clamp_unit(value); height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Binarizes the map: `value >= threshold` becomes 1.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v >= threshold).collect(),
        }
    }
}

/// Binary ground truth (or thresholded prediction).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        check_len(height, width, 1, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn positives(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// The mask as a `{0, 1}` saliency map.
    pub fn to_saliency(&self) -> SaliencyMap {
        SaliencyMap {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }
}

/// Norm order for [`lp_distance`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    /// Number of pixels where any channel differs.
    L0,
    L1,
    L2,
    /// Maximum absolute channel difference.
    Linf,
}

/// Elementwise p-norm of `a - b`.
pub fn lp_distance(a: &Image, b: &Image, norm: Norm) -> Result<f64> {
    a.ensure_same_dims(b.dims())?;
    let diffs = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs());
    Ok(match norm {
        Norm::L0 => a
            .data
            .chunks_exact(CHANNELS)
            .zip(b.data.chunks_exact(CHANNELS))
            .filter(|(p, q)| p != q)
            .count() as f64,
        Norm::L1 => diffs.sum(),
        Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        Norm::Linf => diffs.fold(0.0, f64::max),
    })
}

pub(crate) fn ensure_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}

fn check_len(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    let expected = height * width * channels;
    if len != expected {
        return Err(Error::invalid(
            "data",
            format!("length {len} does not match {height}x{width}x{channels}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_image(h: usize, w: usize, seed: u64) -> Image {
        use rand::Rng;
        let mut rng = RngStream::new(seed);
        Image::from_fn(h, w, |_, _, _| rng.random_range(0.0..=255.0))
    }

    #[test]
    fn identity_distance_is_zero() {
        let a = random_image(5, 7, 1);
        for norm in [Norm::L0, Norm::L1, Norm::L2, Norm::Linf] {
            assert_eq!(lp_distance(&a, &a, norm).unwrap(), 0.0);
        }
    }

    #[test]
    fn single_channel_change() {
        let a = Image::filled(4, 4, [100.0; 3]);
        let b = a.map_entries(|i, v| if i == a.index(2, 1, 1) { v + 8.0 } else { v });
        assert_eq!(lp_distance(&a, &b, Norm::Linf).unwrap(), 8.0);
        assert_eq!(lp_distance(&a, &b, Norm::L0).unwrap(), 1.0);
        assert_eq!(lp_distance(&a, &b, Norm::L1).unwrap(), 8.0);
    }

    #[test]
    fn l2_matches_square_sum_oracle() {
        let a = random_image(9, 6, 3);
        let b = random_image(9, 6, 4);
        let mut acc = 0.0;
        for y in 0..9 {
            for x in 0..6 {
                for c in 0..3 {
                    let d = a.get(y, x, c) - b.get(y, x, c);
                    acc += d * d;
                }
            }
        }
        let oracle = acc.sqrt();
        let got = lp_distance(&a, &b, Norm::L2).unwrap();
        assert!((got - oracle).abs() <= 1e-9 * oracle);
    }

    #[test]
    fn l0_counts_pixels_not_entries() {
        let a = Image::filled(3, 3, [10.0; 3]);
        let b = a.with_pixels([(1, 1, [20.0, 30.0, 40.0])]);
        assert_eq!(lp_distance(&a, &b, Norm::L0).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Image::filled(3, 3, [0.0; 3]);
        let b = Image::filled(3, 4, [0.0; 3]);
        assert!(matches!(
            lp_distance(&a, &b, Norm::L2),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constructors_enforce_range() {
        assert!(Image::new(1, 1, vec![0.0, 255.0, 256.0]).is_err());
        assert!(Image::new(1, 1, vec![0.0, 1.0]).is_err());
        let img = Image::from_vec_clamped(1, 1, vec![-3.0, f64::NAN, 300.0]).unwrap();
        assert_eq!(img.data(), &[0.0, 0.0, 255.0]);
        assert!(SaliencyMap::new(1, 2, vec![0.5, 1.5]).is_err());
    }

    proptest! {
        #[test]
        fn distance_is_symmetric(seed_a in 0u64..1000, seed_b in 0u64..1000) {
            let a = random_image(4, 5, seed_a);
            let b = random_image(4, 5, seed_b);
            for norm in [Norm::L0, Norm::L1, Norm::L2, Norm::Linf] {
                prop_assert_eq!(lp_distance(&a, &b, norm).unwrap(), lp_distance(&b, &a, norm).unwrap());
            }
        }
    }
}

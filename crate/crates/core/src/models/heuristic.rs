use super::planes::Plane;
use super::SodModel;
use crate::error::{Error, Result};
use crate::imagekit::{Image, SaliencyMap};

/// Non-learned center-surround contrast baseline.
///
/// For each window side `k` in `scales`, the saliency of a pixel accumulates
/// the Euclidean RGB distance between the mean color of its `k × k` window
/// (truncated at borders) and the global mean color. The sum is min-max
/// normalized; a constant image gives an all-zero map.
#[derive(Clone, Debug, PartialEq)]
pub struct HeuristicModel {
    scales: Vec<usize>,
}

impl Default for HeuristicModel {
    fn default() -> Self {
        Self {
            scales: vec![1, 3, 7],
        }
    }
}

impl HeuristicModel {
    pub fn new(scales: Vec<usize>) -> Result<Self> {
        if scales.is_empty() || scales.iter().any(|&k| k % 2 == 0) {
            return Err(Error::invalid("scales", "window sides must be odd and nonempty"));
        }
        Ok(Self { scales })
    }

    pub fn scales(&self) -> &[usize] {
        &self.scales
    }
}

impl SodModel for HeuristicModel {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn predict(&self, img: &Image) -> Result<SaliencyMap> {
        let (h, w) = img.dims();
        let channels: Vec<Plane> = (0..3).map(|c| Plane::new(h, w, img.channel(c))).collect();
        let global: Vec<f64> = channels
            .iter()
            .map(|p| p.data.iter().sum::<f64>() / p.data.len().max(1) as f64)
            .collect();
        let mut acc = vec![0.0; h * w];
        for &k in &self.scales {
            let local: Vec<Plane> = channels.iter().map(|p| p.box_mean(k / 2)).collect();
            for (i, a) in acc.iter_mut().enumerate() {
                let d2: f64 = (0..3).map(|c| (local[c].data[i] - global[c]).powi(2)).sum();
                *a += d2.sqrt();
            }
        }
        SaliencyMap::from_vec_clamped(h, w, Plane::new(h, w, acc).normalized().data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagekit::RngStream;
    use rand::Rng;

    /// O(H·W·k²) reference without summed-area tables.
    fn naive(img: &Image, scales: &[usize]) -> Vec<f64> {
        let (h, w) = img.dims();
        let n = (h * w) as f64;
        let mut global = [0.0; 3];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    global[c] += img.get(y, x, c) / n;
                }
            }
        }
        let mut out = vec![0.0; h * w];
        for &k in scales {
            let r = (k / 2) as isize;
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut sum = [0.0; 3];
                    let mut cnt = 0.0;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let (yy, xx) = (y + dy, x + dx);
                            if yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize {
                                for c in 0..3 {
                                    sum[c] += img.get(yy as usize, xx as usize, c);
                                }
                                cnt += 1.0;
                            }
                        }
                    }
                    let d: f64 = (0..3).map(|c| (sum[c] / cnt - global[c]).powi(2)).sum();
                    out[y as usize * w + x as usize] += d.sqrt();
                }
            }
        }
        let lo = out.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            out.iter().map(|v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; h * w]
        }
    }

    #[test]
    fn constant_image_gives_zero_map() {
        let s = HeuristicModel::default().predict(&Image::filled(6, 6, [90.0, 20.0, 3.0])).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_white_pixel_is_argmax() {
        let img = Image::filled(9, 9, [0.0; 3]).with_pixels([(4, 6, [255.0; 3])]);
        let s = HeuristicModel::default().predict(&img).unwrap();
        let argmax = s
            .data()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 4 * 9 + 6);
        assert_eq!(s.get(4, 6), 1.0);
    }

    #[test]
    fn matches_naive_reference() {
        let mut rng = RngStream::new(3);
        let img = Image::from_fn(13, 11, |y, x, c| {
            let base = if (4..9).contains(&y) && (3..7).contains(&x) { 200.0 } else { 40.0 };
            base + rng.random_range(-20.0..20.0) + c as f64
        });
        let model = HeuristicModel::default();
        let s = model.predict(&img).unwrap();
        for (a, b) in s.data().iter().zip(naive(&img, model.scales())) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn rejects_even_windows() {
        assert!(HeuristicModel::new(vec![2]).is_err());
        assert!(HeuristicModel::new(vec![]).is_err());
    }
}

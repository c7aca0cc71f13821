use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagekit::{ensure_dims, BinaryMask, SaliencyMap};

/// Threshold sweep configuration for the F-measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FBetaConfig {
    /// Weight of precision; 0.3 emphasizes precision over recall.
    pub beta_squared: f64,
    /// Number of thresholds `tau_k = k / (m + 1)`, `k = 1..=m`.
    pub thresholds: usize,
}

impl Default for FBetaConfig {
    fn default() -> Self {
        Self {
            beta_squared: 0.3,
            thresholds: 255,
        }
    }
}

impl FBetaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_squared > 0.0 && self.beta_squared.is_finite()) {
            return Err(Error::invalid("beta_squared", "must be finite and > 0"));
        }
        if self.thresholds == 0 {
            return Err(Error::invalid("thresholds", "must be >= 1"));
        }
        Ok(())
    }
}

/// Precision and recall at each threshold of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub thresholds: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

/// The k-th of `m` thresholds, `k` in `1..=m`.
#[inline]
pub fn threshold(k: usize, m: usize) -> f64 {
    k as f64 / (m + 1) as f64
}

/// Precision with the empty-prediction convention: no predicted positives means p = 1.
#[inline]
pub fn precision(tp: usize, fp: usize) -> f64 {
    if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
#[inline]
pub fn fbeta(p: f64, r: f64, beta_squared: f64) -> f64 {
    let den = beta_squared * p + r;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta_squared) * p * r / den
    }
}

/// Number of thresholds at or below `v`.
fn thresholds_passed(v: f64, m: usize) -> usize {
    let mut c = ((v * (m + 1) as f64).floor().max(0.0) as usize).min(m);
    while c < m && v >= threshold(c + 1, m) {
        c += 1;
    }
    while c > 0 && v < threshold(c, m) {
        c -= 1;
    }
    c
}

/// Sweeps `m` thresholds over the map, binarizing with `value >= tau`.
///
/// Runs in `O(pixels + m)` by histogramming how many thresholds each pixel passes.
pub fn pr_curve(map: &SaliencyMap, truth: &BinaryMask, m: usize) -> Result<PrCurve> {
    ensure_dims(truth.dims(), map.dims())?;
    if m == 0 {
        return Err(Error::invalid("thresholds", "must be >= 1"));
    }
    let positives = truth.positives();
    if positives == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let mut pos_hist = vec![0usize; m + 1];
    let mut neg_hist = vec![0usize; m + 1];
    for (&v, &g) in map.data().iter().zip(truth.data()) {
        let c = thresholds_passed(v, m);
        if g {
            pos_hist[c] += 1;
        } else {
            neg_hist[c] += 1;
        }
    }
    let mut curve = PrCurve {
        thresholds: Vec::with_capacity(m),
        precision: vec![0.0; m],
        recall: vec![0.0; m],
    };
    curve.thresholds.extend((1..=m).map(|k| threshold(k, m)));
    // tp_k counts positives passing at least k thresholds; walk k downwards.
    let (mut tp, mut fp) = (0usize, 0usize);
    for k in (1..=m).rev() {
        tp += pos_hist[k];
        fp += neg_hist[k];
        curve.precision[k - 1] = precision(tp, fp);
        curve.recall[k - 1] = tp as f64 / positives as f64;
    }
    Ok(curve)
}

impl PrCurve {
    pub fn fbeta_values(&self, beta_squared: f64) -> Vec<f64> {
        self.precision
            .iter()
            .zip(&self.recall)
            .map(|(&p, &r)| fbeta(p, r, beta_squared))
            .collect()
    }

    pub fn max_fbeta(&self, beta_squared: f64) -> f64 {
        self.fbeta_values(beta_squared).into_iter().fold(0.0, f64::max)
    }
}

/// Best F-measure over the threshold sweep for one image.
pub fn max_fbeta(map: &SaliencyMap, truth: &BinaryMask, cfg: &FBetaConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(pr_curve(map, truth, cfg.thresholds)?.max_fbeta(cfg.beta_squared))
}

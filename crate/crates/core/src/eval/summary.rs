use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fbeta::{max_fbeta, FBetaConfig};
use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::models::SodModel;

/// Which standard deviation to report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StdMode {
    /// Divide by n.
    #[default]
    Population,
    /// Divide by n - 1.
    Sample,
}

impl StdMode {
    /// Mean and standard deviation. Values are summed in sorted order so the
    /// result does not depend on input order.
    pub fn mean_std(self, values: &[f64]) -> (f64, f64) {
        if values.is_empty() {
            return (0.0, 0.0);
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let mut sq: Vec<f64> = sorted.iter().map(|v| (v - mean).powi(2)).collect();
        sq.sort_by(f64::total_cmp);
        let den = match self {
            StdMode::Population => n,
            StdMode::Sample if sorted.len() > 1 => n - 1.0,
            StdMode::Sample => return (mean, 0.0),
        };
        (mean, (sq.iter().sum::<f64>() / den).sqrt())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub id: String,
    /// Max-F-beta in `[0, 1]`; `None` when the image was skipped or failed.
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Per-image scores with their mean and spread, both on the ×100 scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetScore {
    pub mean: f64,
    pub std: f64,
    pub scored: usize,
    /// Images whose ground truth has no positive pixel.
    pub skipped: usize,
    pub errors: usize,
    pub images: Vec<ImageScore>,
}

impl DatasetScore {
    /// Aggregates already-computed per-image results.
    pub fn from_images(images: Vec<ImageScore>, std_mode: StdMode) -> Result<Self> {
        let scores: Vec<f64> = images.iter().filter_map(|s| s.score).collect();
        if scores.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let skipped = images
            .iter()
            .filter(|s| s.score.is_none() && s.error.as_deref() == Some(SKIPPED))
            .count();
        let errors = images.iter().filter(|s| s.score.is_none()).count() - skipped;
        let (mean, std) = std_mode.mean_std(&scores);
        Ok(Self {
            mean: mean * 100.0,
            std: std * 100.0,
            scored: scores.len(),
            skipped,
            errors,
            images,
        })
    }
}

const SKIPPED: &str = "skipped: ground truth has no positive pixel";

/// Scores one image; an empty ground truth is reported as skipped, other
/// failures are recorded as errors.
pub fn score_image(model: &dyn SodModel, sample: &Sample, cfg: &FBetaConfig) -> ImageScore {
    let result = model
        .predict(&sample.image)
        .and_then(|map| max_fbeta(&map, &sample.truth, cfg));
    match result {
        Ok(score) => ImageScore {
            id: sample.id.clone(),
            score: Some(score),
            error: None,
        },
        Err(Error::EmptyGroundTruth) => ImageScore {
            id: sample.id.clone(),
            score: None,
            error: Some(SKIPPED.to_string()),
        },
        Err(e) => ImageScore {
            id: sample.id.clone(),
            score: None,
            error: Some(e.to_string()),
        },
    }
}

/// Mean and spread of per-image max-F-beta over a dataset (×100 scale).
pub fn dataset_score(
    model: &dyn SodModel,
    dataset: &[Sample],
    cfg: &FBetaConfig,
    std_mode: StdMode,
) -> Result<DatasetScore> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let images = dataset
        .par_iter()
        .map(|s| score_image(model, s, cfg))
        .collect();
    DatasetScore::from_images(images, std_mode)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub id: String,
    pub mean: f64,
    pub std: f64,
    pub scored: usize,
    pub skipped: usize,
    pub errors: usize,
}

/// One model's row: per-column mean and spread plus the spread of the
/// column means across attacks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub model: String,
    pub columns: Vec<ColumnSummary>,
    pub cross_attack_std: f64,
    pub std_mode: StdMode,
}

impl RobustnessSummary {
    pub fn per_attack_mean(&self) -> impl Iterator<Item = (&str, f64)> {
        self.columns.iter().map(|c| (c.id.as_str(), c.mean))
    }

    pub fn per_attack_std(&self) -> impl Iterator<Item = (&str, f64)> {
        self.columns.iter().map(|c| (c.id.as_str(), c.std))
    }

    pub fn column(&self, id: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.id == id)
    }
}

/// Pure aggregation of already-computed column scores.
pub fn summarize(
    model: &str,
    columns: &[(String, DatasetScore)],
    std_mode: StdMode,
) -> Result<RobustnessSummary> {
    if columns.is_empty() {
        return Err(Error::invalid("columns", "attack suite is empty"));
    }
    let columns: Vec<ColumnSummary> = columns
        .iter()
        .map(|(id, s)| ColumnSummary {
            id: id.clone(),
            mean: s.mean,
            std: s.std,
            scored: s.scored,
            skipped: s.skipped,
            errors: s.errors,
        })
        .collect();
    let means: Vec<f64> = columns.iter().map(|c| c.mean).collect();
    let (_, cross_attack_std) = std_mode.mean_std(&means);
    Ok(RobustnessSummary {
        model: model.to_string(),
        columns,
        cross_attack_std,
        std_mode,
    })
}

/// Scores `model` on every column's dataset and aggregates the results.
pub fn robustness_summary(
    model: &dyn SodModel,
    columns: &[(String, &[Sample])],
    cfg: &FBetaConfig,
    std_mode: StdMode,
) -> Result<RobustnessSummary> {
    let scored = columns
        .iter()
        .map(|(id, data)| Ok((id.clone(), dataset_score(model, data, cfg, std_mode)?)))
        .collect::<Result<Vec<_>>>()?;
    summarize(model.name(), &scored, std_mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagekit::{BinaryMask, Image, SaliencyMap};
    use crate::models::ConstantModel;

    fn score_of(images: &[f64]) -> DatasetScore {
        let images = images
            .iter()
            .enumerate()
            .map(|(i, &s)| ImageScore {
                id: i.to_string(),
                score: Some(s),
                error: None,
            })
            .collect();
        DatasetScore::from_images(images, StdMode::Population).unwrap()
    }

    #[test]
    fn two_images_hand_arithmetic() {
        let s = score_of(&[0.4, 0.6]);
        assert!((s.mean - 50.0).abs() < 1e-9);
        assert!((s.std - 10.0).abs() < 1e-9);
        assert_eq!(score_of(&[0.7]).std, 0.0);
    }

    #[test]
    fn cross_attack_std_hand_arithmetic() {
        let cols: Vec<(String, DatasetScore)> = [0.8, 0.7, 0.6]
            .iter()
            .enumerate()
            .map(|(i, &v)| (format!("c{i}"), score_of(&[v])))
            .collect();
        let s = summarize("m", &cols, StdMode::Population).unwrap();
        assert!((s.cross_attack_std - 8.164_965_809).abs() < 1e-6);
        let one = summarize("m", &cols[..1], StdMode::Population).unwrap();
        assert_eq!(one.cross_attack_std, 0.0);
        let sample = summarize("m", &cols, StdMode::Sample).unwrap();
        assert!((sample.cross_attack_std - 10.0).abs() < 1e-9);
    }

    #[test]
    fn mean_std_is_order_independent() {
        let a = [0.1, 0.7, 0.33, 0.9, 0.0001, 0.5];
        let mut b = a;
        b.reverse();
        assert_eq!(StdMode::Population.mean_std(&a), StdMode::Population.mean_std(&b));
    }

    #[test]
    fn empty_truth_is_skipped_and_counted() {
        let truth = BinaryMask::from_fn(2, 2, |y, _| y == 0);
        let model = ConstantModel::new("c", truth.to_saliency());
        let data = vec![
            Sample::new("a", Image::filled(2, 2, [0.0; 3]), truth.clone()),
            Sample::new("b", Image::filled(2, 2, [0.0; 3]), BinaryMask::from_fn(2, 2, |_, _| false)),
            Sample::new("c", Image::filled(3, 2, [0.0; 3]), truth.clone()),
        ];
        let s = dataset_score(&model, &data, &FBetaConfig::default(), StdMode::Population).unwrap();
        assert_eq!((s.scored, s.skipped, s.errors), (1, 1, 1));
        assert_eq!(s.mean, 100.0);
    }

    #[test]
    fn truth_echo_stub_is_perfectly_robust() {
        let truth = BinaryMask::from_fn(4, 4, |y, x| y == x);
        let model = ConstantModel::new("echo", truth.to_saliency());
        let clean = vec![Sample::new("a", Image::filled(4, 4, [10.0; 3]), truth.clone())];
        let noisy = vec![Sample::new("a", Image::filled(4, 4, [200.0; 3]), truth)];
        let cols = [("original".to_string(), &clean[..]), ("noise".to_string(), &noisy[..])];
        let s = robustness_summary(&model, &cols, &FBetaConfig::default(), StdMode::Population).unwrap();
        assert!(s.columns.iter().all(|c| c.mean == 100.0));
        assert_eq!(s.cross_attack_std, 0.0);
    }

    #[test]
    fn constant_half_map_scores_precision_of_everything() {
        let truth = BinaryMask::from_fn(2, 2, |y, x| y == 0 && x == 0);
        let model = ConstantModel::new("half", SaliencyMap::filled(2, 2, 0.5));
        let data = vec![Sample::new("a", Image::filled(2, 2, [0.0; 3]), truth)];
        let s = dataset_score(&model, &data, &FBetaConfig::default(), StdMode::Population).unwrap();
        // p = 1/4, r = 1 at every threshold below 0.5
        let expected = 1.3 * 0.25 / (0.3 * 0.25 + 1.0) * 100.0;
        assert!((s.mean - expected).abs() < 1e-9);
    }
}

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::de::{de_step, DeConfig};
use crate::error::{Error, Result};
use crate::eval::{max_fbeta, FBetaConfig};
use crate::imagekit::{BinaryMask, Image, RngStream, MAX_VALUE};
use crate::models::SodModel;

/// What the attack compares the victim's prediction against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Max-F-beta against the ground truth.
    #[default]
    GroundTruth,
    /// Max-F-beta against the clean prediction binarized at its mean.
    Prediction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultipixelSpec {
    /// Maximum number of modified pixels.
    pub d: usize,
    pub pop_size: usize,
    pub max_iters: usize,
    pub f: f64,
    pub cr: f64,
    pub seed: u64,
    pub mode: ObjectiveMode,
    pub fbeta: FBetaConfig,
}

impl Default for MultipixelSpec {
    fn default() -> Self {
        Self {
            d: 10_000,
            pop_size: 40,
            max_iters: 50,
            f: 0.5,
            cr: 0.9,
            seed: 0,
            mode: ObjectiveMode::GroundTruth,
            fbeta: FBetaConfig::default(),
        }
    }
}

impl MultipixelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d", "must be >= 1"));
        }
        if self.pop_size < 4 {
            return Err(Error::invalid("pop_size", "must be >= 4"));
        }
        DeConfig { f: self.f, cr: self.cr }.validate()?;
        self.fbeta.validate()
    }
}

/// One replaced pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelEdit {
    pub x: usize,
    pub y: usize,
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

#[derive(Clone, Debug)]
pub struct MultipixelOutcome {
    pub image: Image,
    /// Edits that actually change a pixel, in row-major order.
    pub edits: Vec<PixelEdit>,
    /// Objective of the returned image (lower is a stronger attack).
    pub fitness: f64,
    /// Objective of the unmodified image.
    pub clean_fitness: f64,
    /// Best objective after initialization and after every iteration.
    pub trace: Vec<f64>,
}

/// Candidate layout: `d` groups of `(x, y, r, g, b)`. Coordinates are
/// rounded when decoding; duplicated coordinates keep the later edit.
fn decode(candidate: &[f64], img: &Image) -> Vec<(usize, usize, [f64; 3])> {
    let (h, w) = img.dims();
    candidate
        .chunks_exact(5)
        .map(|e| {
            let x = (e[0].round().max(0.0) as usize).min(w - 1);
            let y = (e[1].round().max(0.0) as usize).min(h - 1);
            (y, x, [e[2], e[3], e[4]])
        })
        .collect()
}

fn bounds(d: usize, img: &Image) -> Vec<(f64, f64)> {
    let (h, w) = img.dims();
    let group = [(0.0, (w - 1) as f64), (0.0, (h - 1) as f64), (0.0, MAX_VALUE), (0.0, MAX_VALUE), (0.0, MAX_VALUE)];
    group.iter().copied().cycle().take(5 * d).collect()
}

/// The no-op candidate: `d` spread-out pixels rewritten with their own colors.
fn incumbent(d: usize, img: &Image) -> Vec<f64> {
    let n = img.pixel_count();
    (0..d)
        .flat_map(|k| {
            let p = k * n / d;
            let (y, x) = (p / img.width(), p % img.width());
            let [r, g, b] = img.pixel(y, x);
            [x as f64, y as f64, r, g, b]
        })
        .collect()
}

/// Minimizes the victim's max-F-beta with differential evolution over at
/// most `spec.d` pixel replacements. The model is only queried for
/// predictions.
pub fn multipixel_attack(
    img: &Image,
    truth: &BinaryMask,
    model: &dyn SodModel,
    spec: &MultipixelSpec,
) -> Result<MultipixelOutcome> {
    spec.validate()?;
    img.ensure_same_dims(truth.dims())?;
    if spec.d > img.pixel_count() {
        return Err(Error::invalid(
            "d",
            format!("budget {} exceeds the {} pixels of the image", spec.d, img.pixel_count()),
        ));
    }
    let clean = model.predict(img)?;
    let reference = match spec.mode {
        ObjectiveMode::GroundTruth => truth.clone(),
        ObjectiveMode::Prediction => {
            let mean = clean.data().iter().sum::<f64>() / clean.data().len() as f64;
            clean.threshold(mean)
        }
    };
    let cfg = &spec.fbeta;
    let clean_fitness = max_fbeta(&clean, &reference, cfg)?;
    let objective = |c: &[f64]| -> f64 {
        model
            .predict(&img.with_pixels(decode(c, img)))
            .and_then(|map| max_fbeta(&map, &reference, cfg))
            .unwrap_or(f64::INFINITY)
    };

    let bounds = bounds(spec.d, img);
    let mut rng = RngStream::new(spec.seed);
    let mut population = vec![incumbent(spec.d, img)];
    population.extend((1..spec.pop_size).map(|_| {
        bounds
            .iter()
            .map(|&(lo, hi)| rng.random_range(lo..=hi))
            .collect::<Vec<f64>>()
    }));
    let mut fitness: Vec<f64> = population.par_iter().map(|c| objective(c)).collect();
    // the incumbent's objective is known exactly
    fitness[0] = clean_fitness;
    let de = DeConfig { f: spec.f, cr: spec.cr };
    let best = |f: &[f64]| f.iter().copied().fold(f64::INFINITY, f64::min);
    let mut trace = vec![best(&fitness)];
    for _ in 0..spec.max_iters {
        (population, fitness) = de_step(population, fitness, &objective, &bounds, &de, &mut rng)?;
        trace.push(best(&fitness));
    }

    let mut winner = 0;
    for (i, &f) in fitness.iter().enumerate() {
        if f < fitness[winner] {
            winner = i;
        }
    }
    let mut last: BTreeMap<(usize, usize), [f64; 3]> = BTreeMap::new();
    for (y, x, rgb) in decode(&population[winner], img) {
        last.insert((y, x), rgb);
    }
    let edits: Vec<PixelEdit> = last
        .into_iter()
        .filter(|&((y, x), rgb)| img.pixel(y, x) != rgb)
        .map(|((y, x), [r, g, b])| PixelEdit { x, y, r, g, b })
        .collect();
    let image = img.with_pixels(edits.iter().map(|e| (e.y, e.x, [e.r, e.g, e.b])));
    Ok(MultipixelOutcome {
        image,
        edits,
        fitness: fitness[winner],
        clean_fitness,
        trace,
    })
}

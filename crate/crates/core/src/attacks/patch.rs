use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Sample;
use crate::error::{Error, Result};
use crate::imagekit::{clamp_byte, load_image, save_image, Image, RngStream, CHANNELS};
use crate::models::{check_gradient_shape, GradientOracle};

/// Scale factors a placement may use.
pub const SCALE_BUCKETS: [f64; 5] = [0.5, 0.75, 1.0, 1.25, 1.5];

/// Value of every entry of a fresh patch.
pub const INITIAL_PATCH_VALUE: f64 = 128.0;

/// Square RGB patch, row-major like [`Image`].
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    side: usize,
    data: Vec<f64>,
}

impl Patch {
    pub fn new(side: usize, data: Vec<f64>) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid("side", "must be >= 1"));
        }
        if data.len() != side * side * CHANNELS {
            return Err(Error::invalid("data", format!("expected {} entries, got {}", side * side * CHANNELS, data.len())));
        }
        if data.iter().any(|v| !(0.0..=255.0).contains(v)) {
            return Err(Error::invalid("data", "values outside [0, 255]"));
        }
        Ok(Self { side, data })
    }

    pub fn filled(side: usize, value: f64) -> Result<Self> {
        Self::new(side, vec![value; side * side * CHANNELS])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_image(&self) -> Image {
        Image::new(self.side, self.side, self.data.clone()).expect("patch values are valid pixels")
    }

    pub fn from_image(img: &Image) -> Result<Self> {
        if img.height() != img.width() {
            return Err(Error::invalid("patch", format!("not square: {:?}", img.dims())));
        }
        Self::new(img.height(), img.data().to_vec())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_image(&load_image(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_image(&self.to_image(), path)
    }
}

/// Clockwise right-angle rotation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rotation {
    #[default]
    #[serde(rename = "0")]
    R0,
    #[serde(rename = "90")]
    R90,
    #[serde(rename = "180")]
    R180,
    #[serde(rename = "270")]
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchPlacement {
    /// Top-left row.
    pub y: usize,
    /// Top-left column.
    pub x: usize,
    pub rotation: Rotation,
    pub scale: f64,
}

/// Side of the patch after nearest-neighbor scaling.
pub fn scaled_side(side: usize, scale: f64) -> usize {
    ((side as f64 * scale).round() as usize).max(1)
}

/// Patch pixel shown at footprint position `(u, v)`.
fn source_pixel(side: usize, footprint: usize, rotation: Rotation, u: usize, v: usize) -> (usize, usize) {
    let a = ((u * side) / footprint).min(side - 1);
    let b = ((v * side) / footprint).min(side - 1);
    let last = side - 1;
    match rotation {
        Rotation::R0 => (a, b),
        Rotation::R90 => (last - b, a),
        Rotation::R180 => (last - a, last - b),
        Rotation::R270 => (b, last - a),
    }
}

fn check_placement(dims: (usize, usize), side: usize, p: &PatchPlacement) -> Result<usize> {
    if !(p.scale.is_finite() && (0.5..=1.5).contains(&p.scale)) {
        return Err(Error::invalid("scale", format!("{} outside [0.5, 1.5]", p.scale)));
    }
    let s = scaled_side(side, p.scale);
    if p.y + s > dims.0 || p.x + s > dims.1 {
        return Err(Error::invalid(
            "placement",
            format!("{s}×{s} footprint at ({}, {}) leaves the {}×{} image", p.y, p.x, dims.0, dims.1),
        ));
    }
    Ok(s)
}

/// Footprint of a placement as `(image pixel index, patch pixel index)` pairs.
pub fn footprint(dims: (usize, usize), patch_side: usize, p: &PatchPlacement) -> Result<Vec<(usize, usize)>> {
    let s = check_placement(dims, patch_side, p)?;
    let mut out = Vec::with_capacity(s * s);
    for u in 0..s {
        for v in 0..s {
            let (py, px) = source_pixel(patch_side, s, p.rotation, u, v);
            out.push(((p.y + u) * dims.1 + p.x + v, py * patch_side + px));
        }
    }
    Ok(out)
}

/// Fraction of the image area covered by a placement.
pub fn coverage(dims: (usize, usize), patch_side: usize, p: &PatchPlacement) -> f64 {
    let s = scaled_side(patch_side, p.scale);
    (s * s) as f64 / (dims.0 * dims.1) as f64
}

/// Replaces the footprint with the rotated, scaled patch.
pub fn apply_patch(img: &Image, patch: &Patch, placement: &PatchPlacement) -> Result<Image> {
    let fp = footprint(img.dims(), patch.side, placement)?;
    let mut data = img.data().to_vec();
    for (dst, src) in fp {
        data[dst * CHANNELS..(dst + 1) * CHANNELS].copy_from_slice(&patch.data[src * CHANNELS..(src + 1) * CHANNELS]);
    }
    Image::new(img.height(), img.width(), data)
}

/// Uniform draw over every valid `(location, rotation, scale bucket)` triple.
pub fn random_placement(dims: (usize, usize), patch: &Patch, rng: &mut RngStream) -> Result<PatchPlacement> {
    let (h, w) = dims;
    let options: Vec<(f64, usize, usize)> = SCALE_BUCKETS
        .iter()
        .map(|&scale| (scale, scaled_side(patch.side, scale)))
        .filter(|&(_, s)| s <= h && s <= w)
        .map(|(scale, s)| (scale, s, (h - s + 1) * (w - s + 1) * Rotation::ALL.len()))
        .collect();
    let total: usize = options.iter().map(|o| o.2).sum();
    if total == 0 {
        return Err(Error::invalid(
            "patch",
            format!("side {} does not fit a {h}×{w} image at any scale", patch.side),
        ));
    }
    let mut k = rng.random_range(0..total);
    for (scale, s, count) in options {
        if k >= count {
            k -= count;
            continue;
        }
        let rotation = Rotation::ALL[k % 4];
        let loc = k / 4;
        let cols = w - s + 1;
        return Ok(PatchPlacement {
            y: loc / cols,
            x: loc % cols,
            rotation,
            scale,
        });
    }
    unreachable!("index drawn below the total count")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatchTrainSpec {
    pub iterations: usize,
    /// Per-step change of every patch entry, in byte units.
    pub step_size: f64,
    pub placements_per_step: usize,
    /// Size of the fixed (image, placement) set the objective trace is measured on.
    pub eval_placements: usize,
    pub seed: u64,
    /// Train against this placement only instead of random ones.
    pub fixed_placement: Option<PatchPlacement>,
}

impl Default for PatchTrainSpec {
    fn default() -> Self {
        Self {
            iterations: 100,
            step_size: 4.0,
            placements_per_step: 8,
            eval_placements: 16,
            seed: 0,
            fixed_placement: None,
        }
    }
}

impl PatchTrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid("step_size", "must be finite and > 0"));
        }
        if self.placements_per_step == 0 || self.eval_placements == 0 {
            return Err(Error::invalid("placements_per_step", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PatchTraining {
    pub patch: Patch,
    /// Mean detector loss on the evaluation set before training and after every step.
    pub trace: Vec<f64>,
}

type Draw = (usize, PatchPlacement);

fn draw(dataset: &[Sample], patch: &Patch, spec: &PatchTrainSpec, rng: &mut RngStream) -> Result<Draw> {
    let i = rng.random_range(0..dataset.len());
    let placement = match spec.fixed_placement {
        Some(p) => p,
        None => random_placement(dataset[i].image.dims(), patch, rng)?,
    };
    Ok((i, placement))
}

fn mean_loss(dataset: &[Sample], oracle: &dyn GradientOracle, patch: &Patch, draws: &[Draw]) -> Result<f64> {
    let losses = draws
        .par_iter()
        .map(|(i, p)| oracle.loss(&apply_patch(&dataset[*i].image, patch, p)?, &dataset[*i].truth))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Expectation-over-transformation ascent on the detector loss. Each step
/// averages the loss gradient over sampled (image, placement) pairs, maps it
/// back onto patch pixels through the footprint, and moves every entry by
/// `step_size` in the direction of its averaged gradient sign.
pub fn train_patch(
    dataset: &[Sample],
    oracle: &dyn GradientOracle,
    spec: &PatchTrainSpec,
    side: usize,
) -> Result<PatchTraining> {
    spec.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut patch = Patch::filled(side, INITIAL_PATCH_VALUE)?;
    for s in dataset {
        s.image.ensure_same_dims(s.truth.dims())?;
        if let Some(p) = &spec.fixed_placement {
            check_placement(s.image.dims(), side, p)?;
        }
    }
    let root = RngStream::new(spec.seed);
    let mut eval_rng = root.derive(0);
    let eval_draws = (0..spec.eval_placements)
        .map(|_| draw(dataset, &patch, spec, &mut eval_rng))
        .collect::<Result<Vec<_>>>()?;
    let mut trace = vec![mean_loss(dataset, oracle, &patch, &eval_draws)?];
    let mut rng = root.derive(1);
    for _ in 0..spec.iterations {
        let draws = (0..spec.placements_per_step)
            .map(|_| draw(dataset, &patch, spec, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let grads = draws
            .par_iter()
            .map(|(i, p)| {
                let sample = &dataset[*i];
                let attacked = apply_patch(&sample.image, &patch, p)?;
                let g = oracle.loss_gradient(&attacked, &sample.truth)?;
                check_gradient_shape(&attacked, &g)?;
                let mut acc = vec![0.0; patch.data.len()];
                for (dst, src) in footprint(sample.image.dims(), side, p)? {
                    for c in 0..CHANNELS {
                        acc[src * CHANNELS + c] += g.data[dst * CHANNELS + c];
                    }
                }
                Ok(acc)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut total = vec![0.0; patch.data.len()];
        for g in &grads {
            for (t, v) in total.iter_mut().zip(g) {
                *t += v;
            }
        }
        for (v, g) in patch.data.iter_mut().zip(&total) {
            if *g != 0.0 {
                *v = clamp_byte(*v + spec.step_size * g.signum());
            }
        }
        trace.push(mean_loss(dataset, oracle, &patch, &eval_draws)?);
    }
    Ok(PatchTraining { patch, trace })
}

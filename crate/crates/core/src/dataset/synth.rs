use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{create_dir, write_json, DatasetManifest, Pair, Sample, Split};
use crate::error::{Error, Result};
use crate::imagekit::{clamp_byte, save_image, save_mask, BinaryMask, Image, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    /// One high-contrast ellipse.
    #[default]
    Blob,
    /// A small object a few byte units darker than a sandy, textured background.
    LowContrast,
    /// A salient ellipse among differently colored distractors.
    Cluttered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub name: String,
    pub n: usize,
    pub height: usize,
    pub width: usize,
    pub difficulty: Difficulty,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// `(row, column)` of the center.
    pub center: (f64, f64),
    /// Semi-axes along the rotated column and row directions.
    pub axes: (f64, f64),
    /// Radians.
    pub angle: f64,
    pub color: [f64; 3],
}

impl Ellipse {
    /// Whether the center of pixel `(y, x)` lies inside.
    pub fn contains(&self, y: usize, x: usize) -> bool {
        let dy = y as f64 + 0.5 - self.center.0;
        let dx = x as f64 + 0.5 - self.center.1;
        let (s, c) = self.angle.sin_cos();
        let u = (dx * c + dy * s) / self.axes.0;
        let v = (-dx * s + dy * c) / self.axes.1;
        u * u + v * v <= 1.0
    }
}

/// Everything needed to re-render one synthetic image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub id: String,
    pub difficulty: Difficulty,
    pub background: [f64; 3],
    pub object: Ellipse,
    pub distractors: Vec<Ellipse>,
    pub texture_sigma: f64,
}

fn random_ellipse(rng: &mut RngStream, h: usize, w: usize, size: (f64, f64), color: [f64; 3]) -> Ellipse {
    let base = h.min(w) as f64;
    let axis = |rng: &mut RngStream| (rng.random_range(size.0..=size.1) * base).max(1.5);
    Ellipse {
        center: (rng.random_range(0.3..=0.7) * h as f64, rng.random_range(0.3..=0.7) * w as f64),
        axes: (axis(rng), axis(rng)),
        angle: rng.random_range(0.0..std::f64::consts::PI),
        color,
    }
}

fn params(i: usize, spec: &SynthSpec, rng: &mut RngStream) -> SynthParams {
    let (h, w) = (spec.height, spec.width);
    let id = format!("img-{i:04}");
    let mut distractors = Vec::new();
    let (background, object, texture_sigma) = match spec.difficulty {
        Difficulty::Blob => {
            let dark_background = rng.random_bool(0.5);
            let mut pick = |dark: bool| -> [f64; 3] {
                std::array::from_fn(|_| if dark { rng.random_range(0.0..=80.0) } else { rng.random_range(175.0..=255.0) })
            };
            let bg = pick(dark_background);
            let fg = pick(!dark_background);
            (bg, random_ellipse(rng, h, w, (0.15, 0.3), fg), 4.0)
        }
        Difficulty::LowContrast => {
            let sand = [194.0, 178.0, 128.0];
            let bg: [f64; 3] = std::array::from_fn(|c| sand[c] + rng.random_range(-15.0..=15.0));
            let fg: [f64; 3] = std::array::from_fn(|c| bg[c] - rng.random_range(6.0..=18.0));
            (bg, random_ellipse(rng, h, w, (0.08, 0.18), fg), 6.0)
        }
        Difficulty::Cluttered => {
            let bg: [f64; 3] = std::array::from_fn(|_| rng.random_range(60.0..=200.0));
            let fg: [f64; 3] = std::array::from_fn(|c| if bg[c] < 130.0 { 255.0 } else { 0.0 });
            let object = random_ellipse(rng, h, w, (0.12, 0.25), fg);
            for _ in 0..rng.random_range(3..=6) {
                let color: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..=255.0));
                let mut e = random_ellipse(rng, h, w, (0.04, 0.1), color);
                e.center = (rng.random_range(0.0..h as f64), rng.random_range(0.0..w as f64));
                distractors.push(e);
            }
            (bg, object, 5.0)
        }
    };
    SynthParams {
        id,
        difficulty: spec.difficulty,
        background,
        object,
        distractors,
        texture_sigma,
    }
}

fn render(p: &SynthParams, h: usize, w: usize, rng: &mut RngStream) -> Sample {
    let truth = BinaryMask::from_fn(h, w, |y, x| p.object.contains(y, x));
    let texture = Normal::new(0.0, p.texture_sigma).expect("positive sigma");
    let img = Image::from_fn(h, w, |y, x, c| {
        let base = if truth.get(y, x) {
            p.object.color[c]
        } else {
            p.distractors
                .iter()
                .rev()
                .find(|d| d.contains(y, x))
                .map_or(p.background[c], |d| d.color[c])
        };
        clamp_byte(base + texture.sample(rng))
    });
    Sample::new(p.id.clone(), img, truth)
}

/// Generates the samples in memory. Image `i` draws from stream `i` of the seed.
pub fn synth_samples(spec: &SynthSpec) -> Result<Vec<(Sample, SynthParams)>> {
    if spec.n == 0 {
        return Err(Error::invalid("n", "must be >= 1"));
    }
    if spec.height < 4 || spec.width < 4 {
        return Err(Error::invalid("dims", "images must be at least 4×4"));
    }
    let root = RngStream::new(spec.seed);
    Ok((0..spec.n)
        .map(|i| {
            let mut rng = root.derive(i as u64);
            let p = params(i, spec, &mut rng);
            (render(&p, spec.height, spec.width, &mut rng), p)
        })
        .collect())
}

/// Writes `images/`, `GT/`, `synth.json` (generator parameters) and
/// `manifest.json` under `root`.
pub fn synth_dataset(root: impl AsRef<Path>, spec: &SynthSpec, split: Split) -> Result<DatasetManifest> {
    let root = root.as_ref();
    let samples = synth_samples(spec)?;
    let images = create_dir(&root.join("images"))?;
    let masks = create_dir(&root.join("GT"))?;
    let mut pairs = Vec::with_capacity(samples.len());
    for (s, _) in &samples {
        save_image(&s.image, images.join(format!("{}.png", s.id)))?;
        save_mask(&s.truth, masks.join(format!("{}.png", s.id)))?;
        pairs.push(Pair {
            id: s.id.clone(),
            image: format!("images/{}.png", s.id),
            mask: format!("GT/{}.png", s.id),
        });
    }
    let params: Vec<&SynthParams> = samples.iter().map(|(_, p)| p).collect();
    write_json(&root.join("synth.json"), &params)?;
    let manifest = DatasetManifest {
        name: spec.name.clone(),
        split,
        pairs,
    };
    manifest.save(root.join("manifest.json"))?;
    Ok(manifest)
}

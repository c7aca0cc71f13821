//! Single-channel float planes and the spatial operators used by the
//! heuristic and GP models. Windows are truncated at the border (averages
//! and extrema only look at in-bounds pixels); Sobel replicates edges.

#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn constant(height: usize, width: usize, v: f64) -> Self {
        Self::new(height, width, vec![v; height * width])
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane::new(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane::new(
            self.height,
            self.width,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    fn summed_area(&self) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut sat = vec![0.0; (h + 1) * (w + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += self.at(y, x);
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        sat
    }

    /// Mean over the in-bounds part of the `(2r+1)²` window around each pixel.
    pub fn box_mean(&self, radius: usize) -> Plane {
        let (h, w) = (self.height, self.width);
        let sat = self.summed_area();
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(radius), (y + radius + 1).min(h));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(radius), (x + radius + 1).min(w));
                let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
                    + sat[y0 * (w + 1) + x0];
                out.push(s / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
        Plane::new(h, w, out)
    }

    /// Separable Gaussian blur, kernel radius `ceil(3 sigma)`, renormalized at borders.
    pub fn gaussian(&self, sigma: f64) -> Plane {
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let pass = |src: &[f64], horizontal: bool| {
            let (h, w) = (self.height as isize, self.width as isize);
            let mut out = vec![0.0; src.len()];
            for y in 0..h {
                for x in 0..w {
                    let (mut acc, mut norm) = (0.0, 0.0);
                    for (k, &kv) in kernel.iter().enumerate() {
                        let off = k as isize - radius;
                        let (yy, xx) = if horizontal { (y, x + off) } else { (y + off, x) };
                        if yy >= 0 && yy < h && xx >= 0 && xx < w {
                            acc += kv * src[(yy * w + xx) as usize];
                            norm += kv;
                        }
                    }
                    out[(y * w + x) as usize] = acc / norm;
                }
            }
            out
        };
        let tmp = pass(&self.data, true);
        Plane::new(self.height, self.width, pass(&tmp, false))
    }

    /// Gradient magnitude from the 3×3 Sobel pair.
    pub fn sobel(&self) -> Plane {
        let (h, w) = (self.height as isize, self.width as isize);
        let at = |y: isize, x: isize| self.at(y.clamp(0, h - 1) as usize, x.clamp(0, w - 1) as usize);
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..h {
            for x in 0..w {
                let gx = at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)
                    - at(y - 1, x - 1)
                    - 2.0 * at(y, x - 1)
                    - at(y + 1, x - 1);
                let gy = at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)
                    - at(y - 1, x - 1)
                    - 2.0 * at(y - 1, x)
                    - at(y - 1, x + 1);
                out.push((gx * gx + gy * gy).sqrt());
            }
        }
        Plane::new(self.height, self.width, out)
    }

    fn extremum3(&self, pick: fn(f64, f64) -> f64) -> Plane {
        let (h, w) = (self.height, self.width);
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let mut v = self.at(y, x);
                for yy in y.saturating_sub(1)..(y + 2).min(h) {
                    for xx in x.saturating_sub(1)..(x + 2).min(w) {
                        v = pick(v, self.at(yy, xx));
                    }
                }
                out.push(v);
            }
        }
        Plane::new(h, w, out)
    }

    pub fn dilate3(&self) -> Plane {
        self.extremum3(f64::max)
    }

    pub fn erode3(&self) -> Plane {
        self.extremum3(f64::min)
    }

    /// Min-max normalization to `[0, 1]`; a constant plane maps to all zeros.
    pub fn normalized(&self) -> Plane {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        if span.is_nan() || span <= 0.0 || !span.is_finite() {
            return Plane::constant(self.height, self.width, 0.0);
        }
        self.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
    }
}

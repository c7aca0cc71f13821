use std::sync::OnceLock;

use super::{Function, GpProgram, Node, Terminal};
use crate::error::Result;
use crate::imagekit::{Image, SaliencyMap, MAX_VALUE};
use crate::models::planes::Plane;

/// Standard deviation of the Gaussian used by the `smooth-*` terminals.
pub const SMOOTHING_SIGMA: f64 = 1.5;

/// Intermediate values are clamped to this magnitude; non-finite values become 0.
const VALUE_LIMIT: f64 = 1e12;

/// Terminal planes of one image, scaled to `[0, 1]` and computed on first use.
pub struct TerminalPlanes {
    height: usize,
    width: usize,
    raw: [Vec<f64>; 4],
    cache: [OnceLock<Plane>; 8],
}

impl TerminalPlanes {
    pub fn new(img: &Image) -> Self {
        let scale = |v: Vec<f64>| v.into_iter().map(|x| x / MAX_VALUE).collect::<Vec<_>>();
        Self {
            height: img.height(),
            width: img.width(),
            raw: [
                scale(img.channel(0)),
                scale(img.channel(1)),
                scale(img.channel(2)),
                scale(img.gray()),
            ],
            cache: Default::default(),
        }
    }

    pub fn get(&self, t: Terminal) -> &Plane {
        self.cache[t.index()].get_or_init(|| {
            let base = |i: usize| Plane::new(self.height, self.width, self.raw[i].clone());
            match t {
                Terminal::Red => base(0),
                Terminal::Green => base(1),
                Terminal::Blue => base(2),
                Terminal::Gray => base(3),
                Terminal::SmoothRed => base(0).gaussian(SMOOTHING_SIGMA),
                Terminal::SmoothGreen => base(1).gaussian(SMOOTHING_SIGMA),
                Terminal::SmoothBlue => base(2).gaussian(SMOOTHING_SIGMA),
                Terminal::SmoothGray => base(3).gaussian(SMOOTHING_SIGMA),
            }
        })
    }
}

#[inline]
fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-VALUE_LIMIT, VALUE_LIMIT)
    }
}

fn protected_div(a: f64, b: f64) -> f64 {
    if b.abs() < 1e-12 {
        1.0
    } else {
        a / b
    }
}

pub(crate) fn eval_node(node: &Node, planes: &TerminalPlanes) -> Plane {
    match node {
        Node::Leaf(t) => planes.get(*t).clone(),
        Node::Apply(f, args) => {
            let a = eval_node(&args[0], planes);
            let out = match f {
                Function::Add => a.zip(&eval_node(&args[1], planes), |x, y| x + y),
                Function::Sub => a.zip(&eval_node(&args[1], planes), |x, y| x - y),
                Function::Mul => a.zip(&eval_node(&args[1], planes), |x, y| x * y),
                Function::Div => a.zip(&eval_node(&args[1], planes), protected_div),
                Function::Abs => a.map(f64::abs),
                Function::Square => a.map(|x| x * x),
                Function::Blur => a.box_mean(1),
                Function::Sobel => a.sobel(),
                Function::Dilate => a.dilate3(),
                Function::Erode => a.erode3(),
                Function::Normalize => a.normalized(),
            };
            out.map(sanitize)
        }
    }
}

pub(crate) fn evaluate_with(program: &GpProgram, planes: &TerminalPlanes) -> Result<SaliencyMap> {
    let out = eval_node(program.root(), planes).normalized();
    SaliencyMap::from_vec_clamped(out.height, out.width, out.data)
}

/// Runs the program bottom-up on one image and min-max normalizes the result.
pub fn gp_evaluate(program: &GpProgram, img: &Image) -> Result<SaliencyMap> {
    evaluate_with(program, &TerminalPlanes::new(img))
}

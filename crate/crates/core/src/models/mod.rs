//! Saliency models. Every model maps an [`Image`] to a [`SaliencyMap`];
//! models that can differentiate their loss also implement
//! [`GradientOracle`] and expose it through [`SodModel::gradient_oracle`].

pub mod gp;
mod heuristic;
mod linear;
pub mod planes;

pub use heuristic::HeuristicModel;
pub use linear::{LinearFitParams, LinearToyModel};

use crate::error::{Error, Result};
use crate::imagekit::{ensure_dims, BinaryMask, Image, SaliencyMap};

pub trait SodModel: Send + Sync {
    fn name(&self) -> &str;

    /// Deterministic for a fixed model state.
    fn predict(&self, img: &Image) -> Result<SaliencyMap>;

    fn gradient_oracle(&self) -> Option<&dyn GradientOracle> {
        None
    }
}

/// Gradient of the detector loss with respect to the input, shaped like the image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGradient {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

pub trait GradientOracle: Send + Sync {
    /// Loss J(I, G) the gradient refers to.
    fn loss(&self, img: &Image, truth: &BinaryMask) -> Result<f64>;

    fn loss_gradient(&self, img: &Image, truth: &BinaryMask) -> Result<ImageGradient>;
}

/// Returns the same map for every input. Used as a perfectly robust stub.
#[derive(Clone, Debug)]
pub struct ConstantModel {
    name: String,
    map: SaliencyMap,
}

impl ConstantModel {
    pub fn new(name: impl Into<String>, map: SaliencyMap) -> Self {
        Self {
            name: name.into(),
            map,
        }
    }
}

impl SodModel for ConstantModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn predict(&self, img: &Image) -> Result<SaliencyMap> {
        ensure_dims(self.map.dims(), img.dims())?;
        Ok(self.map.clone())
    }
}

pub fn check_gradient_shape(img: &Image, grad: &ImageGradient) -> Result<()> {
    if grad.data.len() != img.data().len() || (grad.height, grad.width) != img.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: (grad.height, grad.width),
        });
    }
    Ok(())
}

use crate::error::{Error, Result};
use crate::imagekit::{clamp_byte, BinaryMask, Image};
use crate::models::{check_gradient_shape, GradientOracle};

/// The budgets used for the published FGSM columns.
pub const PUBLISHED_EPSILONS: [f64; 6] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0];

#[inline]
fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", format!("{epsilon} must be finite and >= 0")));
    }
    Ok(())
}

fn step(img: &Image, grad: &[f64], epsilon: f64) -> Image {
    img.map_entries(|i, v| clamp_byte(v + epsilon * sign(grad[i])))
}

/// Single-step attack `clamp(I + epsilon * sign(dJ/dI))`. Entries with a zero
/// gradient are left untouched.
pub fn fgsm(img: &Image, truth: &BinaryMask, oracle: &dyn GradientOracle, epsilon: f64) -> Result<Image> {
    check_epsilon(epsilon)?;
    let grad = oracle.loss_gradient(img, truth)?;
    check_gradient_shape(img, &grad)?;
    Ok(step(img, &grad.data, epsilon))
}

/// One adversarial image per budget, sharing a single gradient evaluation.
pub fn fgsm_sweep(
    img: &Image,
    truth: &BinaryMask,
    oracle: &dyn GradientOracle,
    epsilons: &[f64],
) -> Result<Vec<Image>> {
    if epsilons.is_empty() {
        return Err(Error::invalid("epsilons", "empty sweep"));
    }
    epsilons.iter().try_for_each(|&e| check_epsilon(e))?;
    let grad = oracle.loss_gradient(img, truth)?;
    check_gradient_shape(img, &grad)?;
    Ok(epsilons.iter().map(|&e| step(img, &grad.data, e)).collect())
}

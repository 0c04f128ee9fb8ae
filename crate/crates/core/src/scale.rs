//! Min-max outcome scaling.

use crate::error::{Error, Result};

/// Affine map between the original outcome range and `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleMap {
    pub y_min: f64,
    pub y_max: f64,
}

impl ScaleMap {
    pub fn new(y_min: f64, y_max: f64) -> Result<Self> {
        if !(y_max > y_min) {
            return Err(Error::DegenerateOutcome);
        }
        Ok(Self { y_min, y_max })
    }

    pub fn range(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.y_min) / self.range()
    }
}

/// Maps `y` onto `[0, 1]`; min goes to 0 and max to 1.
pub fn scale_outcome(y: &[f64]) -> Result<(Vec<f64>, ScaleMap)> {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let map = ScaleMap::new(lo, hi)?;
    // clamp guards the last ulp so endpoints are attained exactly
    let scaled = y.iter().map(|&v| map.apply(v).clamp(0.0, 1.0)).collect();
    Ok((scaled, map))
}

/// Back-transforms a difference-type estimate and its standard error.
/// Differences carry no additive shift, only the range.
pub fn unscale_difference(psi_scaled: f64, se_scaled: f64, map: &ScaleMap) -> (f64, f64) {
    let r = map.range();
    (psi_scaled * r, se_scaled * r)
}

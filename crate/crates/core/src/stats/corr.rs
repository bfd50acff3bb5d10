// SPDX-License-Identifier: MIT OR Apache-2.0

use crate::error::{LabError, Result};

/// Sample Pearson correlation, clamped to `[-1, 1]`.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(LabError::LengthMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(LabError::InsufficientData("pearson_r needs at least 2 points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(LabError::ZeroVariance("x".into()));
    }
    if syy == 0.0 {
        return Err(LabError::ZeroVariance("y".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

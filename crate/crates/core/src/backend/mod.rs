// SPDX-License-Identifier: MIT OR Apache-2.0

//! Instrumented toy backend, steering hook, and the activation file format.

mod activation;
mod capture;
mod config;
mod model;
pub mod tokenizer;

use serde::{Deserialize, Serialize};

use crate::direction::Direction;
use crate::error::{LabError, Result};
use crate::scale::Scale;

pub use activation::{
    load_activations, read_activations, save_activations, write_activations, ActivationRecord,
    ActivationSet, FINAL_POSITION, FORMAT_VERSION, MAGIC,
};
pub use capture::{capture_activations, CaptureOutput, FailedPrompt, RunManifest};
pub use config::BackendConfig;
pub use model::{init_backend, Backend, CapturePlan, GenerationResult, PlantedReadout};
pub use tokenizer::{TokenId, Tokenizer};

labeled_enum! {
    /// Token positions that receive the steering addition (or get captured).
    PositionMode {
        Final => "final",
        All => "all",
    }
}

/// Serializable description of one intervention arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteeringSpec {
    /// [`Direction::id`] of the direction to apply.
    pub direction_ref: String,
    pub layer: usize,
    pub scale: Scale,
    pub position_mode: PositionMode,
}

impl SteeringSpec {
    /// Resolves the spec against a loaded direction.
    pub fn bind<'d>(&self, direction: &'d Direction) -> Result<Steering<'d>> {
        if self.direction_ref != direction.id() {
            return Err(LabError::Invalid(format!(
                "steering spec references direction {:?} but {:?} was supplied",
                self.direction_ref,
                direction.id()
            )));
        }
        Ok(Steering {
            direction,
            layer: self.layer,
            scale: self.scale,
            mode: self.position_mode,
        })
    }
}

/// A steering hook bound to a concrete direction for one call.
#[derive(Clone, Copy, Debug)]
pub struct Steering<'d> {
    pub direction: &'d Direction,
    pub layer: usize,
    pub scale: Scale,
    pub mode: PositionMode,
}

impl<'d> Steering<'d> {
    pub fn new(direction: &'d Direction, layer: usize, scale: Scale, mode: PositionMode) -> Self {
        Steering {
            direction,
            layer,
            scale,
            mode,
        }
    }

    pub fn spec(&self) -> SteeringSpec {
        SteeringSpec {
            direction_ref: self.direction.id(),
            layer: self.layer,
            scale: self.scale,
            position_mode: self.mode,
        }
    }
}

/// `residual + scale · unit_direction`.
pub fn apply_steering(residual: &[f64], direction: &Direction, scale: f64) -> Result<Vec<f64>> {
    if residual.len() != direction.vector.len() {
        return Err(LabError::LengthMismatch {
            expected: direction.vector.len(),
            found: residual.len(),
        });
    }
    let mut out = residual.to_vec();
    add_scaled(&mut out, &direction.vector, scale);
    Ok(out)
}

pub(crate) fn add_scaled(h: &mut [f64], unit: &[f64], scale: f64) {
    for (x, v) in h.iter_mut().zip(unit) {
        *x += scale * v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direction::Variant;
    use proptest::prelude::*;

    fn dir(v: Vec<f64>) -> Direction {
        Direction::from_raw(0, v, Variant::TrainOnly, "fp".into()).unwrap()
    }

    #[test]
    fn scale_zero_is_identity() {
        let h = [0.25, -3.5, 7.0];
        let d = dir(vec![1.0, 2.0, -2.0]);
        assert_eq!(apply_steering(&h, &d, 0.0).unwrap(), h.to_vec());
    }

    #[test]
    fn normalised_arithmetic() {
        let d = dir(vec![0.0, 2.0]);
        assert_eq!(d.vector, vec![0.0, 1.0]);
        assert_eq!(apply_steering(&[1.0, 0.0], &d, 3.0).unwrap(), vec![1.0, 3.0]);
    }

    #[test]
    fn length_mismatch() {
        let d = dir(vec![1.0, 0.0]);
        assert!(matches!(
            apply_steering(&[1.0], &d, 1.0),
            Err(LabError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn spec_binding_checks_reference() {
        let d = dir(vec![1.0, 1.0]);
        let other = dir(vec![1.0, -1.0]);
        let spec = Steering::new(&d, 1, Scale::new(50.0).unwrap(), PositionMode::Final).spec();
        assert!(spec.bind(&d).is_ok());
        assert!(spec.bind(&other).is_err());
        let json = serde_json::to_string(&spec).unwrap();
        let back: SteeringSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }

    proptest! {
        #[test]
        fn hook_point_linearity(
            h in prop::collection::vec(-100.0f64..100.0, 8),
            raw in prop::collection::vec(-1.0f64..1.0, 8),
            s in -200.0f64..200.0,
        ) {
            prop_assume!(raw.iter().map(|x| x * x).sum::<f64>() > 1e-3);
            let d = dir(raw);
            let p0: f64 = crate::direction::project_f64(&h, &d).unwrap();
            let steered = apply_steering(&h, &d, s).unwrap();
            let p1 = crate::direction::project_f64(&steered, &d).unwrap();
            prop_assert!((p1 - p0 - s).abs() <= 1e-6, "{} vs {}", p1 - p0, s);

            // +s then -s returns to the start
            let back = apply_steering(&steered, &d, -s).unwrap();
            for (a, b) in back.iter().zip(&h) {
                prop_assert!((a - b).abs() <= 1e-6 * (1.0 + b.abs() + s.abs()));
            }

            // symmetric about the unsteered residual along the direction
            let minus = apply_steering(&h, &d, -s).unwrap();
            let pm = crate::direction::project_f64(&minus, &d).unwrap();
            prop_assert!(((p1 - p0) + (pm - p0)).abs() <= 1e-6 * (1.0 + s.abs() + p0.abs()));
        }
    }
}

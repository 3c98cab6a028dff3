//! Built-in scalar examples.
//!
//! `example1-multiplicative`:
//!   dX = (-2 pi X + X - X^3 + cos(pi t)) dt + (1 + X^2 + cos(pi t)) dW, period 2.
//!
//! `example2-additive`:
//!   dX = (-pi X - X^3 + sin(2 pi t)) dt + dW, period 1.
//!
//! Both use gamma = 3, hence p1 > 5; p1 = 6 is recorded. The growth constants
//! are valid upper bounds for the coefficients above (C1 = 3/2 from
//! |x^2 + xy + y^2| <= 3/2 (x^2 + y^2); C2 = 2 resp. 1). The coupled
//! monotonicity constant of example 1 does not exist globally: the diffusion
//! term grows like (x+y)^2. `alpha1 = 1` (the linear part of f) is recorded
//! and `check-model` reports what the probe finds.

use std::f64::consts::PI;

use super::spec::{CoefficientSpec, Forcing, ModelSpec, Wave};
use super::{AdditiveBounds, ModelParams, SdeModel};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 2] = ["example1-multiplicative", "example2-additive"];

pub(crate) fn preset_spec(name: &str) -> Result<ModelSpec> {
    match name {
        "example1-multiplicative" => Ok(ModelSpec {
            name: Some(name.to_string()),
            params: ModelParams {
                dim: 1,
                noise_dim: 1,
                lambda: vec![2.0 * PI],
                period: 2.0,
                gamma: 3.0,
                alpha1: 1.0,
                p1: 6.0,
                growth_c1: 1.5,
                growth_c2: 2.0,
                additive: None,
            },
            drift: CoefficientSpec::Polynomial {
                coeffs: vec![0.0, 1.0, 0.0, -1.0],
                forcing: vec![Forcing {
                    wave: Wave::Cos,
                    amplitude: 1.0,
                    angular_frequency: PI,
                    phase: 0.0,
                }],
            },
            diffusion: CoefficientSpec::Polynomial {
                coeffs: vec![1.0, 0.0, 1.0],
                forcing: vec![Forcing {
                    wave: Wave::Cos,
                    amplitude: 1.0,
                    angular_frequency: PI,
                    phase: 0.0,
                }],
            },
        }),
        "example2-additive" => Ok(ModelSpec {
            name: Some(name.to_string()),
            params: ModelParams {
                dim: 1,
                noise_dim: 1,
                lambda: vec![PI],
                period: 1.0,
                gamma: 3.0,
                alpha1: 0.0,
                p1: 6.0,
                growth_c1: 1.5,
                growth_c2: 1.0,
                additive: Some(AdditiveBounds { c_f: 0.0, c_g: 1.0 }),
            },
            drift: CoefficientSpec::Polynomial {
                coeffs: vec![0.0, 0.0, 0.0, -1.0],
                forcing: vec![Forcing {
                    wave: Wave::Sin,
                    amplitude: 1.0,
                    angular_frequency: 2.0 * PI,
                    phase: 0.0,
                }],
            },
            diffusion: CoefficientSpec::Polynomial {
                coeffs: vec![1.0],
                forcing: Vec::new(),
            },
        }),
        other => Err(Error::invalid(format!(
            "unknown preset '{other}'; valid presets: {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// Builds a named preset model.
pub fn preset(name: &str) -> Result<SdeModel> {
    preset_spec(name)?.build()
}

//! JSON form of a model: numeric parameters plus coefficient families.

use serde::{Deserialize, Serialize};

use super::{ModelParams, SdeModel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wave {
    Cos,
    Sin,
}

/// Time forcing `amplitude * wave(angular_frequency * t + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub wave: Wave,
    pub amplitude: f64,
    pub angular_frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Forcing {
    #[inline]
    fn eval(&self, t: f64) -> f64 {
        let arg = self.angular_frequency * t + self.phase;
        self.amplitude
            * match self.wave {
                Wave::Cos => arg.cos(),
                Wave::Sin => arg.sin(),
            }
    }
}

/// Component-wise coefficient: entry `i` is `poly(x_i) + sum of forcings(t)`.
///
/// Used as a drift it fills the `d` components; used as a diffusion it fills
/// the diagonal of the `d x m` matrix (which then requires `m == d`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    Zero,
    Polynomial {
        /// Coefficients in ascending powers: `c0 + c1 x + c2 x^2 + ...`.
        coeffs: Vec<f64>,
        #[serde(default)]
        forcing: Vec<Forcing>,
    },
}

impl CoefficientSpec {
    fn scalar_fn(&self) -> impl Fn(f64, f64) -> f64 + Send + Sync + 'static {
        let (coeffs, forcing) = match self {
            CoefficientSpec::Zero => (Vec::new(), Vec::new()),
            CoefficientSpec::Polynomial { coeffs, forcing } => (coeffs.clone(), forcing.clone()),
        };
        move |t, x| {
            let p = coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
            forcing.iter().fold(p, |acc, f| acc + f.eval(t))
        }
    }

    fn is_zero(&self) -> bool {
        matches!(self, CoefficientSpec::Zero)
    }
}

/// A model as it appears in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub params: ModelParams,
    pub drift: CoefficientSpec,
    pub diffusion: CoefficientSpec,
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build(&self) -> Result<SdeModel> {
        let p = &self.params;
        if !self.diffusion.is_zero() && p.noise_dim != p.dim {
            return Err(Error::invalid("component-wise diffusion requires noise_dim == dim"));
        }
        let d = p.dim;
        let m = p.noise_dim;
        let f = self.drift.scalar_fn();
        let g = self.diffusion.scalar_fn();
        let g_zero = self.diffusion.is_zero();
        let drift = move |t: f64, x: &[f64], out: &mut [f64]| {
            for (o, &xi) in out.iter_mut().zip(x) {
                *o = f(t, xi);
            }
        };
        let diffusion = move |t: f64, x: &[f64], out: &mut [f64]| {
            out.fill(0.0);
            if !g_zero {
                for i in 0..d {
                    out[i * m + i] = g(t, x[i]);
                }
            }
        };
        let name = self.name.clone().unwrap_or_else(|| "custom".to_string());
        SdeModel::new(name, p.clone(), drift, diffusion)
    }
}

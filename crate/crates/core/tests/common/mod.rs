#![allow(dead_code)]

use rps_core::model::{ModelParams, SdeModel};

pub fn params(lambda: f64, alpha1: f64, p1: f64) -> ModelParams {
    ModelParams {
        dim: 1,
        noise_dim: 1,
        lambda: vec![lambda],
        period: 1.0,
        gamma: 1.0,
        alpha1,
        p1,
        growth_c1: 0.0,
        growth_c2: 0.0,
        additive: None,
    }
}

/// `dX = -lambda X dt + sigma X dW`.
pub fn linear_diffusion(lambda: f64, sigma: f64, alpha1: f64, p1: f64) -> SdeModel {
    SdeModel::new(
        "linear-diffusion",
        params(lambda, alpha1, p1),
        |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0),
        move |_: f64, x: &[f64], out: &mut [f64]| out[0] = sigma * x[0],
    )
    .unwrap()
}

/// `dX = -lambda X dt + sigma dW`.
pub fn linear_additive(lambda: f64, sigma: f64) -> SdeModel {
    SdeModel::new(
        "linear-additive",
        params(lambda, 0.0, 2.0),
        |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0),
        move |_: f64, _: &[f64], out: &mut [f64]| out.fill(sigma),
    )
    .unwrap()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

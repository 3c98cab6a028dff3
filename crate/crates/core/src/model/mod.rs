//! Semi-linear SDE problems `dX = (AX + f(t,X)) dt + g(t,X) dW` with a diagonal,
//! negative-definite linear part, together with the constants that drive the
//! projected Euler step-size windows.

mod presets;
mod spec;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wiener::standard_normal;

pub use presets::{preset, PRESET_NAMES};
pub use spec::{CoefficientSpec, Forcing, ModelSpec, Wave};

/// Drift `f(t, x)` written into `out` (length `dim`).
pub type DriftFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
/// Diffusion `g(t, x)` written into `out` as a row-major `dim x noise_dim` matrix.
pub type DiffusionFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;

/// Number of uniform samples per period used to estimate `sup_t ||f(t,0)||`.
pub const OFFSET_SAMPLES: usize = 10_000;

/// Bounds that only exist for additive-noise models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditiveBounds {
    /// One-sided Lipschitz constant of the drift, `c_f < lambda_1`.
    pub c_f: f64,
    /// Bound on `sup_t ||g(t)||` and on the time-Lipschitz constant of `g`.
    pub c_g: f64,
}

/// Numeric data of a model: spectrum of `-A` plus the assumption constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dim: usize,
    pub noise_dim: usize,
    /// Eigenvalues of `-A`, ascending and positive.
    pub lambda: Vec<f64>,
    pub period: f64,
    pub gamma: f64,
    pub alpha1: f64,
    pub p1: f64,
    pub growth_c1: f64,
    pub growth_c2: f64,
    #[serde(default)]
    pub additive: Option<AdditiveBounds>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.noise_dim == 0 {
            return Err(Error::invalid("dim and noise_dim must be positive"));
        }
        if self.lambda.len() != self.dim {
            return Err(Error::invalid(format!(
                "lambda has {} entries, expected dim = {}",
                self.lambda.len(),
                self.dim
            )));
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::invalid("every eigenvalue in lambda must be positive"));
        }
        if self.lambda.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("lambda must be sorted ascending"));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return Err(Error::invalid("period must be positive"));
        }
        if !(self.p1 > 1.0 && self.p1.is_finite()) {
            return Err(Error::invalid("p1 must exceed 1"));
        }
        if !(self.gamma >= 1.0 && self.gamma < (self.p1 + 1.0) / 2.0) {
            return Err(Error::invalid(format!(
                "gamma = {} outside [1, (p1+1)/2) = [1, {})",
                self.gamma,
                (self.p1 + 1.0) / 2.0
            )));
        }
        let lambda1 = self.lambda[0];
        if !(self.alpha1 < lambda1) {
            return Err(Error::invalid(format!(
                "alpha1 = {} must be below lambda_1 = {lambda1}",
                self.alpha1
            )));
        }
        if !(self.growth_c1 >= 0.0 && self.growth_c2 >= 0.0) {
            return Err(Error::invalid("growth constants must be nonnegative"));
        }
        if let Some(add) = self.additive {
            if !(add.c_f < lambda1) {
                return Err(Error::invalid(format!(
                    "c_f = {} must be below lambda_1 = {lambda1}",
                    add.c_f
                )));
            }
            if !(add.c_g >= 0.0) {
                return Err(Error::invalid("c_g must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// An SDE problem. Cheap to clone; coefficient functions are shared.
#[derive(Clone)]
pub struct SdeModel {
    name: String,
    params: ModelParams,
    drift: Arc<DriftFn>,
    diffusion: Arc<DiffusionFn>,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl SdeModel {
    pub fn new<F, G>(name: impl Into<String>, params: ModelParams, drift: F, diffusion: G) -> Result<Self>
    where
        F: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        G: Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        params.validate()?;
        Ok(Self {
            name: name.into(),
            params,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.params.noise_dim
    }

    pub fn lambda(&self) -> &[f64] {
        &self.params.lambda
    }

    /// Smallest eigenvalue of `-A`.
    pub fn lambda_min(&self) -> f64 {
        self.params.lambda[0]
    }

    /// Largest eigenvalue of `-A`.
    pub fn lambda_max(&self) -> f64 {
        self.params.lambda[self.params.dim - 1]
    }

    pub fn period(&self) -> f64 {
        self.params.period
    }

    pub fn gamma(&self) -> f64 {
        self.params.gamma
    }

    pub fn alpha1(&self) -> f64 {
        self.params.alpha1
    }

    pub fn p1(&self) -> f64 {
        self.params.p1
    }

    pub fn additive(&self) -> Option<AdditiveBounds> {
        self.params.additive
    }

    /// The constant subtracted from `lambda_1` in the step-size windows:
    /// `c_f` for additive models, `alpha1` otherwise.
    pub fn dissipation_offset(&self) -> f64 {
        match self.params.additive {
            Some(add) => add.c_f,
            None => self.params.alpha1,
        }
    }

    /// Time argument reduced into `[0, period)`.
    #[inline]
    pub fn reduce_time(&self, t: f64) -> f64 {
        t.rem_euclid(self.params.period)
    }

    /// Evaluates `f(t, x)`; `t` is reduced modulo the period first.
    #[inline]
    pub fn drift(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.drift)(self.reduce_time(t), x, out)
    }

    /// Evaluates `g(t, x)` as a row-major `dim x noise_dim` matrix.
    #[inline]
    pub fn diffusion(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(self.reduce_time(t), x, out)
    }

    /// Largest deviation `||f(t+tau,x) - f(t,x)|| + ||g(t+tau,x) - g(t,x)||` over
    /// random dyadic times and states in a ball of the given radius.
    pub fn periodicity_defect(&self, radius: f64, samples: usize, seed: u64) -> f64 {
        let (d, m) = (self.dim(), self.noise_dim());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; d];
        let (mut fa, mut fb) = (vec![0.0; d], vec![0.0; d]);
        let (mut ga, mut gb) = (vec![0.0; d * m], vec![0.0; d * m]);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            // dyadic times keep t + tau exact
            let t = (rng.random_range(-(1i64 << 30)..(1i64 << 30)) as f64) * 2f64.powi(-20);
            sample_ball(&mut rng, radius, &mut x);
            self.drift(t, &x, &mut fa);
            self.drift(t + self.period(), &x, &mut fb);
            self.diffusion(t, &x, &mut ga);
            self.diffusion(t + self.period(), &x, &mut gb);
            worst = worst.max(dist(&fa, &fb) + dist(&ga, &gb));
        }
        worst
    }
}

/// Constants of the projected scheme derived from the model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConstants {
    /// Bound on `||f(t, project(x))|| * sqrt(h)`.
    pub l1: f64,
    /// Lipschitz factor of `f` composed with the projection.
    pub l2: f64,
    pub alpha2: f64,
    pub c0: f64,
    pub epsilon: f64,
    pub p2: f64,
}

/// Coercivity pair `(alpha2, c0)` obtained from coupled monotonicity with `y = 0`.
pub fn derive_coercivity(
    alpha1: f64,
    epsilon: f64,
    p1: f64,
    p2: f64,
    f0_norm: f64,
    g0_norm: f64,
) -> Result<(f64, f64)> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon = {epsilon} must be positive")));
    }
    if !(p2 >= 1.0 && p2 < p1) {
        return Err(Error::invalid(format!("p2 = {p2} must lie in [1, p1 = {p1})")));
    }
    if !(f0_norm >= 0.0 && g0_norm >= 0.0) {
        return Err(Error::invalid("offset norms must be nonnegative"));
    }
    let alpha2 = alpha1 + epsilon;
    let g2 = g0_norm * g0_norm;
    let k = 2.0 * p1 - 1.0;
    let c0 = f0_norm * f0_norm / (2.0 * epsilon) + k * k / (4.0 * (p1 - p2)) * g2 + k / 2.0 * g2;
    Ok((alpha2, c0))
}

/// `(sup_t ||f(t,0)||, sup_t ||g(t,0)||)` over [`OFFSET_SAMPLES`] uniform times in one period.
pub fn offset_norms(model: &SdeModel) -> (f64, f64) {
    let (d, m) = (model.dim(), model.noise_dim());
    let zero = vec![0.0; d];
    let mut f = vec![0.0; d];
    let mut g = vec![0.0; d * m];
    let (mut f_sup, mut g_sup) = (0.0f64, 0.0f64);
    for k in 0..OFFSET_SAMPLES {
        let t = model.period() * k as f64 / OFFSET_SAMPLES as f64;
        model.drift(t, &zero, &mut f);
        model.diffusion(t, &zero, &mut g);
        f_sup = f_sup.max(norm(&f));
        g_sup = g_sup.max(norm(&g));
    }
    (f_sup, g_sup)
}

pub fn scheme_constants(model: &SdeModel, epsilon: f64, p2: f64) -> Result<SchemeConstants> {
    let room = model.lambda_min() - model.alpha1();
    if !(epsilon < room) {
        return Err(Error::invalid(format!(
            "epsilon = {epsilon} must be below lambda_1 - alpha1 = {room}"
        )));
    }
    let (f0, g0) = offset_norms(model);
    let (alpha2, c0) = derive_coercivity(model.alpha1(), epsilon, model.p1(), p2, f0, g0)?;
    Ok(SchemeConstants {
        l1: 2.0 * model.params.growth_c2,
        l2: 3.0 * model.params.growth_c1,
        alpha2,
        c0,
        epsilon,
        p2,
    })
}

/// Scheme constants with `epsilon = (lambda_1 - alpha1)/2` and `p2 = 1`.
pub fn default_scheme_constants(model: &SdeModel) -> Result<SchemeConstants> {
    scheme_constants(model, (model.lambda_min() - model.alpha1()) / 2.0, 1.0)
}

/// Raw step-size window
/// `min{ gap^((p1+1)/2) / ((1+delta2)^((p1+1)/2) * stiffness^(p1+1)), 1/(gap - delta1), 1 }`
/// where `gap = lambda_1 - a` and `stiffness = lambda_d + L2`.
pub fn step_bound(gap: f64, stiffness: f64, p1: f64, delta1: f64, delta2: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::invalid(format!("dissipation gap {gap} must be positive")));
    }
    if !(delta1 >= 0.0 && delta1 < gap) {
        return Err(Error::invalid(format!("delta1 = {delta1} outside [0, {gap})")));
    }
    if !(delta2 >= 0.0) {
        return Err(Error::invalid(format!("delta2 = {delta2} must be nonnegative")));
    }
    if !(stiffness > 0.0) {
        return Err(Error::invalid("lambda_d + L2 must be positive"));
    }
    let half = (p1 + 1.0) / 2.0;
    let moment = gap.powf(half) / ((1.0 + delta2).powf(half) * stiffness.powf(p1 + 1.0));
    Ok(moment.min(1.0 / (gap - delta1)).min(1.0))
}

/// Largest admissible step for the model. Uses `c_f` in place of `alpha1`
/// for additive models. `delta1 = delta2 = 0` gives the contraction window.
pub fn admissible_step_bound(model: &SdeModel, consts: &SchemeConstants, delta1: f64, delta2: f64) -> Result<f64> {
    let gap = model.lambda_min() - model.dissipation_offset();
    step_bound(gap, model.lambda_max() + consts.l2, model.p1(), delta1, delta2)
}

/// Admissible step with `delta1 = (lambda_1 - a)/2`, `delta2 = 1`.
pub fn default_step_bound(model: &SdeModel) -> Result<f64> {
    let consts = default_scheme_constants(model)?;
    let gap = model.lambda_min() - model.dissipation_offset();
    admissible_step_bound(model, &consts, gap / 2.0, 1.0)
}

/// Empirical supremum of the coupled-monotonicity quotient
/// `(<x-y, f(t,x)-f(t,y)> + (2p1-1)/2 ||g(t,x)-g(t,y)||^2) / ||x-y||^2`
/// over random `t` in one period and `x, y` in the ball of the given radius.
pub fn probe_monotonicity(model: &SdeModel, radius: f64, samples: usize, seed: u64) -> Result<f64> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!("radius = {radius} must be positive")));
    }
    if samples == 0 {
        return Err(Error::invalid("samples must be positive"));
    }
    let (d, m) = (model.dim(), model.noise_dim());
    let weight = (2.0 * model.p1() - 1.0) / 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (vec![0.0; d], vec![0.0; d]);
    let (mut fx, mut fy) = (vec![0.0; d], vec![0.0; d]);
    let (mut gx, mut gy) = (vec![0.0; d * m], vec![0.0; d * m]);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let t = rng.random::<f64>() * model.period();
        let sep = loop {
            sample_ball(&mut rng, radius, &mut x);
            sample_ball(&mut rng, radius, &mut y);
            let s = dist(&x, &y);
            if s > 0.0 {
                break s;
            }
        };
        model.drift(t, &x, &mut fx);
        model.drift(t, &y, &mut fy);
        model.diffusion(t, &x, &mut gx);
        model.diffusion(t, &y, &mut gy);
        let inner: f64 = x
            .iter()
            .zip(&y)
            .zip(fx.iter().zip(&fy))
            .map(|((a, b), (fa, fb))| (a - b) * (fa - fb))
            .sum();
        let gd = dist(&gx, &gy);
        worst = worst.max((inner + weight * gd * gd) / (sep * sep));
    }
    Ok(worst)
}

/// Uniform sample from the closed ball of the given radius.
fn sample_ball(rng: &mut ChaCha8Rng, radius: f64, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = standard_normal(open_unit(rng));
        }
        let n = norm(out);
        if n > 0.0 {
            let r = radius * rng.random::<f64>().powf(1.0 / out.len() as f64);
            out.iter_mut().for_each(|v| *v *= r / n);
            return;
        }
    }
}

fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn scalar_params(lambda: f64, alpha1: f64) -> ModelParams {
        ModelParams {
            dim: 1,
            noise_dim: 1,
            lambda: vec![lambda],
            period: 1.0,
            gamma: 1.0,
            alpha1,
            p1: 2.0,
            growth_c1: 1.0,
            growth_c2: 1.0,
            additive: None,
        }
    }

    #[test]
    fn coercivity_zero_offsets() {
        let (a2, c0) = derive_coercivity(-1.0, 0.5, 2.0, 1.0, 0.0, 0.0).unwrap();
        assert_eq!(a2, -0.5);
        assert_eq!(c0, 0.0);
    }

    #[test]
    fn coercivity_hand_values() {
        let (a2, c0) = derive_coercivity(0.0, 0.5, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(a2, 0.5);
        // 1/(2*0.5) + 9/4 + 3/2
        assert!((c0 - 4.75).abs() < 1e-15);

        let (a2, c0) = derive_coercivity(0.3, 0.2, 3.0, 2.0, 2.0, 0.0).unwrap();
        assert!((a2 - 0.5).abs() < 1e-15);
        assert!((c0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn coercivity_rejects_bad_exponents() {
        assert!(derive_coercivity(0.0, 0.5, 2.0, 2.0, 1.0, 1.0).is_err());
        assert!(derive_coercivity(0.0, 0.5, 2.0, 3.0, 1.0, 1.0).is_err());
        assert!(derive_coercivity(0.0, 0.0, 2.0, 1.0, 1.0, 1.0).is_err());
        assert!(derive_coercivity(0.0, -1.0, 2.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn coercivity_blows_up_as_epsilon_vanishes() {
        let big = derive_coercivity(0.0, 1e-12, 2.0, 1.0, 1.0, 0.0).unwrap().1;
        assert!(big > 1e11);
    }

    #[test]
    fn step_bound_examples() {
        assert_eq!(step_bound(1.0, 2.0, 3.0, 0.0, 0.0).unwrap(), 0.0625);
        assert_eq!(step_bound(1.0, 1.0, 1.0 + 1e-12, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(step_bound(4.0, 1.0, 3.0, 2.0, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn step_bound_rejects_delta_outside_window() {
        assert!(step_bound(1.0, 2.0, 3.0, 1.0, 0.0).is_err());
        assert!(step_bound(1.0, 2.0, 3.0, -0.1, 0.0).is_err());
        assert!(step_bound(1.0, 2.0, 3.0, 0.5, -1.0).is_err());
    }

    #[test]
    fn scheme_constants_from_growth() {
        let zero = |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0);
        let model = SdeModel::new("unit", scalar_params(1.0, 0.0), zero, zero).unwrap();
        let c = scheme_constants(&model, 0.5, 1.0).unwrap();
        assert_eq!((c.l1, c.l2), (2.0, 3.0));
        assert_eq!(c.c0, 0.0);

        let mut p = scalar_params(1.0, 0.0);
        p.growth_c1 = 0.0;
        p.growth_c2 = 0.0;
        let model = SdeModel::new("degenerate", p, zero, zero).unwrap();
        let c = scheme_constants(&model, 0.5, 1.0).unwrap();
        assert_eq!((c.l1, c.l2), (0.0, 0.0));

        assert!(scheme_constants(&model, 1.0, 1.0).is_err());
    }

    #[test]
    fn example2_offset_sup_is_one() {
        let model = preset("example2-additive").unwrap();
        let (f0, g0) = offset_norms(&model);
        assert!((f0 - 1.0).abs() < 1e-12, "{f0}");
        assert_eq!(g0, 1.0);
    }

    #[test]
    fn params_validation() {
        let zero = |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0);
        let mut p = scalar_params(1.0, 1.0);
        assert!(SdeModel::new("bad", p.clone(), zero, zero).is_err());
        p.alpha1 = 0.0;
        p.gamma = 1.5; // (p1+1)/2 = 1.5 is excluded
        assert!(SdeModel::new("bad", p.clone(), zero, zero).is_err());
        p.gamma = 1.0;
        p.lambda = vec![2.0, 1.0];
        p.dim = 2;
        assert!(SdeModel::new("bad", p.clone(), zero, zero).is_err());
        p.lambda = vec![1.0, 2.0];
        assert!(SdeModel::new("ok", p.clone(), zero, zero).is_ok());
        p.additive = Some(AdditiveBounds { c_f: 1.0, c_g: 1.0 });
        assert!(SdeModel::new("bad", p, zero, zero).is_err());
    }

    #[test]
    fn probe_zero_drift_constant_noise() {
        let zero = |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0);
        let one = |_: f64, _: &[f64], out: &mut [f64]| out.fill(1.0);
        let model = SdeModel::new("c", scalar_params(1.0, 0.0), zero, one).unwrap();
        assert_eq!(probe_monotonicity(&model, 3.0, 1000, 1).unwrap(), 0.0);
    }

    #[test]
    fn probe_linear_drift_is_minus_one() {
        let lin = |_: f64, x: &[f64], out: &mut [f64]| {
            out.iter_mut().zip(x).for_each(|(o, v)| *o = -v);
        };
        let zero = |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0);
        let mut p = scalar_params(1.0, -1.0);
        p.dim = 3;
        p.noise_dim = 2;
        p.lambda = vec![1.0, 1.0, 2.0];
        let model = SdeModel::new("lin", p, lin, zero).unwrap();
        let v = probe_monotonicity(&model, 5.0, 10_000, 9).unwrap();
        assert!((v + 1.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn probe_is_deterministic() {
        let model = preset("example1-multiplicative").unwrap();
        let a = probe_monotonicity(&model, 2.0, 500, 3).unwrap();
        let b = probe_monotonicity(&model, 2.0, 500, 3).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn probe_rejects_bad_radius() {
        let model = preset("example2-additive").unwrap();
        assert!(probe_monotonicity(&model, 0.0, 10, 0).is_err());
        assert!(probe_monotonicity(&model, 1.0, 0, 0).is_err());
    }

    #[test]
    fn presets_are_exactly_periodic() {
        for name in PRESET_NAMES {
            let model = preset(name).unwrap();
            assert_eq!(model.periodicity_defect(3.0, 1000, 17), 0.0, "{name}");
        }
    }
}

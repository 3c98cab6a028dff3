//! Projected Euler and plain Euler-Maruyama steps and trajectory integration.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{default_step_bound, SdeModel};
use crate::wiener::BrownianPath;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    #[default]
    ProjectedEuler,
    EulerMaruyama,
}

/// What to do when `h` exceeds the admissible step bound of the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Admissibility {
    Strict,
    #[default]
    Warn,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub h: f64,
    #[serde(default)]
    pub kind: SchemeKind,
    #[serde(default)]
    pub admissibility: Admissibility,
}

impl SchemeConfig {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            kind: SchemeKind::ProjectedEuler,
            admissibility: Admissibility::Warn,
        }
    }

    pub fn with_kind(mut self, kind: SchemeKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn with_admissibility(mut self, admissibility: Admissibility) -> Self {
        self.admissibility = admissibility;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::invalid(format!("step h = {} must be positive", self.h)));
        }
        if self.admissibility != Admissibility::Off && self.h > 1.0 {
            return Err(Error::invalid(format!("step h = {} exceeds 1", self.h)));
        }
        Ok(())
    }

    /// Validates `h` and applies the admissibility policy. Returns the bound
    /// when it was computed.
    pub fn check_admissible(&self, model: &SdeModel) -> Result<Option<f64>> {
        self.validate()?;
        if self.admissibility == Admissibility::Off {
            return Ok(None);
        }
        let bound = default_step_bound(model)?;
        if self.h > bound {
            match self.admissibility {
                Admissibility::Strict => return Err(Error::Admissibility { h: self.h, bound }),
                Admissibility::Warn => log::warn!(
                    "step h = {} exceeds the admissible bound {bound:.3e} for model {}",
                    self.h,
                    model.name()
                ),
                Admissibility::Off => {}
            }
        }
        Ok(Some(bound))
    }
}

/// Radius `h^(-1/(2 gamma))` of the projection ball.
#[inline]
pub fn projection_radius(h: f64, gamma: f64) -> f64 {
    h.powf(-1.0 / (2.0 * gamma))
}

fn euclid(x: &[f64]) -> f64 {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n.is_finite() {
        return n;
    }
    let big = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !big.is_finite() || big == 0.0 {
        return big;
    }
    big * x.iter().map(|v| (v / big) * (v / big)).sum::<f64>().sqrt()
}

/// Radial truncation onto the ball of radius `h^(-1/(2 gamma))`, written into `out`.
///
/// Points inside the closed ball are copied unchanged. Outside points are scaled
/// so that the computed norm does not exceed the radius, which makes the map
/// idempotent in floating point.
pub fn project_into(x: &[f64], h: f64, gamma: f64, out: &mut [f64]) {
    let radius = projection_radius(h, gamma);
    let n = euclid(x);
    if n <= radius {
        out.copy_from_slice(x);
        return;
    }
    let mut s = radius / n;
    loop {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v * s;
        }
        if euclid(out) <= radius {
            return;
        }
        s = s.next_down();
    }
}

pub fn project(x: &[f64], h: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    project_into(x, h, gamma, &mut out);
    out
}

/// Reusable buffers for repeated steps of one model.
pub(crate) struct Stepper<'a> {
    model: &'a SdeModel,
    kind: SchemeKind,
    h: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(model: &'a SdeModel, kind: SchemeKind, h: f64) -> Self {
        let (d, m) = (model.dim(), model.noise_dim());
        Self {
            model,
            kind,
            h,
            y: vec![0.0; d],
            f: vec![0.0; d],
            g: vec![0.0; d * m],
        }
    }

    /// One step from `x` at time `t`; `false` if the result is not finite.
    #[inline]
    pub(crate) fn step(&mut self, t: f64, x: &[f64], dw: &[f64], out: &mut [f64]) -> bool {
        let model = self.model;
        let h = self.h;
        match self.kind {
            SchemeKind::ProjectedEuler => project_into(x, h, model.gamma(), &mut self.y),
            SchemeKind::EulerMaruyama => self.y.copy_from_slice(x),
        }
        model.drift(t, &self.y, &mut self.f);
        model.diffusion(t, &self.y, &mut self.g);
        let m = model.noise_dim();
        let mut finite = true;
        for (i, o) in out.iter_mut().enumerate() {
            let yi = self.y[i];
            let noise: f64 = self.g[i * m..(i + 1) * m]
                .iter()
                .zip(dw)
                .map(|(gik, dwk)| gik * dwk)
                .sum();
            *o = yi + (-model.lambda()[i] * h) * yi + h * self.f[i] + noise;
            finite &= o.is_finite();
        }
        finite
    }
}

fn single_step(kind: SchemeKind, model: &SdeModel, t: f64, x: &[f64], h: f64, dw: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.dim() || dw.len() != model.noise_dim() {
        return Err(Error::invalid(format!(
            "state/noise lengths ({}, {}) do not match model dimensions ({}, {})",
            x.len(),
            dw.len(),
            model.dim(),
            model.noise_dim()
        )));
    }
    let mut out = vec![0.0; x.len()];
    if Stepper::new(model, kind, h).step(t, x, dw, &mut out) {
        Ok(out)
    } else {
        Err(Error::BlowUp {
            node: 1,
            stream: None,
            h: Some(h),
        })
    }
}

/// One projected Euler step: `y + A h y + h f(t,y) + g(t,y) dW` with `y = project(x)`.
pub fn pe_step(model: &SdeModel, t: f64, x: &[f64], h: f64, dw: &[f64]) -> Result<Vec<f64>> {
    single_step(SchemeKind::ProjectedEuler, model, t, x, h, dw)
}

/// One Euler-Maruyama step (no projection).
pub fn em_step(model: &SdeModel, t: f64, x: &[f64], h: f64, dw: &[f64]) -> Result<Vec<f64>> {
    single_step(SchemeKind::EulerMaruyama, model, t, x, h, dw)
}

/// States of one simulated path at nodes `t0 + j h`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t0: f64,
    pub h: f64,
    pub states: Vec<Vec<f64>>,
    pub model_id: String,
    pub seed: u64,
    pub stream_id: u64,
}

impl Trajectory {
    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.h
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// CSV with header `t,x_1,...,x_d`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.states.first().map_or(0, Vec::len);
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=d).map(|i| format!("x_{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (j, x) in self.states.iter().enumerate() {
            write!(w, "{}", fmt17(self.time(j)))?;
            for v in x {
                write!(w, ",{}", fmt17(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// 17-significant-digit rendering.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Integrates `steps` steps of size `h` from `xi` at time `t0`, consuming the
/// increments of `path` over consecutive blocks of `h / h_fine` fine steps.
/// `observe(j, x)` sees every node `j = 0..=steps`. Returns the final state.
/// No admissibility check is performed.
#[allow(clippy::too_many_arguments)]
pub fn integrate_observed<F>(
    model: &SdeModel,
    kind: SchemeKind,
    h: f64,
    path: &BrownianPath,
    t0: f64,
    steps: usize,
    xi: &[f64],
    mut observe: F,
) -> Result<Vec<f64>>
where
    F: FnMut(usize, &[f64]),
{
    if xi.len() != model.dim() {
        return Err(Error::invalid(format!(
            "initial value has {} components, model dim is {}",
            xi.len(),
            model.dim()
        )));
    }
    if path.noise_dim() != model.noise_dim() {
        return Err(Error::invalid(format!(
            "path noise_dim {} does not match model noise_dim {}",
            path.noise_dim(),
            model.noise_dim()
        )));
    }
    let grid = path.grid();
    let factor = grid.factor_for(h)? as i64;
    let start = grid.node_of(t0)?;
    let end = start + steps as i64 * factor;
    if start < -(path.lead() as i64) || end > (path.steps() + path.trail()) as i64 {
        return Err(Error::invalid(format!(
            "integration window [{t0}, {}] leaves the generated path",
            t0 + steps as f64 * h
        )));
    }

    let mut stepper = Stepper::new(model, kind, h);
    let mut x = xi.to_vec();
    let mut next = vec![0.0; xi.len()];
    let mut dw = vec![0.0; model.noise_dim()];
    observe(0, &x);
    for j in 0..steps {
        let n0 = start + j as i64 * factor;
        path.increment_between(n0, n0 + factor, &mut dw)?;
        let t = t0 + j as f64 * h;
        if !stepper.step(t, &x, &dw, &mut next) {
            return Err(Error::BlowUp {
                node: j + 1,
                stream: Some(path.stream_id()),
                h: Some(h),
            });
        }
        std::mem::swap(&mut x, &mut next);
        observe(j + 1, &x);
    }
    Ok(x)
}

/// Full trajectory under `config`, applying its admissibility policy first.
pub fn integrate(
    model: &SdeModel,
    config: &SchemeConfig,
    path: &BrownianPath,
    t0: f64,
    steps: usize,
    xi: &[f64],
) -> Result<Trajectory> {
    config.check_admissible(model)?;
    let mut states = Vec::with_capacity(steps + 1);
    integrate_observed(model, config.kind, config.h, path, t0, steps, xi, |_, x| {
        states.push(x.to_vec())
    })?;
    Ok(Trajectory {
        t0,
        h: config.h,
        states,
        model_id: model.name().to_string(),
        seed: path.seed(),
        stream_id: path.stream_id(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, ModelParams};
    use crate::wiener::{generate, GridSpec};

    pub(crate) fn linear_model(lambda: f64) -> SdeModel {
        let params = ModelParams {
            dim: 1,
            noise_dim: 1,
            lambda: vec![lambda],
            period: 1.0,
            gamma: 1.0,
            alpha1: 0.0,
            p1: 2.0,
            growth_c1: 0.0,
            growth_c2: 0.0,
            additive: None,
        };
        let zero = |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0);
        SdeModel::new("linear", params, zero, zero).unwrap()
    }

    #[test]
    fn project_zero() {
        assert_eq!(project(&[0.0, 0.0], 0.5, 2.0), vec![0.0, 0.0]);
    }

    #[test]
    fn project_inside_ball_unchanged() {
        assert_eq!(project(&[3.0, 4.0], 0.01, 1.0), vec![3.0, 4.0]);
    }

    #[test]
    fn project_outside_ball() {
        let y = project(&[30.0, 40.0], 0.01, 1.0);
        assert!((y[0] - 6.0).abs() < 1e-12 && (y[1] - 8.0).abs() < 1e-12);
        assert!(euclid(&y) <= 10.0);
        assert!((euclid(&y) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn project_on_the_sphere_is_inside() {
        let r = projection_radius(0.25, 1.0);
        assert_eq!(r, 2.0);
        assert_eq!(project(&[2.0], 0.25, 1.0), vec![2.0]);
        assert_eq!(project(&[-2.0], 0.25, 1.0), vec![-2.0]);
    }

    #[test]
    fn project_huge_input() {
        let y = project(&[1e300, -1e300], 0.5, 1.0);
        assert!(euclid(&y) <= projection_radius(0.5, 1.0));
        assert!(y[0] > 0.0 && y[1] < 0.0);
    }

    #[test]
    fn linear_step_values() {
        let model = linear_model(1.0);
        assert!((pe_step(&model, 0.0, &[0.5], 0.1, &[0.0]).unwrap()[0] - 0.45).abs() < 1e-15);
        // x = 10 lies outside the ball of radius 0.1^(-1/2) ~ 3.16, so only EM leaves it alone
        assert!((em_step(&model, 0.0, &[10.0], 0.1, &[0.3]).unwrap()[0] - 9.0).abs() < 1e-14);
    }

    #[test]
    fn zero_is_fixed_without_drift() {
        let params = ModelParams {
            additive: None,
            ..linear_model(1.0).params().clone()
        };
        let zero = |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0);
        let sig = |_: f64, x: &[f64], out: &mut [f64]| out[0] = 3.0 * x[0];
        let model = SdeModel::new("g", params, zero, sig).unwrap();
        assert_eq!(pe_step(&model, 0.2, &[0.0], 0.1, &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn example1_step_matches_hand_evaluation() {
        let model = preset("example1-multiplicative").unwrap();
        let (t, x, h, dw) = (0.0f64, 0.1f64, 0.01f64, 0.02f64);
        let pi = std::f64::consts::PI;
        let expected =
            x - 2.0 * pi * h * x + h * (x - x.powi(3) + (pi * t).cos()) + (1.0 + x * x + (pi * t).cos()) * dw;
        let got = pe_step(&model, t, &[x], h, &[dw]).unwrap()[0];
        assert!(
            (got - expected).abs() < 1e-15 * expected.abs().max(1.0),
            "{got} {expected}"
        );
    }

    #[test]
    fn em_equals_pe_inside_ball() {
        let model = preset("example2-additive").unwrap();
        let a = em_step(&model, 0.3, &[0.7], 0.01, &[0.05]).unwrap();
        let b = pe_step(&model, 0.3, &[0.7], 0.01, &[0.05]).unwrap();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn em_grows_on_large_state() {
        let model = preset("example1-multiplicative").unwrap();
        let x = 1e3;
        let y = em_step(&model, 0.0, &[x], 0.1, &[0.0]).unwrap()[0];
        // cubic term -0.1 * 1e9 dominates: growth by ~1e5
        assert!(y.abs() > 1e4 * x, "{y}");
        let p = pe_step(&model, 0.0, &[x], 0.1, &[0.0]).unwrap()[0];
        assert!(p.abs() < 10.0, "{p}");
    }

    #[test]
    fn em_reports_blow_up() {
        let model = preset("example1-multiplicative").unwrap();
        let err = em_step(&model, 0.0, &[1e150], 0.1, &[0.0]).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn step_rejects_wrong_lengths() {
        let model = linear_model(1.0);
        assert!(pe_step(&model, 0.0, &[0.5, 0.1], 0.1, &[0.0]).is_err());
        assert!(pe_step(&model, 0.0, &[0.5], 0.1, &[]).is_err());
    }

    #[test]
    fn integrate_zero_steps() {
        let model = linear_model(1.0);
        let path = generate(GridSpec::new(0.0, 1.0, 4).unwrap(), 1, 0, 0).unwrap();
        let tr = integrate(&model, &SchemeConfig::new(1.0 / 16.0), &path, 0.0, 0, &[0.3]).unwrap();
        assert_eq!(tr.states, vec![vec![0.3]]);
    }

    #[test]
    fn integrate_linear_geometric_decay() {
        let model = linear_model(1.0);
        let path = generate(GridSpec::new(0.0, 12.8, 7).unwrap(), 1, 0, 0).unwrap();
        let cfg = SchemeConfig::new(0.1);
        let tr = integrate(&model, &cfg, &path, 0.0, 100, &[2.0]).unwrap();
        for (j, x) in tr.states.iter().enumerate() {
            let exact = 0.9f64.powi(j as i32) * 2.0;
            assert!(((x[0] - exact) / exact).abs() < 1e-12, "node {j}");
        }
    }

    #[test]
    fn strict_admissibility_rejects_large_step() {
        let model = preset("example1-multiplicative").unwrap();
        let path = generate(GridSpec::new(0.0, 1.28, 7).unwrap(), 1, 0, 0).unwrap();
        let cfg = SchemeConfig::new(0.01).with_admissibility(Admissibility::Strict);
        let err = integrate(&model, &cfg, &path, 0.0, 10, &[0.1]).unwrap_err();
        assert!(matches!(err, Error::Admissibility { .. }));
        let ok = cfg.with_admissibility(Admissibility::Off);
        assert!(integrate(&model, &ok, &path, 0.0, 10, &[0.1]).is_ok());
    }

    #[test]
    fn integrate_rejects_window_outside_path() {
        let model = linear_model(1.0);
        let path = generate(GridSpec::new(0.0, 1.6, 4).unwrap(), 1, 0, 0).unwrap();
        let cfg = SchemeConfig::new(0.1);
        assert!(integrate(&model, &cfg, &path, 0.0, 17, &[1.0]).is_err());
        assert!(integrate(&model, &cfg, &path, 0.05, 1, &[1.0]).is_err());
        assert!(integrate(&model, &SchemeConfig::new(0.3), &path, 0.0, 1, &[1.0]).is_err());
    }

    #[test]
    fn trajectory_csv() {
        let tr = Trajectory {
            t0: 0.0,
            h: 0.5,
            states: vec![vec![1.0, 2.0], vec![0.1, 0.2]],
            model_id: "m".into(),
            seed: 0,
            stream_id: 0,
        };
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,x_2");
        assert_eq!(lines[2].split(',').next().unwrap().parse::<f64>().unwrap(), 0.5);
        assert_eq!(lines[2].split(',').nth(1).unwrap().parse::<f64>().unwrap(), 0.1);
    }
}

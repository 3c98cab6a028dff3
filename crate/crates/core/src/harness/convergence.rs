use std::io::Write;

use serde::{Deserialize, Serialize};

use super::fit::{fit_rate, RateFit};
use crate::error::{Error, Result};
use crate::model::{dist, SdeModel};
use crate::parallel::{map_ordered, mean_sem};
use crate::scheme::{fmt17, integrate_observed, Admissibility, SchemeConfig, SchemeKind};
use crate::wiener::{generate, GridSpec};

/// Parameters of a coupled fine/coarse mean-square error experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSettings {
    pub t0: f64,
    pub t_end: f64,
    /// Reference step is `(t_end - t0) / 2^ref_levels`.
    pub ref_levels: u32,
    /// Test steps are `(t_end - t0) / 2^i` for each `i`.
    pub test_exponents: Vec<u32>,
    pub m_paths: usize,
    pub seed: u64,
    pub xi: Vec<f64>,
    #[serde(default)]
    pub kind: SchemeKind,
    #[serde(default)]
    pub admissibility: Admissibility,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub h: f64,
    /// Monte Carlo mean of the squared terminal error.
    pub mse: f64,
    /// Standard error of `mse`.
    pub sem: f64,
}

impl ConvergencePoint {
    /// Root-mean-square error `e_h = sqrt(mse)`.
    pub fn rms(&self) -> f64 {
        self.mse.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// Sorted by `h` ascending.
    pub points: Vec<ConvergencePoint>,
    /// Fit of `log sqrt(mse)` against `log h`; absent when some error is zero.
    pub fit: Option<RateFit>,
    pub m_paths: usize,
    pub ref_h: f64,
}

impl ConvergenceReport {
    pub fn kappa(&self) -> Option<f64> {
        self.fit.map(|f| f.kappa)
    }

    /// CSV `h,mse,sem`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "h,mse,sem")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", fmt17(p.h), fmt17(p.mse), fmt17(p.sem))?;
        }
        Ok(())
    }
}

/// For each stream: one fine path, a reference solution at the finest step, and
/// a solution for every test step driven by the same path; records squared
/// terminal errors and fits the strong rate.
pub fn mse_convergence(model: &SdeModel, settings: &ConvergenceSettings) -> Result<ConvergenceReport> {
    let s = settings;
    if s.m_paths == 0 {
        return Err(Error::invalid("m_paths must be positive"));
    }
    if s.test_exponents.is_empty() {
        return Err(Error::invalid("no test step sizes given"));
    }
    if let Some(bad) = s.test_exponents.iter().find(|&&i| i > s.ref_levels) {
        return Err(Error::invalid(format!(
            "test exponent {bad} is finer than the reference level {}",
            s.ref_levels
        )));
    }
    let span = s.t_end - s.t0;
    let grid = GridSpec::new(s.t0, span, s.ref_levels)?;
    let ref_h = grid.h_fine();
    let mut exponents = s.test_exponents.clone();
    exponents.sort_unstable_by(|a, b| b.cmp(a));
    exponents.dedup();
    for &i in &exponents {
        SchemeConfig {
            h: span / (1u64 << i) as f64,
            kind: s.kind,
            admissibility: s.admissibility,
        }
        .check_admissible(model)?;
    }

    let per_stream: Vec<Result<Vec<f64>>> = map_ordered(s.m_paths, |stream| {
        let stream = stream as u64;
        let path = generate(grid, model.noise_dim(), s.seed, stream)?;
        let reference = integrate_observed(model, s.kind, ref_h, &path, s.t0, grid.steps(), &s.xi, |_, _| {})
            .map_err(|e| e.with_provenance(Some(stream), Some(ref_h)))?;
        exponents
            .iter()
            .map(|&i| {
                let steps = 1usize << i;
                let h = span / steps as f64;
                let terminal = integrate_observed(model, s.kind, h, &path, s.t0, steps, &s.xi, |_, _| {})
                    .map_err(|e| e.with_provenance(Some(stream), Some(h)))?;
                let e = dist(&terminal, &reference);
                Ok(e * e)
            })
            .collect()
    });
    let per_stream: Vec<Vec<f64>> = per_stream.into_iter().collect::<Result<_>>()?;

    let points: Vec<ConvergencePoint> = exponents
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let (mse, sem) = mean_sem(per_stream.iter().map(|errs| errs[k]));
            ConvergencePoint {
                h: span / (1u64 << i) as f64,
                mse,
                sem,
            }
        })
        .collect();
    let fit = if points.len() >= 2 && points.iter().all(|p| p.mse > 0.0) {
        let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.h, p.rms())).collect();
        Some(fit_rate(&pairs)?)
    } else {
        None
    };
    Ok(ConvergenceReport {
        points,
        fit,
        m_paths: s.m_paths,
        ref_h,
    })
}

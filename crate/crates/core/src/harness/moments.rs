use std::io::Write;

use crate::error::{Error, Result};
use crate::model::SdeModel;
use crate::parallel::map_ordered;
use crate::scheme::{fmt17, integrate_observed, SchemeConfig};
use crate::wiener::{generate, GridSpec};

/// Monte Carlo second moment `E ||X_j||^2` at every node.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTrace {
    pub times: Vec<f64>,
    pub mean_sq: Vec<f64>,
    pub max_over_run: f64,
}

impl MomentTrace {
    /// CSV `t,mean_sq`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,mean_sq")?;
        for (t, v) in self.times.iter().zip(&self.mean_sq) {
            writeln!(w, "{},{}", fmt17(*t), fmt17(*v))?;
        }
        Ok(())
    }
}

/// Runs `m_paths` streams from `xi` and averages squared norms node by node.
/// A blow-up on any stream is reported for the lowest such stream id.
pub fn moment_monitor(
    model: &SdeModel,
    config: &SchemeConfig,
    t0: f64,
    steps: usize,
    m_paths: usize,
    seed: u64,
    xi: &[f64],
) -> Result<MomentTrace> {
    config.check_admissible(model)?;
    if m_paths == 0 {
        return Err(Error::invalid("m_paths must be positive"));
    }
    let h = config.h;
    let grid = GridSpec::with_step(t0, h, steps)?;
    let per_stream: Vec<Result<Vec<f64>>> = map_ordered(m_paths, |stream| {
        let path = generate(grid, model.noise_dim(), seed, stream as u64)?;
        let mut sq = Vec::with_capacity(steps + 1);
        integrate_observed(model, config.kind, h, &path, t0, steps, xi, |_, x| {
            sq.push(x.iter().map(|v| v * v).sum::<f64>())
        })?;
        Ok(sq)
    });
    let per_stream: Vec<Vec<f64>> = per_stream.into_iter().collect::<Result<_>>()?;

    let mut mean_sq = vec![0.0; steps + 1];
    for sq in &per_stream {
        for (acc, v) in mean_sq.iter_mut().zip(sq) {
            *acc += v;
        }
    }
    mean_sq.iter_mut().for_each(|v| *v /= m_paths as f64);
    let max_over_run = mean_sq.iter().copied().fold(0.0f64, f64::max);
    Ok(MomentTrace {
        times: (0..=steps).map(|j| t0 + j as f64 * h).collect(),
        mean_sq,
        max_over_run,
    })
}

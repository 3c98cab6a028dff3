//! Pull-back approximation of the random periodic solution, mean-square
//! contraction of two initial values, and Wiener-shift periodicity checks.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{dist, SdeModel};
use crate::parallel::{map_ordered, mean_sem};
use crate::scheme::{fmt17, integrate_observed, SchemeConfig};
use crate::wiener::{generate_window, GridSpec, DEFAULT_MEMORY_BUDGET};

/// Number of steps of size `h` in `duration`, which must be a whole multiple.
fn whole_steps(duration: f64, h: f64, what: &str) -> Result<usize> {
    let x = duration / h;
    let r = x.round();
    if r < 0.0 || (x - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::invalid(format!(
            "{what} ({duration}) is not a nonnegative multiple of h = {h}"
        )));
    }
    Ok(r as usize)
}

#[derive(Clone, Debug)]
pub struct PullbackResult {
    pub k_used: usize,
    /// Observation node times `T_lo ..= T_hi`.
    pub window_times: Vec<f64>,
    /// States on the observation window for each pull-back depth `k`.
    pub terminal_states: BTreeMap<usize, Vec<Vec<f64>>>,
    /// `cauchy_gaps[i]` is the sup-norm gap between depths `i + 1` and `i + 2`.
    pub cauchy_gaps: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
}

impl PullbackResult {
    /// States of the deepest computed pull-back.
    pub fn deepest(&self) -> &[Vec<f64>] {
        &self.terminal_states[&self.k_used]
    }

    /// CSV `k,cauchy_gap`; `k` is the deeper of the two compared levels.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,cauchy_gap")?;
        for (i, g) in self.cauchy_gaps.iter().enumerate() {
            writeln!(w, "{},{}", i + 2, fmt17(*g))?;
        }
        Ok(())
    }
}

/// Integrates from `-k tau` for `k = 1, 2, ...` on one realization anchored at
/// `-k_max tau`, until two consecutive depths agree to `tol` in sup norm over
/// the observation window.
#[allow(clippy::too_many_arguments)]
pub fn pullback_solve(
    model: &SdeModel,
    config: &SchemeConfig,
    seed: u64,
    stream_id: u64,
    xi: &[f64],
    window: (f64, f64),
    k_max: usize,
    tol: f64,
) -> Result<PullbackResult> {
    config.check_admissible(model)?;
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    if k_max < 2 {
        return Err(Error::invalid("k_max must be at least 2"));
    }
    let (t_lo, t_hi) = window;
    let tau = model.period();
    if !(t_lo <= t_hi) || t_lo < -tau {
        return Err(Error::invalid(format!(
            "observation window [{t_lo}, {t_hi}] must be ordered and start at or after -tau = {}",
            -tau
        )));
    }
    let h = config.h;
    let per_period = whole_steps(tau, h, "period")?;
    let deepest = -(k_max as f64) * tau;
    let total = whole_steps(t_hi - deepest, h, "pull-back horizon")?;
    let grid = GridSpec::with_step(deepest, h, total)?;
    let path = generate_window(grid, model.noise_dim(), seed, stream_id, 0, 0, DEFAULT_MEMORY_BUDGET)?;
    let lo = grid.node_of(t_lo)? as usize;
    let hi = grid.node_of(t_hi)? as usize;
    let window_times: Vec<f64> = (lo..=hi).map(|n| grid.time(n as i64)).collect();

    let mut terminal_states = BTreeMap::new();
    let mut cauchy_gaps = Vec::new();
    let mut converged = false;
    let mut k_used = 0;
    for k in 1..=k_max {
        let start_node = (k_max - k) * per_period;
        let start = grid.time(start_node as i64);
        let steps = total - start_node;
        let mut states = Vec::with_capacity(hi - lo + 1);
        integrate_observed(model, config.kind, h, &path, start, steps, xi, |j, x| {
            let node = start_node + j;
            if (lo..=hi).contains(&node) {
                states.push(x.to_vec());
            }
        })?;
        if k > 1 {
            let prev: &Vec<Vec<f64>> = &terminal_states[&(k - 1)];
            let gap = prev.iter().zip(&states).map(|(a, b)| dist(a, b)).fold(0.0f64, f64::max);
            cauchy_gaps.push(gap);
            converged = gap <= tol;
        }
        terminal_states.insert(k, states);
        k_used = k;
        if converged {
            break;
        }
    }
    Ok(PullbackResult {
        k_used,
        window_times,
        terminal_states,
        cauchy_gaps,
        converged,
        tolerance: tol,
    })
}

/// Per-node mean squared distance between two coupled solutions.
#[derive(Clone, Debug, PartialEq)]
pub struct GapSeries {
    pub times: Vec<f64>,
    pub gaps_sq: Vec<f64>,
    /// Standard error of each Monte Carlo mean (0 for a single path).
    pub sem: Vec<f64>,
    /// `gaps_sq[j+1] / gaps_sq[j]`, NaN where the denominator vanishes.
    pub step_ratio: Vec<f64>,
    /// Delta-method standard error of `step_ratio`.
    pub step_ratio_sem: Vec<f64>,
}

impl GapSeries {
    /// CSV `t,gap_sq`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,gap_sq")?;
        for (t, g) in self.times.iter().zip(&self.gaps_sq) {
            writeln!(w, "{},{}", fmt17(*t), fmt17(*g))?;
        }
        Ok(())
    }
}

/// Integrates `xi` and `eta` on identical noise for every stream in `streams`
/// and averages the squared gaps node by node.
#[allow(clippy::too_many_arguments)]
pub fn contraction_gap(
    model: &SdeModel,
    config: &SchemeConfig,
    seed: u64,
    streams: &[u64],
    xi: &[f64],
    eta: &[f64],
    t0: f64,
    t_end: f64,
) -> Result<GapSeries> {
    config.check_admissible(model)?;
    if streams.is_empty() {
        return Err(Error::invalid("at least one stream is required"));
    }
    if xi.len() != eta.len() {
        return Err(Error::invalid("initial values differ in length"));
    }
    let h = config.h;
    let steps = whole_steps(t_end - t0, h, "contraction horizon")?;
    let grid = GridSpec::with_step(t0, h, steps)?;

    let per_stream: Vec<Result<Vec<f64>>> = map_ordered(streams.len(), |s| {
        let stream = streams[s];
        let path = generate_window(grid, model.noise_dim(), seed, stream, 0, 0, DEFAULT_MEMORY_BUDGET)?;
        let mut a = Vec::with_capacity(steps + 1);
        integrate_observed(model, config.kind, h, &path, t0, steps, xi, |_, x| a.push(x.to_vec()))?;
        let mut gaps = Vec::with_capacity(steps + 1);
        integrate_observed(model, config.kind, h, &path, t0, steps, eta, |j, x| {
            let d = dist(&a[j], x);
            gaps.push(d * d);
        })?;
        Ok(gaps)
    });
    let per_stream: Vec<Vec<f64>> = per_stream.into_iter().collect::<Result<_>>()?;

    let m = per_stream.len();
    let mut gaps_sq = Vec::with_capacity(steps + 1);
    let mut sem = Vec::with_capacity(steps + 1);
    for j in 0..=steps {
        let (mean, s) = mean_sem(per_stream.iter().map(|g| g[j]));
        gaps_sq.push(mean);
        sem.push(s);
    }
    let mut step_ratio = Vec::with_capacity(steps);
    let mut step_ratio_sem = Vec::with_capacity(steps);
    for j in 0..steps {
        if gaps_sq[j] == 0.0 {
            step_ratio.push(f64::NAN);
            step_ratio_sem.push(f64::NAN);
            continue;
        }
        let r = gaps_sq[j + 1] / gaps_sq[j];
        let resid = per_stream.iter().map(|g| g[j + 1] - r * g[j]);
        let (_, resid_sem) = mean_sem(resid);
        step_ratio.push(r);
        step_ratio_sem.push(if m > 1 { resid_sem / gaps_sq[j] } else { 0.0 });
    }
    Ok(GapSeries {
        times: (0..=steps).map(|j| t0 + j as f64 * h).collect(),
        gaps_sq,
        sem,
        step_ratio,
        step_ratio_sem,
    })
}

/// Result of a Wiener-shift periodicity comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicityReport {
    /// Comparison times `t` in `[a + D, b + D]`.
    pub times: Vec<f64>,
    /// `||X_{t-D}(omega) - X_t(theta_{-D} omega)||^2` at each comparison time.
    pub gaps_sq: Vec<f64>,
    pub sup_gap: f64,
    pub shift: f64,
}

impl PeriodicityReport {
    pub fn as_gap_series(&self) -> GapSeries {
        let n = self.times.len();
        GapSeries {
            times: self.times.clone(),
            gaps_sq: self.gaps_sq.clone(),
            sem: vec![0.0; n],
            step_ratio: Vec::new(),
            step_ratio_sem: Vec::new(),
        }
    }
}

/// Integrates from `t0` once on `omega` and once on `theta_{-D} omega`,
/// `D = shift_periods * tau`, and compares `X_{t-D}(omega)` with
/// `X_t(theta_{-D} omega)` for `t` in `[a + D, b + D]`.
#[allow(clippy::too_many_arguments)]
pub fn periodicity_series(
    model: &SdeModel,
    config: &SchemeConfig,
    seed: u64,
    stream_id: u64,
    xi: &[f64],
    t0: f64,
    observe: (f64, f64),
    shift_periods: i64,
) -> Result<PeriodicityReport> {
    config.check_admissible(model)?;
    let h = config.h;
    let (a, b) = observe;
    let shift = shift_periods as f64 * model.period();
    if !(a <= b) || a < t0 || a + shift < t0 {
        return Err(Error::invalid(format!(
            "observation window [{a}, {b}] and its shift by {shift} must start at or after t0 = {t0}"
        )));
    }
    let delta = whole_steps(shift.abs(), h, "shift")? as i64 * shift_periods.signum();
    let steps_plain = whole_steps(b - t0, h, "observation end")?;
    let steps_shifted = whole_steps(b + shift - t0, h, "shifted observation end")?;
    let first = whole_steps(a - t0, h, "observation start")?;
    let count = steps_plain - first + 1;

    let grid = GridSpec::with_step(t0, h, steps_plain.max(steps_shifted))?;
    let lead = delta.max(0) as usize;
    let trail = (-delta).max(0) as usize;
    let path = generate_window(
        grid,
        model.noise_dim(),
        seed,
        stream_id,
        lead,
        trail,
        DEFAULT_MEMORY_BUDGET,
    )?;
    let shifted = path.shift(-delta)?;

    let mut plain = Vec::with_capacity(count);
    integrate_observed(model, config.kind, h, &path, t0, steps_plain, xi, |j, x| {
        if j >= first {
            plain.push(x.to_vec());
        }
    })?;
    let offset = first as i64 + delta;
    let mut gaps_sq = Vec::with_capacity(count);
    let mut times = Vec::with_capacity(count);
    integrate_observed(model, config.kind, h, &shifted, t0, steps_shifted, xi, |j, x| {
        let k = j as i64 - offset;
        if k >= 0 && (k as usize) < count {
            let d = dist(&plain[k as usize], x);
            gaps_sq.push(d * d);
            times.push(t0 + j as f64 * h);
        }
    })?;
    let sup_gap = gaps_sq.iter().fold(0.0f64, |m, g| m.max(g.sqrt()));
    Ok(PeriodicityReport {
        times,
        gaps_sq,
        sup_gap,
        shift,
    })
}

/// Sup over the comparison window of `||X_{t-D}(omega) - X_t(theta_{-D} omega)||`.
#[allow(clippy::too_many_arguments)]
pub fn periodicity_check(
    model: &SdeModel,
    config: &SchemeConfig,
    seed: u64,
    xi: &[f64],
    t0: f64,
    observe: (f64, f64),
    shift_periods: i64,
) -> Result<f64> {
    Ok(periodicity_series(model, config, seed, 0, xi, t0, observe, shift_periods)?.sup_gap)
}

//! `rps` command line: experiment subcommands driven by a JSON config and flags.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::convergence::{mse_convergence, ConvergenceSettings};
use super::moments::moment_monitor;
use super::svg::{line_chart, Scale, Series};
use crate::error::Error;
use crate::model::{default_scheme_constants, default_step_bound, preset, probe_monotonicity, ModelSpec, SdeModel};
use crate::pullback::{contraction_gap, periodicity_series, pullback_solve};
use crate::scheme::{integrate, Admissibility, SchemeConfig, SchemeKind};
use crate::wiener::{generate_window, GridSpec, DEFAULT_MEMORY_BUDGET};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOW_UP: i32 = 3;
pub const EXIT_NOT_CONVERGED: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "rps",
    version,
    about = "Projected Euler experiments for random periodic solutions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one path and write trajectory.csv.
    Simulate(CommonArgs),
    /// Pull-back from increasing depths until consecutive depths agree.
    Pullback(CommonArgs),
    /// Mean-square gap between two initial values on shared noise.
    Contract(CommonArgs),
    /// Compare a solution with its Wiener-shifted counterpart.
    Periodicity(CommonArgs),
    /// Coupled mean-square convergence experiment and rate fit.
    Converge(CommonArgs),
    /// Monte Carlo second moment along a long run.
    Moments(CommonArgs),
    /// Probe assumption constants and report scheme constants.
    CheckModel(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named model preset (overrides the config's model).
    #[arg(long)]
    preset: Option<String>,
    /// JSON file holding an inline model (overrides the config's model).
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Step size.
    #[arg(long)]
    h: Option<f64>,
    /// projected-euler or euler-maruyama.
    #[arg(long)]
    scheme: Option<String>,
    /// strict, warn or off.
    #[arg(long)]
    admissibility: Option<String>,
    /// Monte Carlo paths.
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    shift_periods: Option<i64>,
    /// Initial value (comma separated for d > 1).
    #[arg(long, allow_hyphen_values = true)]
    xi: Option<String>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Treat pull-back non-convergence as a failure.
    #[arg(long)]
    strict: bool,
    /// Also write SVG plots.
    #[arg(long)]
    plot: bool,
}

/// Model given by preset name or inline.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Preset { preset: String },
    Inline(Box<ModelSpec>),
}

/// Experiment parameters; every field is optional and defaults depend on the subcommand.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    pub t0: Option<f64>,
    pub t_end: Option<f64>,
    pub steps: Option<usize>,
    pub xi: Option<Vec<f64>>,
    pub eta: Option<Vec<f64>>,
    pub paths: Option<usize>,
    pub stream: Option<u64>,
    pub window: Option<(f64, f64)>,
    pub k_max: Option<usize>,
    pub tol: Option<f64>,
    pub strict: Option<bool>,
    pub observe: Option<(f64, f64)>,
    pub shift_periods: Option<i64>,
    pub ref_levels: Option<u32>,
    pub test_exponents: Option<Vec<u32>>,
    pub radius: Option<f64>,
    pub samples: Option<usize>,
    pub dump_path: Option<bool>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SchemeSection {
    pub h: Option<f64>,
    pub kind: Option<SchemeKind>,
    pub admissibility: Option<Admissibility>,
}

/// Top-level JSON config read by every subcommand.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Option<ModelRef>,
    #[serde(default)]
    pub scheme: SchemeSection,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
    #[serde(default)]
    pub experiment: ExperimentParams,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Core(Error),
    NotConverged(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
            CliError::Core(e) => match e {
                Error::InvalidInput(_) | Error::Admissibility { .. } | Error::Json(_) | Error::OutOfRange { .. } => {
                    EXIT_CONFIG
                }
                Error::BlowUp { .. } => EXIT_BLOW_UP,
                Error::Resource { .. } | Error::Io(_) => EXIT_IO,
            },
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Config(m) | CliError::NotConverged(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

/// Fully resolved inputs shared by all subcommands.
struct Resolved {
    model: SdeModel,
    scheme: SchemeConfig,
    seed: u64,
    out: PathBuf,
    plot: bool,
    exp: ExperimentParams,
    strict: bool,
}

fn resolve(args: &CommonArgs, default_h: f64) -> CliResult<Resolved> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(name) = &args.preset {
        cfg.model = Some(ModelRef::Preset { preset: name.clone() });
    }
    if let Some(path) = &args.model {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read model {}: {e}", path.display())))?;
        let spec = ModelSpec::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.model = Some(ModelRef::Inline(Box::new(spec)));
    }
    let model = match cfg.model.take() {
        Some(ModelRef::Preset { preset: name }) => preset(&name),
        Some(ModelRef::Inline(spec)) => spec.build(),
        None => Err(Error::invalid(
            "no model given: use --preset, --model or a config with a \"model\" entry",
        )),
    }
    .map_err(|e| CliError::Config(e.to_string()))?;

    let kind = match args.scheme.as_deref() {
        Some(s) => parse_enum::<SchemeKind>(s, "scheme")?,
        None => cfg.scheme.kind.unwrap_or_default(),
    };
    let admissibility = match args.admissibility.as_deref() {
        Some(s) => parse_enum::<Admissibility>(s, "admissibility")?,
        None => cfg.scheme.admissibility.unwrap_or_default(),
    };
    let scheme = SchemeConfig {
        h: args.h.or(cfg.scheme.h).unwrap_or(default_h),
        kind,
        admissibility,
    };
    scheme.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let mut exp = cfg.experiment;
    if let Some(p) = args.paths {
        exp.paths = Some(p);
    }
    if let Some(n) = args.shift_periods {
        exp.shift_periods = Some(n);
    }
    if let Some(k) = args.k_max {
        exp.k_max = Some(k);
    }
    if let Some(t) = args.tol {
        exp.tol = Some(t);
    }
    if let Some(xi) = &args.xi {
        let v: std::result::Result<Vec<f64>, _> = xi.split(',').map(|s| s.trim().parse::<f64>()).collect();
        exp.xi = Some(v.map_err(|e| CliError::Config(format!("invalid --xi '{xi}': {e}")))?);
    }
    let strict = args.strict || exp.strict.unwrap_or(false);
    Ok(Resolved {
        model,
        scheme,
        seed: args.seed.or(cfg.seed).unwrap_or(0),
        out: args.out.clone().or(cfg.out).unwrap_or_else(|| PathBuf::from(".")),
        plot: args.plot || cfg.plot,
        exp,
        strict,
    })
}

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str, what: &str) -> CliResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| CliError::Config(format!("invalid {what} '{s}'")))
}

impl Resolved {
    fn state(&self, v: Option<&Vec<f64>>, default: f64) -> CliResult<Vec<f64>> {
        let d = self.model.dim();
        match v {
            Some(v) if v.len() == d => Ok(v.clone()),
            Some(v) if v.len() == 1 => Ok(vec![v[0]; d]),
            Some(v) => Err(CliError::Config(format!(
                "initial value has {} components, model dim is {d}",
                v.len()
            ))),
            None => Ok(vec![default; d]),
        }
    }

    fn preset_name(&self) -> &str {
        self.model.name()
    }

    fn out_file(&self, name: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }

    fn write_svg(&self, name: &str, svg: String) -> CliResult<()> {
        if self.plot {
            fs::write(self.out_file(name)?, svg)?;
        }
        Ok(())
    }
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn dispatch(command: Command) -> CliResult<String> {
    match command {
        Command::Simulate(a) => simulate(resolve(&a, 0.01)?),
        Command::Pullback(a) => pullback(resolve(&a, 0.01)?),
        Command::Contract(a) => contract(resolve(&a, 0.01)?),
        Command::Periodicity(a) => periodicity(resolve(&a, 0.01)?),
        Command::Converge(a) => converge(resolve(&a, 0.01)?),
        Command::Moments(a) => moments(resolve(&a, 0.05)?),
        Command::CheckModel(a) => check_model(resolve(&a, 0.01)?),
    }
}

fn simulate(r: Resolved) -> CliResult<String> {
    let t0 = r.exp.t0.unwrap_or(-10.0);
    let t_end = r.exp.t_end.unwrap_or(10.0);
    let xi = r.state(r.exp.xi.as_ref(), 0.3)?;
    let steps = match r.exp.steps {
        Some(s) => s,
        None => steps_between(t0, t_end, r.scheme.h)?,
    };
    let grid = GridSpec::with_step(t0, r.scheme.h, steps)?;
    let stream = r.exp.stream.unwrap_or(0);
    let path = generate_window(grid, r.model.noise_dim(), r.seed, stream, 0, 0, DEFAULT_MEMORY_BUDGET)?;
    if r.exp.dump_path.unwrap_or(false) {
        path.write_dump(create(&r.out_file("path.bin")?)?)?;
    }
    let tr = integrate(&r.model, &r.scheme, &path, t0, steps, &xi)?;
    tr.write_csv(create(&r.out_file("trajectory.csv")?)?)?;
    let pts = tr.states.iter().enumerate().map(|(j, x)| (tr.time(j), x[0])).collect();
    r.write_svg(
        "trajectory.svg",
        line_chart(r.preset_name(), "t", "x_1", Scale::Linear, &[Series::new("x_1", pts)]),
    )?;
    Ok(format!(
        "simulate: {} steps of h = {} from t = {t0}; terminal x_1 = {:.6e}",
        steps,
        r.scheme.h,
        tr.terminal()[0]
    ))
}

fn steps_between(t0: f64, t_end: f64, h: f64) -> CliResult<usize> {
    let x = (t_end - t0) / h;
    let n = x.round();
    if n < 0.0 || (x - n).abs() > 1e-9 * n.max(1.0) {
        return Err(CliError::Config(format!(
            "interval [{t0}, {t_end}] is not a whole number of steps h = {h}"
        )));
    }
    Ok(n as usize)
}

fn pullback(r: Resolved) -> CliResult<String> {
    let xi = r.state(r.exp.xi.as_ref(), 0.3)?;
    let window = r.exp.window.unwrap_or((-1.0, 0.0));
    let k_max = r.exp.k_max.unwrap_or(20);
    let tol = r.exp.tol.unwrap_or(1e-3);
    let res = pullback_solve(
        &r.model,
        &r.scheme,
        r.seed,
        r.exp.stream.unwrap_or(0),
        &xi,
        window,
        k_max,
        tol,
    )?;
    res.write_csv(create(&r.out_file("pullback.csv")?)?)?;
    {
        use std::io::Write;
        let mut w = create(&r.out_file("pullback_window.csv")?)?;
        let d = r.model.dim();
        let header: Vec<String> = std::iter::once("t".into())
            .chain((1..=d).map(|i| format!("x_{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in res.window_times.iter().zip(res.deepest()) {
            let row: Vec<String> = std::iter::once(*t)
                .chain(x.iter().copied())
                .map(crate::scheme::fmt17)
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
    }
    let pts = res
        .cauchy_gaps
        .iter()
        .enumerate()
        .map(|(i, g)| ((i + 2) as f64, *g))
        .collect();
    r.write_svg(
        "pullback.svg",
        line_chart("Cauchy gaps", "k", "sup gap", Scale::Linear, &[Series::new("gap", pts)]),
    )?;
    let last = res.cauchy_gaps.last().copied().unwrap_or(f64::NAN);
    let summary = format!(
        "pullback: converged = {}, k_used = {}, last gap = {last:.3e}, tol = {tol:.1e}",
        res.converged, res.k_used
    );
    if r.strict && !res.converged {
        return Err(CliError::NotConverged(summary));
    }
    Ok(summary)
}

fn contract(r: Resolved) -> CliResult<String> {
    let t0 = r.exp.t0.unwrap_or(-10.0);
    let t_end = r.exp.t_end.unwrap_or(0.0);
    let xi = r.state(r.exp.xi.as_ref(), 0.8)?;
    let eta = r.state(r.exp.eta.as_ref(), -0.5)?;
    let m = r.exp.paths.unwrap_or(100);
    let streams: Vec<u64> = (0..m as u64).collect();
    let series = contraction_gap(&r.model, &r.scheme, r.seed, &streams, &xi, &eta, t0, t_end)?;
    series.write_csv(create(&r.out_file("gap.csv")?)?)?;
    let pts = series
        .times
        .iter()
        .copied()
        .zip(series.gaps_sq.iter().copied())
        .collect();
    r.write_svg(
        "gap.svg",
        line_chart(
            "mean-square gap",
            "t",
            "E|X - Y|^2",
            Scale::Linear,
            &[Series::new("gap", pts)],
        ),
    )?;
    Ok(format!(
        "contract: M = {m}, terminal mean-square gap = {:.3e} (sem {:.1e})",
        series.gaps_sq.last().unwrap(),
        series.sem.last().unwrap()
    ))
}

/// `(t0, xi, observe)` defaults of the periodicity experiment per preset.
fn periodicity_defaults(name: &str) -> (f64, f64, (f64, f64)) {
    match name {
        "example2-additive" => (-5.0, 0.5, (10.0, 13.0)),
        _ => (-10.0, 0.3, (2.0, 6.0)),
    }
}

fn periodicity(r: Resolved) -> CliResult<String> {
    let (t0_d, xi_d, obs_d) = periodicity_defaults(r.preset_name());
    let t0 = r.exp.t0.unwrap_or(t0_d);
    let xi = r.state(r.exp.xi.as_ref(), xi_d)?;
    let observe = r.exp.observe.unwrap_or(obs_d);
    let n = r.exp.shift_periods.unwrap_or(1);
    let rep = periodicity_series(
        &r.model,
        &r.scheme,
        r.seed,
        r.exp.stream.unwrap_or(0),
        &xi,
        t0,
        observe,
        n,
    )?;
    rep.as_gap_series().write_csv(create(&r.out_file("gap.csv")?)?)?;
    let pts = rep
        .times
        .iter()
        .copied()
        .zip(rep.gaps_sq.iter().map(|g| g.sqrt()))
        .collect();
    r.write_svg(
        "periodicity.svg",
        line_chart(
            "shift gap",
            "t",
            "gap",
            Scale::Linear,
            &[Series::new("|X(t-D,w) - X(t,shifted w)|", pts)],
        ),
    )?;
    Ok(format!(
        "periodicity: shift D = {}, window [{}, {}], sup gap = {:.6e}",
        rep.shift,
        observe.0 + rep.shift,
        observe.1 + rep.shift,
        rep.sup_gap
    ))
}

/// `(t0, t_end, xi)` defaults of the convergence experiment per preset.
fn convergence_defaults(name: &str) -> (f64, f64, f64) {
    match name {
        "example2-additive" => (-5.0, 15.0, 0.5),
        _ => (-10.0, 10.0, 0.3),
    }
}

fn converge(r: Resolved) -> CliResult<String> {
    let (t0_d, t_end_d, xi_d) = convergence_defaults(r.preset_name());
    let settings = ConvergenceSettings {
        t0: r.exp.t0.unwrap_or(t0_d),
        t_end: r.exp.t_end.unwrap_or(t_end_d),
        ref_levels: r.exp.ref_levels.unwrap_or(14),
        test_exponents: r.exp.test_exponents.clone().unwrap_or_else(|| (8..=11).collect()),
        m_paths: r.exp.paths.unwrap_or(200),
        seed: r.seed,
        xi: r.state(r.exp.xi.as_ref(), xi_d)?,
        kind: r.scheme.kind,
        admissibility: r.scheme.admissibility,
    };
    let report = mse_convergence(&r.model, &settings)?;
    report.write_csv(create(&r.out_file("convergence.csv")?)?)?;
    let rate = match report.fit {
        Some(f) => format!(
            "kappa {}\nlog_c {}\nresidual {}\nm_paths {}\nref_h {}\n",
            f.kappa, f.log_c, f.residual, report.m_paths, report.ref_h
        ),
        None => format!("kappa nan\nm_paths {}\nref_h {}\n", report.m_paths, report.ref_h),
    };
    fs::write(r.out_file("rate.txt")?, rate)?;
    let rms: Vec<(f64, f64)> = report.points.iter().map(|p| (p.h, p.rms())).collect();
    let mut series = vec![Series::new("rms error", rms.clone())];
    if let Some(&(h0, e0)) = rms.first() {
        let reference = rms.iter().map(|&(h, _)| (h, e0 * (h / h0))).collect();
        series.push(Series::new("slope 1", reference));
    }
    r.write_svg(
        "convergence.svg",
        line_chart(r.preset_name(), "h", "e_h", Scale::LogLog, &series),
    )?;
    Ok(match report.fit {
        Some(f) => format!(
            "converge: M = {}, kappa = {:.4}, residual = {:.4}",
            report.m_paths, f.kappa, f.residual
        ),
        None => format!("converge: M = {}, rate undefined (zero error)", report.m_paths),
    })
}

fn moments(r: Resolved) -> CliResult<String> {
    let t0 = r.exp.t0.unwrap_or(0.0);
    let steps = r.exp.steps.unwrap_or(10_000);
    let m = r.exp.paths.unwrap_or(100);
    let xi = r.state(r.exp.xi.as_ref(), 0.3)?;
    let trace = moment_monitor(&r.model, &r.scheme, t0, steps, m, r.seed, &xi)?;
    trace.write_csv(create(&r.out_file("moments.csv")?)?)?;
    let pts = trace.times.iter().copied().zip(trace.mean_sq.iter().copied()).collect();
    r.write_svg(
        "moments.svg",
        line_chart(
            "second moment",
            "t",
            "E|X|^2",
            Scale::Linear,
            &[Series::new("E|X|^2", pts)],
        ),
    )?;
    Ok(format!(
        "moments: M = {m}, {steps} steps, max E|X|^2 = {:.6e}",
        trace.max_over_run
    ))
}

#[derive(Serialize)]
struct ModelCheck<'a> {
    model: &'a str,
    alpha1: f64,
    probe_radius: f64,
    probe_samples: usize,
    probe_value: f64,
    monotonicity_holds_on_region: bool,
    periodicity_defect: f64,
    l1: f64,
    l2: f64,
    alpha2: f64,
    c0: f64,
    admissible_step: f64,
}

fn check_model(r: Resolved) -> CliResult<String> {
    let radius = r.exp.radius.unwrap_or(2.0);
    let samples = r.exp.samples.unwrap_or(100_000);
    let probe = probe_monotonicity(&r.model, radius, samples, r.seed)?;
    let defect = r.model.periodicity_defect(radius, 1000, r.seed);
    let consts = default_scheme_constants(&r.model)?;
    let bound = default_step_bound(&r.model)?;
    let check = ModelCheck {
        model: r.model.name(),
        alpha1: r.model.alpha1(),
        probe_radius: radius,
        probe_samples: samples,
        probe_value: probe,
        monotonicity_holds_on_region: probe <= r.model.alpha1(),
        periodicity_defect: defect,
        l1: consts.l1,
        l2: consts.l2,
        alpha2: consts.alpha2,
        c0: consts.c0,
        admissible_step: bound,
    };
    fs::write(
        r.out_file("check.json")?,
        serde_json::to_string_pretty(&check).map_err(Error::from)?,
    )?;
    Ok(format!(
        "check-model: {}: probe = {probe:.4} vs alpha1 = {} ({}), periodicity defect = {defect:e}, admissible h <= {bound:.3e}",
        r.model.name(),
        r.model.alpha1(),
        if check.monotonicity_holds_on_region { "holds on region" } else { "VIOLATED on region" },
    ))
}

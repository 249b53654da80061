//! Command-line front end: seeded, reproducible experiment runs driven by a
//! JSON configuration, with CSV results, SVG plots, and a run manifest
//! written into an output directory.
//!
//! Exit codes: `0` clean, `1` flagged science (a result row carries a
//! non-convergence / non-attainment flag) or a runtime failure, `2`
//! configuration errors (bad flags, missing or malformed config).
//!
//! Plots are rendered from the tables that were written to CSV — plotting
//! never recomputes science.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::fpp::{
    estimate_time_constant, lyapunov_fpp_scaling, ScalingOptions, TimeConstantOptions, WeightMode,
};
use crate::lyapunov::{estimate_alpha, EstimateOptions, Route};
use crate::montecarlo::{empirical_ldp_curve, LdpOptions};
use crate::rate::{rate_point, EstimateSource};
use crate::report::{Plot, RunManifest, Series, Table, Value};
use crate::scenery::{EnvironmentSpec, ScaleFamily};
use crate::validation::{validate, Level};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "quenched",
    version,
    about = "Numerical laboratory for quenched large deviations of random walks with random holding times"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the crossing exponent over a ladder of tilts.
    Lyapunov(RunArgs),
    /// Legendre-transform rate function over a range of speeds.
    Rate(RunArgs),
    /// First-passage time constant of the induced weight field.
    Fpp(RunArgs),
    /// Scaled crossing exponents against the first-passage constant.
    Scaling(RunArgs),
    /// Empirical large-deviation rates from simulated walks.
    #[command(name = "ldp-curve")]
    LdpCurve(RunArgs),
    /// Run the named invariant suites and report pass/fail per check.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// JSON configuration file (see README for the schema).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV, SVG, and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the task pool (default: all cores). Results are
    /// identical at any degree.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Numerical tolerance for solves and the Legendre maximization.
    #[arg(long)]
    tol: Option<f64>,
    /// Tilt values: comma list or start:stop:step (lyapunov, scaling).
    #[arg(long)]
    lambdas: Option<String>,
    /// Speeds: comma list or start:stop:step (rate, ldp-curve).
    #[arg(long)]
    speeds: Option<String>,
    /// Lattice direction, comma-separated integers.
    #[arg(long)]
    direction: Option<String>,
    /// Distance schedule, comma-separated integers.
    #[arg(long)]
    schedule: Option<String>,
    /// Independent environment replicas.
    #[arg(long)]
    replicas: Option<u32>,
    /// Walk samples (ldp-curve).
    #[arg(long)]
    samples: Option<u64>,
    /// Time horizon t (ldp-curve).
    #[arg(long)]
    horizon: Option<f64>,
    /// Upper end of the tilt search (rate).
    #[arg(long)]
    lambda_max: Option<f64>,
    /// Weight field for fpp: theta, mean, or sampled.
    #[arg(long)]
    mode: Option<String>,
    /// Crossing route: auto, point-target, or plane-target.
    #[arg(long)]
    route: Option<String>,
    /// Also evaluate the rate function at each speed (ldp-curve).
    #[arg(long)]
    with_theory: bool,
}

#[derive(Args, Debug, Clone)]
struct ValidateArgs {
    /// Desk-scale suite (< 1 min); the default.
    #[arg(long, conflicts_with = "full")]
    quick: bool,
    /// Adds the two-dimensional asymptote and full-size sample checks.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    parallelism: Option<usize>,
}

/// JSON configuration. Every field except `environment` is optional and can
/// also be supplied (or overridden) on the command line.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub environment: EnvironmentSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub direction: Option<Vec<i64>>,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub speeds: Option<Vec<f64>>,
    #[serde(default)]
    pub lambda_max: Option<f64>,
    #[serde(default)]
    pub schedule: Option<Vec<u32>>,
    #[serde(default)]
    pub replicas: Option<u32>,
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub route: Option<String>,
    #[serde(default)]
    pub theory: Option<bool>,
    #[serde(default)]
    pub margin: Option<i64>,
}

/// Entry point for the binary: parse real process arguments.
pub fn main() -> i32 {
    run_from(std::env::args_os())
}

/// Testable entry point: run the CLI on an explicit argument list and
/// return the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(flagged) => {
            if flagged {
                eprintln!("completed with flagged results (see the flag columns); exit 1");
                1
            } else {
                0
            }
        }
        Err(Error::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            1
        }
    }
}

fn config_err<S: Into<String>>(msg: S) -> Error {
    Error::Config(msg.into())
}

fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Lyapunov(args) => with_pool(args.parallelism, || run_lyapunov(&args)),
        Command::Rate(args) => with_pool(args.parallelism, || run_rate(&args)),
        Command::Fpp(args) => with_pool(args.parallelism, || run_fpp(&args)),
        Command::Scaling(args) => with_pool(args.parallelism, || run_scaling(&args)),
        Command::LdpCurve(args) => with_pool(args.parallelism, || run_ldp_curve(&args)),
        Command::Validate(args) => with_pool(args.parallelism, || run_validate(&args)),
    }
}

/// Run `f` inside a dedicated pool of the requested size, or on the default
/// pool when no degree was asked for. Scoped pools keep repeated in-process
/// runs (tests) independent.
fn with_pool<T: Send>(parallelism: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match parallelism {
        None => f(),
        Some(0) => Err(config_err("--parallelism must be at least 1")),
        Some(p) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(p)
                .build()
                .map_err(|e| config_err(format!("cannot build a {p}-thread pool: {e}")))?;
            pool.install(f)
        }
    }
}

// ---------------------------------------------------------------------
// Configuration loading and list parsing
// ---------------------------------------------------------------------

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| {
        config_err(format!("cannot read config file {}: {e}", path.display()))
    })?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
        // serde_json errors carry line/column diagnostics.
        config_err(format!("in {}: {e}", path.display()))
    })?;
    config
        .environment
        .validate()
        .map_err(|e| config_err(format!("in {}: {e}", path.display())))?;
    Ok(config)
}

/// Parse a float list given either as `a,b,c` or as an inclusive range
/// `start:stop:step`.
fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.len() {
        1 => s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| config_err(format!("{what}: cannot parse `{p}` as a number")))
            })
            .collect(),
        3 => {
            let nums: Vec<f64> = parts
                .iter()
                .map(|p| {
                    p.trim().parse::<f64>().map_err(|_| {
                        config_err(format!("{what}: cannot parse `{p}` in start:stop:step"))
                    })
                })
                .collect::<Result<_>>()?;
            let (start, stop, step) = (nums[0], nums[1], nums[2]);
            if step == 0.0 || !step.is_finite() {
                return Err(config_err(format!("{what}: step must be finite and nonzero")));
            }
            if (stop - start) * step < 0.0 {
                return Err(config_err(format!(
                    "{what}: step direction does not reach stop from start"
                )));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(config_err(format!(
            "{what}: expected a comma list or start:stop:step, got `{s}`"
        ))),
    }
}

fn parse_int_list<N: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<N>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<N>()
                .map_err(|_| config_err(format!("{what}: cannot parse `{p}` as an integer")))
        })
        .collect()
}

fn parse_route(s: &str) -> Result<Route> {
    match s {
        "auto" => Ok(Route::Auto),
        "point-target" | "point" => Ok(Route::PointTarget),
        "plane-target" | "plane" => Ok(Route::PlaneTarget),
        other => Err(config_err(format!(
            "route must be auto, point-target, or plane-target; got `{other}`"
        ))),
    }
}

fn parse_mode(s: &str) -> Result<WeightMode> {
    match s {
        "theta" => Ok(WeightMode::Theta),
        "mean" => Ok(WeightMode::Mean),
        "sampled" => Ok(WeightMode::Sampled),
        other => Err(config_err(format!(
            "mode must be theta, mean, or sampled; got `{other}`"
        ))),
    }
}

/// Everything a science run needs, after merging config and flags.
struct Effective {
    spec: EnvironmentSpec,
    seed: u64,
    tol: f64,
    direction: Vec<i64>,
    lambdas: Vec<f64>,
    speeds: Vec<f64>,
    lambda_max: f64,
    schedule: Option<Vec<u32>>,
    replicas: Option<u32>,
    samples: u64,
    horizon: f64,
    mode: WeightMode,
    route: Route,
    theory: bool,
    margin: Option<i64>,
    out: PathBuf,
}

impl Effective {
    fn assemble(args: &RunArgs, default_lambdas: &[f64], default_speeds: &[f64]) -> Result<Self> {
        let config = load_config(&args.config)?;
        let spec = config.environment.clone();
        let direction = match (&args.direction, &config.direction) {
            (Some(s), _) => parse_int_list::<i64>(s, "--direction")?,
            (None, Some(d)) => d.clone(),
            (None, None) => {
                let mut e1 = vec![0i64; spec.dimension];
                e1[0] = 1;
                e1
            }
        };
        if direction.len() != spec.dimension {
            return Err(config_err(format!(
                "direction {:?} has {} coordinates but the environment is {}-dimensional",
                direction,
                direction.len(),
                spec.dimension
            )));
        }
        let lambdas = match (&args.lambdas, &config.lambdas) {
            (Some(s), _) => parse_f64_list(s, "--lambdas")?,
            (None, Some(v)) => v.clone(),
            (None, None) => default_lambdas.to_vec(),
        };
        let speeds = match (&args.speeds, &config.speeds) {
            (Some(s), _) => parse_f64_list(s, "--speeds")?,
            (None, Some(v)) => v.clone(),
            (None, None) => default_speeds.to_vec(),
        };
        let schedule = match (&args.schedule, &config.schedule) {
            (Some(s), _) => Some(parse_int_list::<u32>(s, "--schedule")?),
            (None, Some(v)) => Some(v.clone()),
            (None, None) => None,
        };
        let mode = match (&args.mode, &config.mode) {
            (Some(s), _) => parse_mode(s)?,
            (None, Some(s)) => parse_mode(s)?,
            (None, None) => WeightMode::Theta,
        };
        let route = match (&args.route, &config.route) {
            (Some(s), _) => parse_route(s)?,
            (None, Some(s)) => parse_route(s)?,
            (None, None) => Route::Auto,
        };
        Ok(Effective {
            spec,
            seed: args.seed.or(config.seed).unwrap_or(1),
            tol: args.tol.or(config.tol).unwrap_or(1e-8),
            direction,
            lambdas,
            speeds,
            lambda_max: args.lambda_max.or(config.lambda_max).unwrap_or(50.0),
            schedule,
            replicas: args.replicas.or(config.replicas),
            samples: args.samples.or(config.samples).unwrap_or(100_000),
            horizon: args.horizon.or(config.horizon).unwrap_or(40.0),
            mode,
            route,
            theory: args.with_theory || config.theory.unwrap_or(false),
            margin: config.margin,
            out: args.out.clone(),
        })
    }

    fn estimate_options(&self) -> EstimateOptions {
        let mut opts = EstimateOptions::default();
        if let Some(s) = &self.schedule {
            opts.schedule = s.clone();
        }
        if let Some(r) = self.replicas {
            opts.replicas = r;
        }
        opts.route = self.route;
        opts.adaptive.tol_abs = opts.adaptive.tol_abs.min(self.tol);
        opts.adaptive.tol_rel = opts.adaptive.tol_rel.min(self.tol);
        opts.oracle.tol = opts.oracle.tol.min(self.tol);
        opts
    }

    fn time_constant_options(&self) -> TimeConstantOptions {
        let mut opts = TimeConstantOptions::default();
        if let Some(s) = &self.schedule {
            opts.schedule = s.clone();
        }
        if let Some(r) = self.replicas {
            opts.replicas = r;
        }
        opts.mode = self.mode;
        opts.margin = self.margin;
        opts
    }

    /// The full configuration echo stored in the manifest: enough to re-run
    /// this exact experiment.
    fn echo(&self, command: &str) -> serde_json::Value {
        serde_json::json!({
            "command": command,
            "environment": self.spec,
            "seed": self.seed,
            "tol": self.tol,
            "direction": self.direction,
            "lambdas": self.lambdas,
            "speeds": self.speeds,
            "lambda_max": self.lambda_max,
            "schedule": self.schedule,
            "replicas": self.replicas,
            "samples": self.samples,
            "horizon": self.horizon,
            "mode": format!("{:?}", self.mode).to_lowercase(),
            "route": match self.route {
                Route::Auto => "auto",
                Route::PointTarget => "point-target",
                Route::PlaneTarget => "plane-target",
            },
            "theory": self.theory,
            "margin": self.margin,
        })
    }
}

// ---------------------------------------------------------------------
// Output directory plumbing
// ---------------------------------------------------------------------

struct OutDir {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutDir {
    fn create(dir: &Path, command: &str, config: serde_json::Value, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| {
            config_err(format!("cannot create output directory {}: {e}", dir.display()))
        })?;
        Ok(OutDir { dir: dir.to_path_buf(), manifest: RunManifest::start(command, config, seed) })
    }

    fn write_table(&mut self, name: &str, table: &Table) -> Result<()> {
        let digest = table.write_csv(&self.dir.join(name))?;
        self.manifest.record(name, digest);
        Ok(())
    }

    fn write_plot(&mut self, name: &str, plot: &Plot) -> Result<()> {
        let digest = plot.write_svg(&self.dir.join(name))?;
        self.manifest.record(name, digest);
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finish()?;
        self.manifest.write(&self.dir.join("manifest.json"))
    }
}

/// Build a plot from columns of an already-rendered table, so plots never
/// recompute science. Non-finite values break the polyline.
fn plot_from_table(
    table: &Table,
    title: &str,
    x_col: &str,
    y_cols: &[&str],
    y_label: &str,
) -> Result<Plot> {
    let col_index = |name: &str| -> Result<usize> {
        table
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no column named {name}")))
    };
    let as_f64 = |v: &Value| -> f64 {
        match v {
            Value::Float(x) => *x,
            Value::Int(x) => *x as f64,
            Value::UInt(x) => *x as f64,
            Value::Bool(b) => u8::from(*b) as f64,
            Value::Text(_) => f64::NAN,
        }
    };
    let xi = col_index(x_col)?;
    let mut series = Vec::new();
    for name in y_cols {
        let yi = col_index(name)?;
        let points: Vec<(f64, f64)> =
            table.rows.iter().map(|r| (as_f64(&r[xi]), as_f64(&r[yi]))).collect();
        series.push(Series { name: (*name).to_string(), points });
    }
    Ok(Plot {
        title: title.to_string(),
        x_label: x_col.to_string(),
        y_label: y_label.to_string(),
        series,
    })
}

// ---------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------

fn run_lyapunov(args: &RunArgs) -> Result<bool> {
    let eff = Effective::assemble(args, &[0.25, 0.5, 1.0, 2.0, 4.0], &[])?;
    let opts = eff.estimate_options();
    let mut out = OutDir::create(&eff.out, "lyapunov", eff.echo("lyapunov"), eff.seed)?;

    let mut summary = Table::new(vec![
        "lambda",
        "alpha",
        "alpha_se",
        "argmin_n",
        "sandwich_lower",
        "sandwich_upper",
        "flagged",
    ]);
    let mut samples = Table::new(vec!["lambda", "n", "replica", "value", "flagged"]);
    let mut flagged = false;
    for &lambda in &eff.lambdas {
        let est = estimate_alpha(&eff.spec, &eff.direction, lambda, eff.seed, &opts)?;
        flagged |= est.flagged;
        summary.push(vec![
            Value::Float(lambda),
            Value::Float(est.alpha),
            Value::Float(est.alpha_se),
            Value::UInt(u64::from(est.argmin_n)),
            Value::Float(est.sandwich.lower),
            Value::Float(est.sandwich.upper),
            Value::Bool(est.flagged),
        ])?;
        for s in &est.samples {
            samples.push(vec![
                Value::Float(lambda),
                Value::UInt(u64::from(s.n)),
                Value::UInt(u64::from(s.replica)),
                Value::Float(s.value),
                Value::Bool(s.flagged),
            ])?;
        }
    }
    out.write_table("lyapunov.csv", &summary)?;
    out.write_table("lyapunov_samples.csv", &samples)?;
    let plot = plot_from_table(
        &summary,
        "Crossing exponent per unit distance",
        "lambda",
        &["alpha", "sandwich_lower", "sandwich_upper"],
        "alpha",
    )?;
    out.write_plot("lyapunov.svg", &plot)?;
    out.finish()?;
    Ok(flagged)
}

fn run_rate(args: &RunArgs) -> Result<bool> {
    let default_speeds: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let eff = Effective::assemble(args, &[], &default_speeds)?;
    let opts = eff.estimate_options();
    let mut out = OutDir::create(&eff.out, "rate", eff.echo("rate"), eff.seed)?;

    let source = EstimateSource::new(eff.spec.clone(), eff.direction.clone(), eff.seed, opts)?;
    let mut table = Table::new(vec![
        "speed",
        "rate",
        "interval_low",
        "interval_high",
        "lambda_star",
        "attained",
        "evaluations",
        "flagged",
    ]);
    let mut flagged = false;
    for &v in &eff.speeds {
        let point = rate_point(&source, v, eff.lambda_max, eff.tol)?;
        // A supremum that ran into lambda_max is a lower bound, not the
        // rate: treat it as a flagged row for the exit code.
        flagged |= point.flagged || !point.attained;
        table.push(vec![
            Value::Float(point.speed),
            Value::Float(point.value),
            Value::Float(point.interval.0),
            Value::Float(point.interval.1),
            Value::Float(point.lambda_star),
            Value::Bool(point.attained),
            Value::UInt(u64::from(point.evaluations)),
            Value::Bool(point.flagged),
        ])?;
    }
    out.write_table("rate.csv", &table)?;
    let plot = plot_from_table(
        &table,
        "Large-deviation rate function",
        "speed",
        &["rate"],
        "I(v)",
    )?;
    out.write_plot("rate.svg", &plot)?;
    out.finish()?;
    Ok(flagged)
}

fn run_fpp(args: &RunArgs) -> Result<bool> {
    let eff = Effective::assemble(args, &[], &[])?;
    let opts = eff.time_constant_options();
    let mut out = OutDir::create(&eff.out, "fpp", eff.echo("fpp"), eff.seed)?;

    let est = estimate_time_constant(&eff.spec, &eff.direction, eff.seed, &opts)?;
    let mut samples = Table::new(vec!["n", "replica", "value", "touched_boundary"]);
    for s in &est.samples {
        samples.push(vec![
            Value::UInt(u64::from(s.n)),
            Value::UInt(u64::from(s.replica)),
            Value::Float(s.value),
            Value::Bool(s.boundary),
        ])?;
    }
    let mut by_n = Table::new(vec!["n", "mean_value"]);
    for (n, mean) in est.means_by_n() {
        by_n.push(vec![Value::UInt(u64::from(n)), Value::Float(mean)])?;
    }
    let mut summary = Table::new(vec!["direction", "mode", "nu", "spread", "flagged"]);
    summary.push(vec![
        Value::Text(format!("{:?}", est.direction)),
        Value::Text(format!("{:?}", est.mode).to_lowercase()),
        Value::Float(est.nu),
        Value::Float(est.spread),
        Value::Bool(est.flagged),
    ])?;
    out.write_table("fpp_samples.csv", &samples)?;
    out.write_table("fpp_by_n.csv", &by_n)?;
    out.write_table("fpp.csv", &summary)?;
    let plot = plot_from_table(
        &by_n,
        "Passage time per unit distance",
        "n",
        &["mean_value"],
        "T(0, n x) / n",
    )?;
    out.write_plot("fpp.svg", &plot)?;
    out.finish()?;
    Ok(est.flagged)
}

fn run_scaling(args: &RunArgs) -> Result<bool> {
    let eff = Effective::assemble(args, &[5.0, 10.0, 20.0, 50.0], &[])?;
    let opts = ScalingOptions {
        alpha: eff.estimate_options(),
        time_constant: eff.time_constant_options(),
    };
    let mut out = OutDir::create(&eff.out, "scaling", eff.echo("scaling"), eff.seed)?;

    let table = lyapunov_fpp_scaling(&eff.spec, &eff.direction, &eff.lambdas, eff.tol, eff.seed, &opts)?;
    let mut rows = Table::new(vec!["lambda", "ratio", "ratio_se", "flagged"]);
    for r in &table.rows {
        rows.push(vec![
            Value::Float(r.lambda),
            Value::Float(r.ratio),
            Value::Float(r.ratio_se),
            Value::Bool(r.flagged),
        ])?;
    }
    let scale_name = match table.scale {
        ScaleFamily::Linear => "linear".to_string(),
        ScaleFamily::Log => "log".to_string(),
        ScaleFamily::Power { exponent } => format!("power({exponent})"),
    };
    let mut summary = Table::new(vec!["direction", "scale", "nu_theta", "nu_spread", "flagged"]);
    summary.push(vec![
        Value::Text(format!("{:?}", table.direction)),
        Value::Text(scale_name),
        Value::Float(table.nu_theta),
        Value::Float(table.nu_spread),
        Value::Bool(table.flagged),
    ])?;
    out.write_table("scaling.csv", &rows)?;
    out.write_table("scaling_summary.csv", &summary)?;
    let plot = plot_from_table(
        &rows,
        "Scaled exponent over the percolation constant",
        "lambda",
        &["ratio"],
        "alpha / (L nu)",
    )?;
    out.write_plot("scaling.svg", &plot)?;
    out.finish()?;
    Ok(table.flagged)
}

fn run_ldp_curve(args: &RunArgs) -> Result<bool> {
    let eff = Effective::assemble(args, &[], &[0.25, 0.5, 0.75, 1.0])?;
    let mut out = OutDir::create(&eff.out, "ldp-curve", eff.echo("ldp-curve"), eff.seed)?;

    // Optional theory overlay: the Legendre-transform rate at each speed,
    // computed once per speed from the crossing exponent.
    let source = if eff.theory {
        Some(EstimateSource::new(
            eff.spec.clone(),
            eff.direction.clone(),
            eff.seed,
            eff.estimate_options(),
        )?)
    } else {
        None
    };
    let theory_fn = source.as_ref().map(|s| {
        let lambda_max = eff.lambda_max;
        let tol = eff.tol;
        move |v: f64| -> Result<f64> { Ok(rate_point(s, v, lambda_max, tol)?.value) }
    });
    let theory_dyn: Option<&dyn Fn(f64) -> Result<f64>> =
        theory_fn.as_ref().map(|f| f as &dyn Fn(f64) -> Result<f64>);

    let curve = empirical_ldp_curve(
        &eff.spec,
        &eff.direction,
        &eff.speeds,
        eff.horizon,
        eff.samples,
        eff.seed,
        theory_dyn,
        &LdpOptions::default(),
    )?;
    let mut table = Table::new(vec![
        "speed",
        "hits",
        "probability",
        "empirical_rate",
        "rate_lower_bound",
        "zero_hits",
        "theory",
        "flagged",
    ]);
    for p in &curve.points {
        table.push(vec![
            Value::Float(p.speed),
            Value::UInt(p.hits),
            Value::Float(p.probability),
            Value::Float(p.empirical_rate),
            Value::Float(p.rate_lower_bound),
            Value::Bool(p.zero_hits),
            Value::Float(p.theory.unwrap_or(f64::NAN)),
            Value::Bool(p.flagged),
        ])?;
    }
    out.write_table("ldp.csv", &table)?;
    let y_cols: &[&str] =
        if eff.theory { &["empirical_rate", "theory"] } else { &["empirical_rate"] };
    let plot = plot_from_table(
        &table,
        "Empirical large-deviation rates",
        "speed",
        y_cols,
        "-log P / t",
    )?;
    out.write_plot("ldp.svg", &plot)?;
    out.finish()?;
    Ok(curve.flagged)
}

fn run_validate(args: &ValidateArgs) -> Result<bool> {
    let level = if args.full { Level::Full } else { Level::Quick };
    let echo = serde_json::json!({
        "command": "validate",
        "level": if args.full { "full" } else { "quick" },
        "seed": args.seed,
    });
    let mut out = OutDir::create(&args.out, "validate", echo, args.seed)?;
    let report = validate(level, args.seed);
    for c in &report.checks {
        println!(
            "{} {} ({:.2}s): {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.seconds,
            c.measured
        );
    }
    out.write_table("validation.csv", &report.table())?;
    out.finish()?;
    if let Some(first) = report.first_failure() {
        eprintln!("validation failed at `{}`: {}", first.name, first.measured);
    }
    Ok(!report.passed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::sha256_hex;

    fn write_file(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn srw1d_config(dir: &Path) -> PathBuf {
        write_file(
            dir,
            "srw1d.json",
            r#"{
              "environment": {
                "dimension": 1,
                "kernels": [ { "weight": 1.0, "probabilities": [0.5, 0.5] } ],
                "laws": [ { "weight": 1.0, "family": "deterministic", "value": 1.0 } ]
              },
              "seed": 7
            }"#,
        )
    }

    fn arg(s: &str) -> String {
        s.to_string()
    }

    #[test]
    fn missing_config_file_exits_two() {
        let code = run_from([
            arg("quenched"),
            arg("lyapunov"),
            arg("--config"),
            arg("/nonexistent/nowhere.json"),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn malformed_and_unknown_field_configs_exit_two() {
        let tmp = tempfile::tempdir().unwrap();
        let bad_json = write_file(tmp.path(), "bad.json", "{ not json");
        let code = run_from([
            arg("quenched"),
            arg("lyapunov"),
            arg("--config"),
            arg(bad_json.to_str().unwrap()),
        ]);
        assert_eq!(code, 2);

        let unknown = write_file(
            tmp.path(),
            "unknown.json",
            r#"{ "environment": { "dimension": 1,
                 "kernels": [ { "weight": 1.0, "probabilities": [0.5, 0.5] } ],
                 "laws": [ { "weight": 1.0, "family": "deterministic", "value": 1.0 } ] },
                 "no_such_field": 3 }"#,
        );
        let code = run_from([
            arg("quenched"),
            arg("lyapunov"),
            arg("--config"),
            arg(unknown.to_str().unwrap()),
        ]);
        assert_eq!(code, 2);

        // An unknown flag is a usage error, also exit 2.
        let ok_config = srw1d_config(tmp.path());
        let code = run_from([
            arg("quenched"),
            arg("lyapunov"),
            arg("--config"),
            arg(ok_config.to_str().unwrap()),
            arg("--frobnicate"),
        ]);
        assert_eq!(code, 2);
    }

    #[test]
    fn lyapunov_writes_csv_svg_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let config = srw1d_config(tmp.path());
        let out = tmp.path().join("run");
        let code = run_from([
            arg("quenched"),
            arg("lyapunov"),
            arg("--config"),
            arg(config.to_str().unwrap()),
            arg("--lambdas"),
            arg("0.5,1"),
            arg("--schedule"),
            arg("8,16"),
            arg("--replicas"),
            arg("1"),
            arg("--out"),
            arg(out.to_str().unwrap()),
        ]);
        assert_eq!(code, 0);

        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], "lyapunov");
        assert_eq!(manifest["seed"], 7);
        // Recorded digests match the files on disk.
        for name in ["lyapunov.csv", "lyapunov_samples.csv", "lyapunov.svg"] {
            let bytes = fs::read(out.join(name)).unwrap();
            assert_eq!(
                manifest["outputs"][name].as_str().unwrap(),
                sha256_hex(&bytes),
                "digest mismatch for {name}"
            );
        }
        // The summary carries the closed-form value at lambda = 1.
        let csv = fs::read_to_string(out.join("lyapunov.csv")).unwrap();
        let row = csv.lines().nth(2).unwrap();
        let alpha: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((alpha - 1.657_455).abs() < 1e-5, "alpha(1) = {alpha}");
    }

    #[test]
    fn rate_range_syntax_yields_nine_rows() {
        let tmp = tempfile::tempdir().unwrap();
        let config = srw1d_config(tmp.path());
        let out = tmp.path().join("run");
        let code = run_from([
            arg("quenched"),
            arg("rate"),
            arg("--config"),
            arg(config.to_str().unwrap()),
            arg("--speeds"),
            arg("0.1:0.9:0.1"),
            arg("--schedule"),
            arg("8,16"),
            arg("--tol"),
            arg("1e-6"),
            arg("--out"),
            arg(out.to_str().unwrap()),
        ]);
        assert_eq!(code, 0);
        let csv = fs::read_to_string(out.join("rate.csv")).unwrap();
        assert_eq!(csv.lines().count(), 10, "header plus nine speeds:\n{csv}");
        // I(0.5) for the symmetric unit-holding walk.
        let row = csv.lines().nth(5).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0].parse::<f64>().unwrap(), 0.5);
        let rate: f64 = fields[1].parse().unwrap();
        assert!((rate - 0.130_812).abs() < 2e-4, "I(0.5) = {rate}");
    }

    #[test]
    fn impossible_speeds_flag_and_exit_one() {
        let tmp = tempfile::tempdir().unwrap();
        let config = srw1d_config(tmp.path());
        let out = tmp.path().join("run");
        let code = run_from([
            arg("quenched"),
            arg("rate"),
            arg("--config"),
            arg(config.to_str().unwrap()),
            arg("--speeds"),
            arg("1.5"),
            arg("--schedule"),
            arg("8,16"),
            arg("--lambda-max"),
            arg("8"),
            arg("--out"),
            arg(out.to_str().unwrap()),
        ]);
        assert_eq!(code, 1);
        let csv = fs::read_to_string(out.join("rate.csv")).unwrap();
        let row = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[5], "false", "attained must be false: {row}");
    }

    #[test]
    fn ldp_runs_identically_at_any_parallelism() {
        let tmp = tempfile::tempdir().unwrap();
        let config = srw1d_config(tmp.path());
        let digest_at = |threads: &str, dir: &str| -> String {
            let out = tmp.path().join(dir);
            let code = run_from([
                arg("quenched"),
                arg("ldp-curve"),
                arg("--config"),
                arg(config.to_str().unwrap()),
                arg("--speeds"),
                arg("0.5"),
                arg("--horizon"),
                arg("20"),
                arg("--samples"),
                arg("20000"),
                arg("--parallelism"),
                arg(threads),
                arg("--out"),
                arg(out.to_str().unwrap()),
            ]);
            assert_eq!(code, 0);
            let manifest: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap())
                    .unwrap();
            manifest["outputs"]["ldp.csv"].as_str().unwrap().to_string()
        };
        assert_eq!(digest_at("1", "p1"), digest_at("8", "p8"));
    }

    #[test]
    fn fpp_and_scaling_write_their_artifacts() {
        let tmp = tempfile::tempdir().unwrap();
        let config = srw1d_config(tmp.path());
        let out = tmp.path().join("fpp");
        let code = run_from([
            arg("quenched"),
            arg("fpp"),
            arg("--config"),
            arg(config.to_str().unwrap()),
            arg("--schedule"),
            arg("4,8"),
            arg("--replicas"),
            arg("2"),
            arg("--out"),
            arg(out.to_str().unwrap()),
        ]);
        assert_eq!(code, 0);
        for name in ["fpp.csv", "fpp_samples.csv", "fpp_by_n.csv", "fpp.svg", "manifest.json"] {
            assert!(out.join(name).exists(), "missing {name}");
        }
        // Unit deterministic holding: the weight field is constant 1, so
        // nu = 1 exactly.
        let csv = fs::read_to_string(out.join("fpp.csv")).unwrap();
        assert!(csv.lines().nth(1).unwrap().contains(",1,"), "{csv}");

        let out = tmp.path().join("scaling");
        let code = run_from([
            arg("quenched"),
            arg("scaling"),
            arg("--config"),
            arg(config.to_str().unwrap()),
            arg("--lambdas"),
            arg("5,50"),
            arg("--schedule"),
            arg("8,16"),
            arg("--replicas"),
            arg("1"),
            arg("--out"),
            arg(out.to_str().unwrap()),
        ]);
        assert_eq!(code, 0);
        let csv = fs::read_to_string(out.join("scaling.csv")).unwrap();
        let last = csv.lines().nth(2).unwrap();
        let ratio: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert!((ratio - 1.013_863).abs() < 1e-3, "ratio(50) = {ratio}");
    }

    #[test]
    fn validate_quick_writes_the_report_and_exits_zero() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("v");
        let code = run_from([
            arg("quenched"),
            arg("validate"),
            arg("--quick"),
            arg("--seed"),
            arg("2026"),
            arg("--out"),
            arg(out.to_str().unwrap()),
        ]);
        assert_eq!(code, 0);
        let csv = fs::read_to_string(out.join("validation.csv")).unwrap();
        assert!(csv.starts_with("check,passed,measured,seconds"));
        assert!(csv.contains("crossing-closed-form-1d,true"));
    }

    #[test]
    fn range_parsing_handles_lists_ranges_and_rejects_garbage() {
        assert_eq!(parse_f64_list("1,2,3", "x").unwrap(), vec![1.0, 2.0, 3.0]);
        let r = parse_f64_list("0.1:0.9:0.1", "x").unwrap();
        assert_eq!(r.len(), 9);
        assert!((r[8] - 0.9).abs() < 1e-12);
        let single = parse_f64_list("2.5", "x").unwrap();
        assert_eq!(single, vec![2.5]);
        assert!(parse_f64_list("1:2", "x").is_err());
        assert!(parse_f64_list("1:2:0", "x").is_err());
        assert!(parse_f64_list("2:1:0.5", "x").is_err());
        assert!(parse_f64_list("a,b", "x").is_err());
        assert!(parse_int_list::<i64>("1,zz", "x").is_err());
    }
}

//! Named invariant suites: each check re-derives one property of the
//! library against an independent oracle and reports a measured value, so a
//! run produces a machine-readable pass/fail table rather than a bare exit
//! code.  The quick level is desk-scale (well under a minute); the full
//! level adds the expensive two-dimensional asymptote and the large sample
//! sizes.

use std::time::Instant;

use crate::crossing::{solve_crossing, SolveOptions, Target};
use crate::fpp::{
    estimate_time_constant, lyapunov_fpp_scaling, passage_time, passage_time_bruteforce,
    ScalingOptions, TimeConstantOptions, WeightField, WeightMode,
};
use crate::lattice::LatticeBox;
use crate::lyapunov::{estimate_alpha, sandwich_bounds, EstimateOptions, Route};
use crate::montecarlo::{
    empirical_ldp_curve, estimate_crossing_mc, tilted_hitting_sampler, LdpOptions, TiltedOptions,
};
use crate::oracle1d::{exact_a_1d, Oracle1dOptions};
use crate::rate::{large_x_asymptote, power_scale_closed_form, small_x_asymptote};
use crate::report::{sha256_hex, Table, Value};
use crate::rng::{stream, CounterRng};
use crate::scenery::{
    sample_environment, EnvironmentSpec, HoldingLaw, TransitionKernel, WeightedKernel, WeightedLaw,
};
use crate::Result;

/// Validation depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// The measured quantity the verdict rests on, human readable.
    pub measured: String,
    pub seconds: f64,
}

/// The full validation run.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub level: Level,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<&CheckResult> {
        self.checks.iter().find(|c| !c.passed)
    }

    /// Render as a (name, passed, measured, seconds) table.
    pub fn table(&self) -> Table {
        let mut t = Table::new(vec!["check", "passed", "measured", "seconds"]);
        for c in &self.checks {
            t.push(vec![
                Value::Text(c.name.to_string()),
                Value::Bool(c.passed),
                Value::Text(c.measured.clone()),
                Value::Float((c.seconds * 1000.0).round() / 1000.0),
            ])
            .expect("fixed width");
        }
        t
    }
}

type Check = fn(u64, Level) -> Result<(bool, String)>;

/// Run the named invariant suite at the given level.  Check failures are
/// reported in the result table — only infrastructure errors surface as
/// `Err` inside a check, and they are folded into a failed entry.
pub fn validate(level: Level, seed: u64) -> ValidationReport {
    let registry: Vec<(&'static str, Level, Check)> = vec![
        ("crossing-closed-form-1d", Level::Quick, check_closed_form_1d),
        ("crossing-unit-step-chaining-1d", Level::Quick, check_unit_step_chaining),
        ("crossing-triangle-2d", Level::Quick, check_triangle_2d),
        ("lyapunov-sandwich-bounds", Level::Quick, check_sandwich_bounds),
        ("fpp-bruteforce-oracle", Level::Quick, check_fpp_bruteforce),
        ("fpp-constant-weight-exactness", Level::Quick, check_fpp_constant),
        ("fpp-scaling-bridge", Level::Quick, check_fpp_scaling),
        ("fpp-geodesics-beat-the-line", Level::Full, check_fpp_exponential),
        ("mc-crossing-solver-coverage", Level::Quick, check_mc_coverage),
        ("mc-holding-stream-correlations", Level::Quick, check_holding_correlations),
        ("mc-determinism-across-parallelism", Level::Quick, check_parallel_determinism),
        ("mc-tilted-concentration", Level::Quick, check_tilted_concentration),
        ("ldp-binomial-tail", Level::Quick, check_ldp_binomial),
        ("rate-small-speed-1d", Level::Quick, check_small_speed_1d),
        ("rate-small-speed-2d", Level::Full, check_small_speed_2d),
        ("rate-large-speed-spots", Level::Quick, check_large_speed_spots),
        ("manifest-tamper-detection", Level::Quick, check_manifest_tamper),
    ];

    let mut checks = Vec::new();
    for (name, min_level, f) in registry {
        if min_level == Level::Full && level == Level::Quick {
            continue;
        }
        let start = Instant::now();
        let (passed, measured) = match f(seed, level) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        checks.push(CheckResult { name, passed, measured, seconds: start.elapsed().as_secs_f64() });
    }
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { level, seed, checks, passed }
}

fn srw1d_unit() -> EnvironmentSpec {
    EnvironmentSpec::homogeneous(
        TransitionKernel::one_dim(0.5).unwrap(),
        HoldingLaw::Deterministic { value: 1.0 },
    )
}

fn random1d() -> EnvironmentSpec {
    EnvironmentSpec {
        dimension: 1,
        kernels: vec![
            WeightedKernel { weight: 1.0, probabilities: vec![0.3, 0.7] },
            WeightedKernel { weight: 1.0, probabilities: vec![0.6, 0.4] },
        ],
        laws: vec![
            WeightedLaw { weight: 1.0, law: HoldingLaw::Exponential { rate: 1.0 } },
            WeightedLaw { weight: 1.0, law: HoldingLaw::Gamma { shape: 2.0, scale: 0.5 } },
        ],
    }
}

/// Solver and recursion against `arccosh(e^lambda)` for the symmetric walk
/// with unit holding times.
fn check_closed_form_1d(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = srw1d_unit();
    let mut worst = 0.0f64;
    for lambda in [0.1f64, 1.0, 10.0] {
        let exact = (lambda.exp() + (lambda.exp().powi(2) - 1.0).sqrt()).ln();
        let est = estimate_alpha(
            &spec,
            &[1],
            lambda,
            seed,
            &EstimateOptions { schedule: vec![16, 32], replicas: 1, ..Default::default() },
        )?;
        worst = worst.max((est.alpha - exact).abs());
    }
    Ok((worst < 1e-6, format!("max |alpha - arccosh(e^lambda)| = {worst:.3e}")))
}

/// In one dimension the crossing cost chains exactly: `a(0, n)` equals the
/// sum of the unit-step costs.
fn check_unit_step_chaining(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = random1d();
    let opts = Oracle1dOptions::default();
    let mut worst = 0.0f64;
    for inst in 0..10u64 {
        let env_seed = CounterRng::derive_seed(seed, stream::REPLICA, 100 + inst);
        let bbox = LatticeBox::new(vec![-400], vec![400])?;
        let env = sample_environment(&spec, &bbox, env_seed)?;
        let n = 8i64;
        let whole = exact_a_1d(&env, 0, n, 1.0, &opts)?;
        let mut chained = 0.0;
        for k in 0..n {
            chained += exact_a_1d(&env, k, k + 1, 1.0, &opts)?.a;
        }
        worst = worst.max((whole.a - chained).abs());
    }
    Ok((worst < 1e-8, format!("max |a(0,n) - sum of unit steps| = {worst:.3e}")))
}

/// Crossing costs concatenate in two dimensions: `a(x,y) <= a(x,z) + a(z,y)`
/// up to solver tolerance.
fn check_triangle_2d(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = EnvironmentSpec {
        dimension: 2,
        kernels: vec![
            WeightedKernel { weight: 1.0, probabilities: vec![0.25; 4] },
            WeightedKernel { weight: 1.0, probabilities: vec![0.4, 0.1, 0.3, 0.2] },
        ],
        laws: vec![WeightedLaw { weight: 1.0, law: HoldingLaw::Exponential { rate: 1.0 } }],
    };
    let bbox = LatticeBox::new(vec![-6, -6], vec![6, 6])?;
    let solve = SolveOptions::default();
    let (x, y, z) = (vec![-3i64, 0], vec![3i64, 1], vec![0i64, -2]);
    let mut worst = f64::NEG_INFINITY;
    for inst in 0..5u64 {
        let env = sample_environment(&spec, &bbox, CounterRng::derive_seed(seed, stream::REPLICA, inst))?;
        let to_y = solve_crossing(&env, &x, &Target::site(y.clone()), 1.0, &solve)?;
        let to_z = solve_crossing(&env, &x, &Target::site(z.clone()), 1.0, &solve)?;
        let a_xy = to_y.a_at(&x).unwrap();
        let a_zy = to_y.a_at(&z).unwrap();
        let a_xz = to_z.a_at(&x).unwrap();
        worst = worst.max(a_xy - (a_xz + a_zy));
    }
    Ok((worst <= 1e-7, format!("max triangle excess a(x,y) - a(x,z) - a(z,y) = {worst:.3e}")))
}

/// The estimated exponent sits inside the per-lambda sandwich bounds.
fn check_sandwich_bounds(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = EnvironmentSpec::homogeneous(
        TransitionKernel::one_dim(0.5).unwrap(),
        HoldingLaw::Exponential { rate: 1.0 },
    );
    let mut notes = Vec::new();
    let mut ok = true;
    for lambda in [0.5, 1.0, 2.0] {
        let bounds = sandwich_bounds(&spec, lambda)?;
        let est = estimate_alpha(
            &spec,
            &[1],
            lambda,
            seed,
            &EstimateOptions { schedule: vec![16, 32], replicas: 2, ..Default::default() },
        )?;
        ok &= est.alpha >= bounds.lower - 1e-9 && est.alpha <= bounds.upper + 1e-9;
        notes.push(format!("lambda {lambda}: {:.6} in [{:.6}, {:.6}]", est.alpha, bounds.lower, bounds.upper));
    }
    Ok((ok, notes.join("; ")))
}

/// Shortest-path passage times equal the exhaustive search bit for bit.
fn check_fpp_bruteforce(seed: u64, level: Level) -> Result<(bool, String)> {
    let fields = if level == Level::Full { 100 } else { 20 };
    let bbox = LatticeBox::new(vec![0, 0], vec![3, 3])?;
    let mut mismatches = 0u32;
    for inst in 0..fields {
        let wseed = CounterRng::derive_seed(seed, stream::WEIGHT, inst);
        let weights: Vec<f64> = (0..bbox.len())
            .map(|i| {
                let site = bbox.site_at(i);
                0.05 + CounterRng::for_site(wseed, stream::WEIGHT, &site).uniform()
            })
            .collect();
        let field = WeightField::from_values(bbox.clone(), weights)?;
        let fast = passage_time(&field, &[0, 0], &[3, 3])?;
        let slow = passage_time_bruteforce(&field, &[0, 0], &[3, 3], 15)?;
        if !slow.exhaustive || fast.value != slow.value {
            mismatches += 1;
        }
    }
    Ok((mismatches == 0, format!("{mismatches} mismatches over {fields} seeded 4x4 fields")))
}

/// Constant weights give the exact straight-line time constant at every
/// scheduled distance.
fn check_fpp_constant(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = EnvironmentSpec::homogeneous(
        TransitionKernel::uniform(2),
        HoldingLaw::Deterministic { value: 0.75 },
    );
    let opts = TimeConstantOptions {
        schedule: vec![2, 4, 8],
        replicas: 4,
        mode: WeightMode::Theta,
        margin: None,
    };
    let est = estimate_time_constant(&spec, &[1, 1], seed, &opts)?;
    let exact = est.means_by_n().iter().all(|&(_, m)| m == 1.5) && est.nu == 1.5 && !est.flagged;
    Ok((exact, format!("nu = {} (want exactly 1.5 at every n)", est.nu)))
}

/// The scaled exponent decreases toward the time constant through the
/// prescribed tilts and matches the log-corrected value at the top.
fn check_fpp_scaling(seed: u64, _: Level) -> Result<(bool, String)> {
    let opts = ScalingOptions {
        alpha: EstimateOptions { schedule: vec![16, 32], replicas: 1, ..Default::default() },
        time_constant: TimeConstantOptions {
            schedule: vec![4, 8],
            replicas: 2,
            ..Default::default()
        },
    };
    let table = lyapunov_fpp_scaling(&srw1d_unit(), &[1], &[5.0, 20.0, 50.0], 1e-10, seed, &opts)?;
    let decreasing = table.rows.windows(2).all(|w| w[0].ratio > w[1].ratio);
    let top = table.rows[2].ratio;
    let spot = (top - 1.013_863).abs();
    let ok = decreasing && spot < 1e-3 && table.nu_theta == 1.0 && !table.flagged;
    Ok((
        ok,
        format!(
            "ratios {:.6}, {:.6}, {:.6}; |ratio(50) - 1.013863| = {spot:.2e}; nu = {}",
            table.rows[0].ratio, table.rows[1].ratio, top, table.nu_theta
        ),
    ))
}

/// Sampled mean-one exponential weights in two dimensions: geodesics beat
/// the straight line strictly, and doubling the direction is subadditive.
fn check_fpp_exponential(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = EnvironmentSpec::homogeneous(
        TransitionKernel::uniform(2),
        HoldingLaw::Exponential { rate: 1.0 },
    );
    let opts = TimeConstantOptions {
        schedule: vec![8, 16, 32],
        replicas: 16,
        mode: WeightMode::Sampled,
        margin: None,
    };
    let one = estimate_time_constant(&spec, &[1, 0], seed, &opts)?;
    let two = estimate_time_constant(&spec, &[2, 0], seed, &opts)?;
    let below = one.nu + 3.0 * one.spread < 1.0 && !one.flagged;
    let spread = one.spread.max(two.spread);
    let subadd = two.nu <= 2.0 * one.nu + 3.0 * spread;
    Ok((
        below && subadd,
        format!(
            "nu(e1) = {:.4} +- {:.4} (want < 1); nu(2 e1) = {:.4} <= 2 nu(e1) + 3 spread",
            one.nu, one.spread, two.nu
        ),
    ))
}

/// Monte Carlo crossing estimates cover the sweep solver's value: 99%
/// intervals on 20 seeded environments must cover at least 17 times.
fn check_mc_coverage(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = random1d();
    let bbox = LatticeBox::new(vec![-25], vec![25])?;
    let mut covered = 0;
    for inst in 0..20u64 {
        let env = sample_environment(&spec, &bbox, CounterRng::derive_seed(seed, stream::REPLICA, inst))?;
        let solved = solve_crossing(&env, &[0], &Target::site(vec![3]), 1.0, &SolveOptions::default())?;
        let mc = estimate_crossing_mc(&env, &[0], &[3], 1.0, 20_000, CounterRng::derive_seed(seed, stream::SAMPLE, inst))?;
        if (mc.estimate - solved.start_value()).abs() <= 2.576 * mc.std_error {
            covered += 1;
        }
    }
    Ok((covered >= 17, format!("99% CI covered the solver value {covered}/20 times")))
}

/// Holding-time streams behave as independent draws across (site, visit).
fn check_holding_correlations(seed: u64, _: Level) -> Result<(bool, String)> {
    let law = HoldingLaw::Exponential { rate: 1.0 };
    let (sites, visits) = (1000i64, 100u64);
    let n = sites as usize * visits as usize;
    let mut draws = Vec::with_capacity(n);
    for s in 0..sites {
        for v in 0..visits {
            let mut rng = CounterRng::for_site_counter(seed, stream::HOLD, &[s], v);
            draws.push(law.sample(&mut rng));
        }
    }
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    // 4.5 sigma over three lags: false alarms are negligible while a real
    // stream collision would show correlations orders of magnitude larger.
    let bound = 4.5 / (n as f64).sqrt();
    let mut worst = 0.0f64;
    for lag in [1usize, 7, visits as usize] {
        let mut cov = 0.0;
        for i in 0..n - lag {
            cov += (draws[i] - mean) * (draws[i + lag] - mean);
        }
        worst = worst.max((cov / (n - lag) as f64 / var).abs());
    }
    Ok((worst < bound, format!("max |lag correlation| = {worst:.5} (bound {bound:.5})")))
}

/// The same seed produces byte-identical results at different thread-pool
/// sizes.
fn check_parallel_determinism(seed: u64, _: Level) -> Result<(bool, String)> {
    let render = |threads: usize| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::InvalidArgument(format!("pool: {e}")))?;
        pool.install(|| -> Result<String> {
            let spec = srw1d_unit();
            let bbox = LatticeBox::new(vec![-30], vec![30])?;
            let env = sample_environment(&spec, &bbox, seed)?;
            let mc = estimate_crossing_mc(&env, &[0], &[2], 1.0, 30_000, seed)?;
            let curve = empirical_ldp_curve(
                &spec,
                &[1],
                &[0.0, 0.5],
                20.0,
                30_000,
                seed,
                None,
                &LdpOptions::default(),
            )?;
            let mut t = Table::new(vec!["what", "value"]);
            t.push(vec![Value::Text("mc".into()), Value::Float(mc.estimate)])?;
            t.push(vec![Value::Text("mc-se".into()), Value::Float(mc.std_error)])?;
            for p in &curve.points {
                t.push(vec![
                    Value::Text(format!("ldp-{}", p.speed)),
                    Value::Float(p.empirical_rate),
                ])?;
            }
            Ok(sha256_hex(t.to_csv().as_bytes()))
        })
    };
    let d1 = render(1)?;
    let d8 = render(8)?;
    Ok((d1 == d8, format!("digest(threads=1) {} digest(threads=8)", if d1 == d8 { "==" } else { "!=" })))
}

/// Importance-sampled hitting times concentrate at the exponent's slope
/// with a healthy effective sample size.
fn check_tilted_concentration(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = srw1d_unit();
    let bbox = LatticeBox::new(vec![-120], vec![120])?;
    let env = sample_environment(&spec, &bbox, seed)?;
    let set = tilted_hitting_sampler(&env, &[0], &[40], 1.0, 1500, seed, &TiltedOptions::default())?;
    let ok = set.ess >= 100.0 && (1.05..=1.10).contains(&set.mean_per_distance) && !set.flagged;
    Ok((
        ok,
        format!(
            "weighted mean H/40 = {:.6} (target 1.075412), ess = {:.0}",
            set.mean_per_distance, set.ess
        ),
    ))
}

/// Empirical rates at a finite horizon match the exact binomial tail and
/// sit within a quarter of the asymptotic rate function.
fn check_ldp_binomial(seed: u64, level: Level) -> Result<(bool, String)> {
    let samples = if level == Level::Full { 1_000_000 } else { 200_000 };
    let t = 40.0;
    let curve = empirical_ldp_curve(
        &srw1d_unit(),
        &[1],
        &[0.5],
        t,
        samples,
        seed,
        None,
        &LdpOptions::default(),
    )?;
    let mut tail = 0.0f64;
    for k in 30..=40u64 {
        let mut c = 1.0f64;
        for j in 0..k {
            c = c * (40 - j) as f64 / (j + 1) as f64;
        }
        tail += c;
    }
    tail /= (2.0f64).powi(40);
    let oracle = -tail.ln() / t;
    let rate = curve.points[0].empirical_rate;
    let i_half = 0.130_812_035_941_136_97;
    let ok = (rate - oracle).abs() <= 0.05 * oracle && (rate - i_half).abs() <= 0.25 * rate;
    Ok((
        ok,
        format!("empirical {rate:.6} vs binomial-tail {oracle:.6} and I(0.5) = {i_half:.6}"),
    ))
}

/// The rate function approaches the diffusive form at small speeds in one
/// dimension (tight band: the exact recursion drives the estimate).
fn check_small_speed_1d(seed: u64, _: Level) -> Result<(bool, String)> {
    let report = small_x_asymptote(
        &srw1d_unit(),
        0.05,
        seed,
        &EstimateOptions { schedule: vec![16, 32], replicas: 1, ..Default::default() },
    )?;
    let ratio = report.ratio.unwrap_or(f64::NAN);
    Ok((
        (0.99..=1.01).contains(&ratio) && !report.flagged,
        format!("I(0.05) / ((1/2) 0.05^2) = {ratio:.6} (exact 1.00043)"),
    ))
}

/// The same comparison in two dimensions with box-solver estimates; the
/// band is looser because every evaluation carries estimation noise.
fn check_small_speed_2d(seed: u64, _: Level) -> Result<(bool, String)> {
    let spec = EnvironmentSpec::homogeneous(
        TransitionKernel::uniform(2),
        HoldingLaw::Deterministic { value: 1.0 },
    );
    // Tolerances matched to the +-10% band: the diffusive tilt scale is
    // ~v^2, where absorption boxes grow like 1 / sqrt(lambda); solving to
    // 1e-4 instead of defaults keeps those boxes desk-sized.
    let mut opts = EstimateOptions {
        schedule: vec![8, 16],
        replicas: 1,
        route: Route::PlaneTarget,
        ..Default::default()
    };
    opts.adaptive.solve.tol = 1e-6;
    opts.adaptive.increment = 20;
    opts.adaptive.tol_abs = 1e-4;
    opts.adaptive.tol_rel = 1e-4;
    opts.adaptive.max_rounds = 12;
    let report = small_x_asymptote(&spec, 0.05, seed, &opts)?;
    let ratio = report.ratio.unwrap_or(f64::NAN);
    Ok((
        (0.9..=1.1).contains(&ratio) && !report.flagged,
        format!("I(0.05) / (0.05^2) = {ratio:.4} (band [0.9, 1.1])"),
    ))
}

/// Large-speed closed forms hit their spot values exactly, and impossible
/// speeds flag.
fn check_large_speed_spots(_: u64, _: Level) -> Result<(bool, String)> {
    use std::f64::consts::E;
    // Logarithmic scale at c = e^2 (gamma law with Theta = shape = 3, so
    // ell nu Theta lands on e^2): c (log c - 1) = e^2, with the Legendre
    // cross-evaluation available and unflagged.
    let log_spot = large_x_asymptote(&HoldingLaw::Gamma { shape: 3.0, scale: 2.0 }, 1.0, E * E / 3.0)?;
    let ok1 = (log_spot.closed_form - E * E).abs() < 1e-9
        && log_spot.computed.is_some()
        && !log_spot.flagged;
    // Far from the boundary (c = 1e4) the cross-evaluated supremum matches
    // the asymptote itself.
    let far = large_x_asymptote(&HoldingLaw::Exponential { rate: 1.0 }, 1.0, 1e4)?;
    let far_ratio = far.ratio.unwrap_or(f64::NAN);
    let ok2 = (far_ratio - 1.0).abs() < 1e-3;
    // Power scale gamma = 1 at c = 2: c^2 * (1/2)^1 / 2 = 1 exactly.
    let ok3 = power_scale_closed_form(1.0, 2.0) == 1.0;
    // Bounded-below holding times cannot move faster than 1 / Theta.
    let too_fast = large_x_asymptote(&HoldingLaw::Deterministic { value: 2.0 }, 1.0, 1.0)?;
    let ok4 = too_fast.closed_form.is_infinite();
    Ok((
        ok1 && ok2 && ok3 && ok4,
        format!(
            "log spot {:.9} (want e^2 = {:.9}), far ratio {far_ratio:.6}, power spot exact: {ok3}, impossible speed -> {}",
            log_spot.closed_form,
            E * E,
            too_fast.closed_form
        ),
    ))
}

/// A tampered output digest is detected by comparing recorded digests
/// against recomputed ones.
fn check_manifest_tamper(_: u64, _: Level) -> Result<(bool, String)> {
    let csv = "v,rate\n0.5,0.17\n";
    let honest = sha256_hex(csv.as_bytes());
    let mut manifest = crate::report::RunManifest::start("ldp-curve", serde_json::json!({}), 1);
    manifest.record("curve.csv", honest.clone());
    // A corrupted file (one byte flipped) no longer matches the record.
    let tampered = sha256_hex("v,rate\n0.5,0.18\n".as_bytes());
    let detected = manifest.outputs["curve.csv"] != tampered;
    let still_matches = manifest.outputs["curve.csv"] == honest;
    Ok((detected && still_matches, "digest mismatch detected on tampering".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_quick_suite_is_green() {
        let report = validate(Level::Quick, 2026);
        for c in &report.checks {
            eprintln!(
                "{} {} ({:.2}s): {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.seconds,
                c.measured
            );
        }
        assert!(report.passed, "first failure: {:?}", report.first_failure());
        assert!(report.first_failure().is_none());
        // Machine-readable rendering carries every check.
        let csv = report.table().to_csv();
        assert_eq!(csv.lines().count(), report.checks.len() + 1);
    }

    #[test]
    #[ignore = "runs the two-dimensional asymptote and full-size samples; invoke explicitly"]
    fn the_full_suite_is_green() {
        let report = validate(Level::Full, 2026);
        for c in &report.checks {
            eprintln!(
                "{} {} ({:.2}s): {}",
                if c.passed { "pass" } else { "FAIL" },
                c.name,
                c.seconds,
                c.measured
            );
        }
        assert!(report.passed, "first failure: {:?}", report.first_failure());
        assert!(report.checks.len() > validate_quick_count());
    }

    fn validate_quick_count() -> usize {
        // Quick-level registry size, kept in sync by the green-suite test.
        validate(Level::Quick, 1).checks.len()
    }

    #[test]
    fn failures_are_named_and_first_failure_is_reported() {
        let mk = |name: &'static str, passed: bool| CheckResult {
            name,
            passed,
            measured: String::new(),
            seconds: 0.0,
        };
        let report = ValidationReport {
            level: Level::Quick,
            seed: 7,
            checks: vec![mk("alpha", true), mk("beta", false), mk("gamma", false)],
            passed: false,
        };
        assert_eq!(report.first_failure().unwrap().name, "beta");
        let csv = report.table().to_csv();
        assert!(csv.contains("beta,false"));
    }
}

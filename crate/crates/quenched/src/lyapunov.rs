//! Lyapunov exponents: the deterministic limits `alpha_lambda(x) =
//! lim a_lambda(0, nx) / n`.
//!
//! Estimates run a schedule of distances `n` across independent environment
//! replicas. Crossing costs are subadditive, so the per-`n` replica means
//! decrease towards the limit and the minimum over the schedule is the point
//! estimate; it is biased high but consistent, and the per-replica doubling
//! differences `2 a(2n)/(2n) - a(n)/n` cancel the constant-order correction
//! when a sharper read is needed.
//!
//! Every estimate carries the deterministic sandwich
//!
//! ```text
//!     -log E[e^{-theta}] * |x|_1  <=  alpha_lambda(x)  <=
//!     ( max_e E[-log omega(0, e)] + E[theta] ) * |x|_1
//! ```
//!
//! which is checked by callers as a structural invariant, not fitted.

use crate::crossing::{adaptive_box, AdaptiveOptions, Target};
use crate::lattice::{l1_norm_int, nearest_lattice, LatticeBox, Site};
use crate::oracle1d::{exact_a_1d, Oracle1dOptions};
use crate::rng::{stream, CounterRng};
use crate::scenery::{sample_environment, EnvironmentSpec};
use crate::{Error, Result};
use rayon::prelude::*;
use std::collections::HashMap;

/// How to compute finite-`n` crossing costs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Exact recursion in one dimension, adaptive point-target solves above.
    Auto,
    /// Force adaptive point-target solves.
    PointTarget,
    /// Hit the hyperplane through `n x` instead of the point `n x`. Only
    /// valid for directions along a coordinate axis; the point-to-set cost
    /// reaches its limit with a smaller finite-size correction.
    PlaneTarget,
}

#[derive(Clone, Debug)]
pub struct EstimateOptions {
    /// Distances `n` at which `a(0, n x) / n` is sampled.
    pub schedule: Vec<u32>,
    /// Independent environment replicas per distance.
    pub replicas: u32,
    pub route: Route,
    pub adaptive: AdaptiveOptions,
    pub oracle: Oracle1dOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            schedule: vec![10, 20, 40, 80, 160],
            replicas: 16,
            route: Route::Auto,
            adaptive: AdaptiveOptions::default(),
            oracle: Oracle1dOptions::default(),
        }
    }
}

/// One finite-`n` crossing sample.
#[derive(Clone, Debug)]
pub struct SampleValue {
    pub n: u32,
    pub replica: u32,
    /// `a(0, n x) / n`.
    pub value: f64,
    pub flagged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct NMean {
    pub n: u32,
    pub mean: f64,
    pub std_error: f64,
}

/// Deterministic bounds per unit lattice distance.
#[derive(Clone, Copy, Debug)]
pub struct SandwichBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn sandwich_bounds(spec: &EnvironmentSpec, lambda: f64) -> Result<SandwichBounds> {
    spec.validate()?;
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    Ok(SandwichBounds {
        lower: spec.neg_log_mean_transform(lambda),
        upper: spec.max_mean_neg_log_kernel() + spec.mean_log_laplace(lambda),
    })
}

#[derive(Clone, Debug)]
pub struct LyapunovEstimate {
    pub direction: Site,
    pub lambda: f64,
    pub schedule: Vec<u32>,
    pub replicas: u32,
    pub samples: Vec<SampleValue>,
    pub n_means: Vec<NMean>,
    /// Minimum over the schedule of the per-`n` replica means.
    pub alpha: f64,
    pub alpha_se: f64,
    pub argmin_n: u32,
    /// Bounds scaled by `|direction|_1`.
    pub sandwich: SandwichBounds,
    pub flagged: bool,
}

impl LyapunovEstimate {
    /// Per-replica doubling differences `2 v(2n) - v(n)` for consecutive
    /// schedule pairs with `n -> 2n`; these cancel the constant-order bias of
    /// the plain means.
    pub fn doubling_differences(&self) -> Vec<NMean> {
        let mut out = Vec::new();
        for w in self.schedule.windows(2) {
            if w[1] != 2 * w[0] {
                continue;
            }
            let mut diffs = Vec::new();
            for r in 0..self.replicas {
                let v_n = self
                    .samples
                    .iter()
                    .find(|s| s.n == w[0] && s.replica == r)
                    .map(|s| s.value);
                let v_2n = self
                    .samples
                    .iter()
                    .find(|s| s.n == w[1] && s.replica == r)
                    .map(|s| s.value);
                if let (Some(a), Some(b)) = (v_n, v_2n) {
                    diffs.push(2.0 * b - a);
                }
            }
            if let Some(m) = mean_se(&diffs) {
                out.push(NMean { n: w[1], mean: m.0, std_error: m.1 });
            }
        }
        out
    }
}

fn mean_se(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

fn validate_direction(spec: &EnvironmentSpec, direction: &[i64]) -> Result<()> {
    if direction.len() != spec.dimension {
        return Err(Error::InvalidArgument(format!(
            "direction has {} coordinates, environment is {}-dimensional",
            direction.len(),
            spec.dimension
        )));
    }
    if direction.iter().all(|&c| c == 0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    Ok(())
}

/// The single nonzero axis of an axis-aligned direction, if any.
fn single_axis(direction: &[i64]) -> Option<usize> {
    let mut axis = None;
    for (j, &c) in direction.iter().enumerate() {
        if c != 0 {
            if axis.is_some() {
                return None;
            }
            axis = Some(j);
        }
    }
    axis
}

/// One finite-`n` crossing cost `a(0, n x)` on the replica environment keyed
/// by `env_seed`.
fn sample_cost(
    spec: &EnvironmentSpec,
    env_seed: u64,
    direction: &[i64],
    n: u32,
    lambda: f64,
    opts: &EstimateOptions,
) -> Result<(f64, bool)> {
    let d = spec.dimension;
    let y: Site = direction.iter().map(|&c| c * n as i64).collect();
    if d == 1 {
        // The recursion is exact and fast regardless of the requested route.
        let margin = opts.oracle.initial_depth.max(4);
        let lo = (-margin).min(y[0] - margin);
        let hi = margin.max(y[0] + margin);
        let bbox = LatticeBox::new(vec![lo], vec![hi])?;
        let env = sample_environment(spec, &bbox, env_seed)?;
        let out = exact_a_1d(&env, 0, y[0], lambda, &opts.oracle)?;
        return Ok((out.a, !out.converged));
    }
    let target = match opts.route {
        Route::PlaneTarget => {
            let axis = single_axis(direction).ok_or_else(|| {
                Error::InvalidArgument(
                    "plane-target estimates need a direction along a coordinate axis".into(),
                )
            })?;
            Target::Hyperplane { axis, level: y[axis] }
        }
        _ => Target::Sites(vec![y.clone()]),
    };
    let start = vec![0i64; d];
    let sol = adaptive_box(spec, env_seed, &start, &target, lambda, &opts.adaptive)?;
    Ok((sol.a, !sol.box_converged))
}

/// Estimate `alpha_lambda(direction)` from crossing costs over independent
/// environment replicas.
pub fn estimate_alpha(
    spec: &EnvironmentSpec,
    direction: &[i64],
    lambda: f64,
    seed: u64,
    opts: &EstimateOptions,
) -> Result<LyapunovEstimate> {
    spec.validate()?;
    validate_direction(spec, direction)?;
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    if opts.schedule.is_empty() || opts.replicas == 0 {
        return Err(Error::InvalidArgument("empty schedule or zero replicas".into()));
    }

    // One environment per replica, shared across the whole schedule: the
    // schedule probes the same infinite environment at growing distances.
    let tasks: Vec<(u32, u32)> = opts
        .schedule
        .iter()
        .flat_map(|&n| (0..opts.replicas).map(move |r| (n, r)))
        .collect();
    let results: Vec<Result<SampleValue>> = tasks
        .par_iter()
        .map(|&(n, r)| {
            let env_seed = CounterRng::derive_seed(seed, stream::REPLICA, r as u64);
            let (a, flagged) = sample_cost(spec, env_seed, direction, n, lambda, opts)?;
            Ok(SampleValue { n, replica: r, value: a / n as f64, flagged })
        })
        .collect();
    let mut samples = Vec::with_capacity(results.len());
    for r in results {
        samples.push(r?);
    }

    let mut n_means = Vec::new();
    for &n in &opts.schedule {
        let vals: Vec<f64> = samples
            .iter()
            .filter(|s| s.n == n && s.value.is_finite())
            .map(|s| s.value)
            .collect();
        if let Some((mean, se)) = mean_se(&vals) {
            n_means.push(NMean { n, mean, std_error: se });
        }
    }
    if n_means.is_empty() {
        return Err(Error::InvalidArgument(
            "no finite crossing costs; lambda or distances too large".into(),
        ));
    }
    let best = n_means
        .iter()
        .min_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap())
        .unwrap();
    let norm = l1_norm_int(direction) as f64;
    let raw = sandwich_bounds(spec, lambda)?;
    let flagged = samples.iter().any(|s| s.flagged || !s.value.is_finite());
    Ok(LyapunovEstimate {
        direction: direction.to_vec(),
        lambda,
        schedule: opts.schedule.clone(),
        replicas: opts.replicas,
        samples,
        alpha: best.mean,
        alpha_se: best.std_error,
        argmin_n: best.n,
        n_means,
        sandwich: SandwichBounds { lower: raw.lower * norm, upper: raw.upper * norm },
        flagged,
    })
}

/// One-sided difference quotients of `lambda -> alpha_lambda(direction)`.
#[derive(Clone, Debug)]
pub struct SlopeEstimate {
    pub lambda: f64,
    pub h: f64,
    pub alpha: f64,
    /// `(alpha(lambda) - alpha(lambda - h)) / h`.
    pub left: f64,
    /// `(alpha(lambda + h) - alpha(lambda)) / h`.
    pub right: f64,
    /// Replica noise is large against the step; the quotients are unreliable.
    pub noisy: bool,
}

/// Difference quotients with common random numbers: the same replica
/// environments are used at all three lambdas, so environment noise largely
/// cancels in the differences.
pub fn alpha_derivative(
    spec: &EnvironmentSpec,
    direction: &[i64],
    lambda: f64,
    h: f64,
    seed: u64,
    opts: &EstimateOptions,
) -> Result<SlopeEstimate> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    if lambda - h < 0.0 {
        return Err(Error::InvalidArgument(
            "left difference quotient needs lambda - h >= 0".into(),
        ));
    }
    let minus = estimate_alpha(spec, direction, lambda - h, seed, opts)?;
    let mid = estimate_alpha(spec, direction, lambda, seed, opts)?;
    let plus = estimate_alpha(spec, direction, lambda + h, seed, opts)?;
    let left = (mid.alpha - minus.alpha) / h;
    let right = (plus.alpha - mid.alpha) / h;
    let noise = 3.0 * (minus.alpha_se + mid.alpha_se + plus.alpha_se) / h;
    let scale = left.abs().min(right.abs()).max(1e-12);
    Ok(SlopeEstimate {
        lambda,
        h,
        alpha: mid.alpha,
        left,
        right,
        noisy: noise > scale || mid.flagged || minus.flagged || plus.flagged,
    })
}

/// Deviation of one quenched environment's crossing costs from the limiting
/// positively-homogeneous shape.
#[derive(Clone, Debug)]
pub struct ShapeResidual {
    pub point: Site,
    pub norm: i64,
    /// Quenched cost `a(0, point)` on the probe environment.
    pub cost: f64,
    /// `alpha` prediction scaled along the ray through the point.
    pub predicted: f64,
    /// `(cost - predicted) / |point|_1`; tends to zero along rays.
    pub residual: f64,
    pub flagged: bool,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Compare quenched costs on a single probe environment against the
/// estimated limit shape along each point's ray.
pub fn shape_residual(
    spec: &EnvironmentSpec,
    lambda: f64,
    points: &[Vec<f64>],
    seed: u64,
    opts: &EstimateOptions,
) -> Result<Vec<ShapeResidual>> {
    spec.validate()?;
    let probe_seed = CounterRng::derive_seed(seed, stream::SAMPLE, 0);
    let alpha_seed = CounterRng::derive_seed(seed, stream::SAMPLE, 1);
    let mut alpha_cache: HashMap<Site, LyapunovEstimate> = HashMap::new();
    let mut out = Vec::new();
    for p in points {
        let site = nearest_lattice(p);
        let norm = l1_norm_int(&site);
        if norm == 0 {
            out.push(ShapeResidual {
                point: site,
                norm: 0,
                cost: 0.0,
                predicted: 0.0,
                residual: 0.0,
                flagged: false,
            });
            continue;
        }
        let g = site.iter().fold(0i64, |acc, &c| gcd(acc, c));
        let prim: Site = site.iter().map(|&c| c / g).collect();
        if !alpha_cache.contains_key(&prim) {
            let est = estimate_alpha(spec, &prim, lambda, alpha_seed, opts)?;
            alpha_cache.insert(prim.clone(), est);
        }
        let est = &alpha_cache[&prim];
        let scale = norm as f64 / l1_norm_int(&prim) as f64;
        let predicted = est.alpha * scale;
        let (cost, cost_flagged) =
            sample_cost(spec, probe_seed, &prim, g as u32, lambda, opts)?;
        out.push(ShapeResidual {
            point: site,
            norm,
            cost,
            predicted,
            residual: (cost - predicted) / norm as f64,
            flagged: cost_flagged || est.flagged,
        });
    }
    Ok(out)
}

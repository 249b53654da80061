//! Site-weighted first-passage percolation on lattice boxes.
//!
//! A positive weight `xi(z)` sits on every site; a nearest-neighbor path pays
//! the weight of each site it *departs from*, so a path `r_0, ..., r_n` costs
//! `xi(r_0) + ... + xi(r_{n-1})` and the final site rides free.  The passage
//! time `T(x, y)` is the minimal cost over all paths from `x` to `y`, computed
//! by a label-setting shortest-path sweep.  Averaging `T(0, n x) / n` over
//! independent environments estimates the time constant `nu(x)`, and the
//! module closes the loop with the crossing exponent: for large tilt the
//! scaled exponent `alpha_lambda(x) / L(lambda)` approaches the time constant
//! of the field built from the per-site Tauberian constants.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::lattice::{l1_norm_int, LatticeBox, Site};
use crate::lyapunov::{estimate_alpha, EstimateOptions};
use crate::rng::{stream, CounterRng};
use crate::scenery::{sample_environment, EnvironmentBox, EnvironmentSpec, ScaleFamily};
use crate::{Error, Result};

/// Hard cap on the number of sites a single shortest-path solve may touch.
const MAX_SITES: usize = 1 << 27;

/// A box together with one strictly positive weight per site.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightField {
    bbox: LatticeBox,
    weights: Vec<f64>,
    /// Seed the sampled construction drew from; 0 for deterministic fields.
    seed: u64,
}

impl WeightField {
    /// Explicit weights in the box's flat-index order.
    pub fn from_values(bbox: LatticeBox, weights: Vec<f64>) -> Result<Self> {
        let n = bbox.checked_len(MAX_SITES)?;
        if weights.len() != n {
            return Err(Error::InvalidArgument(format!(
                "weight vector length {} does not match box size {}",
                weights.len(),
                n
            )));
        }
        for &w in &weights {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "weights must be strictly positive and finite, got {w}"
                )));
            }
        }
        Ok(WeightField { bbox, weights, seed: 0 })
    }

    /// The same weight on every site.
    pub fn constant(bbox: LatticeBox, value: f64) -> Result<Self> {
        let n = bbox.checked_len(MAX_SITES)?;
        WeightField::from_values(bbox, vec![value; n])
    }

    /// `xi(z)` = Tauberian constant of the holding law at `z`.
    pub fn theta(env: &EnvironmentBox) -> Result<Self> {
        let spec = env
            .spec()
            .ok_or_else(|| Error::InvalidArgument("environment carries no spec".into()))?;
        // Mixed growth scales would make the per-law constants incomparable.
        spec.common_scale()?;
        let thetas = spec.theta_constants();
        let n = env.bbox().checked_len(MAX_SITES)?;
        let weights: Vec<f64> = (0..n).map(|i| thetas[env.law_index_by_flat(i)]).collect();
        WeightField::from_values(env.bbox().clone(), weights).map(|mut f| {
            f.seed = env.seed();
            f
        })
    }

    /// `xi(z)` = mean holding time at `z`.
    pub fn mean(env: &EnvironmentBox) -> Result<Self> {
        let n = env.bbox().checked_len(MAX_SITES)?;
        let means: Vec<f64> = env.law_catalog().iter().map(|l| l.mean()).collect();
        let weights: Vec<f64> = (0..n).map(|i| means[env.law_index_by_flat(i)]).collect();
        WeightField::from_values(env.bbox().clone(), weights).map(|mut f| {
            f.seed = env.seed();
            f
        })
    }

    /// `xi(z)` = one independent draw from the holding law at `z`.  Draws are
    /// keyed by site, so enlarging the box extends the same realization.
    pub fn sampled(env: &EnvironmentBox, seed: u64) -> Result<Self> {
        let n = env.bbox().checked_len(MAX_SITES)?;
        let mut weights = Vec::with_capacity(n);
        for i in 0..n {
            let site = env.bbox().site_at(i);
            let mut rng = CounterRng::for_site(seed, stream::WEIGHT, &site);
            let mut w = env.law_at(&site)?.sample(&mut rng);
            // A deterministic law can legally produce tiny positive values; a
            // continuous one produces 0 with probability zero, but guard the
            // strict-positivity invariant against underflow anyway.
            if w <= 0.0 {
                w = f64::MIN_POSITIVE;
            }
            weights.push(w);
        }
        WeightField::from_values(env.bbox().clone(), weights).map(|mut f| {
            f.seed = seed;
            f
        })
    }

    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }

    pub fn weight_at(&self, site: &[i64]) -> Result<f64> {
        let idx = self
            .bbox
            .index_of(site)
            .ok_or_else(|| Error::OutsideBox(site.to_vec()))?;
        Ok(self.weights[idx])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cost of an explicit nearest-neighbor path under the departure-site
    /// convention, summed front to back (the same order the solver uses).
    pub fn path_cost(&self, path: &[Site]) -> Result<f64> {
        for w in path.windows(2) {
            let gap: i64 = w[0].iter().zip(&w[1]).map(|(a, b)| (a - b).abs()).sum();
            if gap != 1 {
                return Err(Error::InvalidArgument(
                    "path sites must be nearest neighbors".into(),
                ));
            }
        }
        let mut cost = 0.0;
        for site in &path[..path.len().saturating_sub(1)] {
            cost += self.weight_at(site)?;
        }
        Ok(cost)
    }
}

/// Outcome of one shortest-path solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PassageTimeResult {
    pub source: Site,
    pub target: Site,
    /// Minimal departure-weight sum over nearest-neighbor paths.
    pub value: f64,
    /// One optimal path, source first, target last.
    pub path: Vec<Site>,
    /// Sites settled before the target was reached.
    pub expanded: usize,
}

impl PassageTimeResult {
    /// Whether the optimal path touches the boundary of the field's box —
    /// the signal that the box may have clipped a cheaper route.
    pub fn touches_boundary(&self, bbox: &LatticeBox) -> bool {
        self.path.iter().any(|s| bbox.is_boundary(s))
    }
}

/// Heap entry ordered by cost, then by flat site index so ties break the
/// same way on every run.  Costs are nonnegative finite floats, for which
/// the IEEE bit pattern orders exactly like the value.
#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct HeapEntry {
    cost_bits: u64,
    flat: usize,
}

/// Minimal total departure weight from `x` to `y` over nearest-neighbor
/// paths inside the field's box, by Dijkstra's label-setting sweep.
pub fn passage_time(field: &WeightField, x: &[i64], y: &[i64]) -> Result<PassageTimeResult> {
    let bbox = &field.bbox;
    let sx = bbox
        .index_of(x)
        .ok_or_else(|| Error::OutsideBox(x.to_vec()))?;
    let sy = bbox
        .index_of(y)
        .ok_or_else(|| Error::OutsideBox(y.to_vec()))?;
    let n = bbox.len();
    let dim = bbox.dim();

    if sx == sy {
        return Ok(PassageTimeResult {
            source: x.to_vec(),
            target: y.to_vec(),
            value: 0.0,
            path: vec![x.to_vec()],
            expanded: 0,
        });
    }

    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[sx] = 0.0;
    heap.push(Reverse(HeapEntry { cost_bits: 0, flat: sx }));
    let mut expanded = 0usize;

    while let Some(Reverse(entry)) = heap.pop() {
        let u = entry.flat;
        if settled[u] {
            continue;
        }
        settled[u] = true;
        expanded += 1;
        if u == sy {
            break;
        }
        let du = dist[u];
        let wu = field.weights[u];
        let site = bbox.site_at(u);
        let mut nb = site.clone();
        for axis in 0..dim {
            for delta in [1i64, -1] {
                nb[axis] += delta;
                if let Some(v) = bbox.index_of(&nb) {
                    if !settled[v] {
                        let nd = du + wu;
                        if nd < dist[v] {
                            dist[v] = nd;
                            prev[v] = u;
                            heap.push(Reverse(HeapEntry { cost_bits: nd.to_bits(), flat: v }));
                        }
                    }
                }
                nb[axis] -= delta;
            }
        }
    }

    if !settled[sy] {
        // Unreachable only if the box is disconnected, which a product of
        // intervals never is; keep the error for defense in depth.
        return Err(Error::InvalidArgument(
            "target unreachable inside the box".into(),
        ));
    }

    let mut flats = vec![sy];
    let mut cur = sy;
    while cur != sx {
        cur = prev[cur];
        flats.push(cur);
    }
    flats.reverse();
    let path: Vec<Site> = flats.iter().map(|&f| bbox.site_at(f)).collect();

    Ok(PassageTimeResult {
        source: x.to_vec(),
        target: y.to_vec(),
        value: dist[sy],
        path,
        expanded,
    })
}

/// Exhaustive-search passage time, the independent oracle for
/// [`passage_time`].
#[derive(Clone, Debug)]
pub struct BruteForceResult {
    pub value: f64,
    /// False when the length cap pruned a path that was still cheaper than
    /// the best complete one, so the value is only an upper bound.
    pub exhaustive: bool,
}

/// Depth-first search over simple paths from `x` to `y` of at most `max_len`
/// steps, pruning branches whose accumulated cost already matches or exceeds
/// the best complete path (sound because weights are strictly positive).
pub fn passage_time_bruteforce(
    field: &WeightField,
    x: &[i64],
    y: &[i64],
    max_len: usize,
) -> Result<BruteForceResult> {
    let bbox = &field.bbox;
    let sx = bbox
        .index_of(x)
        .ok_or_else(|| Error::OutsideBox(x.to_vec()))?;
    let sy = bbox
        .index_of(y)
        .ok_or_else(|| Error::OutsideBox(y.to_vec()))?;
    if sx == sy {
        return Ok(BruteForceResult { value: 0.0, exhaustive: true });
    }

    struct Search<'a> {
        field: &'a WeightField,
        target: usize,
        max_len: usize,
        visited: Vec<bool>,
        best: f64,
        truncated: bool,
    }

    impl Search<'_> {
        fn run(&mut self, u: usize, cost: f64, len: usize) {
            if u == self.target {
                if cost < self.best {
                    self.best = cost;
                }
                return;
            }
            if len == self.max_len {
                if cost < self.best {
                    self.truncated = true;
                }
                return;
            }
            let bbox = self.field.bbox();
            let site = bbox.site_at(u);
            let ncost = cost + self.field.weights[u];
            if ncost >= self.best {
                // Every completion departs at least the current site; equal
                // cost cannot improve the minimum either.
                return;
            }
            let mut nb = site.clone();
            for axis in 0..bbox.dim() {
                for delta in [1i64, -1] {
                    nb[axis] += delta;
                    if let Some(v) = bbox.index_of(&nb) {
                        if !self.visited[v] {
                            self.visited[v] = true;
                            self.run(v, ncost, len + 1);
                            self.visited[v] = false;
                        }
                    }
                    nb[axis] -= delta;
                }
            }
        }
    }

    let mut search = Search {
        field,
        target: sy,
        max_len,
        visited: vec![false; bbox.len()],
        best: f64::INFINITY,
        truncated: false,
    };
    search.visited[sx] = true;
    search.run(sx, 0.0, 0);

    if !search.best.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "no path of at most {max_len} steps reaches the target"
        )));
    }
    Ok(BruteForceResult {
        value: search.best,
        exhaustive: !search.truncated,
    })
}

/// Which per-site weights the time-constant estimator builds its field from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    /// Tauberian constants of the holding laws — the field whose time
    /// constant the scaled crossing exponent approaches.
    Theta,
    /// Mean holding times.
    Mean,
    /// One independent draw from each site's holding law.
    Sampled,
}

#[derive(Clone, Debug)]
pub struct TimeConstantOptions {
    /// Distances `n` at which `T(0, n x) / n` is sampled.
    pub schedule: Vec<u32>,
    /// Independent environment replicas per distance.
    pub replicas: u32,
    pub mode: WeightMode,
    /// Box inflation around the segment `[0, n x]`; `None` picks
    /// `max(4, ceil(n |x|_1 / 2))`, wide enough for geodesic wandering at
    /// the default distances.
    pub margin: Option<i64>,
}

impl Default for TimeConstantOptions {
    fn default() -> Self {
        TimeConstantOptions {
            schedule: vec![4, 8, 16, 32],
            replicas: 16,
            mode: WeightMode::Theta,
            margin: None,
        }
    }
}

/// One passage-time sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeConstantSample {
    pub n: u32,
    pub replica: u32,
    /// `T(0, n x) / n`.
    pub value: f64,
    /// The geodesic touched the box boundary, so the box may have clipped
    /// a cheaper route.
    pub boundary: bool,
}

/// Time-constant estimate `nu(x)` from passage times to growing distances.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeConstantEstimate {
    pub direction: Site,
    pub mode: WeightMode,
    pub schedule: Vec<u32>,
    pub replicas: u32,
    pub samples: Vec<TimeConstantSample>,
    /// Mean of `T(0, n x) / n` over replicas at the largest `n`.
    pub nu: f64,
    /// Standard error of that mean.
    pub spread: f64,
    /// A geodesic at the largest distance touched its box boundary.
    pub flagged: bool,
}

impl TimeConstantEstimate {
    /// Replica means at each scheduled distance, in schedule order.
    pub fn means_by_n(&self) -> Vec<(u32, f64)> {
        self.schedule
            .iter()
            .map(|&n| {
                let vals: Vec<f64> = self
                    .samples
                    .iter()
                    .filter(|s| s.n == n)
                    .map(|s| s.value)
                    .collect();
                (n, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }
}

fn default_margin(n: u32, x: &[i64]) -> i64 {
    let span = n as i64 * l1_norm_int(x);
    ((span + 1) / 2).max(4)
}

/// Estimate the time constant `nu(x)` of the weight field selected by
/// `opts.mode`: the mean of `T(0, n x) / n` over independent replicas at the
/// largest scheduled distance.  Each replica draws its own environment; the
/// box around the segment `[0, n x]` is inflated so geodesics can wander,
/// and any geodesic that still touches the boundary flags its sample.
pub fn estimate_time_constant(
    spec: &EnvironmentSpec,
    x: &[i64],
    seed: u64,
    opts: &TimeConstantOptions,
) -> Result<TimeConstantEstimate> {
    spec.validate()?;
    if x.len() != spec.dimension {
        return Err(Error::InvalidArgument(format!(
            "direction dimension {} != spec dimension {}",
            x.len(),
            spec.dimension
        )));
    }
    if x.iter().all(|&c| c == 0) {
        return Err(Error::InvalidArgument("direction must be nonzero".into()));
    }
    if opts.schedule.is_empty() || opts.replicas == 0 {
        return Err(Error::InvalidArgument(
            "empty schedule or zero replicas".into(),
        ));
    }
    if opts.schedule.iter().any(|&n| n == 0) {
        return Err(Error::InvalidArgument("distances must be positive".into()));
    }
    if let Some(m) = opts.margin {
        if m < 1 {
            return Err(Error::InvalidArgument("margin must be at least 1".into()));
        }
    }

    let tasks: Vec<(u32, u32)> = opts
        .schedule
        .iter()
        .flat_map(|&n| (0..opts.replicas).map(move |r| (n, r)))
        .collect();
    let origin = vec![0i64; x.len()];
    let results: Vec<Result<TimeConstantSample>> = tasks
        .par_iter()
        .map(|&(n, r)| {
            let env_seed = CounterRng::derive_seed(seed, stream::REPLICA, r as u64);
            let target: Site = x.iter().map(|&c| c * n as i64).collect();
            let margin = opts.margin.unwrap_or_else(|| default_margin(n, x));
            let bbox = LatticeBox::bounding(&[&origin, &target])?.inflate(margin)?;
            let env = sample_environment(spec, &bbox, env_seed)?;
            let field = match opts.mode {
                WeightMode::Theta => WeightField::theta(&env)?,
                WeightMode::Mean => WeightField::mean(&env)?,
                WeightMode::Sampled => WeightField::sampled(&env, env_seed)?,
            };
            let res = passage_time(&field, &origin, &target)?;
            Ok(TimeConstantSample {
                n,
                replica: r,
                value: res.value / n as f64,
                boundary: res.touches_boundary(&bbox),
            })
        })
        .collect();

    let mut samples = Vec::with_capacity(results.len());
    for r in results {
        samples.push(r?);
    }

    let n_max = *opts.schedule.iter().max().unwrap();
    let top: Vec<&TimeConstantSample> = samples.iter().filter(|s| s.n == n_max).collect();
    let k = top.len() as f64;
    let nu = top.iter().map(|s| s.value).sum::<f64>() / k;
    let spread = if top.len() > 1 {
        let var = top.iter().map(|s| (s.value - nu).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    let flagged = top.iter().any(|s| s.boundary);

    Ok(TimeConstantEstimate {
        direction: x.to_vec(),
        mode: opts.mode,
        schedule: opts.schedule.clone(),
        replicas: opts.replicas,
        samples,
        nu,
        spread,
        flagged,
    })
}

/// One row of the large-tilt scaling table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingRow {
    pub lambda: f64,
    /// `alpha_lambda(x) / L(lambda)`.
    pub ratio: f64,
    pub ratio_se: f64,
    pub flagged: bool,
}

/// The crossing exponent rescaled by the common growth scale, tabulated
/// against the tilt, next to the independently estimated time constant of
/// the Tauberian-constant field it approaches.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingTable {
    pub direction: Site,
    pub scale: ScaleFamily,
    pub rows: Vec<ScalingRow>,
    /// Time constant `nu(x)` of the Tauberian-constant weight field.
    pub nu_theta: f64,
    pub nu_spread: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct ScalingOptions {
    /// Options for each crossing-exponent estimate.
    pub alpha: EstimateOptions,
    /// Options for the time-constant estimate.
    pub time_constant: TimeConstantOptions,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        ScalingOptions {
            alpha: EstimateOptions::default(),
            time_constant: TimeConstantOptions::default(),
        }
    }
}

/// Tabulate `alpha_lambda(x) / L(lambda)` for each tilt in `lambdas` against
/// the independently estimated time constant `nu_Theta(x)`.  `tol` tightens
/// both the exact one-dimensional recursion and the adaptive box solves
/// behind the exponent estimates.
pub fn lyapunov_fpp_scaling(
    spec: &EnvironmentSpec,
    x: &[i64],
    lambdas: &[f64],
    tol: f64,
    seed: u64,
    opts: &ScalingOptions,
) -> Result<ScalingTable> {
    spec.validate()?;
    let scale = spec.common_scale()?;
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("no tilts requested".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    for &l in lambdas {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "tilts must be positive and finite, got {l}"
            )));
        }
        if scale.l(l) <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "growth scale vanishes at lambda = {l}; pick a larger tilt"
            )));
        }
    }

    let mut alpha_opts = opts.alpha.clone();
    alpha_opts.oracle.tol = tol.min(alpha_opts.oracle.tol);
    alpha_opts.adaptive.tol_abs = tol.min(alpha_opts.adaptive.tol_abs);
    alpha_opts.adaptive.tol_rel = tol.min(alpha_opts.adaptive.tol_rel);

    let mut tc_opts = opts.time_constant.clone();
    tc_opts.mode = WeightMode::Theta;
    let tc = estimate_time_constant(spec, x, CounterRng::derive_seed(seed, stream::WEIGHT, 0), &tc_opts)?;

    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let est = estimate_alpha(spec, x, lambda, seed, &alpha_opts)?;
        let l = scale.l(lambda);
        rows.push(ScalingRow {
            lambda,
            ratio: est.alpha / l,
            ratio_se: est.alpha_se / l,
            flagged: est.flagged,
        });
    }

    let flagged = tc.flagged || rows.iter().any(|r| r.flagged);
    Ok(ScalingTable {
        direction: x.to_vec(),
        scale,
        rows,
        nu_theta: tc.nu,
        nu_spread: tc.spread,
        flagged,
    })
}

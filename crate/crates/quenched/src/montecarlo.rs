//! Direct simulation of the continuous-time walk, Monte Carlo crossing
//! estimates, conditioned-path importance sampling for hitting times, and
//! empirical rate curves against the computed rate function.
//!
//! All sampling is reproducible and order-free: holding times are keyed by
//! `(seed, site, visit count)`, kernel draws by `(seed, step index)`, and
//! per-sample seeds derive from the master seed and the sample index, so the
//! same seed yields the same numbers at any parallelism degree.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossing::{solve_crossing, SolveOptions, Target};
use crate::lattice::{step, LatticeBox, Site};
use crate::rng::{stream, CounterRng};
use crate::scenery::{sample_environment, EnvironmentBox, EnvironmentSpec};
use crate::{Error, Result};

/// Accumulated killing exponent beyond which a path's weight underflows
/// double precision; the sample is then truncated to weight zero, which
/// biases the mean by less than 1e-300.
pub const EXPONENT_TRUNCATION: f64 = 745.0;

/// One simulated trajectory of the continuous-time walk up to a horizon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PathSample {
    /// Visited sites `X_0 .. X_N`.
    pub sites: Vec<Site>,
    /// Holding times `tau_0 .. tau_{N-1}`; `tau_m` is the sojourn at `X_m`
    /// before the jump to `X_{m+1}`.
    pub holds: Vec<f64>,
    /// Jump clock `T_1 < T_2 < ... <= horizon`, the cumulative holding sums.
    pub clock: Vec<f64>,
    pub horizon: f64,
    /// The walk left the box before the horizon and the sample was aborted;
    /// rerunning the same seed on a larger box reproduces this trajectory
    /// and continues it.
    pub exited: bool,
}

impl PathSample {
    pub fn jumps(&self) -> usize {
        self.clock.len()
    }

    pub fn terminal(&self) -> &Site {
        self.sites.last().unwrap()
    }

    /// The occupied site at time `t`: piecewise constant and right
    /// continuous, jumping exactly at the clock times.
    pub fn position_at(&self, t: f64) -> &Site {
        let k = self.clock.partition_point(|&c| c <= t);
        &self.sites[k]
    }
}

/// Simulate the continuous-time walk from `start` until the first hold that
/// would carry it past `horizon`.  Holding times are drawn per `(site,
/// visit)` so revisits get fresh, reproducible draws; kernel choices are
/// drawn per step index.  A jump out of the box aborts the sample with the
/// `exited` flag set — the caller's cue to enlarge the box and rerun the
/// same seed, which replays the identical prefix.
pub fn simulate_path(
    env: &EnvironmentBox,
    start: &[i64],
    horizon: f64,
    seed: u64,
) -> Result<PathSample> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive and finite, got {horizon}"
        )));
    }
    let bbox = env.bbox();
    let mut cur_flat = bbox
        .index_of(start)
        .ok_or_else(|| Error::OutsideBox(start.to_vec()))?;
    let mut visits = vec![0u64; bbox.len()];
    let mut cur = start.to_vec();
    let mut sites = vec![cur.clone()];
    let mut holds = Vec::new();
    let mut clock = Vec::new();
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut exited = false;

    loop {
        let visit = visits[cur_flat];
        visits[cur_flat] += 1;
        let mut hold_rng = CounterRng::for_site_counter(seed, stream::HOLD, &cur, visit);
        let tau = env.law_at(&cur)?.sample(&mut hold_rng);
        if t + tau > horizon {
            break;
        }
        t += tau;
        let mut walk_rng = CounterRng::from_parts(&[seed, stream::WALK, steps]);
        let dir = env.kernel_at(&cur)?.sample(&mut walk_rng);
        steps += 1;
        let mut next = cur.clone();
        step(&mut next, dir);
        match bbox.index_of(&next) {
            Some(flat) => {
                holds.push(tau);
                clock.push(t);
                sites.push(next.clone());
                cur = next;
                cur_flat = flat;
            }
            None => {
                exited = true;
                break;
            }
        }
    }

    Ok(PathSample { sites, holds, clock, horizon, exited })
}

/// Monte Carlo estimate of the crossing functional.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossingMcEstimate {
    /// Mean of `exp(-sum of theta over departed sites)` over sample walks.
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    /// Walks whose accumulated exponent crossed the truncation threshold.
    pub truncated: u64,
    /// Walks that left the box (killed, weight zero — matching the
    /// absorbing frame of the box solver).
    pub exited: u64,
}

/// Estimate the crossing functional from `x` to `y` by averaging the killing
/// weight `exp(-sum theta(X_m))` over discrete walks.  Walks are killed at
/// the box frame, so the estimate targets the same box-truncated quantity
/// the sweep solver computes.  Requires a positive tilt: at `lambda = 0`
/// there is no killing and no integrable truncation of long walks.
pub fn estimate_crossing_mc(
    env: &EnvironmentBox,
    x: &[i64],
    y: &[i64],
    lambda: f64,
    samples: u64,
    seed: u64,
) -> Result<CrossingMcEstimate> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(
            "the tilt must be strictly positive: without killing, walk weights are not integrably truncated".into(),
        ));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample required".into()));
    }
    let bbox = env.bbox();
    let sx = bbox
        .index_of(x)
        .ok_or_else(|| Error::OutsideBox(x.to_vec()))?;
    let sy = bbox
        .index_of(y)
        .ok_or_else(|| Error::OutsideBox(y.to_vec()))?;
    let theta_by_law = env.theta_table(lambda);
    let theta: Vec<f64> = (0..bbox.len())
        .map(|i| theta_by_law[env.law_index_by_flat(i)])
        .collect();

    // (weight, truncated, exited) per sample, in sample order.
    let outcomes: Vec<(f64, bool, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let sample_seed = CounterRng::derive_seed(seed, stream::SAMPLE, i);
            let mut cur = x.to_vec();
            let mut cur_flat = sx;
            let mut exponent = 0.0f64;
            let mut steps = 0u64;
            loop {
                if cur_flat == sy {
                    return ((-exponent).exp(), false, false);
                }
                exponent += theta[cur_flat];
                if exponent > EXPONENT_TRUNCATION {
                    return (0.0, true, false);
                }
                let mut rng = CounterRng::from_parts(&[sample_seed, stream::WALK, steps]);
                let dir = env.kernel_by_flat(cur_flat).sample(&mut rng);
                steps += 1;
                step(&mut cur, dir);
                match bbox.index_of(&cur) {
                    Some(f) => cur_flat = f,
                    None => return (0.0, false, true),
                }
            }
        })
        .collect();

    // Fixed-order reduction for bit-stable output at any parallelism.
    let k = samples as f64;
    let mean = outcomes.iter().map(|o| o.0).sum::<f64>() / k;
    let std_error = if samples > 1 {
        let var = outcomes.iter().map(|o| (o.0 - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    Ok(CrossingMcEstimate {
        estimate: mean,
        std_error,
        samples,
        truncated: outcomes.iter().filter(|o| o.1).count() as u64,
        exited: outcomes.iter().filter(|o| o.2).count() as u64,
    })
}

/// One importance-sampled hitting path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TiltedSample {
    /// Continuous hitting time of the target: tilted holding draws summed
    /// over the discrete path.
    pub hitting_time: f64,
    /// Discrete steps taken to reach the target.
    pub steps: u64,
    /// Unnormalized log importance weight (common constants dropped).
    pub log_weight: f64,
    /// The proposal chain hit the step cap without reaching the target.
    pub failed: bool,
}

/// Importance-weighted sample of the crossing-conditioned hitting time law.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TiltedSampleSet {
    pub lambda: f64,
    /// Lattice distance from source to target.
    pub distance: f64,
    pub samples: Vec<TiltedSample>,
    /// Self-normalized weights, summing to one over successful samples.
    pub weights: Vec<f64>,
    /// Effective sample size `1 / sum of squared normalized weights`.
    pub ess: f64,
    /// Weighted mean of `hitting time / distance`.
    pub mean_per_distance: f64,
    /// Weighted standard deviation of `hitting time / distance`.
    pub sd_per_distance: f64,
    /// Effective sample size below 50, or proposal failures occurred.
    pub flagged: bool,
}

impl TiltedSampleSet {
    /// Weighted empirical distribution function of `hitting time /
    /// distance` at `t`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.samples
            .iter()
            .zip(&self.weights)
            .filter(|(s, _)| !s.failed && s.hitting_time / self.distance <= t)
            .map(|(_, w)| w)
            .sum()
    }
}

#[derive(Clone, Debug)]
pub struct TiltedOptions {
    pub solve: SolveOptions,
    /// Proposal walks abandoned past this many steps (flagged).
    pub max_steps: u64,
    /// Effective-sample-size floor below which the set is flagged.
    pub ess_floor: f64,
}

impl Default for TiltedOptions {
    fn default() -> Self {
        TiltedOptions {
            solve: SolveOptions::default(),
            max_steps: 100_000,
            ess_floor: 50.0,
        }
    }
}

/// Sample the law of the continuous hitting time `H^Z(y)` under the
/// crossing-conditioned (tilted) path measure, by importance sampling.
///
/// The proposal chain steps from `z` with probability proportional to
/// `omega(z, e) * u(z + e)`, where `u` is the solved crossing field toward
/// `y` — the discrete walk conditioned to cross, up to the numerical error
/// of `u`.  The residual mismatch is corrected by self-normalized weights
/// `log w = sum [ -theta(X_m) + log C(X_m) - log u(X_{m+1}) ]` with
/// `C(z) = sum_e omega(z, e) u(z + e)`; with an exact field the weights are
/// constant.  Holding times along the path are drawn from the per-site
/// tilted laws, whose normalizers the weight already carries via `theta`.
pub fn tilted_hitting_sampler(
    env: &EnvironmentBox,
    x: &[i64],
    y: &[i64],
    lambda: f64,
    samples: u64,
    seed: u64,
    opts: &TiltedOptions,
) -> Result<TiltedSampleSet> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument("the tilt must be strictly positive".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample required".into()));
    }
    if x == y {
        return Err(Error::InvalidArgument("source and target must differ".into()));
    }
    let bbox = env.bbox();
    let sy = bbox
        .index_of(y)
        .ok_or_else(|| Error::OutsideBox(y.to_vec()))?;
    bbox.index_of(x)
        .ok_or_else(|| Error::OutsideBox(x.to_vec()))?;

    let solution = solve_crossing(env, x, &Target::site(y.to_vec()), lambda, &opts.solve)?;
    let u = solution.values();
    if !(u[bbox.index_of(x).unwrap()] > 0.0) {
        return Err(Error::InvalidArgument(
            "the crossing field vanishes at the source; enlarge the box or lower the tilt".into(),
        ));
    }

    let dim = bbox.dim();
    let n = bbox.len();
    let theta_by_law = env.theta_table(lambda);
    let theta: Vec<f64> = (0..n)
        .map(|i| theta_by_law[env.law_index_by_flat(i)])
        .collect();

    // Proposal tables: cumulative step distribution and its normalizer per
    // site.  A direction leading out of the box or onto a dead site gets
    // probability zero.
    let mut cum = vec![0.0f64; n * 2 * dim];
    let mut norm = vec![0.0f64; n];
    for flat in 0..n {
        if u[flat] <= 0.0 || flat == sy {
            continue;
        }
        let site = bbox.site_at(flat);
        let kernel = env.kernel_by_flat(flat);
        let mut acc = 0.0;
        let mut nb = site.clone();
        for dir in 0..2 * dim {
            let (axis, delta) = (dir / 2, if dir % 2 == 0 { 1i64 } else { -1 });
            nb[axis] += delta;
            if let Some(v) = bbox.index_of(&nb) {
                acc += kernel.prob(dir) * u[v];
            }
            nb[axis] -= delta;
        }
        norm[flat] = acc;
        let mut run = 0.0;
        let mut nb = site.clone();
        for dir in 0..2 * dim {
            let (axis, delta) = (dir / 2, if dir % 2 == 0 { 1i64 } else { -1 });
            nb[axis] += delta;
            if let Some(v) = bbox.index_of(&nb) {
                run += kernel.prob(dir) * u[v];
            }
            nb[axis] -= delta;
            cum[flat * 2 * dim + dir] = if acc > 0.0 { run / acc } else { 0.0 };
        }
    }

    let distance = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .sum::<i64>() as f64;

    let results: Vec<TiltedSample> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let sample_seed = CounterRng::derive_seed(seed, stream::SAMPLE, i);
            let mut cur = x.to_vec();
            let mut cur_flat = bbox.index_of(x).unwrap();
            let mut visits = vec![0u64; n];
            let mut log_weight = 0.0;
            let mut hitting_time = 0.0;
            let mut steps = 0u64;
            loop {
                if cur_flat == sy {
                    return TiltedSample { hitting_time, steps, log_weight, failed: false };
                }
                if steps >= opts.max_steps || norm[cur_flat] <= 0.0 {
                    return TiltedSample {
                        hitting_time,
                        steps,
                        log_weight: f64::NEG_INFINITY,
                        failed: true,
                    };
                }
                // Tilted holding draw at the departure site.
                let visit = visits[cur_flat];
                visits[cur_flat] += 1;
                let mut hold_rng =
                    CounterRng::for_site_counter(sample_seed, stream::HOLD, &cur, visit);
                let law = &env.law_catalog()[env.law_index_by_flat(cur_flat)];
                hitting_time += law.sample_tilted(lambda, &mut hold_rng);
                // Proposal step.
                let mut walk_rng = CounterRng::from_parts(&[sample_seed, stream::WALK, steps]);
                let r = walk_rng.uniform();
                let base = cur_flat * 2 * dim;
                let mut dir = 2 * dim - 1;
                for d in 0..2 * dim {
                    if r < cum[base + d] {
                        dir = d;
                        break;
                    }
                }
                log_weight += -theta[cur_flat] + norm[cur_flat].ln();
                step(&mut cur, dir);
                cur_flat = bbox.index_of(&cur).expect("proposal stepped outside the box");
                log_weight -= u[cur_flat].ln();
                steps += 1;
            }
        })
        .collect();

    // Self-normalize over successful samples, in fixed order.
    let max_lw = results
        .iter()
        .filter(|s| !s.failed)
        .map(|s| s.log_weight)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_lw.is_finite() {
        return Err(Error::InvalidArgument(
            "no proposal path reached the target within the step cap".into(),
        ));
    }
    let raw: Vec<f64> = results
        .iter()
        .map(|s| if s.failed { 0.0 } else { (s.log_weight - max_lw).exp() })
        .collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let mean_per_distance = results
        .iter()
        .zip(&weights)
        .map(|(s, w)| w * s.hitting_time / distance)
        .sum::<f64>();
    let var = results
        .iter()
        .zip(&weights)
        .map(|(s, w)| w * (s.hitting_time / distance - mean_per_distance).powi(2))
        .sum::<f64>();
    let any_failed = results.iter().any(|s| s.failed);
    let flagged = ess < opts.ess_floor || any_failed;

    Ok(TiltedSampleSet {
        lambda,
        distance,
        samples: results,
        weights,
        ess,
        mean_per_distance,
        sd_per_distance: var.sqrt(),
        flagged,
    })
}

/// One speed cell of an empirical rate curve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LdpPoint {
    pub speed: f64,
    pub hits: u64,
    /// Empirical probability of `Z_t . direction >= speed * t`.
    pub probability: f64,
    /// `-(1/t) log probability`; infinite when no sample hit.
    pub empirical_rate: f64,
    /// With zero hits the rate is only bounded below, by `log(samples)/t`;
    /// otherwise equals the empirical rate.
    pub rate_lower_bound: f64,
    pub zero_hits: bool,
    /// Rate-function value supplied for comparison, if any.
    pub theory: Option<f64>,
    pub flagged: bool,
}

/// Empirical large-deviation rates of the walk's position at a fixed time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LdpCurve {
    pub direction: Site,
    pub t: f64,
    pub samples: u64,
    /// Samples whose walk still left the box after all enlargements.
    pub exit_failures: u64,
    pub points: Vec<LdpPoint>,
    pub flagged: bool,
}

#[derive(Clone, Debug)]
pub struct LdpOptions {
    /// Starting box radius as a multiple of the expected jump count
    /// `t / mean holding time`.
    pub box_factor: f64,
    /// Extra absolute radius on top of the factor.
    pub box_slack: i64,
    /// Times the box may be doubled when a walk exits.
    pub max_doublings: u32,
}

impl Default for LdpOptions {
    fn default() -> Self {
        LdpOptions { box_factor: 1.3, box_slack: 20, max_doublings: 8 }
    }
}

/// Estimate `-(1/t) log P(Z_t . direction >= v t)` for each speed `v` by
/// direct simulation in one quenched environment, next to supplied
/// rate-function values.  `direction` must be a signed unit axis vector.
/// Walks that exit the box are rerun in a doubled box with the same seed,
/// which replays the identical trajectory prefix; zero-hit cells report an
/// infinite rate with `log(samples)/t` as the resolvable lower bound.
pub fn empirical_ldp_curve(
    spec: &EnvironmentSpec,
    direction: &[i64],
    speeds: &[f64],
    t: f64,
    samples: u64,
    seed: u64,
    theory: Option<&dyn Fn(f64) -> Result<f64>>,
    opts: &LdpOptions,
) -> Result<LdpCurve> {
    spec.validate()?;
    if direction.len() != spec.dimension {
        return Err(Error::InvalidArgument(format!(
            "direction dimension {} != spec dimension {}",
            direction.len(),
            spec.dimension
        )));
    }
    let ones = direction.iter().filter(|&&c| c.abs() == 1).count();
    let zeros = direction.iter().filter(|&&c| c == 0).count();
    if ones != 1 || ones + zeros != direction.len() {
        return Err(Error::InvalidArgument(
            "direction must be a signed unit axis vector".into(),
        ));
    }
    if speeds.is_empty() {
        return Err(Error::InvalidArgument("no speeds requested".into()));
    }
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument("t must be positive and finite".into()));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample required".into()));
    }

    let mean_hold = spec.mean_holding();
    let radius = ((opts.box_factor * t / mean_hold).ceil() as i64 + opts.box_slack).max(4);
    let dim = spec.dimension;
    let origin = vec![0i64; dim];

    // One quenched environment for the whole curve; enlargements extend it
    // site-consistently because draws are keyed by site.
    let mut envs: Vec<EnvironmentBox> = Vec::new();
    for k in 0..=opts.max_doublings {
        let r = radius << k;
        let bbox = LatticeBox::new(vec![-r; dim], vec![r; dim])?;
        if bbox.checked_len(1 << 31).is_err() {
            break;
        }
        envs.push(sample_environment(spec, &bbox, seed)?);
    }

    // Per-sample terminal projection onto the direction axis, or None when
    // the walk exits even the largest box.
    let outcomes: Vec<Option<i64>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let sample_seed = CounterRng::derive_seed(seed, stream::SAMPLE, i);
            for env in &envs {
                match walk_terminal(env, &origin, t, sample_seed) {
                    Ok(Some(site)) => {
                        let dot: i64 = site.iter().zip(direction).map(|(a, b)| a * b).sum();
                        return Some(dot);
                    }
                    Ok(None) => continue,
                    Err(_) => return None,
                }
            }
            None
        })
        .collect();

    let exit_failures = outcomes.iter().filter(|o| o.is_none()).count() as u64;

    let mut points = Vec::with_capacity(speeds.len());
    for &v in speeds {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("speed {v} is not finite")));
        }
        let threshold = v * t - 1e-12;
        let hits = outcomes
            .iter()
            .filter(|o| matches!(o, Some(dot) if *dot as f64 >= threshold))
            .count() as u64;
        let probability = hits as f64 / samples as f64;
        let zero_hits = hits == 0;
        let empirical_rate = if zero_hits {
            f64::INFINITY
        } else {
            -probability.ln() / t
        };
        let rate_lower_bound = if zero_hits {
            (samples as f64).ln() / t
        } else {
            empirical_rate
        };
        let th = match theory {
            Some(f) => Some(f(v)?),
            None => None,
        };
        points.push(LdpPoint {
            speed: v,
            hits,
            probability,
            empirical_rate,
            rate_lower_bound,
            zero_hits,
            theory: th,
            flagged: zero_hits,
        });
    }

    let flagged = exit_failures > 0 || points.iter().any(|p| p.flagged);
    Ok(LdpCurve {
        direction: direction.to_vec(),
        t,
        samples,
        exit_failures,
        points,
        flagged,
    })
}

/// Lean core of [`simulate_path`]: identical draws and stopping rule, but
/// only the terminal site is kept.  Returns `None` when the walk exits the
/// box before the horizon.
fn walk_terminal(
    env: &EnvironmentBox,
    start: &[i64],
    horizon: f64,
    seed: u64,
) -> Result<Option<Site>> {
    let bbox = env.bbox();
    let mut cur_flat = bbox
        .index_of(start)
        .ok_or_else(|| Error::OutsideBox(start.to_vec()))?;
    let mut cur = start.to_vec();
    // Paths are short relative to the box: track visits sparsely.
    let mut visits: Vec<(usize, u64)> = Vec::new();
    let mut t = 0.0;
    let mut steps = 0u64;
    loop {
        let visit = match visits.iter_mut().find(|(f, _)| *f == cur_flat) {
            Some(entry) => {
                entry.1 += 1;
                entry.1 - 1
            }
            None => {
                visits.push((cur_flat, 1));
                0
            }
        };
        let mut hold_rng = CounterRng::for_site_counter(seed, stream::HOLD, &cur, visit);
        let tau = env.law_catalog()[env.law_index_by_flat(cur_flat)].sample(&mut hold_rng);
        if t + tau > horizon {
            return Ok(Some(cur));
        }
        t += tau;
        let mut walk_rng = CounterRng::from_parts(&[seed, stream::WALK, steps]);
        let dir = env.kernel_by_flat(cur_flat).sample(&mut walk_rng);
        steps += 1;
        step(&mut cur, dir);
        match bbox.index_of(&cur) {
            Some(f) => cur_flat = f,
            None => return Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenery::{HoldingLaw, TransitionKernel};

    fn homogeneous_1d(radius: i64, p_right: f64, law: HoldingLaw) -> EnvironmentBox {
        EnvironmentBox::homogeneous(
            LatticeBox::new(vec![-radius], vec![radius]).unwrap(),
            TransitionKernel::one_dim(p_right).unwrap(),
            law,
        )
        .unwrap()
    }

    #[test]
    fn unit_holding_times_tick_the_clock_integerly() {
        let env = homogeneous_1d(30, 0.5, HoldingLaw::Deterministic { value: 1.0 });
        let path = simulate_path(&env, &[0], 10.0, 7).unwrap();
        assert!(!path.exited);
        assert_eq!(path.jumps(), 10);
        let expected: Vec<f64> = (1..=10).map(|k| k as f64).collect();
        assert_eq!(path.clock, expected);
        assert!(path.holds.iter().all(|&h| h == 1.0));
        // Right-continuity: at t = 2.0 the second jump has happened.
        assert_eq!(path.position_at(2.5), &path.sites[2]);
        assert_eq!(path.position_at(2.0), &path.sites[2]);
        assert_eq!(path.position_at(0.0), &path.sites[0]);
        assert_eq!(path.position_at(10.0), path.terminal());
    }

    #[test]
    fn jump_rate_matches_the_renewal_law() {
        let horizon = 1e4;
        let env = homogeneous_1d(600, 0.5, HoldingLaw::Exponential { rate: 1.0 });
        let path = simulate_path(&env, &[0], horizon, 11).unwrap();
        assert!(!path.exited);
        let rate = path.jumps() as f64 / horizon;
        assert!((0.97..=1.03).contains(&rate), "jump rate {rate}");
        let drift = path.terminal()[0].abs() as f64 / horizon;
        assert!(drift < 0.05, "|Z_t|/t = {drift}");
        // Clock is strictly increasing and below the horizon.
        assert!(path.clock.windows(2).all(|w| w[0] < w[1]));
        assert!(*path.clock.last().unwrap() <= horizon);
    }

    #[test]
    fn replaying_a_seed_in_a_larger_box_extends_the_same_path() {
        let small = homogeneous_1d(5, 0.5, HoldingLaw::Exponential { rate: 1.0 });
        let seed = 1234;
        let clipped = simulate_path(&small, &[0], 400.0, seed).unwrap();
        assert!(clipped.exited, "walk should outgrow a radius-5 box by t = 400");
        let big = homogeneous_1d(200, 0.5, HoldingLaw::Exponential { rate: 1.0 });
        let full = simulate_path(&big, &[0], 400.0, seed).unwrap();
        assert!(!full.exited);
        let k = clipped.sites.len();
        assert_eq!(&full.sites[..k], &clipped.sites[..]);
        assert_eq!(&full.holds[..clipped.holds.len()], &clipped.holds[..]);
        assert_eq!(&full.clock[..clipped.clock.len()], &clipped.clock[..]);
    }

    #[test]
    fn holding_draws_are_uncorrelated_across_sites_and_visits() {
        // 1e5 exponential draws laid out over a (site, visit) grid; lag
        // correlations along the flattened sequence must sit inside the
        // 3 sigma band for i.i.d. samples.
        let law = HoldingLaw::Exponential { rate: 1.0 };
        let sites = 1000i64;
        let visits = 100u64;
        let n = (sites as usize) * (visits as usize);
        let mut draws = Vec::with_capacity(n);
        for s in 0..sites {
            for v in 0..visits {
                let mut rng = CounterRng::for_site_counter(99, stream::HOLD, &[s], v);
                draws.push(law.sample(&mut rng));
            }
        }
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt() * 1.0 + 0.01);
        for lag in [1usize, 7, visits as usize] {
            let mut cov = 0.0;
            for i in 0..n - lag {
                cov += (draws[i] - mean) * (draws[i + lag] - mean);
            }
            cov /= (n - lag) as f64;
            let r = cov / var;
            assert!(
                r.abs() < 3.0 / (n as f64).sqrt(),
                "lag {lag} correlation {r}"
            );
        }
    }

    #[test]
    fn crossing_estimate_is_unbiased_for_the_closed_form() {
        // Symmetric walk, unit holding times: e_1(0, 1) = exp(-acosh(e))
        // = 1 / (e + sqrt(e^2 - 1)).
        let env = homogeneous_1d(40, 0.5, HoldingLaw::Deterministic { value: 1.0 });
        let est = estimate_crossing_mc(&env, &[0], &[1], 1.0, 100_000, 5).unwrap();
        let exact = 1.0 / (std::f64::consts::E + (std::f64::consts::E.powi(2) - 1.0).sqrt());
        assert!(
            (est.estimate - exact).abs() <= 3.0 * est.std_error,
            "estimate {} +- {} vs exact {exact}",
            est.estimate,
            est.std_error
        );
        assert!(est.std_error < 2e-3);
        // Walks killed at the frame carry exponent >= 40 already, so the
        // box truncation bias (< e^-40 per kill) drowns in the noise.
        assert!(est.truncated + est.exited < est.samples / 2);

        // Coincident endpoints: weight one, zero variance.
        let trivial = estimate_crossing_mc(&env, &[3], &[3], 1.0, 100, 5).unwrap();
        assert_eq!(trivial.estimate, 1.0);
        assert_eq!(trivial.std_error, 0.0);
    }

    #[test]
    fn crossing_estimate_matches_the_solver_inside_its_box() {
        // Twenty seeded random environments: the Monte Carlo mean targets
        // exactly the box-truncated crossing value the sweep solver
        // computes, so 99% confidence intervals should cover it at least
        // 17 times out of 20.
        let spec = EnvironmentSpec {
            dimension: 1,
            kernels: vec![
                crate::scenery::WeightedKernel { weight: 1.0, probabilities: vec![0.3, 0.7] },
                crate::scenery::WeightedKernel { weight: 1.0, probabilities: vec![0.6, 0.4] },
            ],
            laws: vec![
                crate::scenery::WeightedLaw { weight: 1.0, law: HoldingLaw::Exponential { rate: 1.0 } },
                crate::scenery::WeightedLaw { weight: 1.0, law: HoldingLaw::Gamma { shape: 2.0, scale: 0.5 } },
            ],
        };
        let bbox = LatticeBox::new(vec![-25], vec![25]).unwrap();
        let mut covered = 0;
        for inst in 0..20u64 {
            let env = sample_environment(&spec, &bbox, 7000 + inst).unwrap();
            let solved = solve_crossing(
                &env,
                &[0],
                &Target::site(vec![3]),
                1.0,
                &SolveOptions::default(),
            )
            .unwrap();
            assert!(solved.converged);
            let mc = estimate_crossing_mc(&env, &[0], &[3], 1.0, 20_000, 31_000 + inst).unwrap();
            if (mc.estimate - solved.start_value()).abs() <= 2.576 * mc.std_error {
                covered += 1;
            }
        }
        assert!(covered >= 17, "99% CI covered the solver value {covered}/20 times");
    }

    #[test]
    fn tilted_weights_normalize_and_the_hitting_law_concentrates() {
        // Symmetric walk, unit holding times, target 40 sites away at
        // tilt 1: the tilted hitting time per unit distance concentrates
        // around the exponent's slope e / sqrt(e^2 - 1) = 1.0754.
        let env = homogeneous_1d(120, 0.5, HoldingLaw::Deterministic { value: 1.0 });
        let set =
            tilted_hitting_sampler(&env, &[0], &[40], 1.0, 1500, 21, &TiltedOptions::default())
                .unwrap();
        assert!(!set.flagged);
        assert!((set.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(set.ess >= 100.0, "ess = {}", set.ess);
        let target = std::f64::consts::E / (std::f64::consts::E.powi(2) - 1.0).sqrt();
        assert!(
            (1.05..=1.10).contains(&set.mean_per_distance),
            "weighted mean {} (target {target})",
            set.mean_per_distance
        );
        assert!((set.mean_per_distance - target).abs() < 0.01);
        // The weighted law is genuinely concentrated: no mass below one
        // hold per step (the direct path is an atom at exactly 1), and the
        // bulk sits within a few steps' detour of the target slope.
        assert_eq!(set.cdf(0.999), 0.0);
        assert!(set.cdf(1.25) > 0.95);
    }

    #[test]
    fn stronger_tilts_pull_the_hitting_time_toward_one() {
        let env = homogeneous_1d(120, 0.5, HoldingLaw::Deterministic { value: 1.0 });
        let mild =
            tilted_hitting_sampler(&env, &[0], &[40], 1.0, 600, 3, &TiltedOptions::default())
                .unwrap();
        let strong =
            tilted_hitting_sampler(&env, &[0], &[40], 5.0, 600, 3, &TiltedOptions::default())
                .unwrap();
        assert!(strong.mean_per_distance < mild.mean_per_distance);
        assert!((0.99..=1.01).contains(&strong.mean_per_distance));
    }

    #[test]
    fn empirical_rates_track_the_binomial_tail() {
        // Unit holding times take exactly 40 steps by t = 40, so the
        // positive-speed tail is an explicit binomial sum.
        let spec = EnvironmentSpec::homogeneous(
            TransitionKernel::one_dim(0.5).unwrap(),
            HoldingLaw::Deterministic { value: 1.0 },
        );
        let t = 40.0;
        let samples = 200_000u64;
        let entropy_rate = |v: f64| -> f64 {
            let p = (1.0 + v) / 2.0;
            p * (2.0 * p).ln() + (1.0 - p) * (2.0 * (1.0 - p)).ln()
        };
        let theory = |v: f64| Ok(entropy_rate(v));
        let curve = empirical_ldp_curve(
            &spec,
            &[1],
            &[0.0, 0.25, 0.5, 0.75, 1.5],
            t,
            samples,
            17,
            Some(&theory),
            &LdpOptions::default(),
        )
        .unwrap();
        assert_eq!(curve.exit_failures, 0);

        // Exact binomial tail at v = 0.5: at least 30 right-steps of 40.
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
        let at_half = &curve.points[2];
        assert!(!at_half.zero_hits);
        assert!(
            (at_half.empirical_rate - oracle).abs() <= 0.05 * oracle,
            "empirical {} vs finite-t oracle {oracle}",
            at_half.empirical_rate
        );
        // The asymptotic rate function sits below the finite-t rate but
        // within a quarter of it.
        let i_half = at_half.theory.unwrap();
        assert!((i_half - 0.130_812_035_941_136_97).abs() < 1e-12);
        assert!((at_half.empirical_rate - i_half).abs() <= 0.25 * at_half.empirical_rate);

        // Rates grow with the speed on the positive side.
        let finite: Vec<f64> = curve.points[..4].iter().map(|p| p.empirical_rate).collect();
        assert!(finite.windows(2).all(|w| w[0] < w[1]), "rates {finite:?}");
        // Typical speeds cost nothing.
        assert!(curve.points[0].empirical_rate < 0.02);
        // Unreachable speeds are flagged infinite with a finite floor.
        let fast = curve.points.last().unwrap();
        assert!(fast.zero_hits && fast.flagged);
        assert!(fast.empirical_rate.is_infinite());
        assert!((fast.rate_lower_bound - (samples as f64).ln() / t).abs() < 1e-12);
        assert!(curve.flagged);
    }

    #[test]
    fn bad_arguments_are_rejected() {
        let env = homogeneous_1d(10, 0.5, HoldingLaw::Deterministic { value: 1.0 });
        assert!(simulate_path(&env, &[0], f64::INFINITY, 1).is_err());
        assert!(simulate_path(&env, &[99], 1.0, 1).is_err());
        assert!(estimate_crossing_mc(&env, &[0], &[1], 0.0, 10, 1).is_err());
        assert!(estimate_crossing_mc(&env, &[0], &[1], 1.0, 0, 1).is_err());
        assert!(tilted_hitting_sampler(&env, &[0], &[0], 1.0, 10, 1, &TiltedOptions::default())
            .is_err());
        let spec = EnvironmentSpec::homogeneous(
            TransitionKernel::one_dim(0.5).unwrap(),
            HoldingLaw::Deterministic { value: 1.0 },
        );
        assert!(empirical_ldp_curve(
            &spec,
            &[2],
            &[0.5],
            10.0,
            10,
            1,
            None,
            &LdpOptions::default()
        )
        .is_err());
        assert!(empirical_ldp_curve(
            &spec,
            &[1],
            &[],
            10.0,
            10,
            1,
            None,
            &LdpOptions::default()
        )
        .is_err());
    }
}

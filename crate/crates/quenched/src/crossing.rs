//! Crossing functionals on finite boxes.
//!
//! `solve_crossing` computes the killed crossing field
//!
//! ```text
//!     u(z) = E_omega^z[ exp{ -sum_{m < H} theta(X_m) } ; hit the target
//!                       before leaving the box ]
//! ```
//!
//! as the unique fixed point of `u(z) = e^{-theta(z)} sum_e omega(z, e)
//! u(z + e)` with `u = 1` pinned on the target and `u = 0` pinned on the
//! box's outer frame (the walk is killed on exit). Gauss-Seidel sweeps from
//! `u = 0` increase monotonically to the fixed point, so every iterate is a
//! rigorous lower bound, and the crossing cost `-log u` only decreases as the
//! box grows. The sweep-to-sweep contraction factor turns the last sup-change
//! into an a-posteriori distance bound, which is what the stopping rule and
//! the reported residual use.

use crate::lattice::{LatticeBox, Site};
use crate::scenery::{sample_environment, EnvironmentBox, EnvironmentSpec};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// What the walk must hit: an explicit site list, or every box site on the
/// lattice hyperplane `{ z : z[axis] = level }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Target {
    Sites(Vec<Site>),
    Hyperplane { axis: usize, level: i64 },
}

impl Target {
    pub fn site(site: Site) -> Self {
        Target::Sites(vec![site])
    }

    /// The concrete target sites inside `bbox`.
    pub fn materialize(&self, bbox: &LatticeBox) -> Result<Vec<Site>> {
        match self {
            Target::Sites(sites) => {
                if sites.is_empty() {
                    return Err(Error::InvalidArgument("empty target".into()));
                }
                for s in sites {
                    if !bbox.contains(s) {
                        return Err(Error::OutsideBox(s.clone()));
                    }
                }
                let mut out = sites.clone();
                out.sort();
                out.dedup();
                Ok(out)
            }
            Target::Hyperplane { axis, level } => {
                if *axis >= bbox.dim() {
                    return Err(Error::InvalidArgument(format!(
                        "hyperplane axis {axis} out of range for dimension {}",
                        bbox.dim()
                    )));
                }
                if *level < bbox.lo()[*axis] || *level > bbox.hi()[*axis] {
                    return Err(Error::OutsideBox(vec![*level]));
                }
                let mut out = Vec::new();
                for site in bbox.iter_sites() {
                    if site[*axis] == *level {
                        out.push(site);
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// A-posteriori bound on `sup |u - u_fixed|` at which sweeping stops.
    pub tol: f64,
    pub max_sweeps: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-9, max_sweeps: 1_000_000 }
    }
}

/// The solved crossing field together with convergence bookkeeping.
#[derive(Clone, Debug)]
pub struct CrossingSolution {
    bbox: LatticeBox,
    lambda: f64,
    start: Site,
    values: Vec<f64>,
    target: Vec<Site>,
    pub sweeps: u64,
    /// A-posteriori bound on the remaining sup-distance to the fixed point.
    pub residual: f64,
    pub converged: bool,
}

impl CrossingSolution {
    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn start(&self) -> &[i64] {
        &self.start
    }

    pub fn target(&self) -> &[Site] {
        &self.target
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value_at(&self, site: &[i64]) -> Option<f64> {
        self.bbox.index_of(site).map(|i| self.values[i])
    }

    /// Crossing cost `-log u` at a site; `+inf` where the field underflowed
    /// to zero or the site cannot reach the target inside the box.
    pub fn a_at(&self, site: &[i64]) -> Option<f64> {
        self.value_at(site).map(|u| if u > 0.0 { -u.ln() } else { f64::INFINITY })
    }

    pub fn start_value(&self) -> f64 {
        self.value_at(&self.start).unwrap()
    }

    /// Crossing cost from the start site.
    pub fn a(&self) -> f64 {
        self.a_at(&self.start).unwrap()
    }
}

const UPDATE: u8 = 0;
const PINNED_ONE: u8 = 1;
const PINNED_ZERO: u8 = 2;

/// Hard cap on box volume; gathered kernel tables are the memory driver.
const MAX_SITES: usize = 1 << 24;

fn solve_inner(
    env: &EnvironmentBox,
    start: &[i64],
    target: &Target,
    lambda: f64,
    opts: &SolveOptions,
    warm: Option<&CrossingSolution>,
) -> Result<CrossingSolution> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    let bbox = env.bbox().clone();
    let d = bbox.dim();
    if start.len() != d {
        return Err(Error::InvalidArgument("start dimension mismatch".into()));
    }
    if !bbox.contains(start) {
        return Err(Error::OutsideBox(start.to_vec()));
    }
    let n = bbox.checked_len(MAX_SITES)?;
    let target_sites = target.materialize(&bbox)?;

    // Roles: boundary frame is killed, target sites are absorbing (a target
    // site on the frame is a target, not a kill).
    let mut roles = vec![UPDATE; n];
    {
        // Odometer over sites in flat order; mark frame sites.
        let mut coord = bbox.lo().to_vec();
        for role in roles.iter_mut() {
            if coord
                .iter()
                .enumerate()
                .any(|(j, &c)| c == bbox.lo()[j] || c == bbox.hi()[j])
            {
                *role = PINNED_ZERO;
            }
            for j in (0..d).rev() {
                coord[j] += 1;
                if coord[j] <= bbox.hi()[j] {
                    break;
                }
                coord[j] = bbox.lo()[j];
            }
        }
    }
    for t in &target_sites {
        roles[bbox.index_of(t).unwrap()] = PINNED_ONE;
    }

    // Strides: +e_{j+1} moves the flat index by strides[j].
    let mut strides = vec![1i64; d];
    for j in (0..d.saturating_sub(1)).rev() {
        let side = bbox.hi()[j + 1] - bbox.lo()[j + 1] + 1;
        strides[j] = strides[j + 1] * side;
    }
    let mut offsets = vec![0i64; 2 * d];
    for j in 0..d {
        offsets[2 * j] = strides[j];
        offsets[2 * j + 1] = -strides[j];
    }

    // Per-site damping and gathered jump probabilities.
    let theta = env.theta_table(lambda);
    let damp_catalog: Vec<f64> = theta.iter().map(|t| (-t).exp()).collect();
    let mut damp = vec![0.0f64; n];
    let mut probs = vec![0.0f64; n * 2 * d];
    for i in 0..n {
        damp[i] = damp_catalog[env.law_index_by_flat(i)];
        probs[i * 2 * d..(i + 1) * 2 * d].copy_from_slice(env.kernel_by_flat(i).probs());
    }

    let order: Vec<u32> = (0..n as u32).filter(|&i| roles[i as usize] == UPDATE).collect();

    // Initial field: pinned cells, plus any warm-start values carried over
    // from a previous (smaller) box. Those are pointwise below the new fixed
    // point, so monotone convergence is preserved.
    let mut values = vec![0.0f64; n];
    for (i, &r) in roles.iter().enumerate() {
        if r == PINNED_ONE {
            values[i] = 1.0;
        }
    }
    if let Some(prev) = warm {
        for (old_flat, site) in prev.bbox().iter_sites().enumerate() {
            if let Some(new_flat) = bbox.index_of(&site) {
                if roles[new_flat] == UPDATE {
                    values[new_flat] = prev.values[old_flat];
                }
            }
        }
    }

    let mut sweeps = 0u64;
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let mut forward = true;
    let mut recent: Vec<f64> = Vec::new(); // last few sup-changes
    let two_d = 2 * d;

    while sweeps < opts.max_sweeps {
        let mut delta = 0.0f64;
        let mut one_site = |i: usize| {
            let base = i * two_d;
            let mut s = 0.0;
            for (t, &off) in offsets.iter().enumerate() {
                s += probs[base + t] * values[(i as i64 + off) as usize];
            }
            let new = damp[i] * s;
            let change = (new - values[i]).abs();
            if change > delta {
                delta = change;
            }
            values[i] = new;
        };
        if forward {
            for &i in &order {
                one_site(i as usize);
            }
        } else {
            for &i in order.iter().rev() {
                one_site(i as usize);
            }
        }
        forward = !forward;
        sweeps += 1;

        if delta == 0.0 {
            converged = true;
            residual = 0.0;
            break;
        }
        recent.push(delta);
        if recent.len() > 4 {
            recent.remove(0);
        }
        if recent.len() == 4 {
            let ratios: Vec<f64> =
                (1..4).map(|k| recent[k] / recent[k - 1]).collect();
            if ratios.iter().all(|&r| r < 1.0) {
                let rho = ratios.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
                let est = delta * rho / (1.0 - rho);
                residual = est;
                if est <= opts.tol {
                    converged = true;
                    break;
                }
            }
        }
    }

    Ok(CrossingSolution {
        bbox,
        lambda,
        start: start.to_vec(),
        values,
        target: target_sites,
        sweeps,
        residual,
        converged,
    })
}

/// Solve the killed crossing field on the environment's box.
pub fn solve_crossing(
    env: &EnvironmentBox,
    start: &[i64],
    target: &Target,
    lambda: f64,
    opts: &SolveOptions,
) -> Result<CrossingSolution> {
    solve_inner(env, start, target, lambda, opts, None)
}

/// Crossing costs both ways between two sites, and their symmetrization
/// `d = max(a(x, y), a(y, x))`, on the environment's own box.
#[derive(Clone, Debug)]
pub struct CrossingCost {
    pub a: f64,
    pub a_reverse: f64,
    pub d: f64,
    pub converged: bool,
    /// The field underflowed to zero at a start site, so a cost is `+inf`.
    pub underflow: bool,
}

pub fn crossing_cost(
    env: &EnvironmentBox,
    x: &[i64],
    y: &[i64],
    lambda: f64,
    opts: &SolveOptions,
) -> Result<CrossingCost> {
    let there = solve_inner(env, x, &Target::Sites(vec![y.to_vec()]), lambda, opts, None)?;
    let back = solve_inner(env, y, &Target::Sites(vec![x.to_vec()]), lambda, opts, None)?;
    let a = there.a();
    let a_reverse = back.a();
    Ok(CrossingCost {
        a,
        a_reverse,
        d: a.max(a_reverse),
        converged: there.converged && back.converged,
        underflow: a.is_infinite() || a_reverse.is_infinite(),
    })
}

#[derive(Clone, Debug)]
pub struct AdaptiveOptions {
    pub solve: SolveOptions,
    /// Margin of the first box around start and target.
    pub initial_margin: i64,
    /// Sites added to each free face per growth round.
    pub increment: i64,
    /// Stop when the crossing cost moves less than `tol_abs + tol_rel * |a|`
    /// between rounds.
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_rounds: u32,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            solve: SolveOptions::default(),
            initial_margin: 10,
            increment: 10,
            tol_abs: 1e-8,
            tol_rel: 1e-8,
            max_rounds: 64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AdaptiveSolution {
    pub solution: CrossingSolution,
    /// Crossing cost from the start site on the final box.
    pub a: f64,
    pub rounds: u32,
    /// Crossing cost after each round.
    pub history: Vec<f64>,
    /// Cost stabilized between rounds and the final solves converged. When
    /// false the estimate is still a valid upper bound on the infinite-volume
    /// cost, just not a resolved one.
    pub box_converged: bool,
}

/// Free/pinned growth pattern per axis for a target. A hyperplane target
/// pins the box face that carries the plane; everything else grows.
fn growth_margins(
    d: usize,
    start: &[i64],
    target: &Target,
    amount: i64,
) -> Result<Vec<(i64, i64)>> {
    let mut m = vec![(amount, amount); d];
    if let Target::Hyperplane { axis, level } = target {
        if *axis >= d {
            return Err(Error::InvalidArgument("hyperplane axis out of range".into()));
        }
        if *level == start[*axis] {
            return Err(Error::InvalidArgument(
                "start lies on the target hyperplane".into(),
            ));
        }
        if *level > start[*axis] {
            m[*axis].1 = 0;
        } else {
            m[*axis].0 = 0;
        }
    }
    Ok(m)
}

/// Solve on boxes grown from a seeded environment distribution until the
/// crossing cost from `start` stabilizes. Each round re-samples the same
/// infinite environment restricted to the larger box (site-keyed draws), and
/// the previous field warm-starts the sweeps.
pub fn adaptive_box(
    spec: &EnvironmentSpec,
    seed: u64,
    start: &[i64],
    target: &Target,
    lambda: f64,
    opts: &AdaptiveOptions,
) -> Result<AdaptiveSolution> {
    spec.validate()?;
    let d = spec.dimension;
    if start.len() != d {
        return Err(Error::InvalidArgument("start dimension mismatch".into()));
    }

    // Anchor points: the start plus the target's extent.
    let mut anchors: Vec<Site> = vec![start.to_vec()];
    match target {
        Target::Sites(sites) => anchors.extend(sites.iter().cloned()),
        Target::Hyperplane { axis, level } => {
            let mut proj = start.to_vec();
            proj[*axis] = *level;
            anchors.push(proj);
        }
    }
    let anchor_refs: Vec<&[i64]> = anchors.iter().map(|s| s.as_slice()).collect();
    let margins = growth_margins(d, start, target, opts.initial_margin.max(1))?;
    let mut bbox = LatticeBox::bounding(&anchor_refs)?.inflate_axes(&margins)?;
    let grow = growth_margins(d, start, target, opts.increment.max(1))?;

    let mut history = Vec::new();
    let mut prev: Option<CrossingSolution> = None;
    let mut rounds = 0u32;
    loop {
        let env = sample_environment(spec, &bbox, seed)?;
        let sol = solve_inner(&env, start, target, lambda, &opts.solve, prev.as_ref())?;
        let a = sol.a();
        rounds += 1;
        history.push(a);
        let stable = history.len() >= 2 && {
            let last = history[history.len() - 2];
            last.is_finite()
                && a.is_finite()
                && (last - a).abs() <= opts.tol_abs + opts.tol_rel * a.abs()
        };
        let prev_converged = prev.as_ref().map(|p| p.converged).unwrap_or(false);
        if stable && sol.converged && prev_converged {
            return Ok(AdaptiveSolution {
                a,
                solution: sol,
                rounds,
                history,
                box_converged: true,
            });
        }
        // A field that keeps underflowing to zero will not come back: the
        // cost is beyond floating-point range. Bail out flagged instead of
        // growing forever.
        let hopeless = history.len() >= 3
            && history[history.len() - 3..].iter().all(|v| v.is_infinite())
            && sol.converged;
        if rounds >= opts.max_rounds || hopeless {
            return Ok(AdaptiveSolution {
                a,
                solution: sol,
                rounds,
                history,
                box_converged: false,
            });
        }
        bbox = bbox.inflate_axes(&grow)?;
        prev = Some(sol);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;
    use crate::oracle1d::{exact_a_1d, Oracle1dOptions};
    use crate::scenery::{
        sample_environment, EnvironmentBox, EnvironmentSpec, HoldingLaw, TransitionKernel,
        WeightedKernel, WeightedLaw,
    };
    use approx::assert_relative_eq;

    fn env_1d(lo: i64, hi: i64, p: f64, law: HoldingLaw) -> EnvironmentBox {
        EnvironmentBox::homogeneous(
            LatticeBox::new(vec![lo], vec![hi]).unwrap(),
            TransitionKernel::one_dim(p).unwrap(),
            law,
        )
        .unwrap()
    }

    fn random_2d_spec() -> EnvironmentSpec {
        EnvironmentSpec {
            dimension: 2,
            kernels: vec![
                WeightedKernel { weight: 2.0, probabilities: vec![0.25; 4] },
                WeightedKernel { weight: 1.0, probabilities: vec![0.4, 0.1, 0.3, 0.2] },
            ],
            laws: vec![
                WeightedLaw { weight: 1.0, law: HoldingLaw::Deterministic { value: 0.5 } },
                WeightedLaw { weight: 1.0, law: HoldingLaw::Exponential { rate: 2.0 } },
            ],
        }
    }

    #[test]
    fn gamblers_ruin_is_exact_at_lambda_zero() {
        // Symmetric walk killed at -9, absorbed at 1: hit probability from 0
        // is 9/10. Holding times are irrelevant at lambda = 0.
        let env = env_1d(-9, 1, 0.5, HoldingLaw::Deterministic { value: 1.0 });
        let sol = solve_crossing(
            &env,
            &[0],
            &Target::site(vec![1]),
            0.0,
            &SolveOptions::default(),
        )
        .unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.start_value(), 0.9, epsilon = 1e-9);
        // and from -5: 4/10
        assert_relative_eq!(sol.value_at(&[-5]).unwrap(), 0.4, epsilon = 1e-9);
    }

    #[test]
    fn unit_crossing_matches_one_dim_oracle() {
        let env = env_1d(-40, 2, 0.5, HoldingLaw::Deterministic { value: 1.0 });
        let sol = solve_crossing(
            &env,
            &[0],
            &Target::site(vec![1]),
            1.0,
            &SolveOptions { tol: 1e-12, ..Default::default() },
        )
        .unwrap();
        assert!(sol.converged);
        assert_relative_eq!(sol.start_value(), 0.190624, max_relative = 3e-6);
        let oracle = exact_a_1d(&env, 0, 1, 1.0, &Oracle1dOptions::default()).unwrap();
        assert_relative_eq!(sol.a(), oracle.a, epsilon = 1e-9);
    }

    #[test]
    fn cost_is_monotone_in_lambda() {
        let env = env_1d(-25, 6, 0.5, HoldingLaw::Exponential { rate: 1.0 });
        let mut last = 0.0;
        for &lam in &[0.25, 0.5, 1.0, 2.0] {
            let sol = solve_crossing(
                &env,
                &[0],
                &Target::site(vec![5]),
                lam,
                &SolveOptions::default(),
            )
            .unwrap();
            assert!(sol.converged);
            let a = sol.a();
            assert!(a > last, "a({lam}) = {a} not above {last}");
            last = a;
        }
    }

    #[test]
    fn triangle_inequality_on_random_environment() {
        let spec = random_2d_spec();
        let bbox = LatticeBox::new(vec![-8, -8], vec![12, 12]).unwrap();
        let env = sample_environment(&spec, &bbox, 99).unwrap();
        let opts = SolveOptions { tol: 1e-11, ..Default::default() };
        let (x, y, z) = ([0i64, 0], [2i64, 1], [5i64, 3]);
        let axy = solve_crossing(&env, &x, &Target::site(y.to_vec()), 0.8, &opts)
            .unwrap()
            .a();
        let ayz = solve_crossing(&env, &y, &Target::site(z.to_vec()), 0.8, &opts)
            .unwrap()
            .a();
        let axz = solve_crossing(&env, &x, &Target::site(z.to_vec()), 0.8, &opts)
            .unwrap()
            .a();
        assert!(axz <= axy + ayz + 1e-6, "{axz} vs {axy} + {ayz}");
    }

    #[test]
    fn field_grows_with_the_box() {
        let spec = random_2d_spec();
        let small_box = LatticeBox::new(vec![-4, -4], vec![6, 6]).unwrap();
        let big_box = small_box.inflate(6).unwrap();
        let small = sample_environment(&spec, &small_box, 7).unwrap();
        let big = sample_environment(&spec, &big_box, 7).unwrap();
        let opts = SolveOptions { tol: 1e-12, ..Default::default() };
        let target = Target::site(vec![4, 2]);
        let u_small = solve_crossing(&small, &[0, 0], &target, 0.6, &opts).unwrap();
        let u_big = solve_crossing(&big, &[0, 0], &target, 0.6, &opts).unwrap();
        for site in small_box.iter_sites() {
            let s = u_small.value_at(&site).unwrap();
            let b = u_big.value_at(&site).unwrap();
            assert!(b >= s - 1e-12, "at {site:?}: {b} < {s}");
        }
        assert!(u_big.start_value() > u_small.start_value());
    }

    #[test]
    fn deep_crossing_underflows_to_infinite_cost() {
        // 30 steps at lambda = 50 cost about 1520 nats; the field underflows
        // and the cost is reported as +inf with the underflow flag set.
        let env = env_1d(-5, 31, 0.5, HoldingLaw::Deterministic { value: 1.0 });
        let cost = crossing_cost(&env, &[0], &[30], 50.0, &SolveOptions::default()).unwrap();
        assert!(cost.underflow);
        assert!(cost.a.is_infinite());
    }

    #[test]
    fn symmetrized_cost_takes_the_worse_direction() {
        let env = env_1d(-12, 12, 0.7, HoldingLaw::Deterministic { value: 1.0 });
        let cost = crossing_cost(&env, &[0], &[4], 0.5, &SolveOptions::default()).unwrap();
        assert!(cost.converged);
        assert!(cost.a < cost.a_reverse, "drift should make the return dearer");
        assert_relative_eq!(cost.d, cost.a_reverse);
    }

    #[test]
    fn hyperplane_target_collects_the_full_cross_section() {
        let bbox = LatticeBox::new(vec![-2, -2], vec![2, 2]).unwrap();
        let t = Target::Hyperplane { axis: 0, level: 2 };
        let sites = t.materialize(&bbox).unwrap();
        assert_eq!(sites.len(), 5);
        assert!(sites.iter().all(|s| s[0] == 2));
    }

    #[test]
    fn start_on_target_costs_nothing() {
        let env = env_1d(-5, 5, 0.5, HoldingLaw::Exponential { rate: 1.0 });
        let sol = solve_crossing(
            &env,
            &[2],
            &Target::site(vec![2]),
            1.3,
            &SolveOptions::default(),
        )
        .unwrap();
        assert_eq!(sol.start_value(), 1.0);
        assert_eq!(sol.a(), 0.0);
    }

    #[test]
    fn adaptive_box_reaches_the_infinite_volume_cost() {
        let spec = EnvironmentSpec::homogeneous(
            TransitionKernel::uniform(1),
            HoldingLaw::Deterministic { value: 1.0 },
        );
        let out = adaptive_box(
            &spec,
            5,
            &[0],
            &Target::site(vec![5]),
            1.0,
            &AdaptiveOptions::default(),
        )
        .unwrap();
        assert!(out.box_converged);
        let alpha = (1.0f64.exp()).acosh();
        assert_relative_eq!(out.a, 5.0 * alpha, epsilon = 1e-7);
        // history is nonincreasing: larger boxes only add paths
        for w in out.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn adaptive_hyperplane_matches_point_target_in_one_dimension() {
        let spec = EnvironmentSpec::homogeneous(
            TransitionKernel::uniform(1),
            HoldingLaw::Exponential { rate: 1.0 },
        );
        let opts = AdaptiveOptions::default();
        let plane = adaptive_box(
            &spec,
            3,
            &[0],
            &Target::Hyperplane { axis: 0, level: 6 },
            0.9,
            &opts,
        )
        .unwrap();
        let point = adaptive_box(&spec, 3, &[0], &Target::site(vec![6]), 0.9, &opts).unwrap();
        assert!(plane.box_converged && point.box_converged);
        assert_relative_eq!(plane.a, point.a, epsilon = 1e-7);
        // the hyperplane face is pinned: the box must end exactly at 6
        assert_eq!(plane.solution.bbox().hi()[0], 6);
    }
}

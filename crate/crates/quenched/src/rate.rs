//! Large-deviation rate function by Legendre transform.
//!
//! The decay rate of `P(Z_t is near t v)` is
//!
//! ```text
//!     I(v x^) = sup_{0 <= lambda <= lambda_max} ( v * alpha_lambda(x^) - lambda ),
//! ```
//!
//! the Legendre transform of the Lyapunov exponent along the unit direction
//! `x^`. The objective is concave in `lambda` (each crossing value is
//! log-convex in `lambda`), so the supremum is located by golden-section
//! search, with three safeguards:
//!
//! * every evaluation is kept and checked against midpoint concavity — a
//!   violation beyond noise is an error, not a silently wrong maximum;
//! * if the objective is still rising at `lambda_max`, the supremum is not
//!   attained inside the window and the result says so;
//! * flat maxima are resolved to the least maximizer by bisection, so
//!   plateau cases report the left edge of the plateau.
//!
//! Noisy (estimated) Lyapunov sources propagate their replica standard
//! errors into an interval around the transform value.

use crate::lyapunov::{estimate_alpha, EstimateOptions};
use crate::scenery::{EnvironmentSpec, HoldingLaw, ScaleFamily};
use crate::{Error, Result};
use std::collections::HashMap;
use std::sync::Mutex;

/// One Lyapunov evaluation: value, replica noise, trust.
#[derive(Clone, Copy, Debug)]
pub struct AlphaPoint {
    pub value: f64,
    pub std_error: f64,
    pub flagged: bool,
}

/// Anything that can produce `alpha_lambda` for a fixed direction.
pub trait AlphaSource: Sync {
    fn alpha(&self, lambda: f64) -> Result<AlphaPoint>;
    /// L1 norm of the direction the source measures; the transform rescales
    /// by it so speeds are per unit lattice distance.
    fn direction_norm(&self) -> f64;
}

/// Exact closed-form source (unit direction norm unless stated).
pub struct ClosedFormSource<F: Fn(f64) -> f64 + Sync> {
    pub f: F,
    pub norm: f64,
}

impl<F: Fn(f64) -> f64 + Sync> ClosedFormSource<F> {
    pub fn new(f: F) -> Self {
        ClosedFormSource { f, norm: 1.0 }
    }
}

impl<F: Fn(f64) -> f64 + Sync> AlphaSource for ClosedFormSource<F> {
    fn alpha(&self, lambda: f64) -> Result<AlphaPoint> {
        Ok(AlphaPoint { value: (self.f)(lambda), std_error: 0.0, flagged: false })
    }

    fn direction_norm(&self) -> f64 {
        self.norm
    }
}

/// Lyapunov estimates over environment replicas, cached per lambda so curve
/// evaluations do not repeat work.
pub struct EstimateSource {
    spec: EnvironmentSpec,
    direction: Vec<i64>,
    seed: u64,
    opts: EstimateOptions,
    cache: Mutex<HashMap<u64, AlphaPoint>>,
}

impl EstimateSource {
    pub fn new(
        spec: EnvironmentSpec,
        direction: Vec<i64>,
        seed: u64,
        opts: EstimateOptions,
    ) -> Result<Self> {
        spec.validate()?;
        Ok(EstimateSource { spec, direction, seed, opts, cache: Mutex::new(HashMap::new()) })
    }
}

impl AlphaSource for EstimateSource {
    fn alpha(&self, lambda: f64) -> Result<AlphaPoint> {
        let key = lambda.to_bits();
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(*hit);
        }
        let est = estimate_alpha(&self.spec, &self.direction, lambda, self.seed, &self.opts)?;
        let point =
            AlphaPoint { value: est.alpha, std_error: est.alpha_se, flagged: est.flagged };
        self.cache.lock().unwrap().insert(key, point);
        Ok(point)
    }

    fn direction_norm(&self) -> f64 {
        crate::lattice::l1_norm_int(&self.direction) as f64
    }
}

/// Result of maximizing a concave objective over `[0, lambda_max]`.
#[derive(Clone, Debug)]
pub struct SupResult {
    pub value: f64,
    pub std_error: f64,
    pub arg: f64,
    /// False when the objective is still rising at `lambda_max`: the true
    /// supremum lies outside the window and `value` is only a lower bound.
    pub attained: bool,
    pub evaluations: u32,
}

struct Sampled {
    lambda: f64,
    value: f64,
    se: f64,
}

/// Maximize a concave `g` over `[0, lambda_max]` to argument tolerance `tol`.
///
/// `g` returns (value, standard error); exact objectives report zero error.
/// Concavity is verified on every sampled triple up to noise; plateaus are
/// resolved to their least maximizer.
pub fn legendre_sup(
    g: &dyn Fn(f64) -> Result<(f64, f64)>,
    lambda_max: f64,
    tol: f64,
) -> Result<SupResult> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(Error::InvalidArgument("lambda_max must be positive and finite".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let mut samples: Vec<Sampled> = Vec::new();
    let mut evaluations = 0u32;
    let eval = |lam: f64, samples: &mut Vec<Sampled>, evals: &mut u32| -> Result<(f64, f64)> {
        // reuse an existing sample at the same argument
        if let Some(s) = samples.iter().find(|s| s.lambda == lam) {
            return Ok((s.value, s.se));
        }
        let (v, se) = g(lam)?;
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "objective is not finite at lambda = {lam}"
            )));
        }
        samples.push(Sampled { lambda: lam, value: v, se });
        *evals += 1;
        Ok((v, se))
    };

    // Right-edge samples: the window endpoint and one step inside it.
    let edge_step = (1e-4 * lambda_max).max(tol.min(lambda_max / 8.0));
    eval(lambda_max, &mut samples, &mut evaluations)?;
    eval(lambda_max - edge_step, &mut samples, &mut evaluations)?;

    // Coarse ladder localizes the maximum; with noisy sources this is what
    // keeps golden section from chasing replica noise across the window.
    // The ladder starts strictly above zero: sources backed by crossing
    // estimates degrade as lambda -> 0 (costs vanish, boxes grow), and the
    // zero endpoint is only ever probed during plateau resolution below.
    let lo_rung = (1e-5 * lambda_max).min(edge_step);
    let rungs = 24;
    let mut ladder = Vec::with_capacity(rungs + 1);
    for k in 0..=rungs {
        // the top rung must reproduce lambda_max exactly so the attainment
        // test below can recognize it by equality
        let rung = lo_rung * (lambda_max / lo_rung).powf(k as f64 / rungs as f64);
        ladder.push(rung.min(lambda_max));
    }
    // Walk the ladder from the top down and stop once the objective
    // strictly decreases leftward. For concave g, g(l) < g(l') with l < l'
    // forces a positive chord slope, and slopes only grow to the left, so
    // every rung below l is provably smaller than values already seen.
    // Skipping them loses nothing — and for estimate-backed sources the
    // smallest tilts are precisely the expensive ones (vanishing killing
    // needs the largest boxes), so the prune is what keeps rate evaluation
    // affordable above one dimension. Noisy sources only prune on a three
    // sigma decrease.
    let mut above: Option<(f64, f64)> = None;
    for &lam in ladder.iter().rev() {
        let (v, se) = eval(lam, &mut samples, &mut evaluations)?;
        if let Some((v_above, se_above)) = above {
            if v < v_above - 3.0 * (se + se_above) {
                break;
            }
        }
        above = Some((v, se));
    }
    let mut best = 0usize;
    samples.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    for (i, s) in samples.iter().enumerate() {
        if s.value > samples[best].value {
            best = i;
        }
    }

    // Attainment: for a concave objective with an interior maximum, some
    // sample strictly inside beats the endpoint (ties break toward the
    // interior). Only when the maximum sample is the endpoint itself is the
    // objective still rising there and the true supremum beyond the window.
    // A local slope probe would misread noisy sources near flat maxima; the
    // global comparison is robust to replica noise. The half-step slack
    // absorbs rounding in the top ladder rung.
    if samples[best].lambda >= lambda_max - 0.5 * edge_step {
        check_concavity(&samples)?;
        return Ok(SupResult {
            value: samples[best].value,
            std_error: samples[best].se,
            arg: lambda_max,
            attained: false,
            evaluations,
        });
    }
    let lo = if best == 0 { 0.0 } else { samples[best - 1].lambda };
    let hi = if best + 1 >= samples.len() { lambda_max } else { samples[best + 1].lambda };

    // Golden-section search inside the bracket.
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, _) = eval(c, &mut samples, &mut evaluations)?;
    let (mut gd, _) = eval(d, &mut samples, &mut evaluations)?;
    while b - a > tol {
        if gc >= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = eval(c, &mut samples, &mut evaluations)?.0;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = eval(d, &mut samples, &mut evaluations)?.0;
        }
        if evaluations > 500 {
            break;
        }
    }
    samples.sort_by(|x, y| x.lambda.partial_cmp(&y.lambda).unwrap());
    check_concavity(&samples)?;

    let (mut best_arg, mut best_val, mut best_se) = (0.0, f64::NEG_INFINITY, 0.0);
    for s in &samples {
        if s.value > best_val {
            best_val = s.value;
            best_arg = s.lambda;
            best_se = s.se;
        }
    }

    // Plateau detection: if the objective is still at its maximum a wide
    // window to the left, resolve the least maximizer by bisection. The
    // probe never lands on zero itself (halving the maximizer instead), so
    // estimate-backed sources only face lambda = 0 inside a real plateau.
    let scale = 1.0 + best_val.abs();
    let plateau_tol = 1e-9 * scale + 3.0 * best_se;
    let window = (0.05 * lambda_max).max(4.0 * tol);
    let probe = (best_arg - window).max(0.5 * best_arg);
    let arg = if probe < best_arg {
        let (g_probe, _) = eval(probe, &mut samples, &mut evaluations)?;
        if g_probe >= best_val - plateau_tol {
            // walk the plateau's left edge down to resolution
            let (mut lo, mut hi) = (0.0f64, probe);
            if eval(0.0, &mut samples, &mut evaluations)?.0 >= best_val - plateau_tol {
                hi = 0.0;
            }
            while hi - lo > tol.min(1e-9 * (1.0 + lambda_max)) && hi > 0.0 {
                let mid = 0.5 * (lo + hi);
                let (gm, _) = eval(mid, &mut samples, &mut evaluations)?;
                if gm >= best_val - plateau_tol {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        } else {
            best_arg
        }
    } else {
        best_arg
    };

    // The plateau walk may sample a point (often lambda = 0) that slightly
    // beats the pre-plateau maximum — e.g. speeds below critical, where the
    // supremum value 0 sits exactly at the left endpoint. Report the best
    // value seen anywhere; `arg` stays the least maximizer, which by the
    // bisection invariant is within plateau tolerance of it.
    for s in &samples {
        if s.value > best_val {
            best_val = s.value;
            best_se = s.se;
        }
    }

    Ok(SupResult { value: best_val, std_error: best_se, arg, attained: true, evaluations })
}

/// Midpoint concavity on consecutive sampled triples, with noise slack.
fn check_concavity(samples: &[Sampled]) -> Result<()> {
    let scale = 1.0 + samples.iter().fold(0.0f64, |m, s| m.max(s.value.abs()));
    for w in samples.windows(3) {
        let (a, m, c) = (&w[0], &w[1], &w[2]);
        if c.lambda - a.lambda < 1e-12 {
            continue;
        }
        let t = (m.lambda - a.lambda) / (c.lambda - a.lambda);
        let chord = a.value + t * (c.value - a.value);
        let slack = 1e-7 * scale + 3.0 * (a.se + m.se + c.se);
        if m.value < chord - slack {
            return Err(Error::NotConcave(format!(
                "chord above objective at lambda = {:.6e}: g = {:.12e}, chord = {:.12e} \
                 (neighbours at {:.6e}, {:.6e})",
                m.lambda, m.value, chord, a.lambda, c.lambda
            )));
        }
    }
    Ok(())
}

/// One point of the rate function.
#[derive(Clone, Debug)]
pub struct RatePoint {
    /// Speed along the unit direction, in sites per unit time.
    pub speed: f64,
    pub value: f64,
    /// `value` plus/minus three standard errors of the maximizing
    /// evaluation; degenerate for exact sources.
    pub interval: (f64, f64),
    pub lambda_star: f64,
    pub attained: bool,
    pub evaluations: u32,
    pub flagged: bool,
}

/// `I(speed * x^)` for the source's direction `x^` (unit `l1` length).
pub fn rate_point(
    source: &dyn AlphaSource,
    speed: f64,
    lambda_max: f64,
    tol: f64,
) -> Result<RatePoint> {
    if speed < 0.0 {
        return Err(Error::InvalidArgument("speed must be nonnegative".into()));
    }
    let norm = source.direction_norm();
    let flagged = std::sync::atomic::AtomicBool::new(false);
    let g = |lambda: f64| -> Result<(f64, f64)> {
        let p = source.alpha(lambda)?;
        if p.flagged {
            flagged.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        let s = speed / norm;
        Ok((s * p.value - lambda, s * p.std_error))
    };
    let sup = legendre_sup(&g, lambda_max, tol)?;
    Ok(RatePoint {
        speed,
        value: sup.value,
        interval: (sup.value - 3.0 * sup.std_error, sup.value + 3.0 * sup.std_error),
        lambda_star: sup.arg,
        attained: sup.attained,
        evaluations: sup.evaluations,
        flagged: flagged.load(std::sync::atomic::Ordering::Relaxed),
    })
}

#[derive(Clone, Debug)]
pub struct RateCurve {
    pub speeds: Vec<f64>,
    pub points: Vec<RatePoint>,
}

/// The rate function on a grid of speeds. Sources cache per-lambda work, so
/// curve evaluation shares Lyapunov estimates across speeds.
pub fn rate_curve(
    source: &dyn AlphaSource,
    speeds: &[f64],
    lambda_max: f64,
    tol: f64,
) -> Result<RateCurve> {
    let mut points = Vec::with_capacity(speeds.len());
    for &v in speeds {
        points.push(rate_point(source, v, lambda_max, tol)?);
    }
    Ok(RateCurve { speeds: speeds.to_vec(), points })
}

/// Which end of the speed axis an asymptote report describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    SmallSpeed,
    LargeSpeed,
}

#[derive(Clone, Debug)]
pub struct AsymptoteReport {
    pub regime: Regime,
    /// The closed-form asymptotic value.
    pub closed_form: f64,
    /// A computed counterpart when one is available in budget.
    pub computed: Option<f64>,
    /// computed / closed_form.
    pub ratio: Option<f64>,
    pub flagged: bool,
    pub note: String,
}

/// Small-speed comparison against the diffusive closed form
/// `(d / 2) * mean_holding * v^2`, valid for uniform jump kernels.
pub fn small_x_asymptote(
    spec: &EnvironmentSpec,
    speed: f64,
    seed: u64,
    opts: &EstimateOptions,
) -> Result<AsymptoteReport> {
    spec.validate()?;
    if !(speed > 0.0) {
        return Err(Error::InvalidArgument("speed must be positive".into()));
    }
    let d = spec.dimension;
    let uniform = 1.0 / (2 * d) as f64;
    for k in &spec.kernels {
        if k.probabilities.iter().any(|&p| (p - uniform).abs() > 1e-12) {
            return Err(Error::InvalidArgument(
                "the diffusive comparator needs uniform jump kernels".into(),
            ));
        }
    }
    let mbar = spec.mean_holding();
    let closed = 0.5 * d as f64 * mbar * speed * speed;
    let mut direction = vec![0i64; d];
    direction[0] = 1;
    let source = EstimateSource::new(spec.clone(), direction, seed, opts.clone())?;
    // The maximizer sits at the scale of `closed`; a wide multiple is ample.
    let lambda_max = 200.0 * closed + 1e-6;
    let point = rate_point(&source, speed, lambda_max, lambda_max * 1e-7)?;
    Ok(AsymptoteReport {
        regime: Regime::SmallSpeed,
        closed_form: closed,
        computed: Some(point.value),
        ratio: Some(point.value / closed),
        flagged: point.flagged || !point.attained,
        note: format!(
            "diffusive regime: I({speed} x^) against (d/2) * mean_holding * v^2; \
             the ratio approaches one as v -> 0"
        ),
    })
}

/// `sup_l (c log l - l) = c (log c - 1)`: the logarithmic-scale shape.
pub fn log_scale_closed_form(c: f64) -> f64 {
    c * (c.ln() - 1.0)
}

/// `sup_l (c l^p - l)` for `p = gamma / (1 + gamma)`:
/// `c^{1+gamma} (gamma / (1+gamma))^gamma / (1 + gamma)`.
pub fn power_scale_closed_form(gamma: f64, c: f64) -> f64 {
    let g1 = 1.0 + gamma;
    c.powf(g1) * (gamma / g1).powf(gamma) / g1
}

/// Large-speed asymptote of the rate function for a single holding law:
/// `I(l x) ~ sup_lambda ( l nu theta_lambda - lambda )` with `theta_lambda`
/// replaced by its Tauberian scale. `nu` is the relevant first-passage time
/// constant and `l` the speed multiple.
pub fn large_x_asymptote(law: &HoldingLaw, nu: f64, ell: f64) -> Result<AsymptoteReport> {
    law.validate()?;
    if !(nu > 0.0) || !(ell > 0.0) {
        return Err(Error::InvalidArgument("nu and ell must be positive".into()));
    }
    let scale = law.tauberian_scale();
    let c = ell * nu * scale.theta;
    let (closed, note, boundary) = match scale.family {
        ScaleFamily::Linear => {
            if c > 1.0 {
                (
                    f64::INFINITY,
                    "linear scale with c > 1: speeds beyond the holding floor are \
                     impossible and the rate is infinite"
                        .to_string(),
                    false,
                )
            } else {
                (
                    0.0,
                    "linear scale with c <= 1: the asymptote degenerates at the \
                     boundary of feasible speeds"
                        .to_string(),
                    true,
                )
            }
        }
        ScaleFamily::Log => (
            log_scale_closed_form(c),
            "logarithmic scale: c (log c - 1); meaningful for c well above e".to_string(),
            c <= std::f64::consts::E,
        ),
        ScaleFamily::Power { exponent } => {
            let gamma = exponent / (1.0 - exponent);
            (
                power_scale_closed_form(gamma, c),
                format!("power scale with exponent {exponent:.6}"),
                false,
            )
        }
    };

    // Cross-evaluate the supremum with the exact transform when finite.
    let computed = if closed.is_finite() && !boundary {
        let g = |lambda: f64| -> Result<(f64, f64)> {
            Ok((ell * nu * law.log_laplace(lambda) - lambda, 0.0))
        };
        let lambda_max = match scale.family {
            ScaleFamily::Log => 40.0 * c + 40.0,
            ScaleFamily::Power { exponent } => {
                let gamma = exponent / (1.0 - exponent);
                40.0 * (c * exponent).powf(1.0 + gamma) + 40.0
            }
            ScaleFamily::Linear => 1e6,
        };
        let sup = legendre_sup(&g, lambda_max, lambda_max * 1e-8)?;
        if sup.attained {
            Some(sup.value)
        } else {
            None
        }
    } else {
        None
    };
    let ratio = computed.map(|v| v / closed);
    Ok(AsymptoteReport {
        regime: Regime::LargeSpeed,
        closed_form: closed,
        computed,
        ratio,
        flagged: boundary,
        note,
    })
}

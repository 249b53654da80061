//! Random environments: transition kernels, holding laws, and seeded boxes.
//!
//! An environment assigns every site of a box a nearest-neighbour transition
//! kernel `omega(z, .)` and a holding-time law `sigma_z`, drawn independently
//! from finite weighted catalogues. Assignments are a pure function of
//! `(master seed, site)`, so enlarging a box never changes existing sites.
//!
//! The holding law enters the crossing functionals only through its
//! log-Laplace exponent
//!
//! ```text
//!     theta_lambda = -log ∫ exp(-lambda s) sigma(ds),
//! ```
//!
//! available in closed form for the deterministic, exponential, and gamma
//! families and by log-domain adaptive quadrature for the two families with
//! prescribed behaviour at zero. For large lambda, theta_lambda grows on a
//! family-specific scale `L(lambda)` with constant `Theta`; these Tauberian
//! scales are what connects the walk to first-passage percolation.

use crate::lattice::{direction_vector, LatticeBox};
use crate::quadrature::log_integral_exp;
use crate::rng::{stream, CounterRng};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Nearest-neighbour transition probabilities in the crate's direction order
/// (+e1, -e1, +e2, -e2, ...). Strictly positive, summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransitionKernel {
    probs: Vec<f64>,
}

impl TransitionKernel {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let k = TransitionKernel { probs };
        k.validate()?;
        Ok(k)
    }

    /// The simple random walk kernel in dimension `d`.
    pub fn uniform(d: usize) -> Self {
        TransitionKernel {
            probs: vec![1.0 / (2 * d) as f64; 2 * d],
        }
    }

    /// One-dimensional kernel with right probability `p`.
    pub fn one_dim(p: f64) -> Result<Self> {
        TransitionKernel::new(vec![p, 1.0 - p])
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.len() < 2 || self.probs.len() % 2 != 0 {
            return Err(Error::InvalidKernel(format!(
                "need 2d probabilities, got {}",
                self.probs.len()
            )));
        }
        if self.probs.iter().any(|&p| !(p > 0.0) || p >= 1.0) {
            return Err(Error::InvalidKernel(
                "probabilities must lie strictly inside (0, 1)".into(),
            ));
        }
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidKernel(format!("probabilities sum to {s}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.probs.len() / 2
    }

    #[inline(always)]
    pub fn prob(&self, dir: usize) -> f64 {
        self.probs[dir]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Mean displacement per step.
    pub fn drift(&self) -> Vec<f64> {
        let d = self.dim();
        let mut v = vec![0.0; d];
        for dir in 0..2 * d {
            let e = direction_vector(d, dir);
            for i in 0..d {
                v[i] += self.probs[dir] * e[i] as f64;
            }
        }
        v
    }

    /// Sample a direction index.
    #[inline]
    pub fn sample(&self, rng: &mut CounterRng) -> usize {
        let u = rng.uniform();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Holding-time laws on (0, ∞) with finite mean.
///
/// `PowerAtZero` has distribution function `F(x) = x^gamma` on [0, 1];
/// `StretchedAtZero` has `F(x) = exp(-x^(-gamma))` and needs `gamma > 1`
/// for a finite mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HoldingLaw {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
    PowerAtZero { exponent: f64 },
    StretchedAtZero { exponent: f64 },
}

impl HoldingLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            HoldingLaw::Deterministic { value } => value > 0.0,
            HoldingLaw::Exponential { rate } => rate > 0.0,
            HoldingLaw::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
            HoldingLaw::PowerAtZero { exponent } => exponent > 0.0,
            // exponent <= 1 has infinite mean, which the model excludes
            HoldingLaw::StretchedAtZero { exponent } => exponent > 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidLaw(format!("{self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            HoldingLaw::Deterministic { value } => value,
            HoldingLaw::Exponential { rate } => 1.0 / rate,
            HoldingLaw::Gamma { shape, scale } => shape * scale,
            HoldingLaw::PowerAtZero { exponent } => exponent / (exponent + 1.0),
            HoldingLaw::StretchedAtZero { exponent } => {
                // Frechet-type mean Γ(1 - 1/gamma)
                ln_gamma(1.0 - 1.0 / exponent).exp()
            }
        }
    }

    /// `theta_lambda = -log E[exp(-lambda tau)]`. Closed form where one
    /// exists, log-domain quadrature otherwise.
    pub fn log_laplace(&self, lambda: f64) -> f64 {
        assert!(lambda >= 0.0, "lambda must be nonnegative");
        match *self {
            HoldingLaw::Deterministic { value } => lambda * value,
            HoldingLaw::Exponential { rate } => (lambda / rate).ln_1p(),
            HoldingLaw::Gamma { shape, scale } => shape * (scale * lambda).ln_1p(),
            _ => self.log_laplace_numeric(lambda),
        }
    }

    /// Quadrature evaluation of `theta_lambda`, valid for every density
    /// family at every `lambda >= 0`. Serves as the independent cross-check
    /// of the closed forms and as the only route for the at-zero families.
    pub fn log_laplace_numeric(&self, lambda: f64) -> f64 {
        assert!(lambda >= 0.0);
        if lambda == 0.0 {
            return 0.0;
        }
        // Integrate the density against exp(-lambda s) in t = log s:
        // ∫ exp(h(t)) dt with h(t) = log density(e^t) + t - lambda e^t.
        let (h, t_star, hi): (Box<dyn Fn(f64) -> f64>, f64, f64) = match *self {
            HoldingLaw::Deterministic { value } => return lambda * value,
            HoldingLaw::Exponential { rate } => (
                Box::new(move |t: f64| rate.ln() + t - (rate + lambda) * t.exp()),
                -(rate + lambda).ln(),
                f64::INFINITY,
            ),
            HoldingLaw::Gamma { shape, scale } => {
                let norm = -ln_gamma(shape) - shape * scale.ln();
                let decay = 1.0 / scale + lambda;
                (
                    Box::new(move |t: f64| norm + shape * t - decay * t.exp()),
                    (shape / decay).ln(),
                    f64::INFINITY,
                )
            }
            HoldingLaw::PowerAtZero { exponent } => {
                let g = exponent;
                (
                    Box::new(move |t: f64| g.ln() + g * t - lambda * t.exp()),
                    (g / lambda).ln().min(0.0),
                    0.0,
                )
            }
            HoldingLaw::StretchedAtZero { exponent } => {
                let g = exponent;
                let h = move |t: f64| g.ln() - g * t - (-g * t).exp() - lambda * t.exp();
                // h'(t) = -g + g e^{-gt} - lambda e^t is strictly decreasing;
                // bisect for its root.
                let dh = |t: f64| -g + g * (-g * t).exp() - lambda * t.exp();
                let (mut a, mut b) = (-700.0 / g.max(1.0), 700.0);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if dh(m) > 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                (Box::new(h), 0.5 * (a + b), f64::INFINITY)
            }
        };
        -log_integral_exp(&*h, t_star, f64::NEG_INFINITY, hi)
    }

    /// Derivative of `theta` in `lambda` (the tilted mean holding time),
    /// by central difference with a relative step.
    pub fn log_laplace_derivative(&self, lambda: f64) -> f64 {
        match *self {
            HoldingLaw::Deterministic { value } => value,
            HoldingLaw::Exponential { rate } => 1.0 / (rate + lambda),
            HoldingLaw::Gamma { shape, scale } => shape * scale / (1.0 + scale * lambda),
            _ => {
                let h = (1e-5 * lambda.max(1.0)).max(1e-7);
                if lambda < h {
                    (self.log_laplace(lambda + h) - self.log_laplace(lambda)) / h
                } else {
                    (self.log_laplace(lambda + h) - self.log_laplace(lambda - h)) / (2.0 * h)
                }
            }
        }
    }

    /// Draw a holding time.
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        match *self {
            HoldingLaw::Deterministic { value } => value,
            HoldingLaw::Exponential { rate } => -rng.uniform_pos().ln() / rate,
            HoldingLaw::Gamma { shape, scale } => rng.gamma(shape, scale),
            HoldingLaw::PowerAtZero { exponent } => rng.uniform_pos().powf(1.0 / exponent),
            HoldingLaw::StretchedAtZero { exponent } => {
                (-rng.uniform_pos().ln()).powf(-1.0 / exponent)
            }
        }
    }

    /// Draw from the exponentially tilted law `exp(-lambda s) sigma(ds) / E[...]`.
    ///
    /// Closed tilts for the deterministic/exponential/gamma families;
    /// rejection from the untilted law otherwise (fine for moderate
    /// `theta_lambda`; the acceptance probability is `exp(-theta)`).
    pub fn sample_tilted(&self, lambda: f64, rng: &mut CounterRng) -> f64 {
        match *self {
            HoldingLaw::Deterministic { value } => value,
            HoldingLaw::Exponential { rate } => -rng.uniform_pos().ln() / (rate + lambda),
            HoldingLaw::Gamma { shape, scale } => {
                rng.gamma(shape, scale / (1.0 + scale * lambda))
            }
            _ => loop {
                let s = self.sample(rng);
                if rng.uniform() < (-lambda * s).exp() {
                    return s;
                }
            },
        }
    }

    /// The large-lambda scale of `theta_lambda` and its constant.
    pub fn tauberian_scale(&self) -> TauberianScale {
        match *self {
            HoldingLaw::Deterministic { value } => TauberianScale {
                family: ScaleFamily::Linear,
                theta: value,
            },
            HoldingLaw::Exponential { .. } => TauberianScale {
                family: ScaleFamily::Log,
                theta: 1.0,
            },
            HoldingLaw::Gamma { shape, .. } => TauberianScale {
                family: ScaleFamily::Log,
                theta: shape,
            },
            HoldingLaw::PowerAtZero { exponent } => TauberianScale {
                family: ScaleFamily::Log,
                theta: exponent,
            },
            HoldingLaw::StretchedAtZero { exponent } => {
                let e = exponent / (exponent + 1.0);
                // No closed constant is assumed; evaluate theta/L at a lambda
                // large enough that L ~ 1e6, where the relative error of the
                // ratio is ~ log(lambda)/L.
                let lam = 10f64.powf(6.0 * (exponent + 1.0) / exponent);
                TauberianScale {
                    family: ScaleFamily::Power { exponent: e },
                    theta: self.log_laplace(lam) / lam.powf(e),
                }
            }
        }
    }
}

/// Normalization scale for `theta_lambda` as `lambda` grows.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scale", rename_all = "snake_case")]
pub enum ScaleFamily {
    /// L(lambda) = lambda: holding times bounded away from zero.
    Linear,
    /// L(lambda) = log(lambda): power-law distribution function at zero.
    Log,
    /// L(lambda) = lambda^exponent with exponent = gamma/(gamma+1).
    Power { exponent: f64 },
}

impl ScaleFamily {
    pub fn l(&self, lambda: f64) -> f64 {
        match *self {
            ScaleFamily::Linear => lambda,
            ScaleFamily::Log => lambda.ln(),
            ScaleFamily::Power { exponent } => lambda.powf(exponent),
        }
    }

    pub fn same_scale(&self, other: &ScaleFamily) -> bool {
        match (self, other) {
            (ScaleFamily::Linear, ScaleFamily::Linear) => true,
            (ScaleFamily::Log, ScaleFamily::Log) => true,
            (ScaleFamily::Power { exponent: a }, ScaleFamily::Power { exponent: b }) => {
                (a - b).abs() < 1e-12
            }
            _ => false,
        }
    }
}

/// A law's growth scale together with the limit constant
/// `Theta = lim theta_lambda / L(lambda)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauberianScale {
    pub family: ScaleFamily,
    pub theta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedKernel {
    pub weight: f64,
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedLaw {
    pub weight: f64,
    #[serde(flatten)]
    pub law: HoldingLaw,
}

/// Distribution of a random environment: weighted catalogues of kernels and
/// laws, drawn independently per site.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub dimension: usize,
    pub kernels: Vec<WeightedKernel>,
    pub laws: Vec<WeightedLaw>,
}

impl EnvironmentSpec {
    /// Homogeneous spec: one kernel, one law.
    pub fn homogeneous(kernel: TransitionKernel, law: HoldingLaw) -> Self {
        EnvironmentSpec {
            dimension: kernel.dim(),
            kernels: vec![WeightedKernel {
                weight: 1.0,
                probabilities: kernel.probs().to_vec(),
            }],
            laws: vec![WeightedLaw { weight: 1.0, law }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.dimension > 8 {
            return Err(Error::InvalidSpec(format!(
                "dimension {} out of range 1..=8",
                self.dimension
            )));
        }
        if self.kernels.is_empty() || self.laws.is_empty() {
            return Err(Error::InvalidSpec(
                "kernel and law catalogues must be nonempty".into(),
            ));
        }
        if self.kernels.len() > u16::MAX as usize || self.laws.len() > u16::MAX as usize {
            return Err(Error::InvalidSpec("catalogue too large".into()));
        }
        for wk in &self.kernels {
            if !(wk.weight > 0.0) {
                return Err(Error::InvalidSpec("kernel weights must be positive".into()));
            }
            let k = TransitionKernel::new(wk.probabilities.clone())?;
            if k.dim() != self.dimension {
                return Err(Error::InvalidSpec(format!(
                    "kernel has dimension {}, spec says {}",
                    k.dim(),
                    self.dimension
                )));
            }
        }
        for wl in &self.laws {
            if !(wl.weight > 0.0) {
                return Err(Error::InvalidSpec("law weights must be positive".into()));
            }
            wl.law.validate()?;
        }
        Ok(())
    }

    pub fn kernel_catalog(&self) -> Result<Vec<TransitionKernel>> {
        self.kernels
            .iter()
            .map(|wk| TransitionKernel::new(wk.probabilities.clone()))
            .collect()
    }

    pub fn law_catalog(&self) -> Vec<HoldingLaw> {
        self.laws.iter().map(|wl| wl.law.clone()).collect()
    }

    fn kernel_weights(&self) -> Vec<f64> {
        normalize(self.kernels.iter().map(|w| w.weight).collect())
    }

    fn law_weights(&self) -> Vec<f64> {
        normalize(self.laws.iter().map(|w| w.weight).collect())
    }

    /// Mean holding time under the law mixture.
    pub fn mean_holding(&self) -> f64 {
        self.law_weights()
            .iter()
            .zip(&self.laws)
            .map(|(w, wl)| w * wl.law.mean())
            .sum()
    }

    /// `E[theta_lambda(0)]` under the law mixture.
    pub fn mean_log_laplace(&self, lambda: f64) -> f64 {
        self.law_weights()
            .iter()
            .zip(&self.laws)
            .map(|(w, wl)| w * wl.law.log_laplace(lambda))
            .sum()
    }

    /// `-log E[exp(-theta_lambda(0))]` under the law mixture.
    pub fn neg_log_mean_transform(&self, lambda: f64) -> f64 {
        -self
            .law_weights()
            .iter()
            .zip(&self.laws)
            .map(|(w, wl)| w * (-wl.law.log_laplace(lambda)).exp())
            .sum::<f64>()
            .ln()
    }

    /// `max_e E[-log omega(0, e)]` over the 2d directions.
    pub fn max_mean_neg_log_kernel(&self) -> f64 {
        let w = self.kernel_weights();
        (0..2 * self.dimension)
            .map(|dir| {
                self.kernels
                    .iter()
                    .zip(&w)
                    .map(|(wk, wi)| -wi * wk.probabilities[dir].ln())
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The common Tauberian scale of the law catalogue, or an error when the
    /// mixture has none (laws whose exponents vary regularly with different
    /// indices, or scales of different kind, admit no single normalization).
    pub fn common_scale(&self) -> Result<ScaleFamily> {
        let scales: Vec<TauberianScale> =
            self.laws.iter().map(|wl| wl.law.tauberian_scale()).collect();
        let first = scales[0].family;
        for (s, wl) in scales.iter().zip(&self.laws).skip(1) {
            if !first.same_scale(&s.family) {
                return Err(Error::NoCommonScale(format!(
                    "law {:?} grows on scale {:?}, but the catalogue starts on {:?}; \
                     mixtures of laws with different regular-variation indices have no \
                     common normalization",
                    wl.law, s.family, first
                )));
            }
        }
        Ok(first)
    }

    /// Per-law Tauberian constants, in catalogue order.
    pub fn theta_constants(&self) -> Vec<f64> {
        self.laws
            .iter()
            .map(|wl| wl.law.tauberian_scale().theta)
            .collect()
    }

    /// Whether the origin lies in the convex hull of the catalogue's drifts,
    /// decided by a phase-1 simplex over the finite support.
    pub fn is_nestling(&self) -> Result<bool> {
        let drifts: Vec<Vec<f64>> = self
            .kernel_catalog()?
            .iter()
            .map(|k| k.drift())
            .collect();
        Ok(zero_in_hull(&drifts))
    }
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    w
}

/// Exact membership of the origin in conv(vectors) via phase-1 simplex with
/// Bland's rule: feasibility of { mu >= 0, sum mu = 1, sum mu v = 0 }.
fn zero_in_hull(vectors: &[Vec<f64>]) -> bool {
    let n = vectors.len();
    let d = vectors[0].len();
    let m = d + 1;
    let cols = n + m;
    // rows: d drift equations (rhs 0), then the mass equation (rhs 1)
    let mut t = vec![vec![0.0f64; cols + 1]; m];
    for (j, v) in vectors.iter().enumerate() {
        for i in 0..d {
            t[i][j] = v[i];
        }
        t[d][j] = 1.0;
    }
    for i in 0..m {
        t[i][n + i] = 1.0;
    }
    t[d][cols] = 1.0;

    let mut basis: Vec<usize> = (n..n + m).collect();
    // reduced costs z_j - c_j for min sum(artificials)
    let mut obj = vec![0.0f64; cols + 1];
    for row in &t {
        for (o, v) in obj.iter_mut().zip(row) {
            *o += v;
        }
    }
    for o in obj.iter_mut().skip(n).take(m) {
        *o -= 1.0;
    }

    for _ in 0..10_000 {
        let Some(e) = (0..cols).find(|&j| obj[j] > 1e-9) else {
            break;
        };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            if t[i][e] > 1e-12 {
                let r = t[i][cols] / t[i][e];
                let better = r < best - 1e-15
                    || (r < best + 1e-15 && leave.map_or(true, |l| basis[i] < basis[l]));
                if better {
                    best = r;
                    leave = Some(i);
                }
            }
        }
        let Some(l) = leave else { break };
        let piv = t[l][e];
        for x in t[l].iter_mut() {
            *x /= piv;
        }
        for i in 0..m {
            if i != l {
                let f = t[i][e];
                if f != 0.0 {
                    for j in 0..=cols {
                        t[i][j] -= f * t[l][j];
                    }
                }
            }
        }
        let f = obj[e];
        for j in 0..=cols {
            obj[j] -= f * t[l][j];
        }
        basis[l] = e;
    }

    let residual: f64 = (0..m)
        .filter(|&i| basis[i] >= n)
        .map(|i| t[i][cols])
        .sum();
    residual.abs() < 1e-9
}

/// A realized environment on a box: per-site catalogue indices plus the
/// catalogues themselves. Cheap to clone conceptually but typically owned.
#[derive(Clone, Debug)]
pub struct EnvironmentBox {
    bbox: LatticeBox,
    seed: u64,
    kernels: Vec<TransitionKernel>,
    laws: Vec<HoldingLaw>,
    kernel_idx: Vec<u16>,
    law_idx: Vec<u16>,
    spec: Option<EnvironmentSpec>,
}

/// Draw the environment on `bbox` from `spec` with the given master seed.
pub fn sample_environment(
    spec: &EnvironmentSpec,
    bbox: &LatticeBox,
    seed: u64,
) -> Result<EnvironmentBox> {
    spec.validate()?;
    if bbox.dim() != spec.dimension {
        return Err(Error::InvalidSpec(format!(
            "box dimension {} != spec dimension {}",
            bbox.dim(),
            spec.dimension
        )));
    }
    let n = bbox.checked_len(1 << 31)?;
    let kw = cumulative(&spec.kernel_weights());
    let lw = cumulative(&spec.law_weights());
    let mut kernel_idx = vec![0u16; n];
    let mut law_idx = vec![0u16; n];
    for i in 0..n {
        let site = bbox.site_at(i);
        kernel_idx[i] = pick(&kw, CounterRng::for_site(seed, stream::KERNEL, &site).uniform());
        law_idx[i] = pick(&lw, CounterRng::for_site(seed, stream::LAW, &site).uniform());
    }
    Ok(EnvironmentBox {
        bbox: bbox.clone(),
        seed,
        kernels: spec.kernel_catalog()?,
        laws: spec.law_catalog(),
        kernel_idx,
        law_idx,
        spec: Some(spec.clone()),
    })
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn pick(cum: &[f64], u: f64) -> u16 {
    cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1) as u16
}

impl EnvironmentBox {
    /// Homogeneous environment: every site gets `kernel` and `law`.
    pub fn homogeneous(bbox: LatticeBox, kernel: TransitionKernel, law: HoldingLaw) -> Result<Self> {
        law.validate()?;
        kernel.validate()?;
        let spec = EnvironmentSpec::homogeneous(kernel.clone(), law.clone());
        let n = bbox.checked_len(1 << 31)?;
        Ok(EnvironmentBox {
            bbox,
            seed: 0,
            kernels: vec![kernel],
            laws: vec![law],
            kernel_idx: vec![0; n],
            law_idx: vec![0; n],
            spec: Some(spec),
        })
    }

    /// Fully explicit environment for tests and custom studies.
    pub fn from_catalogs(
        bbox: LatticeBox,
        kernels: Vec<TransitionKernel>,
        laws: Vec<HoldingLaw>,
        kernel_idx: Vec<u16>,
        law_idx: Vec<u16>,
    ) -> Result<Self> {
        let n = bbox.checked_len(1 << 31)?;
        if kernel_idx.len() != n || law_idx.len() != n {
            return Err(Error::InvalidArgument(
                "index fields must cover the box".into(),
            ));
        }
        for k in &kernels {
            k.validate()?;
            if k.dim() != bbox.dim() {
                return Err(Error::InvalidKernel("kernel dimension mismatch".into()));
            }
        }
        for l in &laws {
            l.validate()?;
        }
        if kernel_idx.iter().any(|&i| i as usize >= kernels.len())
            || law_idx.iter().any(|&i| i as usize >= laws.len())
        {
            return Err(Error::InvalidArgument("catalogue index out of range".into()));
        }
        Ok(EnvironmentBox {
            bbox,
            seed: 0,
            kernels,
            laws,
            kernel_idx,
            law_idx,
            spec: None,
        })
    }

    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }

    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec(&self) -> Option<&EnvironmentSpec> {
        self.spec.as_ref()
    }

    #[inline(always)]
    pub fn kernel_by_flat(&self, flat: usize) -> &TransitionKernel {
        &self.kernels[self.kernel_idx[flat] as usize]
    }

    #[inline(always)]
    pub fn law_index_by_flat(&self, flat: usize) -> usize {
        self.law_idx[flat] as usize
    }

    pub fn kernel_at(&self, site: &[i64]) -> Result<&TransitionKernel> {
        let i = self
            .bbox
            .index_of(site)
            .ok_or_else(|| Error::OutsideBox(site.to_vec()))?;
        Ok(self.kernel_by_flat(i))
    }

    pub fn law_at(&self, site: &[i64]) -> Result<&HoldingLaw> {
        let i = self
            .bbox
            .index_of(site)
            .ok_or_else(|| Error::OutsideBox(site.to_vec()))?;
        Ok(&self.laws[self.law_idx[i] as usize])
    }

    pub fn law_catalog(&self) -> &[HoldingLaw] {
        &self.laws
    }

    pub fn kernel_catalog(&self) -> &[TransitionKernel] {
        &self.kernels
    }

    /// `theta_lambda` per catalogue law; index with `law_index_by_flat`.
    pub fn theta_table(&self, lambda: f64) -> Vec<f64> {
        self.laws.iter().map(|l| l.log_laplace(lambda)).collect()
    }

    /// The same environment realized on a different box. Requires spec
    /// provenance; sites shared with the old box keep their assignment
    /// because the sampling is a pure function of (seed, site).
    pub fn extended(&self, bbox: &LatticeBox) -> Result<EnvironmentBox> {
        let spec = self.spec.as_ref().ok_or_else(|| {
            Error::InvalidArgument(
                "environment was built from explicit fields; cannot extend".into(),
            )
        })?;
        sample_environment(spec, bbox, self.seed)
    }
}

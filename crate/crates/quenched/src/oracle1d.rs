//! Exact one-dimensional crossings.
//!
//! In one dimension, crossing costs add exactly: the walk must pass through
//! every intermediate site, so `a(x, y)` is the sum of unit-step costs. The
//! unit-step values `f(k) = e_lambda(k, k+1)` satisfy a closed recursion: a
//! first step right arrives immediately, a first step left forces the walk to
//! re-cross `k-1 -> k -> k+1`, and one-dimensional crossings multiply, so
//!
//! ```text
//!     f(k) = e^{-theta(k)} ( p(k) + q(k) f(k-1) f(k) )
//!     f(k) = e^{-theta(k)} p(k) / (1 - e^{-theta(k)} q(k) f(k-1)).
//! ```
//!
//! An absorbing cut (`f = 0` just left of it) starts the recursion; values
//! only grow as the cut recedes, and the cut depth doubles until deepening by
//! a probe distance stops changing the answer.

use crate::lattice::LatticeBox;
use crate::scenery::EnvironmentBox;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct Oracle1dOptions {
    /// First cut depth below the crossing interval.
    pub initial_depth: i64,
    /// Extra depth whose effect must fall below `tol` to accept the cut.
    pub probe: i64,
    pub tol: f64,
    /// Give up (and flag) beyond this depth; recurrent environments at
    /// lambda = 0 never stabilize.
    pub max_depth: i64,
}

impl Default for Oracle1dOptions {
    fn default() -> Self {
        Oracle1dOptions {
            initial_depth: 64,
            probe: 50,
            tol: 1e-10,
            max_depth: 1 << 22,
        }
    }
}

/// A crossing cost together with the cut bookkeeping that produced it.
#[derive(Clone, Debug)]
pub struct OracleValue {
    pub a: f64,
    /// Depth of the accepted cut below (or above) the crossing interval.
    pub cut_depth: i64,
    pub converged: bool,
}

fn require_1d(env: &EnvironmentBox) -> Result<()> {
    if env.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "one-dimensional oracle called on a {}-dimensional environment",
            env.dim()
        )));
    }
    Ok(())
}

/// Unit-step crossing values `f(k) = e_lambda(k, k+1)` for `k` in
/// `[left_cut, hi]`, with the absorbing cut at `left_cut - 1`. The
/// environment must cover the range.
pub fn step_crossings(env: &EnvironmentBox, lambda: f64, left_cut: i64) -> Result<Vec<f64>> {
    require_1d(env)?;
    let (lo, hi) = (env.bbox().lo()[0], env.bbox().hi()[0]);
    if left_cut < lo {
        return Err(Error::OutsideBox(vec![left_cut]));
    }
    let theta = env.theta_table(lambda);
    let mut f = Vec::with_capacity((hi - left_cut + 1) as usize);
    let mut prev = 0.0;
    for k in left_cut..=hi {
        let flat = env.bbox().index_of(&[k]).unwrap();
        let kernel = env.kernel_by_flat(flat);
        let (p, q) = (kernel.prob(0), kernel.prob(1));
        let damp = (-theta[env.law_index_by_flat(flat)]).exp();
        let val = damp * p / (1.0 - damp * q * prev);
        f.push(val);
        prev = val;
    }
    Ok(f)
}

/// Exact crossing cost `a_lambda(x, y)` by cut-depth doubling.
///
/// Needs `lambda > 0` or an environment drifted towards the target; the
/// symmetric recurrent case at `lambda = 0` has `f -> 1` at harmonic speed
/// and comes back flagged instead of converged.
pub fn exact_a_1d(
    env: &EnvironmentBox,
    x: i64,
    y: i64,
    lambda: f64,
    opts: &Oracle1dOptions,
) -> Result<OracleValue> {
    require_1d(env)?;
    if lambda < 0.0 {
        return Err(Error::InvalidArgument("lambda must be nonnegative".into()));
    }
    if x == y {
        return Ok(OracleValue { a: 0.0, cut_depth: 0, converged: true });
    }

    let sum_at = |depth: i64| -> Result<f64> {
        let rightwards = x < y;
        let (lo_needed, hi_needed) = if rightwards {
            (x - depth, y - 1)
        } else {
            (y + 1, x + depth)
        };
        let local;
        let env_ref = if env.bbox().lo()[0] <= lo_needed && env.bbox().hi()[0] >= hi_needed {
            env
        } else {
            local = env.extended(&LatticeBox::new(
                vec![lo_needed.min(env.bbox().lo()[0])],
                vec![hi_needed.max(env.bbox().hi()[0])],
            )?)?;
            &local
        };
        let theta = env_ref.theta_table(lambda);
        let bbox = env_ref.bbox();
        let mut prev = 0.0;
        let mut acc = 0.0;
        // Iterate from the cut towards the far end of the crossing interval;
        // mirrored crossings swap p and q and run downwards.
        let mut k = if rightwards { lo_needed } else { hi_needed };
        loop {
            let flat = bbox.index_of(&[k]).unwrap();
            let kernel = env_ref.kernel_by_flat(flat);
            let (p, q) = if rightwards {
                (kernel.prob(0), kernel.prob(1))
            } else {
                (kernel.prob(1), kernel.prob(0))
            };
            let damp = (-theta[env_ref.law_index_by_flat(flat)]).exp();
            let val = damp * p / (1.0 - damp * q * prev);
            prev = val;
            let inside = if rightwards { k >= x } else { k <= x };
            if inside {
                acc -= val.ln();
            }
            if rightwards {
                if k == y - 1 {
                    break;
                }
                k += 1;
            } else {
                if k == y + 1 {
                    break;
                }
                k -= 1;
            }
        }
        Ok(acc)
    };

    let mut depth = opts.initial_depth.max(1);
    let mut current = sum_at(depth)?;
    loop {
        let probed = sum_at(depth + opts.probe)?;
        if (probed - current).abs() < opts.tol {
            return Ok(OracleValue { a: probed, cut_depth: depth + opts.probe, converged: true });
        }
        if depth >= opts.max_depth {
            return Ok(OracleValue { a: probed, cut_depth: depth + opts.probe, converged: false });
        }
        depth *= 2;
        current = sum_at(depth)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeBox;
    use crate::scenery::{sample_environment, EnvironmentSpec, HoldingLaw, TransitionKernel, WeightedKernel};
    use approx::assert_relative_eq;

    fn homogeneous_sym(law: HoldingLaw, lo: i64, hi: i64) -> EnvironmentBox {
        EnvironmentBox::homogeneous(
            LatticeBox::new(vec![lo], vec![hi]).unwrap(),
            TransitionKernel::uniform(1),
            law,
        )
        .unwrap()
    }

    /// Independent oracle: iterate the scalar fixed point x <- e^{-t}(1+x^2)/2.
    fn fixed_point(theta: f64) -> f64 {
        let damp = (-theta).exp();
        let mut x = 0.0;
        for _ in 0..100_000 {
            x = damp * (1.0 + x * x) / 2.0;
        }
        x
    }

    #[test]
    fn unit_step_matches_scalar_fixed_point() {
        for &lam in &[0.1, 1.0, 10.0] {
            let env = homogeneous_sym(HoldingLaw::Deterministic { value: 1.0 }, -600, 5);
            let f = step_crossings(&env, lam, -600).unwrap();
            let expect = fixed_point(lam);
            assert!(
                (f.last().unwrap() - expect).abs() < 1e-12,
                "lambda {lam}: {} vs {expect}",
                f.last().unwrap()
            );
        }
        // frozen value at lambda = 1
        let env = homogeneous_sym(HoldingLaw::Deterministic { value: 1.0 }, -600, 5);
        let f = step_crossings(&env, 1.0, -600).unwrap();
        assert_relative_eq!(*f.last().unwrap(), 0.190624, max_relative = 3e-6);
    }

    #[test]
    fn recursion_identity_holds_sitewise() {
        let mut spec = EnvironmentSpec::homogeneous(
            TransitionKernel::uniform(1),
            HoldingLaw::Exponential { rate: 1.0 },
        );
        spec.kernels = vec![
            WeightedKernel { weight: 1.0, probabilities: vec![0.3, 0.7] },
            WeightedKernel { weight: 1.0, probabilities: vec![0.6, 0.4] },
        ];
        let bbox = LatticeBox::new(vec![-80], vec![20]).unwrap();
        let env = sample_environment(&spec, &bbox, 21).unwrap();
        let lam = 0.7;
        let f = step_crossings(&env, lam, -80).unwrap();
        let theta = env.theta_table(lam);
        for (i, k) in (-80..=20).enumerate() {
            let flat = env.bbox().index_of(&[k]).unwrap();
            let kern = env.kernel_by_flat(flat);
            let damp = (-theta[env.law_index_by_flat(flat)]).exp();
            let prev = if i == 0 { 0.0 } else { f[i - 1] };
            let rhs = damp * (kern.prob(0) + kern.prob(1) * prev * f[i]);
            assert!((f[i] - rhs).abs() < 1e-12, "site {k}");
            assert!(f[i] > 0.0 && f[i] < 1.0);
        }
    }

    #[test]
    fn values_grow_as_cut_recedes() {
        let env = homogeneous_sym(HoldingLaw::Deterministic { value: 1.0 }, -400, 5);
        let lam = 0.05;
        let shallow = step_crossings(&env, lam, -30).unwrap();
        let deep = step_crossings(&env, lam, -400).unwrap();
        let off = (400 - 30) as usize;
        for i in 0..shallow.len() {
            assert!(deep[off + i] >= shallow[i] - 1e-15);
        }
        assert!(deep[off] > shallow[0]);
    }

    #[test]
    fn crossing_cost_is_arccosh_per_step() {
        let env = homogeneous_sym(HoldingLaw::Deterministic { value: 1.0 }, -5, 12);
        for &lam in &[0.1f64, 1.0, 10.0] {
            let alpha = (lam.exp()).acosh();
            let one = exact_a_1d(&env, 0, 1, lam, &Oracle1dOptions::default()).unwrap();
            assert!(one.converged);
            assert_relative_eq!(one.a, alpha, epsilon = 1e-10);
            let ten = exact_a_1d(&env, 0, 10, lam, &Oracle1dOptions::default()).unwrap();
            assert_relative_eq!(ten.a, 10.0 * alpha, epsilon = 1e-9);
        }
        // frozen values at lambda = 1
        let one = exact_a_1d(&env, 0, 1, 1.0, &Oracle1dOptions::default()).unwrap();
        assert_relative_eq!(one.a, 1.657454, epsilon = 1e-6);
        let three = exact_a_1d(&env, 0, 3, 1.0, &Oracle1dOptions::default()).unwrap();
        assert_relative_eq!(three.a, 4.972363, epsilon = 2e-6);
        let ten = exact_a_1d(&env, 0, 10, 1.0, &Oracle1dOptions::default()).unwrap();
        assert_relative_eq!(ten.a, 16.574545, epsilon = 3e-6);
    }

    #[test]
    fn mirrored_crossings_match_by_symmetry() {
        let env = homogeneous_sym(HoldingLaw::Exponential { rate: 2.0 }, -30, 30);
        let right = exact_a_1d(&env, 0, 7, 0.8, &Oracle1dOptions::default()).unwrap();
        let left = exact_a_1d(&env, 0, -7, 0.8, &Oracle1dOptions::default()).unwrap();
        assert_relative_eq!(right.a, left.a, epsilon = 1e-9);
    }

    #[test]
    fn drifted_environment_is_asymmetric() {
        let env = EnvironmentBox::homogeneous(
            LatticeBox::new(vec![-30], vec![30]).unwrap(),
            TransitionKernel::one_dim(0.7).unwrap(),
            HoldingLaw::Deterministic { value: 1.0 },
        )
        .unwrap();
        let with = exact_a_1d(&env, 0, 5, 0.5, &Oracle1dOptions::default()).unwrap();
        let against = exact_a_1d(&env, 0, -5, 0.5, &Oracle1dOptions::default()).unwrap();
        assert!(with.a < against.a);
    }

    #[test]
    fn recurrent_lambda_zero_flags_nonconvergence() {
        let env = homogeneous_sym(HoldingLaw::Deterministic { value: 1.0 }, -10, 10);
        let opts = Oracle1dOptions { max_depth: 1 << 14, ..Default::default() };
        let out = exact_a_1d(&env, 0, 1, 0.0, &opts).unwrap();
        assert!(!out.converged);
        // and the partial value is already tiny, heading to zero
        assert!(out.a < 1e-2);
    }

    #[test]
    fn lambda_zero_with_drift_converges_to_hitting_probability() {
        // p = 0.7 rightwards: e_0(0, 1) = 1 (certain hit), a = 0.
        let env = EnvironmentBox::homogeneous(
            LatticeBox::new(vec![-10], vec![10]).unwrap(),
            TransitionKernel::one_dim(0.7).unwrap(),
            HoldingLaw::Deterministic { value: 1.0 },
        )
        .unwrap();
        let out = exact_a_1d(&env, 0, 1, 0.0, &Oracle1dOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.a.abs() < 1e-9);
        // against the drift: e_0(0, -1) = q/p
        let back = exact_a_1d(&env, 0, -1, 0.0, &Oracle1dOptions::default()).unwrap();
        assert!(back.converged);
        assert_relative_eq!(back.a, -(0.3f64 / 0.7).ln(), epsilon = 1e-8);
    }
}

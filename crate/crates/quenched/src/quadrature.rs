//! Log-domain adaptive quadrature.
//!
//! Computes `log ∫ exp(h(t)) dt` for a unimodal exponent `h` without ever
//! forming the (possibly underflowing) integrand directly: the integral is
//! shifted by `h` at its peak, panels expand outward from the peak with
//! doubling widths, and each panel is integrated by adaptive Simpson.

/// Relative accuracy target for panel integration.
const PANEL_REL_TOL: f64 = 1e-12;
/// Integrand values below this (relative to the peak) terminate expansion.
const TAIL_CUTOFF: f64 = 1e-20;
const MAX_PANELS_PER_SIDE: usize = 80;
const MAX_DEPTH: u32 = 48;
/// The shifted integrand `exp(h(t) - h_max)` carries a relative rounding
/// error of roughly this many ulps of `|h_max|`, because `h(t)` is formed
/// from terms of that magnitude before the shift cancels them.
const VALUE_NOISE_ULPS: f64 = 16.0;

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    noise: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    // Once |delta| is below the rounding noise of the sampled values,
    // refinement cannot improve the estimate and must stop; without this
    // floor the halving tolerance chases noise all the way to MAX_DEPTH.
    let fmax = fa
        .abs()
        .max(fm.abs())
        .max(fb.abs())
        .max(flm.abs())
        .max(frm.abs());
    let floor = (b - a) * fmax * noise;
    if depth == 0 || !delta.is_finite() || delta.abs() <= (15.0 * tol).max(floor) {
        left + right + delta / 15.0
    } else {
        adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, noise, depth - 1)
            + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, noise, depth - 1)
    }
}

fn integrate_panel(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, noise: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    adapt(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, noise, MAX_DEPTH)
}

/// `log ∫_{lo}^{hi} exp(h(t)) dt` for unimodal `h` peaking near `t_star`.
///
/// `lo`/`hi` may be infinite; expansion stops once the shifted integrand falls
/// below `TAIL_CUTOFF` and the last panel's contribution is negligible.
pub(crate) fn log_integral_exp(h: &dyn Fn(f64) -> f64, t_star: f64, lo: f64, hi: f64) -> f64 {
    let t0 = t_star.clamp(lo.max(-1e308), hi.min(1e308));
    let h_max = h(t0);
    assert!(h_max.is_finite(), "peak value of the exponent must be finite");
    let noise = VALUE_NOISE_ULPS * (1.0 + h_max.abs()) * f64::EPSILON;
    let g = move |t: f64| {
        let v = h(t) - h_max;
        if v < -745.0 {
            0.0
        } else {
            v.exp()
        }
    };

    // Core panel around the peak.
    let w0 = 0.5;
    let mut total = integrate_panel(
        &g,
        (t0 - w0).max(lo),
        (t0 + w0).min(hi),
        PANEL_REL_TOL * w0,
        noise,
    );

    // Expand left, then right, with doubling panel widths.
    for side in [-1.0f64, 1.0] {
        let mut near = t0 + side * w0;
        let mut width = w0;
        for _ in 0..MAX_PANELS_PER_SIDE {
            if (side < 0.0 && near <= lo) || (side > 0.0 && near >= hi) {
                break;
            }
            width *= 2.0;
            let far = if side < 0.0 {
                (near - width).max(lo)
            } else {
                (near + width).min(hi)
            };
            let (a, b) = if side < 0.0 { (far, near) } else { (near, far) };
            let tol = PANEL_REL_TOL * total.max(1e-300);
            let piece = integrate_panel(&g, a, b, tol, noise);
            total += piece;
            let edge = g(far);
            near = far;
            if edge < TAIL_CUTOFF && piece < 1e-14 * total {
                break;
            }
        }
    }
    h_max + total.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_integral() {
        // ∫ exp(-t²/2) dt = sqrt(2π)
        let v = log_integral_exp(&|t| -0.5 * t * t, 0.0, f64::NEG_INFINITY, f64::INFINITY);
        let expect = (2.0 * std::f64::consts::PI).ln() * 0.5;
        assert!((v - expect).abs() < 1e-10, "{v} vs {expect}");
    }

    #[test]
    fn shifted_gaussian_with_huge_offset_stays_accurate() {
        // exp(-1e6) ∫ exp(-(t-3)²) dt would underflow outright.
        let v = log_integral_exp(
            &|t| -1e6 - (t - 3.0) * (t - 3.0),
            3.0,
            f64::NEG_INFINITY,
            f64::INFINITY,
        );
        let expect = -1e6 + std::f64::consts::PI.ln() * 0.5;
        assert!((v - expect).abs() < 1e-3, "{v} vs {expect}");
        assert!(((v + 1e6) - std::f64::consts::PI.ln() * 0.5).abs() < 1e-8);
    }

    #[test]
    fn one_sided_domain_respected() {
        // ∫_{-inf}^{0} e^t dt = 1
        let v = log_integral_exp(&|t| t, 0.0, f64::NEG_INFINITY, 0.0);
        assert!(v.abs() < 1e-10, "{v}");
    }

    #[test]
    fn sharp_peak_far_from_origin() {
        // ∫ exp(-((t+40)/1e-3)²) dt = 1e-3 sqrt(π), peak given only roughly.
        let v = log_integral_exp(
            &|t| {
                let u = (t + 40.0) / 1e-3;
                -u * u
            },
            -40.0,
            f64::NEG_INFINITY,
            f64::INFINITY,
        );
        let expect = (1e-3f64).ln() + std::f64::consts::PI.ln() * 0.5;
        assert!((v - expect).abs() < 1e-8, "{v} vs {expect}");
    }
}

//! Dawson's integral, the log-uniform KL integral, and adaptive Simpson
//! quadrature.

use std::sync::OnceLock;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    pub max_depth: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            max_depth: 40,
        }
    }
}

impl QuadratureOptions {
    pub fn with_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }
}

/// Adaptive Simpson estimate of the integral of `f` over `[lo, hi]`.
///
/// A non-finite value at an endpoint is treated as an integrable endpoint
/// singularity: the interval is split and each singular half is mapped
/// through `t = end + L s^2`, which removes inverse square-root blow-ups.
pub fn quad_adaptive<F>(f: F, lo: f64, hi: f64, opts: &QuadratureOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "integration limits must be finite, got [{lo}, {hi}]"
        )));
    }
    if lo == hi {
        return Ok(0.0);
    }
    if lo > hi {
        return quad_adaptive(f, hi, lo, opts).map(|v| -v);
    }

    let flo = f(lo);
    let fhi = f(hi);
    match (flo.is_finite(), fhi.is_finite()) {
        (true, true) => simpson(&f, lo, hi, flo, fhi, opts),
        (false, true) => singular_end(&f, lo, hi, opts),
        (true, false) => singular_end(&f, hi, lo, opts).map(|v| -v),
        (false, false) => {
            let mid = 0.5 * (lo + hi);
            let half = QuadratureOptions {
                abs_tol: 0.5 * opts.abs_tol,
                ..*opts
            };
            Ok(singular_end(&f, lo, mid, &half)? - singular_end(&f, hi, mid, &half)?)
        }
    }
}

// Integral from `sing` to `other` (signed) for a singularity at `sing`.
fn singular_end<F>(f: &F, sing: f64, other: f64, opts: &QuadratureOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let len = other - sing;
    let g = |s: f64| f(sing + len * s * s) * 2.0 * len * s;
    // g has a finite limit at s = 0; sample it where sing + len*s^2 is still
    // distinguishable from sing.
    let dt = (sing.abs() * 1e3 * f64::EPSILON).max(1e-300);
    let s0 = (dt / len.abs()).sqrt();
    let g0 = g(s0);
    let g1 = g(1.0);
    if !g0.is_finite() || !g1.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "integrand is not integrable at {sing}"
        )));
    }
    let g_fixed = |s: f64| if s == 0.0 { g0 } else { g(s) };
    simpson(&g_fixed, 0.0, 1.0, g0, g1, opts)
}

fn simpson<F>(f: &F, a: f64, b: f64, fa: f64, fb: f64, opts: &QuadratureOptions) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, opts.abs_tol, 0, opts.max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    max_depth: usize,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Below this level the difference is rounding noise.
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    if delta.abs() <= 15.0 * tol.max(floor) || m <= a || m >= b {
        return Ok(left + right + delta / 15.0);
    }
    if !delta.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "integrand is not finite on [{a}, {b}]"
        )));
    }
    if depth >= max_depth {
        return Err(Error::DepthExceeded {
            lo: a,
            hi: b,
            max_depth,
        });
    }
    let l = simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth)?;
    Ok(l + r)
}

const SERIES_MAX: f64 = 1.0;
const ASYMPTOTIC_MIN: f64 = 6.0;
const NODE_SPACING: f64 = 0.25;

/// Dawson's integral `F(u) = exp(-u^2) * int_0^u exp(t^2) dt`.
pub fn dawson(u: f64) -> f64 {
    if u.is_nan() {
        return f64::NAN;
    }
    let x = u.abs();
    let v = if x <= SERIES_MAX {
        dawson_series(x)
    } else if x >= ASYMPTOTIC_MIN {
        dawson_asymptotic(x)
    } else {
        dawson_taylor(x)
    };
    if u < 0.0 {
        -v
    } else {
        v
    }
}

fn dawson_series(x: f64) -> f64 {
    // sum_n (-1)^n 2^n x^(2n+1) / (2n+1)!!
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        term *= -2.0 * x2 / (2.0 * n + 3.0);
        sum += term;
        n += 1.0;
        if term.abs() <= 1e-18 * sum.abs() || n > 200.0 {
            return sum;
        }
    }
}

fn dawson_asymptotic(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    // F(x) ~ 1/(2x) sum_n (2n-1)!! / (2x^2)^n, truncated at the smallest term
    let r = 1.0 / (2.0 * x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1.0;
    loop {
        let next = term * (2.0 * n - 1.0) * r;
        if next >= term || next < 1e-18 {
            break;
        }
        term = next;
        sum += term;
        n += 1.0;
    }
    sum / (2.0 * x)
}

// Values of F on the node lattice over [SERIES_MAX, ASYMPTOTIC_MIN], computed
// once from the rescaled integral int_0^u exp((t-u)(t+u)) dt.
fn dawson_nodes() -> &'static [f64] {
    static NODES: OnceLock<Vec<f64>> = OnceLock::new();
    NODES.get_or_init(|| {
        let count = ((ASYMPTOTIC_MIN - SERIES_MAX) / NODE_SPACING).round() as usize + 1;
        let opts = QuadratureOptions {
            abs_tol: 1e-16,
            max_depth: 50,
        };
        (0..count)
            .map(|i| {
                let u = SERIES_MAX + i as f64 * NODE_SPACING;
                quad_adaptive(|t| ((t - u) * (t + u)).exp(), 0.0, u, &opts)
                    .expect("Dawson node quadrature converges")
            })
            .collect()
    })
}

// Taylor expansion about the nearest node. The coefficients follow from
// F' = 1 - 2xF: c1 = 1 - 2 x0 c0, c_{n+1} = -2 (x0 c_n + c_{n-1}) / (n+1).
fn dawson_taylor(x: f64) -> f64 {
    let nodes = dawson_nodes();
    let idx = ((x - SERIES_MAX) / NODE_SPACING).round() as usize;
    let idx = idx.min(nodes.len() - 1);
    let x0 = SERIES_MAX + idx as f64 * NODE_SPACING;
    let h = x - x0;
    let mut prev = nodes[idx];
    let mut cur = 1.0 - 2.0 * x0 * prev;
    let mut sum = prev + cur * h;
    let mut hp = h;
    for n in 1..60 {
        let next = -2.0 * (x0 * cur + prev) / (n as f64 + 1.0);
        hp *= h;
        let term = next * hp;
        sum += term;
        prev = cur;
        cur = next;
        if term.abs() < 1e-19 && n > 4 {
            break;
        }
    }
    sum
}

/// Integrand of the log-uniform KL integral, `F(sqrt(t/2)) / sqrt(2t)`, with
/// its analytic value 1/2 at `t = 0`.
pub fn kl_integrand(t: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    dawson((0.5 * t).sqrt()) / (2.0 * t).sqrt()
}

fn kl_unit() -> f64 {
    static KL1: OnceLock<f64> = OnceLock::new();
    *KL1.get_or_init(|| {
        quad_adaptive(kl_integrand, 0.0, 1.0, &QuadratureOptions::with_tol(1e-14))
            .expect("KL quadrature on [0, 1] converges")
    })
}

/// `int_0^eta_bar F(sqrt(t/2)) / sqrt(2t) dt`, the KL divergence from the
/// Gaussian-dropout posterior to the log-uniform prior.
///
/// Beyond `t = 1` the integral is taken in `s = ln t`, where the integrand
/// `t * g(t)` tends to 1/2.
pub fn kl_loguniform(eta_bar: f64, opts: &QuadratureOptions) -> Result<f64> {
    if eta_bar.is_nan() || eta_bar < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "eta_bar must be non-negative, got {eta_bar}"
        )));
    }
    if eta_bar == 0.0 {
        return Ok(0.0);
    }
    if eta_bar.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if eta_bar <= 1.0 {
        return quad_adaptive(kl_integrand, 0.0, eta_bar, opts);
    }
    let tail = quad_adaptive(
        |s: f64| {
            let t = s.exp();
            kl_integrand(t) * t
        },
        0.0,
        eta_bar.ln(),
        opts,
    )?;
    Ok(kl_unit() + tail)
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quad_constant_and_cubic() {
        let o = QuadratureOptions::default();
        assert_eq!(quad_adaptive(|_| 1.0, 0.0, 1.0, &o).unwrap(), 1.0);
        let v = quad_adaptive(|t| t * t, 0.0, 1.0, &o).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn quad_inverse_sqrt_endpoint() {
        let o = QuadratureOptions::default();
        let v = quad_adaptive(|t: f64| 1.0 / (2.0 * t.sqrt()), 0.0, 4.0, &o).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
        // reversed limits and singularity at the upper end
        let v = quad_adaptive(|t: f64| 1.0 / (2.0 * (4.0 - t).sqrt()), 4.0, 0.0, &o).unwrap();
        assert!((v + 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn quad_depth_exceeded() {
        let o = QuadratureOptions {
            abs_tol: 1e-14,
            max_depth: 3,
        };
        let err = quad_adaptive(|t: f64| (40.0 * t).sin(), 0.0, 3.0, &o).unwrap_err();
        assert!(matches!(err, Error::DepthExceeded { .. }));
    }

    #[test]
    fn dawson_known_values() {
        assert_eq!(dawson(0.0), 0.0);
        assert!((dawson(1.0) - 0.538_079_506_912_768_4).abs() < 1e-13);
        assert!((dawson(10.0) - 0.050_253_847_187_598_54).abs() < 1e-13);
        assert_eq!(dawson(-2.3), -dawson(2.3));
    }

    #[test]
    fn dawson_branch_seams_are_continuous() {
        for &x in &[SERIES_MAX, ASYMPTOTIC_MIN, 1.125, 3.375] {
            let lo = dawson(x - 1e-12);
            let hi = dawson(x + 1e-12);
            assert!((lo - hi).abs() < 1e-11, "{x}: {lo} vs {hi}");
        }
    }

    #[test]
    fn kl_small_argument_is_half() {
        let o = QuadratureOptions::default();
        let v = kl_loguniform(1e-6, &o).unwrap();
        assert!((v - 0.5e-6).abs() < 1e-12);
        assert_eq!(kl_loguniform(0.0, &o).unwrap(), 0.0);
        assert!(kl_loguniform(-1.0, &o).is_err());
    }
}

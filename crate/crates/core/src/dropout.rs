//! Dropout mask distributions, the `alpha <-> eta` map, and the effective
//! penalties of four adaptive dropout sparsification methods.

use std::fmt;
use std::str::FromStr;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grammar::SpecString;
use crate::lf::{log_grid, DualMinimizer, Interval, Minimize1DOptions, ScalarFn};
use crate::special::{kl_integrand, kl_loguniform, quad_adaptive, sigmoid, QuadratureOptions};

/// Mask family without its parameter, used by the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskFamily {
    UnbiasedBinary,
    Gaussian,
    BiasedBernoulli,
}

impl MaskFamily {
    pub fn with_alpha(self, alpha: f64) -> Result<MaskModel> {
        match self {
            MaskFamily::UnbiasedBinary => MaskModel::unbiased_binary(alpha),
            MaskFamily::Gaussian => MaskModel::gaussian(alpha),
            MaskFamily::BiasedBernoulli => MaskModel::biased_bernoulli(alpha),
        }
    }

    pub fn is_unbiased(self) -> bool {
        !matches!(self, MaskFamily::BiasedBernoulli)
    }

    /// One draw with keep parameter `alpha` in `[0, 1]`; `alpha = 0` gives 0.
    pub fn draw<R: Rng + ?Sized>(self, alpha: f64, rng: &mut R) -> f64 {
        if alpha <= 0.0 {
            return 0.0;
        }
        match self {
            MaskFamily::UnbiasedBinary => {
                let u: f64 = rng.gen();
                if u < alpha {
                    1.0 / alpha
                } else {
                    0.0
                }
            }
            MaskFamily::Gaussian => {
                let z: f64 = rng.sample(StandardNormal);
                1.0 + (1.0 / alpha - 1.0).sqrt() * z
            }
            MaskFamily::BiasedBernoulli => {
                let u: f64 = rng.gen();
                if u < alpha {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for MaskFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" | "unbiased" | "unbiased-binary" | "bernoulli-unbiased" => Ok(MaskFamily::UnbiasedBinary),
            "gaussian" | "normal" => Ok(MaskFamily::Gaussian),
            "bernoulli" | "biased" | "biased-bernoulli" => Ok(MaskFamily::BiasedBernoulli),
            other => Err(Error::parse(s, format!("unknown mask family `{other}`"))),
        }
    }
}

impl fmt::Display for MaskFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskFamily::UnbiasedBinary => "binary",
            MaskFamily::Gaussian => "gaussian",
            MaskFamily::BiasedBernoulli => "bernoulli",
        })
    }
}

/// Default HardConcrete temperature and stretch interval.
pub const HC_BETA: f64 = 2.0 / 3.0;
pub const HC_GAMMA: f64 = -0.1;
pub const HC_ZETA: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardConcreteParams {
    pub beta: f64,
    pub gamma: f64,
    pub zeta: f64,
}

impl Default for HardConcreteParams {
    fn default() -> Self {
        Self {
            beta: HC_BETA,
            gamma: HC_GAMMA,
            zeta: HC_ZETA,
        }
    }
}

impl HardConcreteParams {
    pub fn new(beta: f64, gamma: f64, zeta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite() && gamma < 0.0 && zeta > 0.0 && gamma.is_finite() && zeta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "HardConcrete needs beta > 0 and gamma < 0 < zeta, got beta={beta}, gamma={gamma}, zeta={zeta}"
            )));
        }
        Ok(Self { beta, gamma, zeta })
    }

    /// `log a` offset at which `Pr(s > 0) = 1/2`.
    fn shift(&self) -> f64 {
        self.beta * (-self.gamma / self.zeta).ln()
    }

    /// `Pr(s > 0) = sigmoid(log a - beta log(-gamma/zeta))`.
    pub fn prob_nonzero(&self, log_a: f64) -> f64 {
        sigmoid(log_a - self.shift())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskModel {
    /// `1/alpha` with probability `alpha`, else 0.
    UnbiasedBinary(f64),
    /// `Normal(1, 1/alpha - 1)`.
    Gaussian(f64),
    /// `Bernoulli(alpha)`.
    BiasedBernoulli(f64),
    HardConcrete { params: HardConcreteParams, a: f64 },
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(alpha)
    } else {
        Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")))
    }
}

impl MaskModel {
    pub fn unbiased_binary(alpha: f64) -> Result<Self> {
        Ok(MaskModel::UnbiasedBinary(check_alpha(alpha)?))
    }

    pub fn gaussian(alpha: f64) -> Result<Self> {
        Ok(MaskModel::Gaussian(check_alpha(alpha)?))
    }

    pub fn biased_bernoulli(alpha: f64) -> Result<Self> {
        Ok(MaskModel::BiasedBernoulli(check_alpha(alpha)?))
    }

    pub fn hard_concrete(params: HardConcreteParams, a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("HardConcrete a must be positive, got {a}")));
        }
        Ok(MaskModel::HardConcrete { params, a })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MaskModel::UnbiasedBinary(a) => MaskFamily::UnbiasedBinary.draw(a, rng),
            MaskModel::Gaussian(a) => MaskFamily::Gaussian.draw(a, rng),
            MaskModel::BiasedBernoulli(a) => MaskFamily::BiasedBernoulli.draw(a, rng),
            MaskModel::HardConcrete { params, a } => {
                let u: f64 = rng.sample(Open01);
                let z = sigmoid(((u / (1.0 - u)).ln() + a.ln()) / params.beta);
                ((params.zeta - params.gamma) * z + params.gamma).clamp(0.0, 1.0)
            }
        }
    }

    /// `(E[s], E[s^2])`.
    pub fn moments(&self) -> Result<(f64, f64)> {
        match *self {
            MaskModel::UnbiasedBinary(a) | MaskModel::Gaussian(a) => Ok((1.0, 1.0 / a)),
            MaskModel::BiasedBernoulli(a) => Ok((a, a)),
            MaskModel::HardConcrete { params, a } => {
                let m = hard_concrete_moments(&params, a.ln())?;
                Ok((m.mean, m.second))
            }
        }
    }
}

/// `dim` i.i.d. draws from `model`, reproducible from `seed`.
pub fn sample_mask(model: &MaskModel, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| model.draw(&mut rng)).collect()
}

pub fn mask_moments(model: &MaskModel) -> Result<(f64, f64)> {
    model.moments()
}

/// HardConcrete moments with the variance kept accurate at both tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardConcreteMoments {
    pub mean: f64,
    pub second: f64,
    pub variance: f64,
}

/// Moments of `s` for `log a = log_a`.
///
/// With `y = logit(u) + log a` (logistic around `log a`), `s` is 0 below
/// `y0 = beta logit(z0)`, 1 above `y1 = beta logit(z1)` and smooth between,
/// so only `[y0, y1]` needs quadrature.
pub fn hard_concrete_moments(p: &HardConcreteParams, log_a: f64) -> Result<HardConcreteMoments> {
    let span = p.zeta - p.gamma;
    let z0 = -p.gamma / span;
    let z1 = (1.0 - p.gamma) / span;
    let logit = |x: f64| (x / (1.0 - x)).ln();
    let y0 = p.beta * logit(z0);
    let y1 = if z1 >= 1.0 { f64::INFINITY } else { p.beta * logit(z1) };
    let s_of = |y: f64| span * sigmoid(y / p.beta) + p.gamma;
    let density = |y: f64| sigmoid(y - log_a) * sigmoid(log_a - y);

    // mass of [y0, y1] computed from the side that avoids cancellation
    let mass = if log_a < 0.5 * (y0 + y1.min(1e300)) {
        sigmoid(log_a - y0) - if y1.is_finite() { sigmoid(log_a - y1) } else { 0.0 }
    } else {
        (if y1.is_finite() { sigmoid(y1 - log_a) } else { 1.0 }) - sigmoid(y0 - log_a)
    };
    let p_one = if y1.is_finite() { sigmoid(log_a - y1) } else { 0.0 };
    let p_zero = sigmoid(y0 - log_a);
    let hi = if y1.is_finite() { y1 } else { y0 + 80.0 + log_a.abs() };
    let opts = QuadratureOptions {
        abs_tol: (1e-13 * mass).max(1e-300),
        max_depth: 60,
    };
    let int = |g: &dyn Fn(f64) -> f64| quad_adaptive(|y| g(y) * density(y), y0, hi, &opts);

    let mean = int(&|y| s_of(y))? + p_one;
    // central second moment directly, so neither tail cancels
    let variance = int(&|y| (s_of(y) - mean).powi(2))?
        + p_zero * mean * mean
        + p_one * (1.0 - mean) * (1.0 - mean);
    let second = variance + mean * mean;
    Ok(HardConcreteMoments {
        mean,
        second,
        variance: variance.max(0.0),
    })
}

/// `alpha = eta / (eta + lambda)`, with `eta = inf -> 1`.
pub fn alpha_from_eta(eta: f64, lambda: f64) -> f64 {
    if eta == f64::INFINITY {
        1.0
    } else {
        eta / (eta + lambda)
    }
}

/// `eta = lambda alpha / (1 - alpha)`, with `alpha = 1 -> inf`.
pub fn eta_from_alpha(alpha: f64, lambda: f64) -> f64 {
    if alpha >= 1.0 {
        f64::INFINITY
    } else {
        lambda * alpha / (1.0 - alpha)
    }
}

/// Dual `f` of the biased-Bernoulli construction: `f(eta) = alpha(eta)`.
pub fn biased_bernoulli_f(eta: f64, lambda: f64) -> f64 {
    alpha_from_eta(eta, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasedReparam {
    pub alpha_tilde: f64,
    pub eta_tilde: f64,
    pub mu: f64,
}

/// `alpha~ = mu^2 / E[s^2]`, `eta~ = lambda / (1/alpha~ - 1)`.
pub fn biased_reparam(model: &MaskModel, lambda: f64) -> Result<BiasedReparam> {
    if let MaskModel::HardConcrete { params, a } = *model {
        let m = hard_concrete_moments(&params, a.ln())?;
        if m.variance <= 0.0 {
            return Err(Error::DegenerateMask);
        }
        return Ok(BiasedReparam {
            alpha_tilde: m.mean * m.mean / m.second,
            eta_tilde: lambda * m.mean * m.mean / m.variance,
            mu: m.mean,
        });
    }
    let (mu, second) = model.moments()?;
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter("mask mean must be positive".into()));
    }
    let variance = second - mu * mu;
    if variance <= 0.0 {
        return Err(Error::DegenerateMask);
    }
    Ok(BiasedReparam {
        alpha_tilde: mu * mu / second,
        eta_tilde: lambda * mu * mu / variance,
        mu,
    })
}

/// Standardized least-squares data borrowed from a caller.
#[derive(Debug, Clone, Copy)]
pub struct DesignRef<'a> {
    /// Row-major `n x d`.
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub n: usize,
    pub d: usize,
}

/// Estimate with its Monte Carlo standard error (0 for closed forms).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

fn check_standardized(data: &DesignRef<'_>) -> Result<()> {
    if data.x.len() != data.n * data.d {
        return Err(Error::DimensionMismatch {
            expected: data.n * data.d,
            got: data.x.len(),
        });
    }
    if data.y.len() != data.n {
        return Err(Error::DimensionMismatch {
            expected: data.n,
            got: data.y.len(),
        });
    }
    for j in 0..data.d {
        let ms = (0..data.n).map(|i| data.x[i * data.d + j].powi(2)).sum::<f64>() / data.n as f64;
        if (ms - 1.0).abs() > 1e-8 {
            return Err(Error::NotStandardized { column: j, value: ms });
        }
    }
    Ok(())
}

fn linear_loss(data: &DesignRef<'_>, w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..data.n {
        let row = &data.x[i * data.d..(i + 1) * data.d];
        let pred: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        acc += (data.y[i] - pred).powi(2);
    }
    acc / (2.0 * data.n as f64)
}

/// Expected dropout loss `E_s[L(s * w)]` for masks with keep parameters
/// `alpha`.
///
/// `samples = None` gives the closed form
/// `L(w) + 1/2 w^T ((diag(alpha)^-1 - I) o X^T X / n) w`; `Some(m)` averages
/// `m` masks from `family`. Biased families are evaluated through the
/// unbiased reparameterization `w~ = mu w`, `alpha~ = mu^2 / E[s^2]`.
pub fn expected_linear_loss(
    data: &DesignRef<'_>,
    w: &[f64],
    alpha: &[f64],
    family: MaskFamily,
    samples: Option<usize>,
    seed: u64,
) -> Result<Estimate> {
    check_standardized(data)?;
    for v in [w.len(), alpha.len()] {
        if v != data.d {
            return Err(Error::DimensionMismatch { expected: data.d, got: v });
        }
    }
    if let Some(bad) = alpha.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1], got {bad}")));
    }
    match samples {
        None => {
            let (w_eff, a_eff): (Vec<f64>, Vec<f64>) = if family.is_unbiased() {
                (w.to_vec(), alpha.to_vec())
            } else {
                // Bernoulli(alpha): mu = alpha, alpha~ = alpha^2 / alpha
                (w.iter().zip(alpha).map(|(x, a)| x * a).collect(), alpha.to_vec())
            };
            let mut pen = 0.0;
            for j in 0..data.d {
                let gjj = (0..data.n).map(|i| data.x[i * data.d + j].powi(2)).sum::<f64>() / data.n as f64;
                pen += (1.0 / a_eff[j] - 1.0) * gjj * w_eff[j] * w_eff[j];
            }
            Ok(Estimate {
                mean: linear_loss(data, &w_eff) + 0.5 * pen,
                std_error: 0.0,
            })
        }
        Some(m) => {
            if m < 2 {
                return Err(Error::InvalidParameter("need at least 2 Monte Carlo samples".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sw = vec![0.0; data.d];
            // Welford
            let mut mean = 0.0;
            let mut m2 = 0.0;
            for k in 0..m {
                for j in 0..data.d {
                    sw[j] = family.draw(alpha[j], &mut rng) * w[j];
                }
                let l = linear_loss(data, &sw);
                let delta = l - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (l - mean);
            }
            let var = m2 / (m - 1) as f64;
            Ok(Estimate {
                mean,
                std_error: (var / m as f64).sqrt(),
            })
        }
    }
}

fn standout_checks(z_plus: &[f64], w2: &[f64], lambda: f64) -> Result<()> {
    if z_plus.len() != w2.len() {
        return Err(Error::DimensionMismatch {
            expected: z_plus.len(),
            got: w2.len(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if let Some(z) = z_plus.iter().find(|z| !(**z >= 0.0)) {
        return Err(Error::InvalidParameter(format!("z_plus must be non-negative, got {z}")));
    }
    Ok(())
}

/// `eta_j = lambda e^{z_j} / w2_j^2`; a zero `w2_j` gives `+inf`.
pub fn standout_eta_hat(z_plus: &[f64], w2: &[f64], lambda: f64) -> Result<crate::penalty::EtaVector> {
    standout_checks(z_plus, w2, lambda)?;
    let v = z_plus
        .iter()
        .zip(w2)
        .map(|(&z, &c)| if c == 0.0 { f64::INFINITY } else { lambda * z.exp() / (c * c) })
        .collect();
    crate::penalty::EtaVector::new(v)
}

/// `1 - (z + 1) e^{-z}`, by series near 0.
pub(crate) fn standout_shape(z: f64) -> f64 {
    if z < 0.5 {
        // sum_{n >= 2} (-1)^n (n - 1) z^n / n!
        let mut term = z * z / 2.0;
        let mut sum = 0.0f64;
        let mut n = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) && n < 40.0 {
            sum += (n - 1.0) * term;
            n += 1.0;
            term *= -z / n;
        }
        sum
    } else {
        1.0 - (z + 1.0) * (-z).exp()
    }
}

/// `(1/lambda) sum_j w2_j^2 (1 - (z_j + 1) e^{-z_j})`.
pub fn standout_omega(z_plus: &[f64], w2: &[f64], lambda: f64) -> Result<f64> {
    standout_checks(z_plus, w2, lambda)?;
    let s: f64 = z_plus.iter().zip(w2).map(|(&z, &c)| c * c * standout_shape(z)).sum();
    Ok(s / lambda)
}

/// `f(eta) = 2 KL(eta / lambda)`.
pub fn vardrop_f(eta: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
    }
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be non-negative, got {eta}")));
    }
    Ok(2.0 * kl_loguniform(eta / lambda, &QuadratureOptions::default())?)
}

/// `f'(eta) = (2/lambda) F(sqrt(t/2)) / sqrt(2t)` at `t = eta / lambda`.
pub fn vardrop_f_grad(eta: f64, lambda: f64) -> f64 {
    2.0 / lambda * kl_integrand(eta / lambda)
}

/// `eta~(a) = lambda E[s]^2 / Var[s]` for HardConcrete masks.
pub fn hardconcrete_eta_tilde(a: f64, lambda: f64) -> Result<f64> {
    hardconcrete_eta_tilde_with(&HardConcreteParams::default(), a, lambda)
}

pub fn hardconcrete_eta_tilde_with(p: &HardConcreteParams, a: f64, lambda: f64) -> Result<f64> {
    if !(a > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("need a > 0 and lambda > 0, got a={a}, lambda={lambda}")));
    }
    if a == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let m = hard_concrete_moments(p, a.ln())?;
    if m.variance <= 0.0 {
        return Err(Error::DegenerateMask);
    }
    Ok(lambda * m.mean * m.mean / m.variance)
}

/// Bracket for the `log a` inversion.
pub const LOG_A_RANGE: (f64, f64) = (-20.0, 20.0);
const SCAN_POINTS: usize = 64;

/// Inverse of `a -> eta~(a)` on a fixed `log a` bracket.
///
/// Construction scans 64 points of `log a` and refuses to build unless
/// `eta~` increases strictly across them.
#[derive(Debug, Clone)]
pub struct HardConcreteInverse {
    params: HardConcreteParams,
    lambda: f64,
    log_a: Vec<f64>,
    log_eta: Vec<f64>,
}

impl HardConcreteInverse {
    pub fn new(params: HardConcreteParams, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        let (lo, hi) = LOG_A_RANGE;
        let log_a: Vec<f64> = (0..SCAN_POINTS)
            .map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64)
            .collect();
        let mut log_eta = Vec::with_capacity(SCAN_POINTS);
        for &la in &log_a {
            let e = hardconcrete_eta_tilde_with(&params, la.exp(), lambda)?;
            log_eta.push(e.ln());
        }
        if let Some(i) = (1..SCAN_POINTS).find(|&i| !(log_eta[i] > log_eta[i - 1])) {
            return Err(Error::InversionFailed(format!(
                "eta~(a) is not increasing near log a = {}",
                log_a[i]
            )));
        }
        Ok(Self {
            params,
            lambda,
            log_a,
            log_eta,
        })
    }

    /// Range of `eta~` covered by the bracket.
    pub fn eta_range(&self) -> (f64, f64) {
        (self.log_eta[0].exp(), self.log_eta[SCAN_POINTS - 1].exp())
    }

    fn log_eta_at(&self, la: f64) -> Result<f64> {
        Ok(hardconcrete_eta_tilde_with(&self.params, la.exp(), self.lambda)?.ln())
    }

    /// `log a` with `eta~(a) = eta`, by bracketed root finding in `log a`
    /// (bisection safeguarding a false-position step).
    pub fn log_a(&self, eta: f64) -> Result<f64> {
        let (e_lo, e_hi) = self.eta_range();
        if !(eta >= e_lo && eta <= e_hi) {
            return Err(Error::InversionFailed(format!(
                "eta~ = {eta} is outside [{e_lo}, {e_hi}] covered by log a in [{}, {}]",
                LOG_A_RANGE.0, LOG_A_RANGE.1
            )));
        }
        let target = eta.ln();
        let i = self.log_eta.partition_point(|&v| v < target);
        if i < SCAN_POINTS && self.log_eta[i] == target {
            return Ok(self.log_a[i]);
        }
        let i = i.clamp(1, SCAN_POINTS - 1);
        let (mut a, mut b) = (self.log_a[i - 1], self.log_a[i]);
        let (mut fa, mut fb) = (self.log_eta[i - 1] - target, self.log_eta[i] - target);
        let mut side = 0i32;
        for _ in 0..200 {
            if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
            // Illinois-style false position, falling back to bisection
            let mut c = (a * fb - b * fa) / (fb - fa);
            if !(c > a.min(b) && c < a.max(b)) {
                c = 0.5 * (a + b);
            }
            let fc = self.log_eta_at(c)? - target;
            if fc == 0.0 {
                return Ok(c);
            }
            if (fc < 0.0) == (fa < 0.0) {
                a = c;
                fa = fc;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = c;
                fb = fc;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        Ok(if fa.abs() < fb.abs() { a } else { b })
    }

    /// HardConcrete dual `f(eta~) = 2 Pr(s > 0)`, with `f(0) = 0` and
    /// `f(inf) = 2` as limits.
    pub fn f(&self, eta: f64) -> Result<f64> {
        if eta == 0.0 {
            return Ok(0.0);
        }
        if eta == f64::INFINITY {
            return Ok(2.0);
        }
        Ok(2.0 * self.params.prob_nonzero(self.log_a(eta)?))
    }
}

/// `a` with `eta~(a) = eta_tilde` (default HardConcrete parameters).
pub fn hardconcrete_a_from_eta(eta_tilde: f64, lambda: f64) -> Result<f64> {
    Ok(HardConcreteInverse::new(HardConcreteParams::default(), lambda)?
        .log_a(eta_tilde)?
        .exp())
}

/// Magnitude pruning update: `+inf` on the top-`k` magnitudes, else 0.
pub fn magnitude_pruning_eta_hat(w: &[f64], k: usize) -> crate::penalty::EtaVector {
    crate::penalty::PenaltySpec::hard_thresh(k).eta_hat(w)
}

/// Cubic schedule `k(t) = k_final + (d - k_final)(1 - t/T)^3`, rounded.
pub fn pruning_schedule(t: usize, total: usize, k_final: usize, d: usize) -> usize {
    if total == 0 || t >= total {
        return k_final;
    }
    let frac = 1.0 - t as f64 / total as f64;
    let k = k_final as f64 + (d as f64 - k_final as f64) * frac.powi(3);
    k.round() as usize
}

/// A dropout sparsification method whose effective penalty is analysed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    Standout { lambda: f64, w2: f64 },
    VariationalDropout { lambda: f64 },
    HardConcreteL0 { lambda: f64, params: HardConcreteParams },
    MagnitudePruning { k: usize },
}

impl MethodSpec {
    pub(crate) fn from_spec_string(s: &mut SpecString) -> Result<Option<Self>> {
        let positive = |name: &str, v: f64| -> Result<f64> {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        let m = match s.name.as_str() {
            "standout" => MethodSpec::Standout {
                lambda: positive("lambda", s.take_f64("lambda")?.unwrap_or(1.0))?,
                w2: s.take_f64("w2")?.unwrap_or(1.0),
            },
            "vardrop" | "variationaldropout" => MethodSpec::VariationalDropout {
                lambda: positive("lambda", s.take_f64("lambda")?.unwrap_or(1.0))?,
            },
            "hardconcrete" | "hardconcretel0" => {
                let lambda = positive("lambda", s.take_f64("lambda")?.unwrap_or(1.0))?;
                let params = HardConcreteParams::new(
                    s.take_f64("beta")?.unwrap_or(HC_BETA),
                    s.take_f64("gamma")?.unwrap_or(HC_GAMMA),
                    s.take_f64("zeta")?.unwrap_or(HC_ZETA),
                )?;
                MethodSpec::HardConcreteL0 { lambda, params }
            }
            "magprune" | "magnitudepruning" => MethodSpec::MagnitudePruning { k: s.require_usize("k")? },
            _ => return Ok(None),
        };
        Ok(Some(m))
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, MethodSpec::MagnitudePruning { .. })
    }

    /// Builds a reusable evaluator of the scalar effective penalty.
    pub fn effective_penalty_fn(&self) -> Result<EffectivePenalty> {
        EffectivePenalty::new(*self, Minimize1DOptions::default())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;
    fn from_str(input: &str) -> Result<Self> {
        let mut s = SpecString::parse(input)?;
        let m = Self::from_spec_string(&mut s)?
            .ok_or_else(|| Error::parse(input, format!("unknown method `{}`", s.name)))?;
        s.finish()?;
        Ok(m)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            MethodSpec::Standout { lambda, w2 } => write!(f, "standout:lambda={lambda},w2={w2}"),
            MethodSpec::VariationalDropout { lambda } => write!(f, "vardrop:lambda={lambda}"),
            MethodSpec::HardConcreteL0 { lambda, params } => {
                if params == HardConcreteParams::default() {
                    write!(f, "hardconcrete:lambda={lambda}")
                } else {
                    write!(
                        f,
                        "hardconcrete:lambda={lambda},beta={},gamma={},zeta={}",
                        params.beta, params.gamma, params.zeta
                    )
                }
            }
            MethodSpec::MagnitudePruning { k } => write!(f, "magprune:k={k}"),
        }
    }
}

/// Scalar effective penalty of a method, with its dual search cached.
///
/// For HardConcrete the argument is the reparameterized magnitude
/// `|w~| = mu |w|`; [`EffectivePenalty::eval_raw_axis`] gives the penalty as
/// a function of the raw `|w|` instead.
#[derive(Debug, Clone)]
pub struct EffectivePenalty {
    method: MethodSpec,
    dual: Option<DualMinimizer>,
    hc: Option<HardConcreteInverse>,
}

impl EffectivePenalty {
    pub fn new(method: MethodSpec, opts: Minimize1DOptions) -> Result<Self> {
        match method {
            MethodSpec::Standout { lambda, .. } => {
                if !(lambda > 0.0) {
                    return Err(Error::InvalidParameter("lambda must be positive".into()));
                }
                Ok(Self { method, dual: None, hc: None })
            }
            MethodSpec::VariationalDropout { lambda } => {
                vardrop_f(1.0, lambda)?;
                let f = ScalarFn::new(format!("f[{method}]"), Interval::non_negative(), move |e| {
                    vardrop_f(e, lambda).unwrap_or(f64::INFINITY)
                });
                let dual = DualMinimizer::new(f, Interval::non_negative(), opts)?;
                Ok(Self { method, dual: Some(dual), hc: None })
            }
            MethodSpec::HardConcreteL0 { lambda, params } => {
                let inv = HardConcreteInverse::new(params, lambda)?;
                let (lo, hi) = inv.eta_range();
                let opts = Minimize1DOptions {
                    grid_lo: opts.grid_lo.max(lo),
                    grid_hi: opts.grid_hi.min(hi),
                    ..opts
                };
                let inv_f = inv.clone();
                // eta~ outside the invertible range only enters through the
                // 0 and inf limits
                let f = ScalarFn::new(format!("f[{method}]"), Interval::non_negative(), move |e| {
                    inv_f.f(e).unwrap_or(f64::INFINITY)
                });
                let dual = DualMinimizer::new(f, Interval::non_negative(), opts)?;
                Ok(Self { method, dual: Some(dual), hc: Some(inv) })
            }
            MethodSpec::MagnitudePruning { .. } => Err(Error::ScalarUnsupported(method.to_string())),
        }
    }

    pub fn method(&self) -> MethodSpec {
        self.method
    }

    /// Penalty at magnitude `w` (`z_+` for Standout, `|w~|` for HardConcrete).
    pub fn eval(&self, w: f64) -> f64 {
        self.eval_with_argmin(w).0
    }

    /// Penalty together with the minimizing `eta` (NaN for Standout).
    pub fn eval_with_argmin(&self, w: f64) -> (f64, f64) {
        let w = w.abs();
        match self.method {
            MethodSpec::Standout { lambda, w2 } => (w2 * w2 * standout_shape(w) / lambda, f64::NAN),
            _ => self.dual.as_ref().expect("built in new").minimize(w),
        }
    }

    /// For HardConcrete, maps `|w~|` to `(|w|, Omega)` where `|w| = |w~| / mu`
    /// and `mu = E[s]` at the minimizing `eta~`. This is the same curve
    /// drawn against the raw magnitude. Other methods return `(w, eval(w))`.
    pub fn eval_raw_axis(&self, w_tilde: f64) -> Result<(f64, f64)> {
        let (value, eta) = self.eval_with_argmin(w_tilde);
        let (inv, params) = match (self.method, &self.hc) {
            (MethodSpec::HardConcreteL0 { params, .. }, Some(inv)) => (inv, params),
            _ => return Ok((w_tilde.abs(), value)),
        };
        let mu = if eta == f64::INFINITY {
            1.0
        } else if eta == 0.0 {
            0.0
        } else {
            hard_concrete_moments(&params, inv.log_a(eta)?)?.mean
        };
        let raw = if w_tilde == 0.0 { 0.0 } else { w_tilde.abs() / mu };
        Ok((raw, value))
    }
}

/// Scalar effective penalty of `method` at `w_magnitude`.
pub fn effective_penalty(method: &MethodSpec, w_magnitude: f64) -> Result<f64> {
    if !(w_magnitude >= 0.0) {
        return Err(Error::InvalidParameter(format!("|w| must be non-negative, got {w_magnitude}")));
    }
    Ok(method.effective_penalty_fn()?.eval(w_magnitude))
}

/// Log grid of `|w|` used for the effective-penalty concavity checks.
pub fn effective_check_grid() -> Vec<f64> {
    log_grid(1e-3, 10.0, 200).into_iter().map(|w| w * w).collect()
}

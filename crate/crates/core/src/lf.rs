//! Numeric conversions between a penalty `Omega`, its dual `f` and the
//! minimizer `eta_hat`, for when no closed form is at hand.
//!
//! Conjugacy is taken between `g(u) = Omega(sqrt(u))` and `h(v) = f(-1/v)`;
//! all searches run over log-spaced grids followed by golden-section
//! refinement in log space.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::penalty::{tikhonov_term, EtaVector, PenaltyKind, PenaltySpec};
use crate::special::{quad_adaptive, QuadratureOptions};

/// A closed interval of the extended real line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn non_negative() -> Self {
        Self::new(0.0, f64::INFINITY)
    }

    pub const fn real_line() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// A named real function with a declared domain; `+inf` outside of it.
#[derive(Clone)]
pub struct ScalarFn {
    name: String,
    domain: Interval,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl ScalarFn {
    pub fn new(
        name: impl Into<String>,
        domain: Interval,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            eval: Arc::new(f),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.domain.contains(x) {
            (self.eval)(x)
        } else {
            f64::INFINITY
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// Scalar `Omega` of a penalty.
    pub fn penalty_omega(spec: PenaltySpec) -> Self {
        Self::new(format!("omega[{spec}]"), Interval::real_line(), move |w| spec.omega_scalar(w))
    }

    /// Scalar dual `f` of a penalty on its domain `H`.
    pub fn penalty_f(spec: PenaltySpec) -> Self {
        Self::new(format!("f[{spec}]"), spec.scalar_domain(), move |e| spec.f_scalar(e))
    }

    /// Scalar `eta_hat` of a penalty.
    pub fn penalty_eta_hat(spec: PenaltySpec) -> Self {
        Self::new(format!("eta_hat[{spec}]"), Interval::real_line(), move |w| spec.eta_hat_scalar(w))
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimize1DOptions {
    pub grid_lo: f64,
    pub grid_hi: f64,
    pub grid_points: usize,
    /// Golden-section stopping width in `log(eta)`.
    pub refine_tol: f64,
}

impl Default for Minimize1DOptions {
    fn default() -> Self {
        Self {
            grid_lo: 1e-8,
            grid_hi: 1e8,
            grid_points: 256,
            refine_tol: 1e-10,
        }
    }
}

impl Minimize1DOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.grid_lo > 0.0 && self.grid_lo < self.grid_hi && self.grid_hi.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "grid bracket must satisfy 0 < lo < hi < inf, got [{}, {}]",
                self.grid_lo, self.grid_hi
            )));
        }
        if self.grid_points < 64 {
            return Err(Error::InvalidParameter(format!(
                "grid_points must be at least 64, got {}",
                self.grid_points
            )));
        }
        if !(self.refine_tol > 0.0) {
            return Err(Error::InvalidParameter("refine_tol must be positive".into()));
        }
        Ok(())
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive (`lo > 0`).
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut g: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    g[0] = lo;
    g[n - 1] = hi;
    g
}

fn nan_to_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimization of `obj(exp(t))` over `t` in `[a, b]`.
/// Returns the best `(value, x)` seen, endpoints included.
fn golden_log(
    obj: &mut dyn FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_hi: f64,
    tol: f64,
) -> (f64, f64) {
    let (mut best_v, mut best_x) = if f_lo <= f_hi { (f_lo, lo) } else { (f_hi, hi) };
    let (mut a, mut b) = (lo.ln(), hi.ln());
    if !(b - a > tol) {
        return (best_v, best_x);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = nan_to_inf(obj(c.exp()));
    let mut fd = nan_to_inf(obj(d.exp()));
    for _ in 0..200 {
        if fc < best_v {
            best_v = fc;
            best_x = c.exp();
        }
        if fd < best_v {
            best_v = fd;
            best_x = d.exp();
        }
        if b - a <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = nan_to_inf(obj(c.exp()));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = nan_to_inf(obj(d.exp()));
        }
    }
    (best_v, best_x)
}

/// Evaluates `min_{eta in H} 1/2 (w^2 / eta + f(eta))` repeatedly for one
/// `f`, caching `f` on the search grid.
#[derive(Debug, Clone)]
pub struct DualMinimizer {
    f: ScalarFn,
    opts: Minimize1DOptions,
    grid: Vec<f64>,
    f_grid: Vec<f64>,
    f_zero: Option<f64>,
    f_inf: Option<f64>,
}

impl DualMinimizer {
    pub fn new(f: ScalarFn, domain: Interval, opts: Minimize1DOptions) -> Result<Self> {
        opts.validate()?;
        let domain = domain.intersect(&f.domain());
        let bracket = domain.intersect(&Interval::new(opts.grid_lo, opts.grid_hi));
        if bracket.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let grid = log_grid(bracket.lo, bracket.hi, opts.grid_points);
        let f_grid = grid.iter().map(|&e| nan_to_inf(f.eval(e))).collect::<Vec<_>>();
        if f_grid.iter().all(|v| v.is_infinite()) {
            return Err(Error::EmptyDomain);
        }
        let f_zero = (domain.lo <= 0.0 && domain.contains(0.0)).then(|| nan_to_inf(f.eval(0.0)));
        let f_inf = (domain.hi == f64::INFINITY).then(|| nan_to_inf(f.eval(f64::INFINITY)));
        Ok(Self {
            f,
            opts,
            grid,
            f_grid,
            f_zero,
            f_inf,
        })
    }

    /// `(Omega(w), argmin eta)`; the argmin may be the `0` or `+inf` sentinel.
    pub fn minimize(&self, w: f64) -> (f64, f64) {
        let obj_with = |eta: f64, f_eta: f64| nan_to_inf(0.5 * (tikhonov_term(w, eta) + f_eta));
        let vals: Vec<f64> = self
            .grid
            .iter()
            .zip(&self.f_grid)
            .map(|(&e, &fe)| obj_with(e, fe))
            .collect();
        let n = vals.len();
        let mut i_best = 0;
        for i in 1..n {
            if vals[i] < vals[i_best] {
                i_best = i;
            }
        }
        let mut best = (vals[i_best], self.grid[i_best]);

        // The objective is unimodal in eta (convex in -1/eta). If a sentinel
        // beats the end of a grid that is still descending towards it, no
        // interior point can do better and refinement is skipped.
        if let Some(f0) = self.f_zero {
            let v = obj_with(0.0, f0);
            if v < best.0 {
                best = (v, 0.0);
            }
        }
        let decreasing_tail = n == 1 || (i_best == n - 1 && vals[n - 1] < vals[n - 2]);
        if let (Some(fi), true) = (self.f_inf, decreasing_tail) {
            let v = obj_with(f64::INFINITY, fi);
            if v < best.0 {
                best = (v, f64::INFINITY);
            }
        }
        let sentinel_wins = (best.1 == 0.0 && i_best == 0 && (n == 1 || vals[0] <= vals[1]))
            || best.1 == f64::INFINITY;

        if n > 1 && !sentinel_wins {
            let lo = i_best.saturating_sub(1);
            let hi = (i_best + 1).min(n - 1);
            let mut obj = |eta: f64| obj_with(eta, self.f.eval(eta));
            let refined = golden_log(&mut obj, self.grid[lo], self.grid[hi], vals[lo], vals[hi], self.opts.refine_tol);
            if refined.0 < best.0 {
                best = refined;
            }
        }
        best
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }
}

/// `Omega(w) = min_{eta in H} 1/2 (w^2/eta + f(eta))` with its minimizer.
pub fn omega_from_f(f: &ScalarFn, domain: Interval, w: f64, opts: &Minimize1DOptions) -> Result<(f64, f64)> {
    Ok(DualMinimizer::new(f.clone(), domain, *opts)?.minimize(w))
}

/// Result of a numeric conjugation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateValue {
    pub value: f64,
    /// `eta` lies outside the range of `eta_hat`; the supremum sits on the
    /// boundary `u = 0` (or diverges) and the value is reported as `+inf`.
    pub boundary: bool,
    /// Whether `Omega` passed the subquadratic check on the search bracket.
    pub reliable: bool,
}

/// `f(eta) = sup_{u >= 0} 2 Omega(sqrt(u)) - u / eta`.
pub fn f_from_omega(omega: &ScalarFn, eta: f64, opts: &Minimize1DOptions) -> Result<ConjugateValue> {
    opts.validate()?;
    if !(eta >= 0.0) {
        return Err(Error::InvalidParameter(format!("eta must be non-negative, got {eta}")));
    }
    let u_lo = opts.grid_lo * opts.grid_lo;
    let u_hi = opts.grid_hi * opts.grid_hi;
    let check = subquadratic_check(omega, &log_grid(opts.grid_lo, opts.grid_hi, 64));
    let reliable = check.pass;

    let g2 = |u: f64| 2.0 * omega.eval(u.sqrt());
    let phi = |u: f64| -> f64 {
        let lin = if eta == f64::INFINITY { 0.0 } else if eta == 0.0 { if u == 0.0 { 0.0 } else { f64::INFINITY } } else { u / eta };
        let v = g2(u) - lin;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let phi0 = phi(0.0);
    if eta == 0.0 {
        return Ok(ConjugateValue { value: phi0, boundary: false, reliable });
    }

    let grid = log_grid(u_lo, u_hi, 2 * opts.grid_points);
    let vals: Vec<f64> = grid.iter().map(|&u| phi(u)).collect();
    let n = vals.len();
    let mut i_best = 0;
    for i in 1..n {
        if vals[i] > vals[i_best] {
            i_best = i;
        }
    }

    if i_best == n - 1 && vals[n - 1] > vals[n - 2] {
        let far = phi(grid[n - 1] * 1e4);
        if far > vals[n - 1] {
            return Ok(ConjugateValue { value: f64::INFINITY, boundary: true, reliable });
        }
    }

    let lo = i_best.saturating_sub(1);
    let hi = (i_best + 1).min(n - 1);
    let mut neg = |u: f64| -phi(u);
    let (neg_best, _) = golden_log(&mut neg, grid[lo], grid[hi], -vals[lo], -vals[hi], opts.refine_tol);
    let best = (-neg_best).max(vals[i_best]);

    if phi0 >= best {
        // Supremum at u = 0. A strict decrease away from 0 means no |w| maps
        // to this eta, i.e. eta is outside H.
        let probe = 1e-6 * if eta.is_finite() { eta * eta } else { 1.0 };
        let drop = phi0 - phi(probe);
        if drop > 1e-12 * (1.0 + phi0.abs()) {
            return Ok(ConjugateValue { value: f64::INFINITY, boundary: true, reliable });
        }
        return Ok(ConjugateValue { value: phi0, boundary: false, reliable });
    }
    Ok(ConjugateValue { value: best, boundary: false, reliable })
}

/// `Omega(w) = int_a^{w^2} dt / (2 eta_hat(sqrt(t))) + C_a`.
///
/// The integral is evaluated as `int s / eta_hat(s) ds` over
/// `s in [sqrt(a), |w|]`.
pub fn omega_from_eta_hat(
    eta_hat: &ScalarFn,
    w: f64,
    anchor: f64,
    anchor_value: f64,
    opts: &QuadratureOptions,
) -> Result<f64> {
    if !(anchor >= 0.0) || !w.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "anchor must be non-negative and w finite, got a={anchor}, w={w}"
        )));
    }
    let s0 = anchor.sqrt();
    let s1 = w.abs();
    if s0 == s1 {
        return Ok(anchor_value);
    }
    let (lo, hi) = if s0 < s1 { (s0, s1) } else { (s1, s0) };

    // monotonicity scan over the integration range
    const SCAN: usize = 64;
    let mut prev = eta_hat.eval(lo);
    for i in 1..=SCAN {
        let s = lo + (hi - lo) * i as f64 / SCAN as f64;
        let e = eta_hat.eval(s);
        if e.is_nan() || e < prev * (1.0 - 1e-12) {
            return Err(Error::NonMonotoneUpdate { at: s });
        }
        if e == 0.0 {
            return Err(Error::NonMonotoneUpdate { at: s });
        }
        prev = e;
    }

    let integrand = |s: f64| {
        let e = eta_hat.eval(s);
        if e == f64::INFINITY {
            0.0
        } else {
            s / e
        }
    };
    let integral = quad_adaptive(integrand, s0, s1, opts)?;
    Ok(anchor_value + integral)
}

/// `eta_hat(w) = 1 / (2 dOmega/du)` at `u = w^2`, by finite differences.
/// `fd_step` defaults to `max(1e-6, 1e-6 u)`.
pub fn eta_hat_from_omega(omega: &ScalarFn, w: f64, fd_step: Option<f64>) -> f64 {
    let u = w * w;
    let h = fd_step.unwrap_or_else(|| (1e-6 * u).max(1e-6));
    let g = |u: f64| omega.eval(u.sqrt());
    let d = if u > h {
        (g(u + h) - g(u - h)) / (2.0 * h)
    } else {
        (g(u + h) - g(u)) / h
    };
    if !(d > 0.0) {
        f64::INFINITY
    } else {
        let e = 0.5 / d;
        if e.is_finite() {
            e
        } else {
            f64::INFINITY
        }
    }
}

/// Outcome of a second-difference concavity scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubquadraticReport {
    pub pass: bool,
    /// Largest positive second difference seen (0 when none).
    pub worst_violation: f64,
    pub worst_at: f64,
}

pub const SUBQUADRATIC_TOL: f64 = 1e-8;

/// Checks that `g(u) = Omega(sqrt(u))` is concave on `u_grid` (sorted,
/// non-negative). Non-uniform spacing is handled by the three-point second
/// difference scaled to agree with `g0 - 2 g1 + g2` on uniform grids.
pub fn subquadratic_check(omega: &ScalarFn, u_grid: &[f64]) -> SubquadraticReport {
    subquadratic_check_fn(|u| omega.eval(u.sqrt()), u_grid)
}

pub fn subquadratic_check_fn(g: impl Fn(f64) -> f64, u_grid: &[f64]) -> SubquadraticReport {
    let vals: Vec<f64> = u_grid.iter().map(|&u| g(u)).collect();
    let mut worst = 0.0f64;
    let mut worst_at = f64::NAN;
    for i in 1..u_grid.len().saturating_sub(1) {
        let (g0, g1, g2) = (vals[i - 1], vals[i], vals[i + 1]);
        if !(g0.is_finite() && g1.is_finite() && g2.is_finite()) {
            continue;
        }
        let h1 = u_grid[i] - u_grid[i - 1];
        let h2 = u_grid[i + 1] - u_grid[i];
        let d2 = (h2 * g0 - (h1 + h2) * g1 + h1 * g2) * 2.0 / (h1 + h2);
        if d2 > worst {
            worst = d2;
            worst_at = u_grid[i];
        }
    }
    SubquadraticReport {
        pass: worst <= SUBQUADRATIC_TOL,
        worst_violation: worst,
        worst_at,
    }
}

/// Subquadratic check for any zoo penalty. Non-separable penalties are
/// scanned along the ray `sqrt(u) * (1, 1/2, 1/4)`.
pub fn penalty_subquadratic(spec: &PenaltySpec, u_grid: &[f64]) -> SubquadraticReport {
    if spec.is_separable() {
        subquadratic_check(&ScalarFn::penalty_omega(*spec), u_grid)
    } else {
        let dir = [1.0, 0.5, 0.25];
        subquadratic_check_fn(
            |u| {
                let r = u.sqrt();
                let w: Vec<f64> = dir.iter().map(|d| d * r).collect();
                spec.omega(&w)
            },
            u_grid,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualTolerance {
    pub value: f64,
    pub argmin_rel: f64,
}

impl Default for DualTolerance {
    fn default() -> Self {
        Self {
            value: 1e-6,
            argmin_rel: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualReport {
    pub name: String,
    pub max_value_dev: f64,
    pub max_argmin_rel_dev: f64,
    pub points: usize,
    pub pass: bool,
}

fn rel_dev(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Brute-force verification of a penalty's dual triple against the
/// grid-minimization oracle over `w_grid`.
///
/// The `l_p` norm is checked on vectors `(w, 1)` with a nested 2-D search;
/// hard thresholding is checked by enumerating every feasible support of
/// small vectors built from `w_grid`.
pub fn check_dual_pair(spec: &PenaltySpec, w_grid: &[f64], tol: &DualTolerance) -> Result<DualReport> {
    check_dual_pair_with(spec, &ScalarFn::penalty_f(*spec), w_grid, tol)
}

/// As [`check_dual_pair`] but with an explicit (possibly altered) dual `f`.
/// Only used for separable penalties; the others fall back to their own `f`.
pub fn check_dual_pair_with(
    spec: &PenaltySpec,
    f: &ScalarFn,
    w_grid: &[f64],
    tol: &DualTolerance,
) -> Result<DualReport> {
    let opts = Minimize1DOptions::default();
    let mut max_v = 0.0f64;
    let mut max_a = 0.0f64;
    let mut points = 0;
    match spec.kind() {
        PenaltyKind::HardThresh { k } => {
            let (v, a, n) = check_hard_thresh(spec, k, w_grid);
            max_v = v;
            max_a = a;
            points = n;
        }
        PenaltyKind::Lp { .. } => {
            for &w in w_grid {
                let (val, eta) = minimize_lp_pair(spec, w, &opts)?;
                let exact = spec.omega(&[w, 1.0]);
                let hat = spec.eta_hat(&[w, 1.0]);
                max_v = max_v.max(nan_to_inf((val - exact).abs()));
                for (got, want) in eta.iter().zip(hat.as_slice()) {
                    if want.is_finite() && *want > 0.0 {
                        max_a = max_a.max(nan_to_inf(rel_dev(*got, *want)));
                    }
                }
                points += 1;
            }
        }
        _ => {
            let dm = DualMinimizer::new(f.clone(), spec.scalar_domain(), opts)?;
            for &w in w_grid {
                let (val, eta) = dm.minimize(w);
                max_v = max_v.max(nan_to_inf((val - spec.omega_scalar(w)).abs()));
                let want = spec.eta_hat_scalar(w);
                if want.is_finite() && want > 0.0 {
                    max_a = max_a.max(nan_to_inf(rel_dev(eta, want)));
                }
                points += 1;
            }
        }
    }
    Ok(DualReport {
        name: spec.to_string(),
        max_value_dev: max_v,
        max_argmin_rel_dev: max_a,
        points,
        pass: max_v <= tol.value && max_a <= tol.argmin_rel,
    })
}

/// Nested minimization of the `l_p` dual objective at `w = (w, 1)`.
fn minimize_lp_pair(spec: &PenaltySpec, w: f64, opts: &Minimize1DOptions) -> Result<(f64, [f64; 2])> {
    let (spec, opts) = (*spec, *opts);
    let outer = ScalarFn::new("outer", Interval::non_negative(), move |e1| {
        2.0 * lp_inner(spec, w, e1, &opts).0 - tikhonov_term(w, e1)
    });
    let dm = DualMinimizer::new(outer, Interval::non_negative(), opts)?;
    let (val, e1) = dm.minimize(w);
    let e2 = lp_inner(spec, w, e1, &opts).1;
    Ok((val, [e1, e2]))
}

/// Minimum over the second coordinate with the first held at `e1`.
fn lp_inner(spec: PenaltySpec, w: f64, e1: f64, opts: &Minimize1DOptions) -> (f64, f64) {
    let f = ScalarFn::new("inner", Interval::non_negative(), move |e2| {
        let eta = EtaVector::new(vec![e1, e2]).expect("non-negative");
        // the w-part is folded into f so the minimizer only adds 1/e2
        tikhonov_term(w, e1) + spec.f_dual(&eta)
    });
    DualMinimizer::new(f, Interval::non_negative(), *opts)
        .map(|dm| dm.minimize(1.0))
        .unwrap_or((f64::INFINITY, f64::NAN))
}

/// Enumerates supports of size at most `k` for every length-3 vector built
/// from `w_grid` magnitudes (including zeros). Returns (value dev, argmin dev, count).
fn check_hard_thresh(spec: &PenaltySpec, k: usize, w_grid: &[f64]) -> (f64, f64, usize) {
    let mut entries = vec![0.0];
    let step = (w_grid.len() / 4).max(1);
    for (i, &w) in w_grid.iter().enumerate().step_by(step) {
        entries.push(if i % 2 == 0 { w } else { -w });
    }
    let d = 3;
    let mut max_v = 0.0f64;
    let mut max_a = 0.0f64;
    let mut count = 0;
    let m = entries.len();
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let w = [entries[a], entries[b], entries[c]];
                let exact = spec.omega(&w);
                let mut best = f64::INFINITY;
                for mask in 0u32..(1 << d) {
                    if mask.count_ones() as usize > k {
                        continue;
                    }
                    let eta: Vec<f64> = (0..d)
                        .map(|j| if mask & (1 << j) != 0 { f64::INFINITY } else { 0.0 })
                        .collect();
                    let eta = EtaVector::new(eta).expect("valid");
                    let quad: f64 = w.iter().zip(eta.as_slice()).map(|(&x, &e)| tikhonov_term(x, e)).sum();
                    best = best.min(0.5 * (quad + spec.f_dual(&eta)));
                }
                let dev = if best == exact { 0.0 } else { (best - exact).abs() };
                max_v = max_v.max(nan_to_inf(dev));
                let hat = spec.eta_hat(&w);
                let quad: f64 = w.iter().zip(hat.as_slice()).map(|(&x, &e)| tikhonov_term(x, e)).sum();
                let at_hat = 0.5 * (quad + spec.f_dual(&hat));
                if exact.is_finite() && at_hat != exact {
                    max_a = max_a.max(nan_to_inf((at_hat - exact).abs()));
                }
                count += 1;
            }
        }
    }
    (max_v, max_a, count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn omega_from_f_identity_dual() {
        let f = ScalarFn::new("eta", Interval::non_negative(), |e| e);
        let (v, e) = omega_from_f(&f, Interval::non_negative(), 2.0, &Minimize1DOptions::default()).unwrap();
        assert!(close(v, 2.0, 1e-12));
        assert!(close(e, 2.0, 1e-6));
    }

    #[test]
    fn omega_from_f_boundary_at_infinity() {
        let mcp = PenaltySpec::mcp(1.0, 1.0).unwrap();
        let (v, e) = omega_from_f(&ScalarFn::penalty_f(mcp), mcp.scalar_domain(), 2.0, &Minimize1DOptions::default()).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(e, f64::INFINITY);
    }

    #[test]
    fn empty_domain_is_an_error() {
        let f = ScalarFn::new("eta", Interval::new(1e9, 1e10), |e| e);
        let r = omega_from_f(&f, Interval::new(1e9, 1e10), 1.0, &Minimize1DOptions::default());
        assert_eq!(r, Err(Error::EmptyDomain));
    }

    #[test]
    fn conjugate_examples() {
        let opts = Minimize1DOptions::default();
        let l1 = ScalarFn::penalty_omega(PenaltySpec::l1());
        let r = f_from_omega(&l1, 3.0, &opts).unwrap();
        assert!(close(r.value, 3.0, 1e-9) && r.reliable);

        let huber = ScalarFn::penalty_omega(PenaltySpec::huber(1.0).unwrap());
        let r = f_from_omega(&huber, 0.5, &opts).unwrap();
        assert_eq!(r.value, f64::INFINITY);
        assert!(r.boundary);
        let r = f_from_omega(&huber, 1.0, &opts).unwrap();
        assert!(close(r.value, 1.0, 1e-9));

        let mcp = ScalarFn::penalty_omega(PenaltySpec::mcp(1.0, 1.0).unwrap());
        let r = f_from_omega(&mcp, 4.0, &opts).unwrap();
        assert!(close(r.value, 0.8, 1e-9));
    }

    #[test]
    fn eta_hat_integral_examples() {
        let q = QuadratureOptions::default();
        let l1 = ScalarFn::penalty_eta_hat(PenaltySpec::l1());
        assert!(close(omega_from_eta_hat(&l1, 2.0, 0.0, 0.0, &q).unwrap(), 2.0, 1e-10));
        let ls = ScalarFn::penalty_eta_hat(PenaltySpec::log_sum(2.0).unwrap());
        assert_eq!(omega_from_eta_hat(&ls, 1.0, 1.0, 3f64.ln(), &q).unwrap(), 3f64.ln());
        let v = omega_from_eta_hat(&ls, 2.0, 0.0, 2f64.ln(), &q).unwrap();
        assert!(close(v, 4f64.ln(), 1e-9));
    }

    #[test]
    fn non_monotone_update_rejected() {
        let bad = ScalarFn::new("bump", Interval::real_line(), |s: f64| 1.0 + (3.0 * s).sin().powi(2));
        let r = omega_from_eta_hat(&bad, 2.0, 0.0, 0.0, &QuadratureOptions::default());
        assert!(matches!(r, Err(Error::NonMonotoneUpdate { .. })));
    }

    #[test]
    fn finite_difference_eta_hat() {
        let l1 = ScalarFn::penalty_omega(PenaltySpec::l1());
        assert!(close(eta_hat_from_omega(&l1, 1.5, None), 1.5, 1e-6));
        let ls = ScalarFn::penalty_omega(PenaltySpec::log_sum(2.0).unwrap());
        assert!(close(eta_hat_from_omega(&ls, 1.0, None), 3.0, 1e-6));
        let mcp = ScalarFn::penalty_omega(PenaltySpec::mcp(1.0, 1.0).unwrap());
        assert_eq!(eta_hat_from_omega(&mcp, 2.0, None), f64::INFINITY);
    }

    #[test]
    fn subquadratic_examples() {
        let grid: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let sq = ScalarFn::new("w^2", Interval::real_line(), |w| w * w);
        assert!(subquadratic_check(&sq, &grid).pass);
        let abs = ScalarFn::new("|w|", Interval::real_line(), f64::abs);
        assert!(subquadratic_check(&abs, &grid).pass);
        let quartic = ScalarFn::new("w^4", Interval::real_line(), |w| w.powi(4));
        let r = subquadratic_check(&quartic, &grid);
        assert!(!r.pass && r.worst_violation > 0.0);
    }

    #[test]
    fn hard_thresh_enumeration_is_exact() {
        let grid = log_grid(1e-3, 10.0, 16);
        let r = check_dual_pair(&PenaltySpec::hard_thresh(2), &grid, &DualTolerance::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.max_value_dev, 0.0);
        assert_eq!(r.max_argmin_rel_dev, 0.0);
    }
}

//! Solvers for the standardized least-squares loss
//! `L(w) = ||y - X w||^2 / (2n)`, all emitting a common [`Trace`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dropout::{alpha_from_eta, pruning_schedule, vardrop_f_grad, EffectivePenalty, MaskFamily, MethodSpec};
use crate::error::{Error, Result};
use crate::lf::Interval;
use crate::penalty::{top_k_mask, EtaVector, PenaltyKind, PenaltySpec};

/// A penalty usable by the solvers: `Omega`, its minimizer `eta_hat` and,
/// where available, gradients of `Omega` and of the dual `f`.
pub trait DualPenalty {
    fn name(&self) -> String;
    fn omega(&self, w: &[f64]) -> f64;
    fn eta_hat(&self, w: &[f64]) -> EtaVector;
    fn omega_grad(&self, w: &[f64]) -> Option<Vec<f64>>;
    fn f_grad(&self, eta: &[f64]) -> Option<Vec<f64>>;
    /// Per-coordinate domain of `eta`.
    fn eta_domain(&self) -> Interval;
}

impl DualPenalty for PenaltySpec {
    fn name(&self) -> String {
        self.to_string()
    }
    fn omega(&self, w: &[f64]) -> f64 {
        PenaltySpec::omega(self, w)
    }
    fn eta_hat(&self, w: &[f64]) -> EtaVector {
        PenaltySpec::eta_hat(self, w)
    }
    fn omega_grad(&self, w: &[f64]) -> Option<Vec<f64>> {
        if self.is_separable() || matches!(self.kind(), PenaltyKind::Lp { .. }) {
            Some(PenaltySpec::omega_grad(self, w))
        } else {
            None
        }
    }
    fn f_grad(&self, eta: &[f64]) -> Option<Vec<f64>> {
        self.f_dual_grad(eta)
    }
    fn eta_domain(&self) -> Interval {
        if self.is_separable() {
            self.scalar_domain()
        } else {
            Interval::non_negative()
        }
    }
}

/// The VariationalDropout dual `f(eta) = 2 KL(eta / lambda_m)` with its
/// numerically computed effective penalty.
#[derive(Debug, Clone)]
pub struct VarDropPenalty {
    lambda: f64,
    effective: EffectivePenalty,
}

impl VarDropPenalty {
    pub fn new(lambda: f64) -> Result<Self> {
        let effective = MethodSpec::VariationalDropout { lambda }.effective_penalty_fn()?;
        Ok(Self { lambda, effective })
    }
}

impl DualPenalty for VarDropPenalty {
    fn name(&self) -> String {
        format!("vardrop:lambda={}", self.lambda)
    }
    fn omega(&self, w: &[f64]) -> f64 {
        w.iter().map(|&x| self.effective.eval(x)).sum()
    }
    fn eta_hat(&self, w: &[f64]) -> EtaVector {
        let v = w.iter().map(|&x| self.effective.eval_with_argmin(x).1).collect();
        EtaVector::new(v).expect("argmin is non-negative")
    }
    fn omega_grad(&self, w: &[f64]) -> Option<Vec<f64>> {
        // envelope theorem: d Omega / dw = w / eta_hat(w)
        Some(
            w.iter()
                .map(|&x| {
                    let e = self.effective.eval_with_argmin(x).1;
                    if e > 0.0 && e.is_finite() { x / e } else { 0.0 }
                })
                .collect(),
        )
    }
    fn f_grad(&self, eta: &[f64]) -> Option<Vec<f64>> {
        Some(eta.iter().map(|&e| vardrop_f_grad(e, self.lambda)).collect())
    }
    fn eta_domain(&self) -> Interval {
        Interval::non_negative()
    }
}

/// Standardized regression data with cached `G = X^T X / n`, `b = X^T y / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    g: DMatrix<f64>,
    b: DVector<f64>,
}

impl Problem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidParameter("X must have at least one row and column".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        let n = x.nrows() as f64;
        let g = x.tr_mul(&x) / n;
        let b = x.tr_mul(&y) / n;
        Ok(Self { x, y, g, b })
    }

    /// From row-major data.
    pub fn from_rows(n: usize, d: usize, x_row_major: &[f64], y: &[f64]) -> Result<Self> {
        if x_row_major.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: x_row_major.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, d, x_row_major), DVector::from_column_slice(y))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// `X^T X / n`.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.g
    }

    /// Row-major copy of `X`.
    pub fn x_row_major(&self) -> Vec<f64> {
        let (n, d) = (self.n(), self.d());
        let mut out = Vec::with_capacity(n * d);
        for i in 0..n {
            for j in 0..d {
                out.push(self.x[(i, j)]);
            }
        }
        out
    }

    /// Largest deviation of `diag(X^T X / n)` from 1.
    pub fn standardization_error(&self) -> f64 {
        (0..self.d()).map(|j| (self.g[(j, j)] - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn is_standardized(&self, tol: f64) -> bool {
        self.standardization_error() <= tol
    }

    pub fn risk(&self, w: &[f64]) -> f64 {
        let r = &self.y - &self.x * DVector::from_column_slice(w);
        r.norm_squared() / (2.0 * self.n() as f64)
    }

    /// `grad L(w) = G w - b`.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let gw = &self.g * DVector::from_column_slice(w);
        gw.iter().zip(self.b.iter()).map(|(a, b)| a - b).collect()
    }

    pub fn predict(&self, w: &[f64]) -> Vec<f64> {
        (&self.x * DVector::from_column_slice(w)).iter().copied().collect()
    }
}

/// Divides each column by its root-mean-square. Returns the scaled matrix
/// and the scales.
pub fn standardize(x_raw: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = x_raw.nrows() as f64;
    let mut x = x_raw.clone();
    let mut scales = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let rms = (x.column(j).norm_squared() / n).sqrt();
        if !(rms > 0.0) || !rms.is_finite() {
            return Err(Error::ZeroColumn(j));
        }
        x.column_mut(j).unscale_mut(rms);
        scales.push(rms);
    }
    Ok((x, scales))
}

/// Maps coefficients fitted on standardized columns back to raw columns.
pub fn unstandardize_coefficients(w: &[f64], scales: &[f64]) -> Vec<f64> {
    w.iter().zip(scales).map(|(w, s)| w / s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSchedule {
    Constant,
    /// `rho_t = rho (1 - t / T)` for `t = 0..T`.
    LinearDecay,
}

impl FromStr for StepSchedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "constant" => Ok(StepSchedule::Constant),
            "linear-decay" | "linear" | "decay" => Ok(StepSchedule::LinearDecay),
            other => Err(Error::parse(s, format!("unknown step schedule `{other}`"))),
        }
    }
}

impl fmt::Display for StepSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepSchedule::Constant => "constant",
            StepSchedule::LinearDecay => "linear-decay",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// `N(0, scale^2)` entries drawn from the config seed.
    Gaussian { scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub step: f64,
    pub schedule: StepSchedule,
    pub iters: usize,
    pub seed: u64,
    pub mask: Option<MaskFamily>,
    pub log_every: usize,
    pub init: Init,
    pub zero_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            step: 0.1,
            schedule: StepSchedule::Constant,
            iters: 100,
            seed: 0,
            mask: None,
            log_every: 1,
            init: Init::Zeros,
            zero_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {}", self.step)));
        }
        if self.iters == 0 {
            return Err(Error::InvalidParameter("iters must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(Error::InvalidParameter("log_every must be positive".into()));
        }
        Ok(())
    }

    /// Step size for iteration `t` (0-based).
    pub fn step_at(&self, t: usize) -> f64 {
        match self.schedule {
            StepSchedule::Constant => self.step,
            StepSchedule::LinearDecay => self.step * (1.0 - t as f64 / self.iters as f64),
        }
    }

    fn initial_w(&self, d: usize) -> Vec<f64> {
        match self.init {
            Init::Zeros => vec![0.0; d],
            Init::Gaussian { scale } => {
                // separate stream from the mask draws
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
                (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
            }
        }
    }

    fn should_log(&self, t: usize) -> bool {
        t.is_multiple_of(self.log_every) || t == self.iters
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub w: Vec<f64>,
    pub eta: Option<Vec<f64>>,
    pub risk: f64,
    /// `L(w) + lambda Omega(w)`.
    pub objective: f64,
    pub nnz: usize,
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub solver: String,
    pub penalty: String,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    fn new(solver: &str, penalty: String) -> Self {
        Self {
            solver: solver.to_string(),
            penalty,
            records: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn final_w(&self) -> &[f64] {
        self.records.last().map(|r| r.w.as_slice()).unwrap_or(&[])
    }

    pub fn objectives(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.objective).collect()
    }

    /// Equality of everything except wall-clock time; floats compared by bits.
    pub fn same_path(&self, other: &Trace) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.iter == b.iter
                    && bits(&a.w) == bits(&b.w)
                    && a.eta.as_deref().map(bits) == b.eta.as_deref().map(bits)
                    && a.risk.to_bits() == b.risk.to_bits()
                    && a.objective.to_bits() == b.objective.to_bits()
                    && a.nnz == b.nnz
            })
    }
}

type OmegaFn<'a> = Box<dyn Fn(&[f64]) -> f64 + 'a>;

struct Recorder<'a> {
    problem: &'a Problem,
    config: &'a SolverConfig,
    omega: OmegaFn<'a>,
    start: Instant,
    trace: Trace,
}

impl<'a> Recorder<'a> {
    fn new(
        problem: &'a Problem,
        config: &'a SolverConfig,
        solver: &str,
        penalty: String,
        omega: impl Fn(&[f64]) -> f64 + 'a,
    ) -> Self {
        Self {
            problem,
            config,
            omega: Box::new(omega),
            start: Instant::now(),
            trace: Trace::new(solver, penalty),
        }
    }

    fn log(&mut self, t: usize, w: &[f64], eta: Option<&[f64]>) {
        if !self.config.should_log(t) {
            return;
        }
        let risk = self.problem.risk(w);
        let om = (self.omega)(w);
        let objective = if self.config.lambda == 0.0 { risk } else { risk + self.config.lambda * om };
        self.trace.records.push(TraceRecord {
            iter: t,
            w: w.to_vec(),
            eta: eta.map(<[f64]>::to_vec),
            risk,
            objective,
            nnz: w.iter().filter(|x| x.abs() > self.config.zero_tol).count(),
            elapsed: self.start.elapsed().as_secs_f64(),
        });
    }

    fn finish(self) -> Trace {
        self.trace
    }
}

fn check_dims(problem: &Problem, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    if !problem.is_standardized(1e-8) {
        let j = (0..problem.d())
            .max_by(|&a, &b| {
                let ea = (problem.g[(a, a)] - 1.0).abs();
                let eb = (problem.g[(b, b)] - 1.0).abs();
                ea.partial_cmp(&eb).unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        return Err(Error::NotStandardized {
            column: j,
            value: problem.g[(j, j)],
        });
    }
    Ok(())
}

/// Tikhonov proximal map `v / (1 + rho lambda / eta)` with the sentinel
/// conventions; zero results are returned as `+0`.
fn tikhonov_prox(v: f64, eta: f64, rho_lambda: f64) -> f64 {
    let out = if eta == 0.0 {
        0.0
    } else if eta == f64::INFINITY || rho_lambda == 0.0 {
        v
    } else {
        v / (1.0 + rho_lambda / eta)
    };
    if out == 0.0 {
        0.0
    } else {
        out
    }
}

/// Minimizes `L(w) + (lambda/2) w^T diag(eta)^-1 w` exactly, dropping
/// coordinates with `eta = 0`.
fn weighted_ridge(problem: &Problem, eta: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let d = problem.d();
    let active: Vec<usize> = (0..d)
        .filter(|&j| eta[j] > 0.0 && (lambda / eta[j]).is_finite())
        .collect();
    let mut w = vec![0.0; d];
    if active.is_empty() {
        return Ok(w);
    }
    let m = active.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for (p, &i) in active.iter().enumerate() {
        for (q, &j) in active.iter().enumerate() {
            a[(p, q)] = problem.g[(i, j)];
        }
        if eta[i] != f64::INFINITY {
            a[(p, p)] += lambda / eta[i];
        }
        rhs[p] = problem.b[i];
    }
    let chol = match a.clone().cholesky() {
        Some(c) => c,
        None => {
            for p in 0..m {
                a[(p, p)] += 1e-12;
            }
            a.cholesky().ok_or(Error::SingularSystem)?
        }
    };
    let sol = chol.solve(&rhs);
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem);
    }
    for (p, &i) in active.iter().enumerate() {
        w[i] = sol[p];
    }
    Ok(w)
}

/// Iteratively reweighted least squares: alternate the exact `w` update for
/// fixed `eta` with `eta = eta_hat(w)`. Iteration 0 is the ridge solution
/// with `eta = 1`.
pub fn irls(problem: &Problem, penalty: &dyn DualPenalty, config: &SolverConfig) -> Result<Trace> {
    check_dims(problem, config)?;
    let d = problem.d();
    let mut rec = Recorder::new(problem, config, "irls", penalty.name(), |w| penalty.omega(w));
    let mut eta = vec![1.0; d];
    let mut w = weighted_ridge(problem, &eta, config.lambda)?;
    rec.log(0, &w, Some(&eta));
    for t in 1..=config.iters {
        eta = penalty.eta_hat(&w).into_vec();
        w = weighted_ridge(problem, &eta, config.lambda)?;
        rec.log(t, &w, Some(&eta));
    }
    Ok(rec.finish())
}

/// Joint gradient descent on `w` and `theta = log eta` of
/// `L(w) + (lambda/2)(sum w^2/eta + f(eta))`. `eta` starts at
/// `lambda e^5`.
pub fn joint_gd(problem: &Problem, penalty: &dyn DualPenalty, config: &SolverConfig) -> Result<Trace> {
    check_dims(problem, config)?;
    let d = problem.d();
    let lambda = config.lambda;
    let dom = penalty.eta_domain();
    let clamp = |e: f64| -> f64 {
        let hi = if dom.hi.is_finite() { dom.hi * (1.0 - 1e-12) } else { f64::MAX };
        e.clamp(dom.lo.max(f64::MIN_POSITIVE), hi)
    };
    if penalty.f_grad(&[1.0]).is_none() {
        return Err(Error::InvalidCombination(format!(
            "joint_gd needs a differentiable dual; `{}` has none",
            penalty.name()
        )));
    }
    let mut w = config.initial_w(d);
    let mut theta = vec![clamp((lambda.max(f64::MIN_POSITIVE)) * 5f64.exp()).ln(); d];
    let mut rec = Recorder::new(problem, config, "joint_gd", penalty.name(), |w| penalty.omega(w));
    let eta_of = |theta: &[f64]| theta.iter().map(|t| clamp(t.exp())).collect::<Vec<_>>();
    rec.log(0, &w, Some(&eta_of(&theta)));
    for t in 0..config.iters {
        let rho = config.step_at(t);
        let eta = eta_of(&theta);
        let grad_l = problem.gradient(&w);
        let fg = penalty.f_grad(&eta).ok_or_else(|| {
            Error::InvalidCombination(format!("dual of `{}` is not differentiable here", penalty.name()))
        })?;
        for j in 0..d {
            let gw = grad_l[j] + lambda * w[j] / eta[j];
            // d/dtheta of (lambda/2)(w^2/eta + f(eta)) with eta = e^theta
            let gt = 0.5 * lambda * (-w[j] * w[j] / eta[j] + eta[j] * fg[j]);
            w[j] -= rho * gw;
            theta[j] = clamp((theta[j] - rho * gt).exp()).ln();
        }
        rec.log(t + 1, &w, Some(&eta_of(&theta)));
    }
    Ok(rec.finish())
}

/// Gradient descent on `w` of the Tikhonov objective with `eta = eta_hat(w)`
/// refreshed every iteration. Coordinates with `eta = 0` are set to 0.
pub fn ada_tikhonov(problem: &Problem, penalty: &dyn DualPenalty, config: &SolverConfig) -> Result<Trace> {
    check_dims(problem, config)?;
    let d = problem.d();
    let mut w = config.initial_w(d);
    let mut rec = Recorder::new(problem, config, "ada_tikhonov", penalty.name(), |w| penalty.omega(w));
    rec.log(0, &w, None);
    for t in 0..config.iters {
        let rho = config.step_at(t);
        let eta = penalty.eta_hat(&w).into_vec();
        let g = problem.gradient(&w);
        for j in 0..d {
            if eta[j] == 0.0 {
                w[j] = 0.0;
                continue;
            }
            let reg = if eta[j] == f64::INFINITY { 0.0 } else { config.lambda * w[j] / eta[j] };
            w[j] -= rho * (g[j] + reg);
        }
        rec.log(t + 1, &w, Some(&eta));
    }
    Ok(rec.finish())
}

/// One proximal step: gradient step on `L`, then the Tikhonov prox with
/// `eta = eta_hat` of the pre-prox point.
fn prox_step(penalty: &dyn DualPenalty, w: &mut [f64], grad: &[f64], rho: f64, lambda: f64) -> Vec<f64> {
    for j in 0..w.len() {
        w[j] -= rho * grad[j];
    }
    let eta = penalty.eta_hat(w).into_vec();
    for j in 0..w.len() {
        w[j] = tikhonov_prox(w[j], eta[j], rho * lambda);
    }
    eta
}

/// Proximal gradient descent with the adaptive Tikhonov prox.
pub fn ada_prox(problem: &Problem, penalty: &dyn DualPenalty, config: &SolverConfig) -> Result<Trace> {
    check_dims(problem, config)?;
    let mut w = config.initial_w(problem.d());
    let mut rec = Recorder::new(problem, config, "ada_prox", penalty.name(), |w| penalty.omega(w));
    rec.log(0, &w, None);
    for t in 0..config.iters {
        let g = problem.gradient(&w);
        let eta = prox_step(penalty, &mut w, &g, config.step_at(t), config.lambda);
        rec.log(t + 1, &w, Some(&eta));
    }
    Ok(rec.finish())
}

/// (Sub)gradient descent on `L + lambda Omega`, subgradient 0 at kinks.
pub fn direct_gd(problem: &Problem, penalty: &dyn DualPenalty, config: &SolverConfig) -> Result<Trace> {
    check_dims(problem, config)?;
    let d = problem.d();
    let mut w = config.initial_w(d);
    let mut rec = Recorder::new(problem, config, "direct_gd", penalty.name(), |w| penalty.omega(w));
    rec.log(0, &w, None);
    for t in 0..config.iters {
        let rho = config.step_at(t);
        let g = problem.gradient(&w);
        let og = penalty.omega_grad(&w).ok_or_else(|| {
            Error::InvalidCombination(format!("`{}` has no gradient for direct descent", penalty.name()))
        })?;
        for j in 0..d {
            w[j] -= rho * (g[j] + config.lambda * og[j]);
        }
        rec.log(t + 1, &w, None);
    }
    Ok(rec.finish())
}

fn require_unbiased_mask(config: &SolverConfig, solver: &str) -> Result<MaskFamily> {
    match config.mask {
        None => Err(Error::InvalidCombination(format!("{solver} needs a mask family"))),
        Some(MaskFamily::BiasedBernoulli) => Err(Error::InvalidCombination(format!(
            "{solver} needs an unbiased mask family (binary or gaussian)"
        ))),
        Some(m) => Ok(m),
    }
}

/// Stochastic gradient of `w -> L(s o w)`: `s o (G (s o w) - b)`.
pub fn masked_gradient(problem: &Problem, w: &[f64], s: &[f64]) -> Vec<f64> {
    let sw: Vec<f64> = w.iter().zip(s).map(|(a, b)| a * b).collect();
    problem.gradient(&sw).iter().zip(s).map(|(g, s)| g * s).collect()
}

/// Gradient of the closed-form expected dropout loss,
/// `grad L(w) + (1/alpha - 1) o diag(G) o w`.
pub fn expected_dropout_gradient(problem: &Problem, w: &[f64], alpha: &[f64]) -> Vec<f64> {
    let g = problem.gradient(w);
    (0..w.len())
        .map(|j| g[j] + (1.0 / alpha[j] - 1.0) * problem.g[(j, j)] * w[j])
        .collect()
}

fn draw_masks(family: MaskFamily, alpha: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    alpha.iter().map(|&a| family.draw(a, rng)).collect()
}

/// Adaptive dropout: `w <- w - rho grad_w L(s o w)` with `s ~ Mask(alpha)`,
/// then `alpha = eta_hat(w) / (eta_hat(w) + lambda)`. Masking starts at
/// `alpha = 1`.
pub fn dropout_sgd(problem: &Problem, penalty: &dyn DualPenalty, config: &SolverConfig) -> Result<Trace> {
    check_dims(problem, config)?;
    let family = require_unbiased_mask(config, "dropout_sgd")?;
    let d = problem.d();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = config.initial_w(d);
    let mut alpha = vec![1.0; d];
    let mut rec = Recorder::new(problem, config, "dropout_sgd", penalty.name(), |w| penalty.omega(w));
    rec.log(0, &w, None);
    for t in 0..config.iters {
        let s = draw_masks(family, &alpha, &mut rng);
        let g = masked_gradient(problem, &w, &s);
        let rho = config.step_at(t);
        for j in 0..d {
            w[j] -= rho * g[j];
        }
        let eta = penalty.eta_hat(&w).into_vec();
        for j in 0..d {
            alpha[j] = alpha_from_eta(eta[j], config.lambda);
        }
        rec.log(t + 1, &w, Some(&eta));
    }
    Ok(rec.finish())
}

/// Adaptive dropout with the additive reparameterization, proximal form:
/// a stochastic gradient step on `L(w + (s - 1) o v)` at `v = w`, then the
/// Tikhonov prox on `v` with `eta = eta_hat(v)`. Without a mask family the
/// masks are identically 1.
pub fn additive_reparam_prox(problem: &Problem, penalty: &dyn DualPenalty, config: &SolverConfig) -> Result<Trace> {
    check_dims(problem, config)?;
    let d = problem.d();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut w = config.initial_w(d);
    let mut v = w.clone();
    let mut alpha = vec![1.0; d];
    let mut rec = Recorder::new(problem, config, "additive_reparam_prox", penalty.name(), |w| penalty.omega(w));
    rec.log(0, &w, None);
    for t in 0..config.iters {
        let rho = config.step_at(t);
        let s = match config.mask {
            Some(family) => draw_masks(family, &alpha, &mut rng),
            None => vec![1.0; d],
        };
        let point: Vec<f64> = (0..d).map(|j| w[j] + (s[j] - 1.0) * v[j]).collect();
        let g = problem.gradient(&point);
        for j in 0..d {
            w[j] -= rho * g[j];
        }
        v.copy_from_slice(&w);
        let eta = penalty.eta_hat(&v).into_vec();
        for j in 0..d {
            v[j] = tikhonov_prox(v[j], eta[j], rho * config.lambda);
        }
        w.copy_from_slice(&v);
        for j in 0..d {
            alpha[j] = alpha_from_eta(eta[j], config.lambda);
        }
        rec.log(t + 1, &w, Some(&eta));
    }
    Ok(rec.finish())
}

/// Sparsity level for hard thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSchedule {
    Fixed(usize),
    /// Cubic decrease from `d` to `k_final` over the run.
    Cubic { k_final: usize },
}

impl KSchedule {
    pub fn k_at(&self, t: usize, total: usize, d: usize) -> usize {
        match *self {
            KSchedule::Fixed(k) => k.min(d),
            KSchedule::Cubic { k_final } => pruning_schedule(t, total, k_final.min(d), d),
        }
    }

    pub fn k_final(&self) -> usize {
        match *self {
            KSchedule::Fixed(k) => k,
            KSchedule::Cubic { k_final } => k_final,
        }
    }
}

/// Iterative hard thresholding: gradient step, then keep the top-k
/// magnitudes (ties to the lower index).
pub fn iht(problem: &Problem, k: KSchedule, config: &SolverConfig) -> Result<Trace> {
    check_dims(problem, config)?;
    let d = problem.d();
    let mut w = config.initial_w(d);
    let name = match k {
        KSchedule::Fixed(k) => format!("hardthresh:k={k}"),
        KSchedule::Cubic { k_final } => format!("hardthresh:k_final={k_final},schedule=cubic"),
    };
    // Omega is the 0/inf indicator; iterates are feasible by construction
    let mut rec = Recorder::new(problem, config, "iht", name, |_| 0.0);
    rec.log(0, &w, None);
    for t in 0..config.iters {
        let rho = config.step_at(t);
        let g = problem.gradient(&w);
        for j in 0..d {
            w[j] -= rho * g[j];
        }
        let keep = top_k_mask(&w, k.k_at(t + 1, config.iters, d));
        for j in 0..d {
            if !keep[j] {
                w[j] = 0.0;
            }
        }
        rec.log(t + 1, &w, None);
    }
    Ok(rec.finish())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionMetrics {
    pub nnz: usize,
    pub nnz_fraction: f64,
    /// `None` without a reference solution.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `||w - w_true||^2 / ||w_true||^2`.
    pub nmse: Option<f64>,
    pub exact_support: Option<bool>,
}

/// Support and error metrics of `w` against an optional truth.
pub fn solution_metrics(w: &[f64], w_true: Option<&[f64]>, zero_tol: f64) -> SolutionMetrics {
    let support: Vec<bool> = w.iter().map(|x| x.abs() > zero_tol).collect();
    let nnz = support.iter().filter(|&&s| s).count();
    let mut m = SolutionMetrics {
        nnz,
        nnz_fraction: if w.is_empty() { 0.0 } else { nnz as f64 / w.len() as f64 },
        precision: None,
        recall: None,
        nmse: None,
        exact_support: None,
    };
    if let Some(truth) = w_true {
        let true_support: Vec<bool> = truth.iter().map(|x| *x != 0.0).collect();
        let tp = support.iter().zip(&true_support).filter(|(a, b)| **a && **b).count();
        let n_true = true_support.iter().filter(|&&s| s).count();
        m.precision = Some(if nnz == 0 { 1.0 } else { tp as f64 / nnz as f64 });
        m.recall = Some(if n_true == 0 { 1.0 } else { tp as f64 / n_true as f64 });
        let err: f64 = w.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
        let norm: f64 = truth.iter().map(|b| b * b).sum();
        m.nmse = Some(if norm > 0.0 { err / norm } else { err });
        m.exact_support = Some(support == true_support);
    }
    m
}

/// Synthetic sparse regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub problem: Problem,
    pub w_true: Vec<f64>,
}

/// Standard-normal design (then standardized), `k` unit-magnitude entries
/// with random signs at random positions, and `y = X w + sigma * noise`.
pub fn gen_synthetic(n: usize, d: usize, k: usize, noise_sigma: f64, seed: u64) -> Result<Synthetic> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("n and d must be positive".into()));
    }
    if k > d {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds d = {d}")));
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter("noise_sigma must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let (x, _) = standardize(&raw)?;
    let mut w_true = vec![0.0; d];
    for j in sample_indices(&mut rng, d, k).into_vec() {
        w_true[j] = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    }
    let mut y = &x * DVector::from_column_slice(&w_true);
    if noise_sigma > 0.0 {
        for v in y.iter_mut() {
            *v += noise_sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(Synthetic {
        problem: Problem::new(x, y)?,
        w_true,
    })
}

/// Named solver for the CLI and FFI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    Irls,
    JointGd,
    AdaTikhonov,
    AdaProx,
    DirectGd,
    DropoutSgd,
    AdditiveReparam,
    Iht,
}

impl SolverKind {
    pub const ALL: [SolverKind; 8] = [
        SolverKind::Irls,
        SolverKind::JointGd,
        SolverKind::AdaTikhonov,
        SolverKind::AdaProx,
        SolverKind::DirectGd,
        SolverKind::DropoutSgd,
        SolverKind::AdditiveReparam,
        SolverKind::Iht,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SolverKind::Irls => "irls",
            SolverKind::JointGd => "joint-gd",
            SolverKind::AdaTikhonov => "ada-tikhonov",
            SolverKind::AdaProx => "ada-prox",
            SolverKind::DirectGd => "direct-gd",
            SolverKind::DropoutSgd => "dropout-sgd",
            SolverKind::AdditiveReparam => "additive-prox",
            SolverKind::Iht => "iht",
        }
    }

    /// Runs a penalty-based solver. IHT takes its level from `HardThresh(k)`.
    pub fn run(&self, problem: &Problem, penalty: &dyn DualPenalty, config: &SolverConfig) -> Result<Trace> {
        match self {
            SolverKind::Irls => irls(problem, penalty, config),
            SolverKind::JointGd => joint_gd(problem, penalty, config),
            SolverKind::AdaTikhonov => ada_tikhonov(problem, penalty, config),
            SolverKind::AdaProx => ada_prox(problem, penalty, config),
            SolverKind::DirectGd => direct_gd(problem, penalty, config),
            SolverKind::DropoutSgd => dropout_sgd(problem, penalty, config),
            SolverKind::AdditiveReparam => additive_reparam_prox(problem, penalty, config),
            SolverKind::Iht => Err(Error::InvalidCombination("iht takes a sparsity level, not a penalty".into())),
        }
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match norm.as_str() {
            "additive-reparam" | "additive-reparam-prox" => "additive-prox",
            "jointgd" => "joint-gd",
            "adaprox" => "ada-prox",
            "adatikhonov" => "ada-tikhonov",
            "directgd" | "gd" => "direct-gd",
            "dropout" => "dropout-sgd",
            other => other,
        };
        SolverKind::ALL
            .iter()
            .find(|k| k.name() == alias)
            .copied()
            .ok_or_else(|| Error::parse(s, format!("unknown solver `{norm}`")))
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_problem(w_star: &[f64]) -> Problem {
        let d = w_star.len();
        // X = sqrt(d) I so that X^T X / n = I with n = d
        let x = DMatrix::<f64>::identity(d, d) * (d as f64).sqrt();
        let y = &x * DVector::from_column_slice(w_star);
        Problem::new(x, y).unwrap()
    }

    #[test]
    fn standardize_constant_column() {
        let x = DMatrix::from_row_slice(4, 2, &[2.0, 1.0, 2.0, -1.0, 2.0, 1.0, 2.0, -1.0]);
        let (xs, scales) = standardize(&x).unwrap();
        assert_eq!(scales, vec![2.0, 1.0]);
        assert_eq!(xs[(0, 0)], 1.0);
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(standardize(&z), Err(Error::ZeroColumn(0)));
    }

    #[test]
    fn irls_recovers_near_unregularized_solution() {
        let w_star = [1.0, -2.0, 0.5, 0.0];
        let p = identity_problem(&w_star);
        let cfg = SolverConfig { lambda: 1e-4, iters: 50, ..Default::default() };
        let tr = irls(&p, &PenaltySpec::l1(), &cfg).unwrap();
        for (a, b) in tr.final_w().iter().zip(&w_star) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn irls_large_lambda_shrinks_to_zero() {
        let p = identity_problem(&[1.0, -2.0, 0.5]);
        let cfg = SolverConfig { lambda: 1e3, iters: 30, ..Default::default() };
        let tr = irls(&p, &PenaltySpec::l1(), &cfg).unwrap();
        assert!(tr.final_w().iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn prox_sentinels() {
        assert_eq!(tikhonov_prox(3.0, f64::INFINITY, 1.0), 3.0);
        assert_eq!(tikhonov_prox(3.0, 0.0, 1.0), 0.0);
        assert_eq!(tikhonov_prox(-3.0, 0.0, 1.0).to_bits(), 0.0f64.to_bits());
        assert_eq!(tikhonov_prox(2.0, 1.0, 1.0), 1.0);
    }

    #[test]
    fn iht_one_step_on_orthogonal_design() {
        let p = identity_problem(&[0.3, -2.0, 1.0, 0.1]);
        let cfg = SolverConfig { step: 1.0, iters: 1, ..Default::default() };
        let tr = iht(&p, KSchedule::Fixed(2), &cfg).unwrap();
        assert_eq!(tr.final_w(), &[0.0, -2.0, 1.0, 0.0]);
    }

    #[test]
    fn metrics_edge_cases() {
        let m = solution_metrics(&[1.0, 0.0, -1.0], Some(&[1.0, 0.0, -1.0]), 1e-8);
        assert_eq!((m.precision, m.recall, m.exact_support), (Some(1.0), Some(1.0), Some(true)));
        let m = solution_metrics(&[0.0, 0.0, 0.0], Some(&[1.0, 0.0, -1.0]), 1e-8);
        assert_eq!((m.precision, m.recall), (Some(1.0), Some(0.0)));
    }

    #[test]
    fn solver_names_parse() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("newton".parse::<SolverKind>().is_err());
    }

    #[test]
    fn masks_required_for_dropout() {
        let p = identity_problem(&[1.0, 0.0]);
        let cfg = SolverConfig::default();
        assert!(matches!(dropout_sgd(&p, &PenaltySpec::l1(), &cfg), Err(Error::InvalidCombination(_))));
        let cfg = SolverConfig { mask: Some(MaskFamily::BiasedBernoulli), ..Default::default() };
        assert!(matches!(dropout_sgd(&p, &PenaltySpec::l1(), &cfg), Err(Error::InvalidCombination(_))));
    }
}

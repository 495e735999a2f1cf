//! Sparsity penalties together with their dual (eta-trick) forms.
//!
//! Every penalty `Omega` here can be written as
//! `Omega(w) = min_{eta in H} 1/2 (sum_j w_j^2 / eta_j + f(eta))`, and each
//! [`PenaltySpec`] carries `Omega`, the dual `f` with its domain `H`, and the
//! minimizing update `eta_hat(w)` in closed form.
//!
//! Entries of an [`EtaVector`] live in `[0, +inf]`. `eta_j = 0` forces
//! `w_j = 0` and `eta_j = +inf` leaves `w_j` unpenalized; see
//! [`tikhonov_term`] for the arithmetic at those endpoints.
//!
//! The `l0` dual `f(eta) = 2 * 1{eta > 0}` has a jump at `eta = 0`, so it is
//! not covered by the usual Legendre-Fenchel existence argument. It does
//! reproduce `Omega` under the minimization, which the duality checks confirm.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grammar::SpecString;
use crate::lf::Interval;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyKind {
    L1,
    /// The (non-separable) `l_p` norm, `p` in `(0, 2)`.
    Lp { p: f64 },
    /// `1/p |w|^p`, `p` in `(0, 2)`.
    LpPow { p: f64 },
    L0,
    ElasticNet { theta: f64 },
    Huber { eps: f64 },
    LogSum { eps: f64 },
    /// SCAD with its own threshold `lambda`, separate from the outer weight.
    Scad { a: f64, lambda: f64 },
    Mcp { a: f64, lambda: f64 },
    HardThresh { k: usize },
}

/// A validated penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    kind: PenaltyKind,
}

/// Per-coordinate auxiliary weights in `[0, +inf]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaVector(Vec<f64>);

impl EtaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eta entries must lie in [0, inf], got {bad}"
            )));
        }
        Ok(Self(values))
    }

    pub fn filled(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of strictly positive entries.
    pub fn nnz(&self) -> usize {
        self.0.iter().filter(|&&e| e > 0.0).count()
    }
}

impl std::ops::Index<usize> for EtaVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// `w^2 / eta` with `eta = inf -> 0` and `eta = 0 -> inf` unless `w = 0`.
pub fn tikhonov_term(w: f64, eta: f64) -> f64 {
    if eta == f64::INFINITY {
        0.0
    } else if eta == 0.0 {
        if w == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        w * w / eta
    }
}

/// Indicator of the `k` largest magnitudes. Ties go to the lower index.
pub fn top_k_mask(w: &[f64], k: usize) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    // stable sort keeps index order among equal magnitudes
    idx.sort_by(|&i, &j| {
        w[j].abs()
            .partial_cmp(&w[i].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut mask = vec![false; w.len()];
    for &i in idx.iter().take(k) {
        mask[i] = true;
    }
    mask
}

fn sign(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match kind {
            PenaltyKind::Lp { p } | PenaltyKind::LpPow { p } if !(p > 0.0 && p < 2.0) => {
                return bad(format!("p must lie in (0, 2), got {p}"))
            }
            PenaltyKind::ElasticNet { theta } if !(theta > 0.0 && theta < 1.0) => {
                return bad(format!("theta must lie in (0, 1), got {theta}"))
            }
            PenaltyKind::Huber { eps } | PenaltyKind::LogSum { eps }
                if !(eps > 0.0 && eps.is_finite()) =>
            {
                return bad(format!("eps must be positive, got {eps}"))
            }
            PenaltyKind::Scad { a, lambda } if !(a > 1.0 && a.is_finite() && lambda > 0.0 && lambda.is_finite()) => {
                return bad(format!("SCAD needs a > 1 and lambda > 0, got a={a}, lambda={lambda}"))
            }
            PenaltyKind::Mcp { a, lambda } if !(a > 0.0 && a.is_finite() && lambda > 0.0 && lambda.is_finite()) => {
                return bad(format!("MCP needs a > 0 and lambda > 0, got a={a}, lambda={lambda}"))
            }
            _ => {}
        }
        Ok(Self { kind })
    }

    pub fn l1() -> Self {
        Self { kind: PenaltyKind::L1 }
    }

    pub fn l0() -> Self {
        Self { kind: PenaltyKind::L0 }
    }

    pub fn lp(p: f64) -> Result<Self> {
        Self::new(PenaltyKind::Lp { p })
    }

    pub fn lp_pow(p: f64) -> Result<Self> {
        Self::new(PenaltyKind::LpPow { p })
    }

    pub fn elastic_net(theta: f64) -> Result<Self> {
        Self::new(PenaltyKind::ElasticNet { theta })
    }

    pub fn huber(eps: f64) -> Result<Self> {
        Self::new(PenaltyKind::Huber { eps })
    }

    pub fn log_sum(eps: f64) -> Result<Self> {
        Self::new(PenaltyKind::LogSum { eps })
    }

    pub fn scad(a: f64, lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Scad { a, lambda })
    }

    pub fn mcp(a: f64, lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::Mcp { a, lambda })
    }

    pub fn hard_thresh(k: usize) -> Self {
        Self {
            kind: PenaltyKind::HardThresh { k },
        }
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    /// `false` only for the `l_p` norm and hard thresholding.
    pub fn is_separable(&self) -> bool {
        !matches!(self.kind, PenaltyKind::Lp { .. } | PenaltyKind::HardThresh { .. })
    }

    /// The scalar eta-domain `H` of a separable penalty.
    pub fn scalar_domain(&self) -> Interval {
        match self.kind {
            PenaltyKind::ElasticNet { theta } => Interval::new(0.0, 1.0 / theta),
            PenaltyKind::Huber { eps } => Interval::new(eps, f64::INFINITY),
            _ => Interval::new(0.0, f64::INFINITY),
        }
    }

    /// Scalar `Omega(w)`. For the non-separable kinds this is the
    /// one-dimensional restriction (`|w|` for `l_p`, and for hard
    /// thresholding the indicator of `k = 0` with `w != 0`).
    pub fn omega_scalar(&self, w: f64) -> f64 {
        let x = w.abs();
        match self.kind {
            PenaltyKind::L1 | PenaltyKind::Lp { .. } => x,
            PenaltyKind::LpPow { p } => x.powf(p) / p,
            PenaltyKind::L0 => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            PenaltyKind::ElasticNet { theta } => 0.5 * theta * x * x + (1.0 - theta) * x,
            PenaltyKind::Huber { eps } => {
                if x <= eps {
                    x * x / (2.0 * eps) + 0.5 * eps
                } else {
                    x
                }
            }
            PenaltyKind::LogSum { eps } => (x + eps).ln(),
            PenaltyKind::Scad { a, lambda } => {
                if x <= lambda {
                    x
                } else if x <= a * lambda {
                    (2.0 * a * lambda * x - x * x - lambda * lambda) / (2.0 * (a - 1.0) * lambda)
                } else {
                    0.5 * (a + 1.0) * lambda
                }
            }
            PenaltyKind::Mcp { a, lambda } => {
                let al = a * lambda;
                if x <= al {
                    x - x * x / (2.0 * al)
                } else {
                    0.5 * al
                }
            }
            PenaltyKind::HardThresh { k } => {
                if k == 0 && x > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// Scalar dual `f(eta)`, `+inf` outside `H`.
    pub fn f_scalar(&self, eta: f64) -> f64 {
        if eta.is_nan() || eta < 0.0 {
            return f64::INFINITY;
        }
        let inf = eta == f64::INFINITY;
        match self.kind {
            PenaltyKind::L1 | PenaltyKind::Lp { .. } => eta,
            PenaltyKind::LpPow { p } => {
                let q = p / (2.0 - p);
                eta.powf(q) / q
            }
            PenaltyKind::L0 => {
                if eta > 0.0 {
                    2.0
                } else {
                    0.0
                }
            }
            PenaltyKind::ElasticNet { theta } => {
                if eta * theta >= 1.0 {
                    f64::INFINITY
                } else {
                    eta * (1.0 - theta).powi(2) / (1.0 - eta * theta)
                }
            }
            PenaltyKind::Huber { eps } => {
                if eta < eps {
                    f64::INFINITY
                } else {
                    eta
                }
            }
            PenaltyKind::LogSum { eps } => {
                if inf {
                    return f64::INFINITY;
                }
                // (sqrt(eps^2 + 4 eta) - eps)^2 / (4 eta) rewritten without cancellation
                let r = (eps * eps + 4.0 * eta).sqrt();
                2.0 * (0.5 * (r + eps)).ln() - 4.0 * eta / ((r + eps) * (r + eps))
            }
            PenaltyKind::Scad { a, lambda } => {
                if inf {
                    (a + 1.0) * lambda
                } else if eta <= lambda {
                    eta
                } else {
                    lambda * ((a + 1.0) * eta - lambda) / ((a - 1.0) * lambda + eta)
                }
            }
            PenaltyKind::Mcp { a, lambda } => {
                let al = a * lambda;
                if inf {
                    al
                } else {
                    al * eta / (eta + al)
                }
            }
            PenaltyKind::HardThresh { k } => {
                if k == 0 && eta > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// Scalar minimizer `eta_hat(w)`.
    pub fn eta_hat_scalar(&self, w: f64) -> f64 {
        let x = w.abs();
        match self.kind {
            PenaltyKind::L1 | PenaltyKind::Lp { .. } => x,
            PenaltyKind::LpPow { p } => x.powf(2.0 - p),
            PenaltyKind::L0 => {
                if x > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            PenaltyKind::ElasticNet { theta } => x / (x * theta + (1.0 - theta)),
            PenaltyKind::Huber { eps } => eps.max(x),
            PenaltyKind::LogSum { eps } => x * (x + eps),
            PenaltyKind::Scad { a, lambda } => {
                if x <= lambda {
                    x
                } else if x < a * lambda {
                    (a - 1.0) * lambda * x / (a * lambda - x)
                } else {
                    f64::INFINITY
                }
            }
            PenaltyKind::Mcp { a, lambda } => {
                let al = a * lambda;
                if x < al {
                    al * x / (al - x)
                } else {
                    f64::INFINITY
                }
            }
            PenaltyKind::HardThresh { k } => {
                if k >= 1 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
        }
    }

    /// Scalar derivative of `Omega`, with the subgradient at `w = 0` taken as 0.
    pub fn omega_grad_scalar(&self, w: f64) -> f64 {
        let x = w.abs();
        let s = sign(w);
        match self.kind {
            PenaltyKind::L1 | PenaltyKind::Lp { .. } => s,
            PenaltyKind::LpPow { p } => {
                if x == 0.0 {
                    0.0
                } else {
                    s * x.powf(p - 1.0)
                }
            }
            PenaltyKind::L0 | PenaltyKind::HardThresh { .. } => 0.0,
            PenaltyKind::ElasticNet { theta } => theta * w + (1.0 - theta) * s,
            PenaltyKind::Huber { eps } => {
                if x <= eps {
                    w / eps
                } else {
                    s
                }
            }
            PenaltyKind::LogSum { eps } => s / (x + eps),
            PenaltyKind::Scad { a, lambda } => {
                if x <= lambda {
                    s
                } else if x <= a * lambda {
                    s * (a * lambda - x) / ((a - 1.0) * lambda)
                } else {
                    0.0
                }
            }
            PenaltyKind::Mcp { a, lambda } => {
                let al = a * lambda;
                if x <= al {
                    s * (1.0 - x / al)
                } else {
                    0.0
                }
            }
        }
    }

    /// Scalar `f'(eta)`; `None` where `f` is not differentiable.
    pub fn f_grad_scalar(&self, eta: f64) -> Option<f64> {
        match self.kind {
            PenaltyKind::L1 | PenaltyKind::Lp { .. } | PenaltyKind::Huber { .. } => Some(1.0),
            PenaltyKind::LpPow { p } => Some(eta.powf(p / (2.0 - p) - 1.0)),
            PenaltyKind::ElasticNet { theta } => {
                let c = 1.0 - eta * theta;
                Some((1.0 - theta).powi(2) / (c * c))
            }
            PenaltyKind::LogSum { eps } => {
                let r = (eps * eps + 4.0 * eta).sqrt();
                Some(4.0 / ((r + eps) * (r + eps)))
            }
            PenaltyKind::Scad { a, lambda } => {
                if eta <= lambda {
                    Some(1.0)
                } else {
                    let den = (a - 1.0) * lambda + eta;
                    Some((a * lambda).powi(2) / (den * den))
                }
            }
            PenaltyKind::Mcp { a, lambda } => {
                let al = a * lambda;
                Some(al * al / ((eta + al) * (eta + al)))
            }
            PenaltyKind::L0 | PenaltyKind::HardThresh { .. } => None,
        }
    }

    /// Vector penalty `Omega(w)`.
    pub fn omega(&self, w: &[f64]) -> f64 {
        match self.kind {
            PenaltyKind::Lp { p } => w.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
            PenaltyKind::HardThresh { k } => {
                if w.iter().filter(|x| **x != 0.0).count() > k {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            _ => w.iter().map(|&x| self.omega_scalar(x)).sum(),
        }
    }

    /// Vector dual `f(eta)`, `+inf` outside `H`.
    pub fn f_dual(&self, eta: &EtaVector) -> f64 {
        if !self.eta_in_domain(eta) {
            return f64::INFINITY;
        }
        let e = eta.as_slice();
        match self.kind {
            PenaltyKind::Lp { p } => {
                let q = p / (2.0 - p);
                if e.iter().any(|x| x.is_infinite()) {
                    return f64::INFINITY;
                }
                e.iter().map(|x| x.powf(q)).sum::<f64>().powf(1.0 / q)
            }
            PenaltyKind::HardThresh { .. } => 0.0,
            _ => e.iter().map(|&x| self.f_scalar(x)).sum(),
        }
    }

    /// Vector minimizer `eta_hat(w)`.
    pub fn eta_hat(&self, w: &[f64]) -> EtaVector {
        let values = match self.kind {
            PenaltyKind::Lp { p } => {
                let norm = w.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p);
                if norm == 0.0 {
                    vec![0.0; w.len()]
                } else {
                    let scale = norm.powf(p - 1.0);
                    w.iter().map(|x| x.abs().powf(2.0 - p) * scale).collect()
                }
            }
            PenaltyKind::HardThresh { k } => top_k_mask(w, k)
                .into_iter()
                .map(|keep| if keep { f64::INFINITY } else { 0.0 })
                .collect(),
            _ => w.iter().map(|&x| self.eta_hat_scalar(x)).collect(),
        };
        EtaVector(values)
    }

    /// Gradient of `Omega` (subgradient 0 at kinks located at `w_j = 0`).
    pub fn omega_grad(&self, w: &[f64]) -> Vec<f64> {
        match self.kind {
            PenaltyKind::Lp { p } => {
                let norm = w.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p);
                if norm == 0.0 {
                    return vec![0.0; w.len()];
                }
                let scale = norm.powf(1.0 - p);
                w.iter()
                    .map(|&x| if x == 0.0 { 0.0 } else { sign(x) * x.abs().powf(p - 1.0) * scale })
                    .collect()
            }
            _ => w.iter().map(|&x| self.omega_grad_scalar(x)).collect(),
        }
    }

    /// Gradient of `f`, `None` when `f` is not differentiable.
    pub fn f_dual_grad(&self, eta: &[f64]) -> Option<Vec<f64>> {
        match self.kind {
            PenaltyKind::Lp { p } => {
                let q = p / (2.0 - p);
                let norm = eta.iter().map(|x| x.powf(q)).sum::<f64>().powf(1.0 / q);
                let scale = norm.powf(1.0 - q);
                Some(eta.iter().map(|x| x.powf(q - 1.0) * scale).collect())
            }
            _ => eta.iter().map(|&e| self.f_grad_scalar(e)).collect(),
        }
    }

    pub fn eta_in_domain(&self, eta: &EtaVector) -> bool {
        match self.kind {
            PenaltyKind::HardThresh { k } => eta.nnz() <= k,
            PenaltyKind::Lp { .. } => true,
            // the closed end 1/theta is excluded: f is infinite there
            PenaltyKind::ElasticNet { theta } => eta.as_slice().iter().all(|&e| e * theta < 1.0),
            _ => {
                let h = self.scalar_domain();
                eta.as_slice().iter().all(|&e| h.contains(e))
            }
        }
    }
}

pub fn omega(spec: &PenaltySpec, w: &[f64]) -> f64 {
    spec.omega(w)
}

pub fn f_dual(spec: &PenaltySpec, eta: &EtaVector) -> f64 {
    spec.f_dual(eta)
}

pub fn eta_hat(spec: &PenaltySpec, w: &[f64]) -> EtaVector {
    spec.eta_hat(w)
}

pub fn eta_in_domain(spec: &PenaltySpec, eta: &EtaVector) -> bool {
    spec.eta_in_domain(eta)
}

impl fmt::Display for PenaltySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PenaltyKind::L1 => write!(f, "l1"),
            PenaltyKind::Lp { p } => write!(f, "lp:p={p}"),
            PenaltyKind::LpPow { p } => write!(f, "lpp:p={p}"),
            PenaltyKind::L0 => write!(f, "l0"),
            PenaltyKind::ElasticNet { theta } => write!(f, "elasticnet:theta={theta}"),
            PenaltyKind::Huber { eps } => write!(f, "huber:eps={eps}"),
            PenaltyKind::LogSum { eps } => write!(f, "logsum:eps={eps}"),
            PenaltyKind::Scad { a, lambda } => write!(f, "scad:a={a},lambda={lambda}"),
            PenaltyKind::Mcp { a, lambda } => write!(f, "mcp:a={a},lambda={lambda}"),
            PenaltyKind::HardThresh { k } => write!(f, "hardthresh:k={k}"),
        }
    }
}

impl PenaltySpec {
    /// Builds a penalty from an already-split spec string, consuming its keys.
    pub(crate) fn from_spec_string(s: &mut SpecString) -> Result<Option<Self>> {
        let spec = match s.name.as_str() {
            "l1" => Self::l1(),
            "l0" => Self::l0(),
            "lp" => Self::lp(s.require_f64("p")?)?,
            "lpp" | "lppow" => Self::lp_pow(s.require_f64("p")?)?,
            "elasticnet" | "enet" => Self::elastic_net(s.require_f64("theta")?)?,
            "huber" => Self::huber(s.require_f64("eps")?)?,
            "logsum" => Self::log_sum(s.require_f64("eps")?)?,
            "scad" => Self::scad(s.require_f64("a")?, s.require_f64("lambda")?)?,
            "mcp" => Self::mcp(s.require_f64("a")?, s.require_f64("lambda")?)?,
            "hardthresh" | "iht" => Self::hard_thresh(s.require_usize("k")?),
            _ => return Ok(None),
        };
        Ok(Some(spec))
    }
}

impl FromStr for PenaltySpec {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        let mut s = SpecString::parse(input)?;
        let spec = Self::from_spec_string(&mut s)?
            .ok_or_else(|| Error::parse(input, format!("unknown penalty `{}`", s.name)))?;
        s.finish()?;
        Ok(spec)
    }
}

/// The zoo used by the duality reports: every closed-form separable row plus
/// the `l_p` norm, at fixed representative parameters.
pub fn closed_form_zoo() -> Vec<PenaltySpec> {
    vec![
        PenaltySpec::l1(),
        PenaltySpec::lp(0.5).expect("valid"),
        PenaltySpec::lp_pow(0.5).expect("valid"),
        PenaltySpec::l0(),
        PenaltySpec::elastic_net(0.5).expect("valid"),
        PenaltySpec::huber(1.0).expect("valid"),
        PenaltySpec::log_sum(2.0).expect("valid"),
        PenaltySpec::scad(3.7, 1.0).expect("valid"),
        PenaltySpec::mcp(3.0, 1.0).expect("valid"),
    ]
}

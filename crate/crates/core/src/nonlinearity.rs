//! Diffusivity `a`, noise coefficient `σ` and the cutoff `Θ`.

use crate::error::{Error, Result};
use crate::smooth::{self, D2};
use serde::Serialize;

/// Diffusivity family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Diffusion {
    /// `a(v) = M|v|^{M-1}`.
    Porous { m: f64 },
    /// Porous law glued to an even quartic on `|v| ≤ eps`.
    Regularized {
        m: f64,
        eps: f64,
        p4: f64,
        p2: f64,
        p0: f64,
    },
    /// Constant diffusivity, mainly for reference problems.
    Constant(f64),
}

/// Make the degenerate porous diffusivity.
pub fn make_porous(m: f64) -> Result<Diffusion> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::Domain(format!(
            "porous exponent must exceed 1, got {m}"
        )));
    }
    Ok(Diffusion::Porous { m })
}

/// Quartic regularization: `p(v) = p4 v⁴ + p2 v² + p0` on `|v| ≤ eps`.
///
/// The coefficients match value, slope and curvature of `M|v|^{M-1}` at
/// `|v| = eps`.
pub fn regularize(m: f64, eps: f64) -> Result<Diffusion> {
    make_porous(m)?;
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!(
            "regularization radius must be positive, got {eps}"
        )));
    }
    let p4 = m * (m - 1.0) * (m - 3.0) * eps.powf(m - 5.0) / 8.0;
    let p2 = m * (m - 1.0) * (5.0 - m) * eps.powf(m - 3.0) / 4.0;
    let p0 = m * (1.0 - (m - 1.0) * (7.0 - m) / 8.0) * eps.powf(m - 1.0);
    Ok(Diffusion::Regularized { m, eps, p4, p2, p0 })
}

fn porous(m: f64, v: f64) -> D2 {
    let r = v.abs();
    D2 {
        v: m * r.powf(m - 1.0),
        d1: m * (m - 1.0) * r.powf(m - 2.0) * v.signum(),
        d2: m * (m - 1.0) * (m - 2.0) * r.powf(m - 3.0),
    }
}

impl Diffusion {
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            Diffusion::Porous { m } | Diffusion::Regularized { m, .. } => Some(m),
            Diffusion::Constant(_) => None,
        }
    }

    /// `a(v)` only; cheap path for the solver.
    #[inline]
    pub fn a(&self, v: f64) -> f64 {
        match *self {
            Diffusion::Porous { m } => m * v.abs().powf(m - 1.0),
            Diffusion::Regularized { m, eps, p4, p2, p0 } => {
                if v.abs() <= eps {
                    let v2 = v * v;
                    (p4 * v2 + p2) * v2 + p0
                } else {
                    m * v.abs().powf(m - 1.0)
                }
            }
            Diffusion::Constant(c) => c,
        }
    }

    /// `a, a', a''`. The porous branch returns non-finite derivatives at 0.
    pub fn eval(&self, v: f64) -> D2 {
        match *self {
            Diffusion::Porous { m } => porous(m, v),
            Diffusion::Regularized { m, eps, p4, p2, p0 } => {
                if v.abs() <= eps {
                    let v2 = v * v;
                    D2 {
                        v: (p4 * v2 + p2) * v2 + p0,
                        d1: (4.0 * p4 * v2 + 2.0 * p2) * v,
                        d2: 12.0 * p4 * v2 + 2.0 * p2,
                    }
                } else {
                    porous(m, v)
                }
            }
            Diffusion::Constant(c) => D2::constant(c),
        }
    }

    /// Like [`Diffusion::eval`] but rejects the singular point of the bare
    /// porous law.
    pub fn try_eval(&self, v: f64) -> Result<D2> {
        if let Diffusion::Porous { m } = *self {
            if v == 0.0 && m < 3.0 {
                return Err(Error::Domain(format!(
                    "a', a'' are singular at 0 for M = {m} < 3; regularize first"
                )));
            }
        }
        Ok(self.eval(v))
    }

    /// Lower bound `inf a` (the `p0` of the quartic, 0 for the bare law).
    pub fn floor(&self) -> f64 {
        match *self {
            Diffusion::Porous { .. } => 0.0,
            Diffusion::Regularized { p0, .. } => p0,
            Diffusion::Constant(c) => c,
        }
    }

    /// Smallest `v ≥ 0` with `a(v) ≥ target`. Both laws increase in `|v|`.
    pub fn inverse(&self, target: f64) -> f64 {
        if let Diffusion::Constant(_) = self {
            return if target <= self.a(0.0) {
                0.0
            } else {
                f64::INFINITY
            };
        }
        if target <= self.a(0.0) {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.a(hi) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.a(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        hi
    }
}

/// Noise coefficient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sigma {
    /// `v^N · P(v/C)` with a C^∞ plateau `P`: 1 on `[-1/2,1/2]`, 0 off `(-1,1)`.
    Compact {
        n: u32,
        c_supp: f64,
    },
    Constant(f64),
    Zero,
}

/// `σ(v) = v^N P(v / C_supp)`.
pub fn make_sigma(n: u32, c_supp: f64) -> Result<Sigma> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "vanishing order must be ≥ 2, got {n}"
        )));
    }
    if !(c_supp > 0.0) {
        return Err(Error::Domain(format!(
            "support radius must be positive, got {c_supp}"
        )));
    }
    Ok(Sigma::Compact { n, c_supp })
}

fn plateau(z: f64) -> D2 {
    let s = smooth::step(2.0 * z.abs() - 1.0);
    let sg = z.signum();
    D2 {
        v: 1.0 - s.v,
        d1: -2.0 * sg * s.d1,
        d2: -4.0 * s.d2,
    }
}

impl Sigma {
    pub fn eval(&self, v: f64) -> D2 {
        match *self {
            Sigma::Compact { n, c_supp } => {
                let p = plateau(v / c_supp);
                if p.v == 0.0 && p.d1 == 0.0 && p.d2 == 0.0 {
                    return D2::constant(0.0);
                }
                let (p1, p2) = (p.d1 / c_supp, p.d2 / (c_supp * c_supp));
                let nn = n as i32;
                let nf = n as f64;
                let vn = v.powi(nn);
                let vn1 = v.powi(nn - 1);
                let vn2 = v.powi(nn - 2);
                D2 {
                    v: vn * p.v,
                    d1: nf * vn1 * p.v + vn * p1,
                    d2: nf * (nf - 1.0) * vn2 * p.v + 2.0 * nf * vn1 * p1 + vn * p2,
                }
            }
            Sigma::Constant(c) => D2::constant(c),
            Sigma::Zero => D2::constant(0.0),
        }
    }

    #[inline]
    pub fn sigma(&self, v: f64) -> f64 {
        self.eval(v).v
    }

    /// `σ'(v) σ(v)`, the coefficient of the counterterm drift.
    #[inline]
    pub fn ito(&self, v: f64) -> f64 {
        let s = self.eval(v);
        s.v * s.d1
    }

    pub fn support_radius(&self) -> f64 {
        match *self {
            Sigma::Compact { c_supp, .. } => c_supp,
            Sigma::Constant(_) => f64::INFINITY,
            Sigma::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Sigma::Zero) || matches!(self, Sigma::Constant(c) if *c == 0.0)
    }
}

/// The pair `(a, σ)` plus the cutoff `Θ` tied to the support of `σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nonlinearity {
    pub diffusion: Diffusion,
    pub sigma: Sigma,
}

impl Nonlinearity {
    pub fn new(diffusion: Diffusion, sigma: Sigma) -> Self {
        Nonlinearity { diffusion, sigma }
    }

    /// Regularized porous law with the smallest admissible `σ`:
    /// `N = ceil(M + 1)`.
    pub fn standard(m: f64, eps: f64, c_supp: f64) -> Result<Self> {
        let n = (m + 1.0).ceil() as u32;
        Ok(Nonlinearity::new(
            regularize(m, eps)?,
            make_sigma(n, c_supp)?,
        ))
    }

    #[inline]
    pub fn a(&self, v: f64) -> f64 {
        self.diffusion.a(v)
    }

    /// `Θ(v) = ∫_0^v w(r) dr` with `w = 1` on `[-C, C]`, `0` off `[-2C, 2C]`.
    pub fn theta(&self, v: f64) -> D2 {
        let c = self.sigma.support_radius();
        if !c.is_finite() || c == 0.0 {
            return D2 {
                v,
                d1: 1.0,
                d2: 0.0,
            };
        }
        let r = v.abs();
        if r <= c {
            return D2 {
                v,
                d1: 1.0,
                d2: 0.0,
            };
        }
        let sg = v.signum();
        let s = ((r - c) / c).min(1.0);
        // quintic smoothstep and its antiderivative
        let ss = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        let anti = s.powi(4) * (2.5 + s * (-3.0 + s));
        let dss = 30.0 * s * s * (1.0 - s) * (1.0 - s);
        D2 {
            v: sg * (c + c * (s - anti)),
            d1: 1.0 - ss,
            d2: -sg * dss / c,
        }
    }
}

/// Upper bound on `M` from the two-regime constraint.
pub fn exponent_bound(alpha: f64) -> f64 {
    1.0 + (3.0 * alpha - 2.0) / (alpha * (2.0 - alpha))
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub alpha: f64,
    pub m: Option<f64>,
    pub m_bound: f64,
    pub m_ok: bool,
    pub n: Option<u32>,
    pub n_ok: bool,
    pub sup_a_lower: f64,
    pub sup_a1: f64,
    pub sup_a2: f64,
    pub sup_sigma: [f64; 3],
    pub sigma_compact: bool,
    pub a_floor: f64,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.m_ok && self.n_ok && self.sigma_compact && self.a_floor > 0.0
    }
}

/// Sampled constants of the power-law hypotheses on `a` and `σ`.
pub fn validate_assumptions(nl: &Nonlinearity, alpha: f64) -> Result<AssumptionReport> {
    if !(alpha > 2.0 / 3.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (2/3, 1), got {alpha}"
        )));
    }
    let bound = exponent_bound(alpha);
    let m = nl.diffusion.exponent();
    let n = match nl.sigma {
        Sigma::Compact { n, .. } => Some(n),
        _ => None,
    };
    let mut sup_a_lower = 0.0f64;
    let mut sup_a1 = 0.0f64;
    let mut sup_a2 = 0.0f64;
    let mut sup_sigma = [0.0f64; 3];
    let samples = 2000;
    for i in 0..samples {
        let r = 10f64.powf(-6.0 + 7.0 * i as f64 / (samples - 1) as f64);
        for v in [r, -r] {
            if let Some(m) = m {
                let a = nl.diffusion.eval(v);
                sup_a_lower = sup_a_lower.max(r.powf(m - 1.0) / a.v);
                sup_a1 = sup_a1.max(a.d1.abs() / r.powf(m - 2.0));
                sup_a2 = sup_a2.max(a.d2.abs() / r.powf(m - 3.0));
            }
            if let Some(n) = n {
                let s = nl.sigma.eval(v);
                let nf = n as f64;
                sup_sigma[0] = sup_sigma[0].max(s.v.abs() / r.powf(nf));
                sup_sigma[1] = sup_sigma[1].max(s.d1.abs() / r.powf(nf - 1.0));
                sup_sigma[2] = sup_sigma[2].max(s.d2.abs() / r.powf(nf - 2.0));
            }
        }
    }
    Ok(AssumptionReport {
        alpha,
        m,
        m_bound: bound,
        m_ok: m.is_some_and(|m| m > 1.0 && m < bound),
        n,
        n_ok: matches!((m, n), (Some(m), Some(n)) if n as f64 >= m + 1.0),
        sup_a_lower,
        sup_a1,
        sup_a2,
        sup_sigma,
        sigma_compact: matches!(nl.sigma, Sigma::Compact { .. } | Sigma::Zero),
        a_floor: nl.diffusion.floor(),
    })
}

/// Sampled `max |a_ε'|/|a'|` and `max |a_ε''|/|a''|` over `0 < |v| ≤ ε`.
pub fn regularization_constants(d: &Diffusion) -> Option<(f64, f64)> {
    let Diffusion::Regularized { m, eps, .. } = *d else {
        return None;
    };
    let (mut c1, mut c2) = (0.0f64, 0.0f64);
    for i in 1..=4000 {
        let v = eps * i as f64 / 4000.0;
        let r = d.eval(v);
        let p = porous(m, v);
        c1 = c1.max(r.d1.abs() / p.d1.abs());
        c2 = c2.max(r.d2.abs() / p.d2.abs());
    }
    Some((c1, c2))
}

//! Heat kernel, its dilations, dyadic slices in the diffusivity, the
//! periodized compactly supported kernel `K` and its parabolic annuli.

use crate::error::{Error, Result};
use crate::quad::GaussLegendre;
use crate::smooth::{self, D2};
use std::f64::consts::PI;

/// `(4πt)^{-d/2} exp(-|x|²/(4t))` for `t > 0`, else 0.
pub fn heat_phi(d: usize, t: f64, x: &[f64]) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let r2: f64 = x.iter().take(d).map(|v| v * v).sum();
    (4.0 * PI * t).powf(-(d as f64) / 2.0) * (-r2 / (4.0 * t)).exp()
}

/// `Ψ(ā, t, x) = Φ(ā t, x)`.
pub fn dilated_psi(d: usize, a: f64, t: f64, x: &[f64]) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::Domain(format!(
            "diffusivity must be positive, got {a}"
        )));
    }
    Ok(heat_phi(d, a * t, x))
}

/// Nonzero terms `(q, φ(2^q a))` of the dyadic partition of unity.
pub fn dyadic_partition(a: f64) -> Result<Vec<(i32, f64)>> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("argument must be positive, got {a}")));
    }
    let c = -a.log2();
    let lo = (c - 1.0).floor() as i32 - 1;
    let hi = (c + 1.0).ceil() as i32 + 1;
    Ok((lo..=hi)
        .map(|q| (q, smooth::dyadic(2f64.powi(q) * a).v))
        .filter(|&(_, w)| w != 0.0)
        .collect())
}

/// Derivatives of `Φ(τ, y)` needed for second-order Taylor expansions.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeatJet {
    pub v: f64,
    pub t: f64,
    pub tt: f64,
    pub x: [f64; 2],
    pub tx: [f64; 2],
    pub xx: [[f64; 2]; 2],
}

fn heat_jet(d: usize, tau: f64, y: [f64; 2]) -> HeatJet {
    if tau <= 0.0 {
        return HeatJet::default();
    }
    let y = if d == 1 { [y[0], 0.0] } else { y };
    let r2 = y[0] * y[0] + y[1] * y[1];
    let df = d as f64;
    let p = heat_phi(d, tau, &y);
    let h = r2 / (4.0 * tau * tau) - df / (2.0 * tau);
    let ht = -r2 / (2.0 * tau * tau * tau) + df / (2.0 * tau * tau);
    let mut j = HeatJet {
        v: p,
        t: h * p,
        tt: (h * h + ht) * p,
        ..Default::default()
    };
    for i in 0..d {
        j.x[i] = -y[i] / (2.0 * tau) * p;
        j.tx[i] = y[i] / (2.0 * tau * tau) * p - y[i] / (2.0 * tau) * h * p;
        for k in 0..d {
            let delta = if i == k { 1.0 } else { 0.0 };
            j.xx[i][k] = (y[i] * y[k] / (4.0 * tau * tau) - delta / (2.0 * tau)) * p;
        }
    }
    j
}

/// Space-time point in `ℝ × ℝ^d` (no wrapping), used by the kernels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pt {
    pub t: f64,
    pub x: [f64; 2],
}

impl Pt {
    pub fn new(t: f64, x: [f64; 2]) -> Self {
        Pt { t, x }
    }

    fn add(self, o: Pt) -> Pt {
        Pt::new(self.t + o.t, [self.x[0] + o.x[0], self.x[1] + o.x[1]])
    }

    fn sub(self, o: Pt) -> Pt {
        Pt::new(self.t - o.t, [self.x[0] - o.x[0], self.x[1] - o.x[1]])
    }
}

/// Kernel machinery at dyadic diffusivity scale `q`, i.e. `ā ∈ (2^{-q-1}, 2^{-q+1})`.
#[derive(Clone, Copy, Debug)]
pub struct KernelSlice {
    pub q: i32,
    pub d: usize,
    /// Half-width of the smoothing applied to the box cutoff.
    pub zeta_radius: f64,
    /// Lattice shifts kept in the periodization, `|m_i| ≤ shifts`.
    pub shifts: i32,
}

impl KernelSlice {
    pub fn new(q: i32, d: usize) -> Self {
        KernelSlice {
            q,
            d,
            zeta_radius: 2f64.powi(-6),
            shifts: 3,
        }
    }

    pub fn weight(&self, a: f64) -> D2 {
        smooth::dyadic(2f64.powi(self.q) * a)
    }

    pub fn psi_q(&self, a: f64, t: f64, x: &[f64]) -> Result<f64> {
        Ok(self.weight(a).v * dilated_psi(self.d, a, t, x)?)
    }

    fn zeta(&self, x: [f64; 2]) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let mut v = [1.0; 2];
        let mut d1 = [0.0; 2];
        let mut d2 = [0.0; 2];
        for i in 0..self.d {
            let z = smooth::smoothed_box(x[i], self.zeta_radius);
            v[i] = z.v;
            d1[i] = z.d1;
            d2[i] = z.d2;
        }
        (v, d1, d2)
    }

    /// Periodized heat kernel jet `Σ_m Φ(τ, x + m)`.
    fn periodic_jet(&self, tau: f64, x: [f64; 2]) -> HeatJet {
        let mut acc = HeatJet::default();
        let s = self.shifts;
        let ys = if self.d == 2 { s } else { 0 };
        for m0 in -s..=s {
            for m1 in -ys..=ys {
                let j = heat_jet(self.d, tau, [x[0] + m0 as f64, x[1] + m1 as f64]);
                acc.v += j.v;
                acc.t += j.t;
                acc.tt += j.tt;
                for i in 0..2 {
                    acc.x[i] += j.x[i];
                    acc.tx[i] += j.tx[i];
                    for k in 0..2 {
                        acc.xx[i][k] += j.xx[i][k];
                    }
                }
            }
        }
        acc
    }

    /// Periodization of `Ψ_q` without the spatial cutoff.
    pub fn periodic_psi_q(&self, a: f64, t: f64, x: [f64; 2]) -> f64 {
        self.weight(a).v * self.periodic_jet(a * t, x).v
    }

    /// `K(ā, t, x) = φ(2^q ā) ζ(x) Σ_m Φ(ā t, x + m)`.
    pub fn k(&self, a: f64, p: Pt) -> f64 {
        let (z, _, _) = self.zeta(p.x);
        let zv = z[0] * z[1];
        if zv == 0.0 {
            return 0.0;
        }
        self.weight(a).v * zv * self.periodic_jet(a * p.t, p.x).v
    }

    /// Time and space derivatives of `K` up to second order.
    pub fn k_jet(&self, a: f64, p: Pt) -> HeatJet {
        let w = self.weight(a).v;
        let (z, z1, z2) = self.zeta(p.x);
        let pj = self.periodic_jet(a * p.t, p.x);
        let zeta = z[0] * z[1];
        let dz = [z1[0] * z[1], z[0] * z1[1]];
        let ddz = [[z2[0] * z[1], z1[0] * z1[1]], [z1[0] * z1[1], z[0] * z2[1]]];
        let mut k = HeatJet {
            v: w * zeta * pj.v,
            t: w * a * zeta * pj.t,
            tt: w * a * a * zeta * pj.tt,
            ..Default::default()
        };
        for i in 0..self.d {
            k.x[i] = w * (dz[i] * pj.v + zeta * pj.x[i]);
            k.tx[i] = w * a * (dz[i] * pj.t + zeta * pj.tx[i]);
            for j in 0..self.d {
                k.xx[i][j] =
                    w * (ddz[i][j] * pj.v + dz[i] * pj.x[j] + dz[j] * pj.x[i] + zeta * pj.xx[i][j]);
            }
        }
        k
    }

    /// `∂_ā^m K` for `m ∈ {0, 1, 2}` at fixed `(t, x)`.
    pub fn k_da(&self, a: f64, p: Pt, m: u8) -> f64 {
        let w = self.weight(a);
        let s = 2f64.powi(self.q);
        let (z, _, _) = self.zeta(p.x);
        let zeta = z[0] * z[1];
        let pj = self.periodic_jet(a * p.t, p.x);
        let t = p.t;
        zeta * match m {
            0 => w.v * pj.v,
            1 => s * w.d1 * pj.v + w.v * t * pj.t,
            _ => s * s * w.d2 * pj.v + 2.0 * s * w.d1 * t * pj.t + w.v * t * t * pj.tt,
        }
    }

    /// Parabolic norm of `D^ā p = (ā t, x)`.
    fn stretched_norm(a: f64, p: Pt) -> f64 {
        (a * p.t.abs() + p.x[0] * p.x[0] + p.x[1] * p.x[1]).sqrt()
    }

    /// Annulus indices `n` with `η(S^{2^n} D^ā p) ≠ 0`.
    pub fn annuli(&self, a: f64, p: Pt) -> Vec<i32> {
        let r = Self::stretched_norm(a, p);
        if r == 0.0 {
            return Vec::new();
        }
        let c = -r.log2();
        ((c - 1.0).floor() as i32 - 1..=(c + 1.0).ceil() as i32 + 1)
            .filter(|&n| smooth::dyadic(2f64.powi(n) * r).v != 0.0)
            .collect()
    }

    /// `K^{(n)} = η(S^{2^n} D^ā p) K`.
    pub fn k_annulus(&self, n: i32, a: f64, p: Pt) -> f64 {
        let r = Self::stretched_norm(a, p);
        smooth::dyadic(2f64.powi(n) * r).v * self.k(a, p)
    }

    /// `K(x+y-z) - K(x-z) - ∇_x K(x-z)·y` evaluated directly.
    pub fn taylor_remainder(&self, a: f64, x: Pt, y: Pt, z: Pt) -> f64 {
        let base = x.sub(z);
        let j = self.k_jet(a, base);
        let lin: f64 = (0..self.d).map(|i| j.x[i] * y.x[i]).sum();
        self.k(a, base.add(y)) - j.v - lin
    }

    /// Same remainder from `∫_0^1 (1-ϑ) f''(ϑ) dϑ`, `f(ϑ) = K(x - z + S^ϑ y)`.
    ///
    /// With `S^ϑ y = (ϑ² s, ϑ y)`,
    /// `f'' = 2s ∂_t K + 4ϑ² s² ∂_t² K + 4ϑ s Σ_i y_i ∂_t∂_i K + Σ_{ij} y_i y_j ∂_i∂_j K`,
    /// so the coefficients are `C(1,0) = 2`, `C(2,0) = 4`, `C(1,e_i) = 4`,
    /// `C(0,2e_i) = 1` and `C(0,e_i+e_j) = 2` for `i < j`.
    pub fn taylor_remainder_integral(
        &self,
        a: f64,
        x: Pt,
        y: Pt,
        z: Pt,
        rule: &GaussLegendre,
    ) -> f64 {
        let base = x.sub(z);
        let s = y.t;
        rule.integrate(0.0, 1.0, |th| {
            let p = base.add(Pt::new(th * th * s, [th * y.x[0], th * y.x[1]]));
            let j = self.k_jet(a, p);
            let mut f2 = 2.0 * s * j.t + 4.0 * th * th * s * s * j.tt;
            for i in 0..self.d {
                f2 += 4.0 * th * s * y.x[i] * j.tx[i];
                for k in 0..self.d {
                    f2 += y.x[i] * y.x[k] * j.xx[i][k];
                }
            }
            (1.0 - th) * f2
        })
    }
}

/// `∫_{ℝ^d} |Ψ(ā,t,x+y) - Ψ(ā,t,x) - ∇Ψ(ā,t,x)·y| dx` on a wide box.
pub fn l1_second_increment(d: usize, a: f64, t: f64, y: [f64; 2], n: usize) -> f64 {
    let tau = a * t;
    let half = 8.0 * tau.sqrt() + y[0].abs().max(y[1].abs());
    let h = 2.0 * half / n as f64;
    let mut s = crate::quad::Neumaier::default();
    let ny = if d == 2 { n } else { 1 };
    for i in 0..n {
        for k in 0..ny {
            let x = [
                -half + (i as f64 + 0.5) * h,
                if d == 2 {
                    -half + (k as f64 + 0.5) * h
                } else {
                    0.0
                },
            ];
            let j = heat_jet(d, tau, x);
            let shifted = heat_phi(d, tau, &[x[0] + y[0], x[1] + y[1]]);
            let lin: f64 = (0..d).map(|i| j.x[i] * y[i]).sum();
            s.add((shifted - j.v - lin).abs());
        }
    }
    s.total() * h.powi(d as i32)
}

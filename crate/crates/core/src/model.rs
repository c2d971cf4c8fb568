//! Enhanced noise: the symbols `ξ, lolly, dumb, cherry, Xξ` evaluated from
//! their exact truncated Fourier series, the counterterms, recentering,
//! pairings against rescaled test functions and homogeneity fits.

use crate::error::{Error, Result};
use crate::grid::{Grid, Profile, SpaceTimePoint, TestFunction};
use crate::noise::{Lattice, NoiseKind, SpectralNoise};
use crate::nonlinearity::Nonlinearity;
use crate::quad::{self, GaussLegendre};
use crate::stats::{self, LineFit};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Symbol {
    Xi,
    Lolly,
    Dumb,
    Cherry,
    XXi,
}

impl Symbol {
    pub const ALL: [Symbol; 5] = [
        Symbol::Xi,
        Symbol::Lolly,
        Symbol::Dumb,
        Symbol::Cherry,
        Symbol::XXi,
    ];

    /// Scaling exponent `|τ|` in terms of the noise regularity `α`.
    pub fn homogeneity(self, alpha: f64) -> f64 {
        match self {
            Symbol::Xi => alpha - 2.0,
            Symbol::Lolly => alpha,
            Symbol::Dumb | Symbol::Cherry => 2.0 * alpha - 2.0,
            Symbol::XXi => alpha - 1.0,
        }
    }

    /// Blow-up exponent `𝔢(τ)` of the bound as `ā → 0`.
    pub fn blowup(self, eps: f64) -> f64 {
        match self {
            Symbol::Xi | Symbol::XXi => 0.0,
            Symbol::Lolly | Symbol::Dumb => 1.0 + eps,
            Symbol::Cherry => 2.0 + 2.0 * eps,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Symbol::Xi => "xi",
            Symbol::Lolly => "lolly",
            Symbol::Dumb => "dumb",
            Symbol::Cherry => "cherry",
            Symbol::XXi => "xxi",
        }
    }

    pub fn parse(s: &str) -> Option<Symbol> {
        Symbol::ALL.into_iter().find(|t| t.name() == s)
    }
}

/// `(1 - e^{-a|k|²s}) / (a|k|²)`.
#[inline]
pub fn heat_factor(a: f64, k2: f64, s: f64) -> f64 {
    -(-a * k2 * s).exp_m1() / (a * k2)
}

/// `∂_a` of [`heat_factor`]: `(s e^{-a|k|²s} - g) / a`.
#[inline]
pub fn heat_factor_da(a: f64, k2: f64, s: f64) -> f64 {
    (s * (-a * k2 * s).exp() - heat_factor(a, k2, s)) / a
}

fn check_a(a: f64) -> Result<()> {
    if a > 0.0 && a.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "diffusivity must be positive, got {a}"
        )))
    }
}

/// Counterterms of the space-white model, summed shell by shell.
#[derive(Clone, Debug)]
pub struct WhiteCounterterms {
    shells: Vec<(f64, usize)>,
}

impl WhiteCounterterms {
    pub fn new(d: usize, k_max: usize) -> Self {
        WhiteCounterterms {
            shells: Lattice::new(d, k_max).shells(),
        }
    }

    fn sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        quad::sum(self.shells.iter().map(|&(k2, m)| m as f64 * f(k2)))
    }

    /// `c_dumb(t) = t + Σ (1 - e^{-a|k|²t}) / (a|k|²)`.
    pub fn dumb(&self, a: f64, t: f64) -> f64 {
        t + self.sum(|k2| heat_factor(a, k2, t))
    }

    /// `c_cherry(t) = Σ (1 - e^{-a|k|²t})² / (a²|k|²)`.
    pub fn cherry(&self, a: f64, t: f64) -> f64 {
        self.sum(|k2| {
            let g = -(-a * k2 * t).exp_m1();
            g * g / (a * a * k2)
        })
    }

    /// `C^a = Σ (a|k|²)⁻¹`.
    pub fn constant(&self, a: f64) -> f64 {
        self.sum(|k2| 1.0 / (a * k2))
    }

    /// `Σ 1/|k|²`, so that `C^a = S/a`.
    pub fn inverse_laplacian_trace(&self) -> f64 {
        self.sum(|k2| 1.0 / k2)
    }

    /// Closed form of `c_dumb - a c_cherry`:
    /// `t + Σ e^{-a|k|²t} (1 - e^{-a|k|²t}) / (a|k|²)`.
    pub fn dumb_minus_cherry(&self, a: f64, t: f64) -> f64 {
        t + self.sum(|k2| {
            let x = a * k2 * t;
            (-x).exp() * -(-x).exp_m1() / (a * k2)
        })
    }

    /// `C^a - c_dumb(t) = Σ e^{-a|k|²t}/(a|k|²) - t`, without cancellation.
    pub fn constant_minus_dumb(&self, a: f64, t: f64) -> f64 {
        self.sum(|k2| (-a * k2 * t).exp() / (a * k2)) - t
    }

    /// Upper envelope of `c_dumb - a c_cherry` from `e^{-x} ≤ x^{-1/2}`:
    /// `t + Σ (a^{3/2} |k|³ √t)⁻¹`.
    pub fn dumb_minus_cherry_envelope(&self, a: f64, t: f64) -> f64 {
        t + self.sum(|k2| 1.0 / (a.powf(1.5) * k2.powf(1.5) * t.sqrt()))
    }
}

pub fn counterterm_dumb(d: usize, a: f64, t: f64, k_max: usize) -> f64 {
    WhiteCounterterms::new(d, k_max).dumb(a, t)
}

pub fn counterterm_cherry(d: usize, a: f64, t: f64, k_max: usize) -> f64 {
    WhiteCounterterms::new(d, k_max).cherry(a, t)
}

pub fn counterterm_c(d: usize, a: f64, k_max: usize) -> f64 {
    WhiteCounterterms::new(d, k_max).constant(a)
}

/// Counterterms of the coloured model,
/// `c_dumb(t) = Σ c_k ∫_0^t e^{-a|k|²r} ρ_ε*ρ_ε(r) dr` and `C^a` the `t → ∞` limit.
#[derive(Clone, Debug)]
pub struct ColouredCounterterms {
    weights: Vec<(f64, f64)>,
    mollifier: crate::noise::Mollifier,
    rule: GaussLegendre,
}

impl ColouredCounterterms {
    pub fn new(d: usize, k_max: usize, alpha_prime: f64, mollifier_eps: f64) -> Self {
        let l = Lattice::new(d, k_max);
        let weights = (0..l.len())
            .map(|i| {
                let k2 = l.k2(i);
                (k2, crate::noise::colour_weight(d, k2.sqrt(), alpha_prime))
            })
            .collect();
        ColouredCounterterms {
            weights,
            mollifier: crate::noise::Mollifier { eps: mollifier_eps },
            rule: GaussLegendre::new(48),
        }
    }

    fn integral(&self, a: f64, upper: f64) -> f64 {
        let top = upper.min(2.0 * self.mollifier.eps);
        if top <= 0.0 {
            return 0.0;
        }
        let nodes: Vec<(f64, f64)> = self
            .rule
            .nodes(0.0, top)
            .map(|(r, w)| (r, w * self.mollifier.autoconv(r)))
            .collect();
        quad::sum(self.weights.iter().map(|&(k2, c)| {
            c * nodes
                .iter()
                .map(|&(r, w)| w * (-a * k2 * r).exp())
                .sum::<f64>()
        }))
    }

    pub fn dumb(&self, a: f64, t: f64) -> f64 {
        self.integral(a, t)
    }

    pub fn constant(&self, a: f64) -> f64 {
        self.integral(a, f64::INFINITY)
    }
}

/// Exact evaluation of the space-white model.
#[derive(Clone, Debug)]
pub struct WhiteModel<'a> {
    pub noise: &'a SpectralNoise,
    pub counterterms: WhiteCounterterms,
    k2: Vec<f64>,
}

impl<'a> WhiteModel<'a> {
    pub fn new(noise: &'a SpectralNoise) -> Result<Self> {
        if noise.kind != NoiseKind::SpaceWhite {
            return Err(Error::Domain("exact model needs space-white noise".into()));
        }
        let l = &noise.lattice;
        Ok(WhiteModel {
            noise,
            counterterms: WhiteCounterterms::new(l.d, l.k_max),
            k2: (0..l.len()).map(|i| l.k2(i)).collect(),
        })
    }

    fn positive_modes(&self) -> std::ops::Range<usize> {
        self.noise.lattice.zero_index() + 1..self.noise.lattice.len()
    }

    fn xi0(&self) -> f64 {
        self.noise.coeffs[self.noise.lattice.zero_index()].re
    }

    /// `ξ(y)`.
    pub fn xi(&self, y: [f64; 2]) -> f64 {
        let l = &self.noise.lattice;
        let s: f64 = self
            .positive_modes()
            .map(|i| (self.noise.coeffs[i] * l.e(i, y)).re)
            .sum();
        self.xi0() + 2.0 * s
    }

    /// Lolly without recentering:
    /// `L(s, y) = s ξ̂_0 + Σ_{k≠0} e_k(y) g_k(s) ξ̂_k`, or its `∂_a` for `m = 1`.
    pub fn lolly_raw(&self, a: f64, s: f64, y: [f64; 2], m: u8) -> f64 {
        let l = &self.noise.lattice;
        let g = |k2: f64| {
            if m == 0 {
                heat_factor(a, k2, s)
            } else {
                heat_factor_da(a, k2, s)
            }
        };
        let sum: f64 = self
            .positive_modes()
            .map(|i| (self.noise.coeffs[i] * l.e(i, y)).re * g(self.k2[i]))
            .sum();
        let zero = if m == 0 { s * self.xi0() } else { 0.0 };
        zero + 2.0 * sum
    }

    /// `∇_y L(s, y)`.
    pub fn lolly_grad(&self, a: f64, s: f64, y: [f64; 2]) -> [f64; 2] {
        let l = &self.noise.lattice;
        let mut g = [0.0; 2];
        for i in self.positive_modes() {
            let k = l.k_vec(i);
            let c = self.noise.coeffs[i] * l.e(i, y) * Complex64::new(0.0, 1.0);
            let h = heat_factor(a, self.k2[i], s);
            g[0] += 2.0 * c.re * k[0] * h;
            g[1] += 2.0 * c.re * k[1] * h;
        }
        g
    }

    /// `Π_x[lolly; a](y) = L(y) - L(x)`, or `∂_a` of it for `m = 1`.
    pub fn eval_lolly(
        &self,
        a: f64,
        base: &SpaceTimePoint,
        eval: &SpaceTimePoint,
        m: u8,
    ) -> Result<f64> {
        check_a(a)?;
        Ok(self.lolly_raw(a, eval.t, eval.x, m) - self.lolly_raw(a, base.t, base.x, m))
    }

    /// `Π_x[lolly](y) ξ(y) - c_dumb(s)`.
    pub fn eval_dumb(&self, a: f64, base: &SpaceTimePoint, eval: &SpaceTimePoint) -> Result<f64> {
        Ok(
            self.eval_lolly(a, base, eval, 0)? * self.xi(eval.x)
                - self.counterterms.dumb(a, eval.t),
        )
    }

    /// `|∇_y Π_x[lolly](y)|² - c_cherry(s)`; independent of the base point.
    pub fn eval_cherry(
        &self,
        a: f64,
        _base: &SpaceTimePoint,
        eval: &SpaceTimePoint,
    ) -> Result<f64> {
        check_a(a)?;
        let g = self.lolly_grad(a, eval.t, eval.x);
        Ok(g[0] * g[0] + g[1] * g[1] - self.counterterms.cherry(a, eval.t))
    }

    /// `(y - x) ξ(y)` with the raw coordinate difference.
    pub fn eval_xnoise(&self, base: &SpaceTimePoint, eval: &SpaceTimePoint) -> [f64; 2] {
        let xi = self.xi(eval.x);
        [(eval.x[0] - base.x[0]) * xi, (eval.x[1] - base.x[1]) * xi]
    }

    /// Scalar value of a symbol (first component for `Xξ`).
    pub fn eval(
        &self,
        tau: Symbol,
        a: f64,
        base: &SpaceTimePoint,
        eval: &SpaceTimePoint,
    ) -> Result<f64> {
        match tau {
            Symbol::Xi => Ok(self.xi(eval.x)),
            Symbol::Lolly => self.eval_lolly(a, base, eval, 0),
            Symbol::Dumb => self.eval_dumb(a, base, eval),
            Symbol::Cherry => self.eval_cherry(a, base, eval),
            Symbol::XXi => Ok(self.eval_xnoise(base, eval)[0]),
        }
    }

    /// Max over `evals` of `|Π_x[τ](z) - (Π_y[τ](z) + correction)|`, the
    /// correction being the re-expansion term of the base-point change.
    pub fn recenter_residual(
        &self,
        tau: Symbol,
        a: f64,
        x: &SpaceTimePoint,
        y: &SpaceTimePoint,
        evals: &[SpaceTimePoint],
    ) -> Result<f64> {
        let mut worst = 0.0f64;
        for z in evals {
            let r = match tau {
                Symbol::Xi => 0.0,
                Symbol::Lolly => {
                    self.eval_lolly(a, x, z, 0)?
                        - self.eval_lolly(a, y, z, 0)?
                        - self.eval_lolly(a, x, y, 0)?
                }
                Symbol::Dumb => {
                    self.eval_dumb(a, x, z)?
                        - self.eval_dumb(a, y, z)?
                        - self.eval_lolly(a, x, y, 0)? * self.xi(z.x)
                }
                Symbol::Cherry => self.eval_cherry(a, x, z)? - self.eval_cherry(a, y, z)?,
                Symbol::XXi => {
                    let lhs = self.eval_xnoise(x, z);
                    let rhs = self.eval_xnoise(y, z);
                    let xi = self.xi(z.x);
                    let d0 = lhs[0] - rhs[0] - (y.x[0] - x.x[0]) * xi;
                    let d1 = lhs[1] - rhs[1] - (y.x[1] - x.x[1]) * xi;
                    d0.abs().max(d1.abs())
                }
            };
            worst = worst.max(r.abs());
        }
        Ok(worst)
    }
}

/// Largest shell table kept in memory (entries); beyond it [`GridLolly`]
/// sums modes directly.
const SHELL_TABLE_MAX: usize = 1 << 24;

fn stencil_filter(n: usize, stencil: &[([i64; 2], f64)]) -> impl Fn([i32; 2]) -> Complex64 + '_ {
    move |j| {
        stencil
            .iter()
            .map(|&(o, w)| {
                let m = (j[0] as i64 * o[0] + j[1] as i64 * o[1]).rem_euclid(n as i64);
                Complex64::from_polar(w, std::f64::consts::TAU * m as f64 / n as f64)
            })
            .sum()
    }
}

enum LollyStore {
    /// Point-major `[point][shell]` projections `2 Re Σ_{|j|²=r} c_j e_j(x)`.
    Shells(Vec<f64>),
    /// Positive-mode coefficients with their shell slot.
    Modes(Vec<(Complex64, [i64; 2], usize)>),
}

/// The raw lolly `L(a, t, ·)` on the spatial grid points, for any `(a, t)`,
/// optionally convolved with a stencil.
///
/// `L` depends on `a` and `t` only through per-shell heat factors, so the
/// noise is projected onto shells `|j|² = r` once and each evaluation costs
/// one heat factor per shell.
pub struct GridLolly {
    grid: Grid,
    k2: Vec<f64>,
    zero: f64,
    roots: Vec<Complex64>,
    store: LollyStore,
}

impl GridLolly {
    pub fn new(model: &WhiteModel<'_>, grid: &Grid) -> Result<Self> {
        Self::build(model, grid, &|_| Complex64::new(1.0, 0.0), SHELL_TABLE_MAX)
    }

    /// `Σ_o w_o L(a, t, x + o·dx)` instead of `L(a, t, x)`.
    pub fn with_stencil(
        model: &WhiteModel<'_>,
        grid: &Grid,
        stencil: &[([i64; 2], f64)],
    ) -> Result<Self> {
        Self::build(
            model,
            grid,
            &stencil_filter(grid.n, stencil),
            SHELL_TABLE_MAX,
        )
    }

    /// `∂_axis L(a, t, x)`.
    pub fn gradient(model: &WhiteModel<'_>, grid: &Grid, axis: usize) -> Result<Self> {
        let filter = move |j: [i32; 2]| Complex64::new(0.0, std::f64::consts::TAU * j[axis] as f64);
        Self::build(model, grid, &filter, SHELL_TABLE_MAX)
    }

    /// Noise mode `j` is multiplied by `filter(j)`.
    fn build(
        model: &WhiteModel<'_>,
        grid: &Grid,
        filter: &dyn Fn([i32; 2]) -> Complex64,
        table_max: usize,
    ) -> Result<Self> {
        let l = &model.noise.lattice;
        if l.d != grid.d {
            return Err(Error::Domain(format!(
                "noise is {}-d but grid is {}-d",
                l.d, grid.d
            )));
        }
        let n = grid.n as i64;
        let roots: Vec<Complex64> = (0..n)
            .map(|m| Complex64::from_polar(1.0, std::f64::consts::TAU * m as f64 / n as f64))
            .collect();

        let mut slots = std::collections::BTreeMap::<i64, usize>::new();
        for &j in &l.modes[l.zero_index() + 1..] {
            slots
                .entry((j[0] as i64).pow(2) + (j[1] as i64).pow(2))
                .or_insert(0);
        }
        let k2: Vec<f64> = slots
            .keys()
            .map(|&r| 4.0 * std::f64::consts::PI.powi(2) * r as f64)
            .collect();
        for (s, v) in slots.values_mut().enumerate() {
            *v = s;
        }
        let modes: Vec<(Complex64, [i64; 2], usize)> = (l.zero_index() + 1..l.len())
            .map(|i| {
                let j = l.modes[i];
                let r = (j[0] as i64).pow(2) + (j[1] as i64).pow(2);
                (
                    2.0 * model.noise.coeffs[i] * filter(j),
                    [j[0] as i64, j[1] as i64],
                    slots[&r],
                )
            })
            .collect();
        let zero = model.xi0() * filter([0, 0]).re;
        let ns = k2.len();
        let store = if grid.len().saturating_mul(ns) <= table_max {
            let mut table = vec![0.0; grid.len() * ns];
            table
                .par_chunks_mut(ns.max(1))
                .enumerate()
                .for_each(|(i, row)| {
                    let p = grid.unflatten(i);
                    let p = [p[0] as i64, p[1] as i64];
                    for (c, j, s) in &modes {
                        row[*s] +=
                            (c * roots[(j[0] * p[0] + j[1] * p[1]).rem_euclid(n) as usize]).re;
                    }
                });
            LollyStore::Shells(table)
        } else {
            LollyStore::Modes(modes)
        };
        Ok(GridLolly {
            grid: *grid,
            k2,
            zero,
            roots,
            store,
        })
    }

    /// `L(a, t, x_i)` (stencil-weighted if built with one).
    pub fn eval(&self, a: f64, t: f64, i: usize) -> f64 {
        let h = |s: usize| heat_factor(a, self.k2[s], t);
        let sum = match &self.store {
            LollyStore::Shells(table) => {
                let ns = self.k2.len();
                table[i * ns..(i + 1) * ns]
                    .iter()
                    .enumerate()
                    .map(|(s, p)| p * h(s))
                    .sum::<f64>()
            }
            LollyStore::Modes(modes) => {
                let n = self.grid.n as i64;
                let p = self.grid.unflatten(i);
                modes
                    .iter()
                    .map(|(c, j, s)| {
                        (c * self.roots
                            [(j[0] * p[0] as i64 + j[1] * p[1] as i64).rem_euclid(n) as usize])
                            .re
                            * h(*s)
                    })
                    .sum()
            }
        };
        t * self.zero + sum
    }
}

/// Duhamel-integrated lolly for the coloured model, trapezoid on the path grid.
#[derive(Clone, Debug)]
pub struct ColouredModel<'a> {
    pub noise: &'a SpectralNoise,
}

impl<'a> ColouredModel<'a> {
    pub fn new(noise: &'a SpectralNoise) -> Result<Self> {
        if noise.coloured.is_none() {
            return Err(Error::Domain("coloured model needs coloured noise".into()));
        }
        Ok(ColouredModel { noise })
    }

    /// Per-mode `√c_k ∫_0^s e^{-a|k|²(s-r)} η_k(r) dr` at a path node.
    fn duhamel(&self, a: f64, mode: usize, step: usize) -> Complex64 {
        let c = self.noise.coloured.as_ref().expect("checked in new");
        let k2 = self.noise.lattice.k2(mode);
        let h = c.h;
        let s = step as f64 * h;
        let e = &c.eta[mode];
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..=step {
            let w = if i == 0 || i == step { 0.5 } else { 1.0 };
            acc += e[i] * (w * (-a * k2 * (s - i as f64 * h)).exp());
        }
        acc * (h * c.weights[mode])
    }

    /// `Π_x[lolly; a](y)` with both times snapped to path nodes.
    pub fn eval_lolly(&self, a: f64, base: &SpaceTimePoint, eval: &SpaceTimePoint) -> Result<f64> {
        check_a(a)?;
        let c = self.noise.coloured.as_ref().expect("checked in new");
        let node = |t: f64| -> Result<usize> {
            if !(0.0..=c.span() + 1e-12).contains(&t) {
                return Err(Error::Domain(format!("t = {t} outside noise span")));
            }
            Ok(((t / c.h).round() as usize).min(c.n_steps))
        };
        let (ms, mt) = (node(eval.t)?, node(base.t)?);
        let l = &self.noise.lattice;
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..l.len() {
            s += l.e(i, eval.x) * self.duhamel(a, i, ms) - l.e(i, base.x) * self.duhamel(a, i, mt);
        }
        Ok(s.re)
    }
}

/// Space-time trapezoid quadrature of `∫ F φ_x^λ` with `⌈λ n⌉` panels per axis.
pub fn pair(
    field: impl Fn(&SpaceTimePoint) -> f64 + Sync,
    tf: &TestFunction,
    n: usize,
) -> Result<f64> {
    let l = tf.scale;
    let q = (l * n as f64).ceil() as usize;
    if (l * n as f64) < 8.0 {
        return Err(Error::Resolution(format!("λ·n = {} < 8", l * n as f64)));
    }
    let d = tf.d();
    let p = tf.profile;
    let r = 1.0 / p.kappa();
    let hu = 1.0 / q as f64;
    let hz = 2.0 * r / q as f64;
    let nz1 = if d == 2 { q + 1 } else { 1 };
    let total: f64 = (0..=q)
        .into_par_iter()
        .map(|iu| {
            let u = -0.5 + iu as f64 * hu;
            if p.time_factor(u).v == 0.0 {
                return 0.0;
            }
            let mut acc = quad::Neumaier::default();
            for i0 in 0..=q {
                let z0 = -r + i0 as f64 * hz;
                for i1 in 0..nz1 {
                    let z1 = if d == 2 { -r + i1 as f64 * hz } else { 0.0 };
                    let w = p.eval(u, [z0, z1]);
                    if w == 0.0 {
                        continue;
                    }
                    let e = SpaceTimePoint::new(
                        tf.base.t + l * l * u,
                        [tf.base.x[0] + l * z0, tf.base.x[1] + l * z1],
                    );
                    acc.add(w * field(&e));
                }
            }
            acc.total()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total * hu * hz.powi(d as i32))
}

/// Real per-mode weights `W_k` with `⟨Π_x[τ], φ_x^λ⟩ = Re Σ_k ξ̂_k e_k(x) W_k`
/// for the linear symbols `ξ` and `lolly`.
#[derive(Clone, Debug)]
pub struct LinearPairing {
    pub tau: Symbol,
    pub base: SpaceTimePoint,
    pub weights: Vec<f64>,
}

impl LinearPairing {
    pub fn new(
        lattice: &Lattice,
        tau: Symbol,
        a: f64,
        base: SpaceTimePoint,
        lambda: f64,
    ) -> Result<Self> {
        check_a(a)?;
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Domain(format!(
                "scale must lie in (0,1], got {lambda}"
            )));
        }
        let d = lattice.d;
        let p = Profile::new(d);
        let c = p.c();
        let k = lattice.k_max as i32;
        let ft: Vec<f64> = (0..=k)
            .map(|j| p.axis_ft(lambda * std::f64::consts::TAU * j as f64))
            .collect();
        let xhat = |j: [i32; 2]| {
            let mut v = ft[j[0].unsigned_abs() as usize];
            if d == 2 {
                v *= ft[j[1].unsigned_abs() as usize];
            }
            v
        };
        let t0 = p.time_mass();
        let x0 = xhat([0, 0]);
        let weights = match tau {
            Symbol::Xi => lattice.modes.iter().map(|&j| c * t0 * xhat(j)).collect(),
            Symbol::Lolly => {
                if base.t - 0.5 * lambda * lambda < 0.0 {
                    return Err(Error::Domain("test function reaches negative times".into()));
                }
                let mut cache = std::collections::HashMap::<i64, f64>::new();
                lattice
                    .modes
                    .iter()
                    .map(|&j| {
                        let r = (j[0] as i64).pow(2) + (j[1] as i64).pow(2);
                        if r == 0 {
                            // ∫ τ(u) λ²u du vanishes by symmetry
                            return 0.0;
                        }
                        let k2 = 4.0 * std::f64::consts::PI.powi(2) * r as f64;
                        let tk = *cache.entry(r).or_insert_with(|| {
                            quad::trapezoid(-0.5, 0.5, 256, |u| {
                                p.time_factor(u).v
                                    * heat_factor(a, k2, base.t + lambda * lambda * u)
                            })
                        });
                        c * (tk * xhat(j) - heat_factor(a, k2, base.t) * t0 * x0)
                    })
                    .collect()
            }
            _ => {
                return Err(Error::Domain(format!(
                    "{} is not linear in the noise",
                    tau.name()
                )))
            }
        };
        Ok(LinearPairing { tau, base, weights })
    }

    pub fn apply(&self, noise: &SpectralNoise) -> f64 {
        let l = &noise.lattice;
        (0..l.len())
            .map(|i| (noise.coeffs[i] * l.e(i, self.base.x)).re * self.weights[i])
            .sum()
    }

    /// Exact `E^{1/2} |⟨Π_x[τ], φ_x^λ⟩|²` for unit-variance coefficients.
    pub fn exact_rms(&self) -> f64 {
        quad::sum(self.weights.iter().map(|w| w * w)).sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HomogeneityFit {
    pub tau: Symbol,
    pub lambdas: Vec<f64>,
    pub rms: Vec<f64>,
    pub fit: LineFit,
    pub predicted: f64,
}

/// Settings for ensemble homogeneity fits.
#[derive(Clone, Debug)]
pub struct HomogeneitySetup {
    pub d: usize,
    pub k_max: usize,
    pub a: f64,
    pub base: SpaceTimePoint,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    /// Quadrature resolution for nonlinear symbols.
    pub quad_n: usize,
}

fn check_lambdas(l: &[f64]) -> Result<()> {
    if l.len() < 4 {
        return Err(Error::Regression("need at least four scales".into()));
    }
    if l.iter()
        .any(|x| !(x.log2().fract() == 0.0 && *x > 0.0 && *x <= 1.0))
    {
        return Err(Error::Domain("scales must be dyadic in (0,1]".into()));
    }
    Ok(())
}

/// Slope of `log E^{1/2}|⟨Π_x[τ], φ_x^λ⟩|²` against `log λ` over an ensemble.
pub fn fit_homogeneity(tau: Symbol, s: &HomogeneitySetup) -> Result<HomogeneityFit> {
    check_lambdas(&s.lambdas)?;
    let lattice = Lattice::new(s.d, s.k_max);
    let samples: Vec<Vec<f64>> = match tau {
        Symbol::Xi | Symbol::Lolly => {
            let pairings: Vec<LinearPairing> = s
                .lambdas
                .iter()
                .map(|&l| LinearPairing::new(&lattice, tau, s.a, s.base, l))
                .collect::<Result<_>>()?;
            s.seeds
                .par_iter()
                .map(|&seed| {
                    let n = crate::noise::sample_space_white(s.d, s.k_max, seed)?;
                    Ok(pairings.iter().map(|p| p.apply(&n)).collect())
                })
                .collect::<Result<_>>()?
        }
        _ => s
            .seeds
            .par_iter()
            .map(|&seed| {
                let n = crate::noise::sample_space_white(s.d, s.k_max, seed)?;
                let m = WhiteModel::new(&n)?;
                s.lambdas
                    .iter()
                    .map(|&l| {
                        let tf = TestFunction::new(Profile::new(s.d), s.base, l)?;
                        pair(
                            |z| m.eval(tau, s.a, &s.base, z).unwrap_or(f64::NAN),
                            &tf,
                            s.quad_n,
                        )
                    })
                    .collect()
            })
            .collect::<Result<_>>()?,
    };
    let rms: Vec<f64> = (0..s.lambdas.len())
        .map(|j| (samples.iter().map(|v| v[j] * v[j]).sum::<f64>() / samples.len() as f64).sqrt())
        .collect();
    let fit = stats::fit_loglog(&s.lambdas, &rms)?;
    Ok(HomogeneityFit {
        tau,
        lambdas: s.lambdas.clone(),
        rms,
        fit,
        predicted: tau.homogeneity(s.alpha),
    })
}

/// Monte-Carlo means of `L(s,y)ξ(y) - c_dumb` and `|∇L(s,y)|² - c_cherry`
/// over space-white samples with the given seeds; both vanish in expectation.
pub fn vanishing_expectation(
    d: usize,
    k_max: usize,
    a: f64,
    s: f64,
    y: [f64; 2],
    seeds: &[u64],
) -> Result<(stats::MeanSe, stats::MeanSe)> {
    check_a(a)?;
    let ct = WhiteCounterterms::new(d, k_max);
    let (cd, cc) = (ct.dumb(a, s), ct.cherry(a, s));
    let pairs: Vec<(f64, f64)> = seeds
        .par_iter()
        .map(|&seed| {
            let n = crate::noise::sample_space_white(d, k_max, seed)?;
            let m = WhiteModel::new(&n)?;
            let g = m.lolly_grad(a, s, y);
            Ok((
                m.lolly_raw(a, s, y, 0) * m.xi(y) - cd,
                g[0] * g[0] + g[1] * g[1] - cc,
            ))
        })
        .collect::<Result<_>>()?;
    let (dumb, cherry): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok((stats::mean_se(&dumb), stats::mean_se(&cherry)))
}

#[derive(Clone, Debug, Serialize)]
pub struct CountertermIntegrals {
    pub k_max: usize,
    /// `∫_0^T sup_v |σ'σ(v)(C^{a(v)} - c_dumb^{a(v)}(t))| dt`.
    pub time_independent: f64,
    /// `∫_0^T sup_v |σ²(v)/v (c_dumb - a c_cherry)| dt`.
    pub dumb_cherry: f64,
    pub finite: bool,
}

/// Both counterterm-closeness integrals for the space-white construction.
pub fn counterterm_conditions(
    nl: &Nonlinearity,
    d: usize,
    t_final: f64,
    k_max: usize,
) -> CountertermIntegrals {
    let ct = WhiteCounterterms::new(d, k_max);
    let c_supp = nl.sigma.support_radius().min(1e3);
    let vs: Vec<f64> = (0..64)
        .map(|i| c_supp * 10f64.powf(-4.0 + 4.0 * i as f64 / 63.0))
        .collect();
    let coeffs: Vec<(f64, f64, f64)> = vs
        .iter()
        .map(|&v| {
            let s = nl.sigma.eval(v);
            (nl.a(v), (s.v * s.d1).abs(), (s.v * s.v / v).abs())
        })
        .filter(|&(a, c1, c2)| a > 0.0 && (c1 > 0.0 || c2 > 0.0))
        .collect();
    let integrand = |t: f64| -> (f64, f64) {
        let mut m1 = 0.0f64;
        let mut m2 = 0.0f64;
        for &(a, c1, c2) in &coeffs {
            if c1 > 0.0 {
                m1 = m1.max(c1 * ct.constant_minus_dumb(a, t).abs());
            }
            if c2 > 0.0 {
                m2 = m2.max(c2 * ct.dumb_minus_cherry(a, t).abs());
            }
        }
        (m1, m2)
    };
    // dyadic panels towards t = 0, where the integrand grows logarithmically
    let rule = GaussLegendre::new(8);
    let panels = 60;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|i| {
            let hi = t_final * 2f64.powi(-i);
            rule.nodes(0.5 * hi, hi).collect::<Vec<_>>()
        })
        .collect();
    let vals: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|&(t, w)| {
            let (a, b) = integrand(t);
            (w * a, w * b)
        })
        .collect();
    let i1 = quad::sum(vals.iter().map(|v| v.0));
    let i2 = quad::sum(vals.iter().map(|v| v.1));
    CountertermIntegrals {
        k_max,
        time_independent: i1,
        dumb_cherry: i2,
        finite: i1.is_finite() && i2.is_finite(),
    }
}

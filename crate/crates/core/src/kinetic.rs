//! Kinetic function, the weak kinetic residual, and the split of `u` into
//! small- and large-diffusivity velocities.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::nonlinearity::{Diffusion, Nonlinearity};
use crate::quad::{GaussLegendre, Neumaier};
use crate::smooth::{bump, cutoff_high, cutoff_low};
use crate::solver::{Counterterm, Forcing, SolutionField};
use serde::Serialize;
use std::f64::consts::TAU;

/// `1_{v < u} - 1_{v < 0}`.
pub fn chi(u: f64, v: f64) -> f64 {
    if 0.0 <= v && v < u {
        1.0
    } else if u <= v && v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Velocity-dependent test function `φ(t, x, v)` with the derivatives the
/// kinetic formulation needs.
pub trait KineticTest: Sync {
    /// Closed time interval outside which `φ` vanishes.
    fn time_support(&self) -> (f64, f64);
    /// Closed velocity interval outside which `φ` vanishes.
    fn velocity_support(&self) -> (f64, f64);
    fn phi(&self, t: f64, x: [f64; 2], v: f64) -> f64;
    fn phi_t(&self, t: f64, x: [f64; 2], v: f64) -> f64;
    /// Spatial Laplacian.
    fn phi_xx(&self, t: f64, x: [f64; 2], v: f64) -> f64;
    fn phi_v(&self, t: f64, x: [f64; 2], v: f64) -> f64;
    /// Factors when `φ = T(t) X(x) V(v)`, which lets the velocity integrals
    /// be tabulated once.
    fn product(&self) -> Option<&dyn ProductFactors> {
        None
    }
}

/// Factors of a product test function `φ = T(t) X(x) V(v)`.
pub trait ProductFactors: Sync {
    /// `(T, ∂_t T)`.
    fn time(&self, t: f64) -> (f64, f64);
    /// `(X, ΔX)`.
    fn space(&self, x: [f64; 2]) -> (f64, f64);
    fn velocity(&self, v: f64) -> f64;
}

/// `amp · b((t-t_c)/t_r) · (1 + ½cos 2πx₁) · b((v-v_c)/v_r)` with the bump `b`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProductTest {
    pub amp: f64,
    pub t_center: f64,
    pub t_radius: f64,
    pub v_center: f64,
    pub v_radius: f64,
}

impl ProductTest {
    fn parts(
        &self,
        t: f64,
        x: [f64; 2],
        v: f64,
    ) -> (crate::smooth::D2, f64, f64, crate::smooth::D2) {
        let bt = bump((t - self.t_center) / self.t_radius);
        let c = (TAU * x[0]).cos();
        let bv = bump((v - self.v_center) / self.v_radius);
        (bt, 1.0 + 0.5 * c, -0.5 * TAU * TAU * c, bv)
    }
}

impl KineticTest for ProductTest {
    fn time_support(&self) -> (f64, f64) {
        (self.t_center - self.t_radius, self.t_center + self.t_radius)
    }

    fn velocity_support(&self) -> (f64, f64) {
        (self.v_center - self.v_radius, self.v_center + self.v_radius)
    }

    fn phi(&self, t: f64, x: [f64; 2], v: f64) -> f64 {
        let (bt, xs, _, bv) = self.parts(t, x, v);
        self.amp * bt.v * xs * bv.v
    }

    fn phi_t(&self, t: f64, x: [f64; 2], v: f64) -> f64 {
        let (bt, xs, _, bv) = self.parts(t, x, v);
        self.amp * bt.d1 / self.t_radius * xs * bv.v
    }

    fn phi_xx(&self, t: f64, x: [f64; 2], v: f64) -> f64 {
        let (bt, _, lap, bv) = self.parts(t, x, v);
        self.amp * bt.v * lap * bv.v
    }

    fn phi_v(&self, t: f64, x: [f64; 2], v: f64) -> f64 {
        let (bt, xs, _, bv) = self.parts(t, x, v);
        self.amp * bt.v * xs * bv.d1 / self.v_radius
    }

    fn product(&self) -> Option<&dyn ProductFactors> {
        Some(self)
    }
}

impl ProductFactors for ProductTest {
    fn time(&self, t: f64) -> (f64, f64) {
        let bt = bump((t - self.t_center) / self.t_radius);
        (self.amp * bt.v, self.amp * bt.d1 / self.t_radius)
    }

    fn space(&self, x: [f64; 2]) -> (f64, f64) {
        let c = (TAU * x[0]).cos();
        (1.0 + 0.5 * c, -0.5 * TAU * TAU * c)
    }

    fn velocity(&self, v: f64) -> f64 {
        bump((v - self.v_center) / self.v_radius).v
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KineticResidual {
    /// `∫χ(-∂_t - a(v)Δ)φ`.
    pub lhs: f64,
    /// Forcing paired with `φ(·, u)`.
    pub forcing: f64,
    /// `-∫a(u)|∇u|² ∂_vφ(·, u)`.
    pub measure: f64,
    pub residual: f64,
}

/// Interior breakpoints where `a` is only C² (the gluing radius).
fn kinks(d: &Diffusion) -> Vec<f64> {
    match *d {
        Diffusion::Regularized { eps, .. } => vec![-eps, eps],
        _ => vec![],
    }
}

/// `∫_lo^hi f` with GL panels, split at the given breakpoints.
fn integrate_split(
    rule: &GaussLegendre,
    lo: f64,
    hi: f64,
    cuts: &[f64],
    panels: usize,
    f: impl Fn(f64) -> f64,
) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut pts = vec![lo];
    pts.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
    pts.push(hi);
    let mut s = Neumaier::default();
    for w in pts.windows(2) {
        let h = (w[1] - w[0]) / panels as f64;
        for p in 0..panels {
            let a = w[0] + h * p as f64;
            s.add(rule.integrate(a, a + h, &f));
        }
    }
    s.total()
}

/// `v ↦ (∫ V, ∫ a V)` from the lower end of the velocity support, from
/// cumulative sums at panel edges plus one panel of quadrature.
struct VelocityTable<'a> {
    f: &'a dyn ProductFactors,
    diffusion: Diffusion,
    rule: GaussLegendre,
    edges: Vec<f64>,
    cum: Vec<(f64, f64)>,
}

impl<'a> VelocityTable<'a> {
    const PANELS: usize = 64;

    fn new(
        f: &'a dyn ProductFactors,
        diffusion: Diffusion,
        lo: f64,
        hi: f64,
        cuts: &[f64],
    ) -> Self {
        let rule = GaussLegendre::new(16);
        let mut breaks = vec![lo];
        breaks.extend(cuts.iter().copied().filter(|&c| c > lo && c < hi));
        breaks.push(hi);
        let mut edges = vec![lo];
        for w in breaks.windows(2) {
            let h = (w[1] - w[0]) / Self::PANELS as f64;
            edges.extend((1..=Self::PANELS).map(|p| {
                if p == Self::PANELS {
                    w[1]
                } else {
                    w[0] + h * p as f64
                }
            }));
        }
        let mut t = VelocityTable {
            f,
            diffusion,
            rule,
            edges,
            cum: vec![(0.0, 0.0)],
        };
        let (mut s0, mut s1) = (Neumaier::default(), Neumaier::default());
        for p in 0..t.edges.len() - 1 {
            let (i0, i1) = t.panel(t.edges[p], t.edges[p + 1]);
            s0.add(i0);
            s1.add(i1);
            t.cum.push((s0.total(), s1.total()));
        }
        t
    }

    fn panel(&self, a: f64, b: f64) -> (f64, f64) {
        let mut out = (0.0, 0.0);
        for (v, w) in self.rule.nodes(a, b) {
            let fv = w * self.f.velocity(v);
            out.0 += fv;
            out.1 += fv * self.diffusion.a(v);
        }
        out
    }

    fn at(&self, v: f64) -> (f64, f64) {
        let v = v.clamp(self.edges[0], self.edges[self.edges.len() - 1]);
        let p = self
            .edges
            .partition_point(|&e| e <= v)
            .saturating_sub(1)
            .min(self.edges.len() - 2);
        let (c0, c1) = self.cum[p];
        let (i0, i1) = self.panel(self.edges[p], v);
        (c0 + i0, c1 + i1)
    }
}

/// Streaming form of [`kinetic_residual`]: feed slices in any order with
/// [`KineticAccumulator::add_slice`].
pub struct KineticAccumulator<'a> {
    grid: Grid,
    nl: Nonlinearity,
    forcing: &'a dyn Forcing,
    counterterm: &'a Counterterm,
    test: &'a dyn KineticTest,
    rule: GaussLegendre,
    cuts: Vec<f64>,
    table: Option<VelocityTable<'a>>,
    xi: Vec<f64>,
    lhs: Neumaier,
    frc: Neumaier,
    meas: Neumaier,
}

impl<'a> KineticAccumulator<'a> {
    pub fn new(
        grid: Grid,
        nl: Nonlinearity,
        forcing: &'a dyn Forcing,
        counterterm: &'a Counterterm,
        test: &'a dyn KineticTest,
    ) -> Result<Self> {
        let (t_lo, t_hi) = test.time_support();
        if t_lo <= 0.0 || t_hi >= grid.final_time() {
            return Err(Error::Domain(format!(
                "test function time support [{t_lo}, {t_hi}] must lie inside (0, {})",
                grid.final_time()
            )));
        }
        let (v_lo, v_hi) = test.velocity_support();
        let cuts = kinks(&nl.diffusion);
        let table = test
            .product()
            .map(|f| VelocityTable::new(f, nl.diffusion, v_lo, v_hi, &cuts));
        let mut xi = vec![0.0; grid.len()];
        if forcing.is_static() {
            forcing.sample(0.0, &grid, &mut xi)?;
        }
        Ok(KineticAccumulator {
            grid,
            nl,
            forcing,
            counterterm,
            test,
            rule: GaussLegendre::new(16),
            cuts,
            table,
            xi,
            lhs: Neumaier::default(),
            frc: Neumaier::default(),
            meas: Neumaier::default(),
        })
    }

    /// Adds the contribution of slice `m`.
    pub fn add_slice(&mut self, m: usize, u: &[f64]) -> Result<()> {
        let g = self.grid;
        let t = g.time(m);
        let (t_lo, t_hi) = self.test.time_support();
        if t <= t_lo || t >= t_hi {
            return Ok(());
        }
        if u.len() != g.len() {
            return Err(Error::Domain(format!(
                "slice has {} points, grid has {}",
                u.len(),
                g.len()
            )));
        }
        if !self.forcing.is_static() {
            self.forcing.sample(t, &g, &mut self.xi)?;
        }
        let (v_lo, v_hi) = self.test.velocity_support();
        let nl = &self.nl;
        let test = self.test;
        let w = g.dt * g.cell();
        let tf = self.test.product().map(|f| f.time(t));
        for i in 0..g.len() {
            let x = g.coords(i);
            let ui = u[i];
            // χ(u, ·) is ±1 between 0 and u, so the v-integral runs there only.
            let (a, b, sgn) = if ui >= 0.0 {
                (0.0, ui, 1.0)
            } else {
                (ui, 0.0, -1.0)
            };
            let l = match (&self.table, self.test.product(), tf) {
                (Some(tab), Some(f), Some((tv, td))) => {
                    let (xv, lap) = f.space(x);
                    let (a0, a1) = tab.at(a);
                    let (b0, b1) = tab.at(b);
                    -td * xv * (b0 - a0) - tv * lap * (b1 - a1)
                }
                _ => {
                    let (a, b) = (a.max(v_lo), b.min(v_hi));
                    integrate_split(&self.rule, a, b, &self.cuts, 4, |v| {
                        -test.phi_t(t, x, v) - nl.a(v) * test.phi_xx(t, x, v)
                    })
                }
            };
            self.lhs.add(w * sgn * l);
            let s = nl.sigma.eval(ui);
            let f = s.v * self.xi[i]
                - if s.v == 0.0 {
                    0.0
                } else {
                    s.v * s.d1 * self.counterterm.value(nl.a(ui))
                };
            self.frc.add(w * f * test.phi(t, x, ui));
            let grad2 = central_gradient_sq(&g, u, i);
            self.meas.add(-w * nl.a(ui) * grad2 * test.phi_v(t, x, ui));
        }
        Ok(())
    }

    pub fn finish(self) -> KineticResidual {
        let (lhs, forcing, measure) = (self.lhs.total(), self.frc.total(), self.meas.total());
        KineticResidual {
            lhs,
            forcing,
            measure,
            residual: lhs - forcing - measure,
        }
    }
}

/// Residual of the kinetic formulation tested against `φ`, on the stored
/// trajectory. The forcing is recomputed from `forcing` and `counterterm` as
/// in the solver; `∇u` uses second-order central differences.
pub fn kinetic_residual(
    sol: &SolutionField,
    forcing: &dyn Forcing,
    counterterm: &Counterterm,
    test: &dyn KineticTest,
) -> Result<KineticResidual> {
    let mut acc = KineticAccumulator::new(sol.grid, sol.nl, forcing, counterterm, test)?;
    for m in 0..sol.n_slices() {
        acc.add_slice(m, sol.slice(m))?;
    }
    Ok(acc.finish())
}

fn central_gradient_sq(g: &Grid, u: &[f64], i: usize) -> f64 {
    let j = g.unflatten(i);
    let mut s = 0.0;
    for axis in 0..g.d {
        let mut p = [j[0] as i64, j[1] as i64];
        let mut q = p;
        p[axis] += 1;
        q[axis] -= 1;
        let d = (u[g.flatten_wrapped(p)] - u[g.flatten_wrapped(q)]) / (2.0 * g.dx());
        s += d * d;
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct KineticSplit {
    pub delta: f64,
    pub u_less: Vec<f64>,
    pub u_greater: Vec<f64>,
    /// Inclusive range of `q` with `δ < 2^{-q}` whose dyadic slices
    /// `φ(2^q a)` touch the range of `a(u)`; `None` if empty.
    pub q_range: Option<(i32, i32)>,
}

/// `u^< = sgn(u) ∫_0^{|u|} φ^<(a(v)/δ) dv` and `u^>` from the complementary
/// cutoff, each by its own quadrature.
pub fn split_velocities(u: &[f64], nl: &Nonlinearity, delta: f64) -> Result<KineticSplit> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    let d = &nl.diffusion;
    // a(v)/δ crosses 1 at v1 and 2 at v2; φ^< is 1 below v1 and 0 above v2.
    let v1 = d.inverse(delta);
    let v2 = d.inverse(2.0 * delta);
    let rule = GaussLegendre::new(20);
    let mut cuts = kinks(d);
    cuts.retain(|&c| c > 0.0);
    let low = |r: f64| cutoff_low(d.a(r) / delta).v;
    let high = |r: f64| cutoff_high(d.a(r) / delta).v;
    let full_less = integrate_split(&rule, v1, v2, &cuts, 8, low);
    let full_greater = integrate_split(&rule, v1, v2, &cuts, 8, high);
    let mut u_less = Vec::with_capacity(u.len());
    let mut u_greater = Vec::with_capacity(u.len());
    for &ui in u {
        let w = ui.abs();
        let sg = if ui < 0.0 { -1.0 } else { 1.0 };
        let (ramp_less, ramp_greater) = if w >= v2 {
            (full_less, full_greater)
        } else {
            let lo = v1.min(w);
            (
                integrate_split(&rule, lo, w, &cuts, 8, low),
                integrate_split(&rule, lo, w, &cuts, 8, high),
            )
        };
        let less = w.min(v1) + ramp_less;
        let greater = ramp_greater + (w - v2).max(0.0);
        u_less.push(sg * less);
        u_greater.push(sg * greater);
    }
    let amax = u.iter().map(|&v| d.a(v)).fold(0.0, f64::max);
    let q_hi = (-delta.log2()).ceil() as i32 - 1;
    let q_lo = (-amax.log2()).floor() as i32;
    let q_range = (amax > 0.0 && q_lo <= q_hi).then_some((q_lo, q_hi));
    Ok(KineticSplit {
        delta,
        u_less,
        u_greater,
        q_range,
    })
}

/// `∫|u^<|` over one slice on grid `g`.
pub fn less_l1(split: &KineticSplit, g: &Grid) -> f64 {
    crate::quad::sum(split.u_less.iter().map(|v| v.abs())) * g.cell()
}

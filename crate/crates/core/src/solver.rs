//! Time stepping for `∂_t u - ∇·(a(u)∇u) = σ(u)ξ - σ'(u)σ(u) C^{a(u)}` on the
//! periodic grid, in flux form with arithmetic-mean face diffusivities.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{ColouredCounterterms, WhiteCounterterms};
use crate::noise::{NoiseKind, SpectralNoise};
use crate::nonlinearity::Nonlinearity;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Heun's method with step halving to respect the diffusive CFL limit.
    ExplicitRk2,
    /// Backward Euler on the diffusion linearized at the old state,
    /// explicit forcing.
    Imex,
}

/// The drift counterterm `C^a`.
#[derive(Clone, Debug)]
pub enum Counterterm {
    None,
    /// `C^a = trace / a` with `trace = Σ_{0<|k|≤K} |k|⁻²`.
    SpaceWhite {
        trace: f64,
    },
    /// Tabulated in `log a`, linearly interpolated in `(log a, log C)`.
    Coloured {
        log_a: Vec<f64>,
        log_c: Vec<f64>,
    },
}

impl Counterterm {
    pub fn space_white(d: usize, k_max: usize) -> Self {
        Counterterm::SpaceWhite {
            trace: WhiteCounterterms::new(d, k_max).inverse_laplacian_trace(),
        }
    }

    pub fn coloured(
        d: usize,
        k_max: usize,
        alpha_prime: f64,
        mollifier_eps: f64,
        a_min: f64,
        a_max: f64,
    ) -> Self {
        let ct = ColouredCounterterms::new(d, k_max, alpha_prime, mollifier_eps);
        let (lo, hi) = (a_min.max(1e-12).ln(), a_max.max(a_min * 2.0).ln());
        let n = 400;
        let log_a: Vec<f64> = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .collect();
        let log_c = log_a.iter().map(|&la| ct.constant(la.exp()).ln()).collect();
        Counterterm::Coloured { log_a, log_c }
    }

    /// Counterterm paired with a noise realization at the same cutoff.
    pub fn for_noise(noise: &SpectralNoise, a_min: f64, a_max: f64) -> Self {
        match (&noise.kind, &noise.coloured) {
            (NoiseKind::Coloured, Some(c)) => Counterterm::coloured(
                noise.d(),
                noise.k_max(),
                c.alpha_prime,
                c.mollifier.eps,
                a_min,
                a_max,
            ),
            _ => Counterterm::space_white(noise.d(), noise.k_max()),
        }
    }

    #[inline]
    pub fn value(&self, a: f64) -> f64 {
        match self {
            Counterterm::None => 0.0,
            Counterterm::SpaceWhite { trace } => trace / a,
            Counterterm::Coloured { log_a, log_c } => {
                let x = a.ln();
                let n = log_a.len() - 1;
                let h = (log_a[n] - log_a[0]) / n as f64;
                let f = ((x - log_a[0]) / h).clamp(0.0, n as f64);
                let i = (f as usize).min(n - 1);
                let w = f - i as f64;
                ((1.0 - w) * log_c[i] + w * log_c[i + 1]).exp()
            }
        }
    }
}

/// Source of the noise term `ξ(t, ·)` on the grid.
pub trait Forcing: Sync {
    fn sample(&self, t: f64, grid: &Grid, out: &mut [f64]) -> Result<()>;

    /// True if the field does not depend on `t`.
    fn is_static(&self) -> bool {
        false
    }
}

impl Forcing for SpectralNoise {
    fn sample(&self, t: f64, grid: &Grid, out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(&self.on_grid(t, grid)?);
        Ok(())
    }

    fn is_static(&self) -> bool {
        self.kind == NoiseKind::SpaceWhite
    }
}

/// Deterministic forcing from a closure `(t, x) ↦ ξ`.
pub struct FnForcing<F>(pub F);

impl<F: Fn(f64, [f64; 2]) -> f64 + Sync> Forcing for FnForcing<F> {
    fn sample(&self, t: f64, grid: &Grid, out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (self.0)(t, grid.coords(i));
        }
        Ok(())
    }
}

pub struct ZeroForcing;

impl Forcing for ZeroForcing {
    fn sample(&self, _t: f64, _grid: &Grid, out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }

    fn is_static(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub max_halvings: u32,
    /// Diffusive CFL factor: substeps obey `h ≤ cfl · dx² / max a`.
    pub cfl: f64,
    pub cg_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: Scheme::ExplicitRk2,
            max_halvings: 12,
            cfl: 0.25,
            cg_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NoiseId {
    pub kind: String,
    pub seed: u64,
    pub k_max: usize,
}

/// `u` on every grid time slice.
#[derive(Clone, Debug)]
pub struct SolutionField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub nl: Nonlinearity,
    pub noise: Option<NoiseId>,
    pub scheme: Scheme,
    /// Substeps used for each grid step.
    pub substeps: Vec<u32>,
}

impl SolutionField {
    pub fn slice(&self, m: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[m * n..(m + 1) * n]
    }

    pub fn n_slices(&self) -> usize {
        self.values.len() / self.grid.len()
    }
}

/// Face diffusivities and divergence-form operator on the periodic grid.
struct Stencil {
    grid: Grid,
    /// `a` at the `+` face along each axis, per node.
    faces: [Vec<f64>; 2],
}

impl Stencil {
    fn new(grid: Grid) -> Self {
        let n = grid.len();
        Stencil {
            grid,
            faces: [vec![0.0; n], vec![0.0; n]],
        }
    }

    fn neighbour(&self, i: usize, axis: usize, dir: i64) -> usize {
        let j = self.grid.unflatten(i);
        let mut jj = [j[0] as i64, j[1] as i64];
        jj[axis] += dir;
        self.grid.flatten_wrapped(jj)
    }

    fn set_faces(&mut self, a_nodes: &[f64]) {
        for axis in 0..self.grid.d {
            for i in 0..a_nodes.len() {
                let p = self.neighbour(i, axis, 1);
                self.faces[axis][i] = 0.5 * (a_nodes[i] + a_nodes[p]);
            }
        }
    }

    /// `out = ∇·(a_face ∇v)`.
    fn div(&self, v: &[f64], out: &mut [f64]) {
        let inv = 1.0 / (self.grid.dx() * self.grid.dx());
        out.fill(0.0);
        for axis in 0..self.grid.d {
            let f = &self.faces[axis];
            for i in 0..v.len() {
                let p = self.neighbour(i, axis, 1);
                let m = self.neighbour(i, axis, -1);
                out[i] += (f[i] * (v[p] - v[i]) - f[m] * (v[i] - v[m])) * inv;
            }
        }
    }
}

struct Rhs<'a> {
    nl: &'a Nonlinearity,
    ct: &'a Counterterm,
}

impl Rhs<'_> {
    /// Pointwise forcing `σ(u)ξ - σ'σ(u) C^{a(u)}`.
    fn reaction(&self, u: &[f64], xi: &[f64], out: &mut [f64]) {
        for ((o, &v), &x) in out.iter_mut().zip(u).zip(xi) {
            let s = self.nl.sigma.eval(v);
            let drift = if s.v == 0.0 || matches!(self.ct, Counterterm::None) {
                0.0
            } else {
                s.v * s.d1 * self.ct.value(self.nl.a(v))
            };
            *o = s.v * x - drift;
        }
    }
}

fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
) -> Result<()> {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut p = r.clone();
    let dot = |a: &[f64], b: &[f64]| crate::quad::sum(a.iter().zip(b).map(|(x, y)| x * y));
    let bnorm = dot(b, b).sqrt().max(1e-300);
    let mut rr = dot(&r, &r);
    for _ in 0..10 * n + 100 {
        if rr.sqrt() <= tol * bnorm {
            return Ok(());
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= 1e3 * tol * bnorm {
        Ok(())
    } else {
        Err(Error::NonFinite { t: f64::NAN })
    }
}

/// Integrate from `u0` over the whole grid time span.
pub fn solve(
    u0: &[f64],
    nl: &Nonlinearity,
    forcing: &dyn Forcing,
    counterterm: &Counterterm,
    grid: &Grid,
    cfg: &SolverConfig,
) -> Result<SolutionField> {
    let mut values = Vec::with_capacity(grid.len() * (grid.n_t + 1));
    let substeps = solve_observed(u0, nl, forcing, counterterm, grid, cfg, &mut |_, u| {
        values.extend_from_slice(u);
        Ok(())
    })?;
    Ok(SolutionField {
        grid: *grid,
        values,
        nl: *nl,
        noise: None,
        scheme: cfg.scheme,
        substeps,
    })
}

/// [`solve`] without storing the trajectory: `observe(m, u)` sees every
/// slice in order. Returns the substeps used for each grid step.
pub fn solve_observed(
    u0: &[f64],
    nl: &Nonlinearity,
    forcing: &dyn Forcing,
    counterterm: &Counterterm,
    grid: &Grid,
    cfg: &SolverConfig,
    observe: &mut dyn FnMut(usize, &[f64]) -> Result<()>,
) -> Result<Vec<u32>> {
    grid.validate()?;
    let n = grid.len();
    if u0.len() != n {
        return Err(Error::Domain(format!(
            "initial data has {} points, grid has {n}",
            u0.len()
        )));
    }
    if !(nl.diffusion.floor() > 0.0) {
        return Err(Error::Domain(
            "diffusivity must be bounded below; regularize first".into(),
        ));
    }
    let rhs = Rhs {
        nl,
        ct: counterterm,
    };
    let dx2 = grid.dx() * grid.dx();
    observe(0, u0)?;
    let mut u = u0.to_vec();
    let mut st = Stencil::new(*grid);
    let mut xi = vec![0.0; n];
    let mut xi2 = vec![0.0; n];
    let mut a_nodes = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut react = vec![0.0; n];
    let mut ustar = vec![0.0; n];
    let mut substeps = Vec::with_capacity(grid.n_t);
    if forcing.is_static() {
        forcing.sample(0.0, grid, &mut xi)?;
        xi2.copy_from_slice(&xi);
    }
    let eval = |u: &[f64],
                xi: &[f64],
                st: &mut Stencil,
                a_nodes: &mut [f64],
                react: &mut [f64],
                out: &mut [f64]| {
        for (a, &v) in a_nodes.iter_mut().zip(u) {
            *a = nl.a(v);
        }
        st.set_faces(a_nodes);
        st.div(u, out);
        rhs.reaction(u, xi, react);
        for (o, r) in out.iter_mut().zip(react.iter()) {
            *o += r;
        }
    };
    for m in 0..grid.n_t {
        let t0 = grid.time(m);
        let (steps, h) = match cfg.scheme {
            Scheme::ExplicitRk2 => {
                let amax = u.iter().map(|&v| nl.a(v)).fold(0.0, f64::max);
                let limit = cfg.cfl * dx2 / amax;
                let mut halvings = 0u32;
                let mut h = grid.dt;
                while h > limit {
                    h *= 0.5;
                    halvings += 1;
                    if halvings > cfg.max_halvings {
                        return Err(Error::Cfl {
                            t: t0,
                            halvings: cfg.max_halvings,
                        });
                    }
                }
                (1u32 << halvings, h)
            }
            Scheme::Imex => (1, grid.dt),
        };
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            if !forcing.is_static() {
                forcing.sample(t, grid, &mut xi)?;
            }
            match cfg.scheme {
                Scheme::ExplicitRk2 => {
                    eval(&u, &xi, &mut st, &mut a_nodes, &mut react, &mut k1);
                    for i in 0..n {
                        ustar[i] = u[i] + h * k1[i];
                    }
                    if !forcing.is_static() {
                        forcing.sample(t + h, grid, &mut xi2)?;
                    }
                    eval(&ustar, &xi2, &mut st, &mut a_nodes, &mut react, &mut k2);
                    for i in 0..n {
                        u[i] += 0.5 * h * (k1[i] + k2[i]);
                    }
                }
                Scheme::Imex => {
                    for (a, &v) in a_nodes.iter_mut().zip(&u) {
                        *a = nl.a(v);
                    }
                    st.set_faces(&a_nodes);
                    rhs.reaction(&u, &xi, &mut react);
                    let b: Vec<f64> = u.iter().zip(&react).map(|(v, r)| v + h * r).collect();
                    let mut x = b.clone();
                    let stref = &st;
                    conjugate_gradient(
                        |v, out| {
                            stref.div(v, out);
                            for (o, vv) in out.iter_mut().zip(v) {
                                *o = vv - h * *o;
                            }
                        },
                        &b,
                        &mut x,
                        cfg.cg_tol,
                    )
                    .map_err(|_| Error::NonFinite { t })?;
                    u = x;
                }
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                t: grid.time(m + 1),
            });
        }
        substeps.push(steps);
        observe(m + 1, &u)?;
    }
    Ok(substeps)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub mass: f64,
    pub lp: f64,
    pub dissipation: f64,
}

/// Per-slice `∫u`, `∫|u|^p` and the face-discrete `∫a(u)|∇u|²`.
pub fn mass_and_energy_trace(sol: &SolutionField, p: f64) -> Vec<TraceRow> {
    let g = sol.grid;
    let cell = g.cell();
    let mut st = Stencil::new(g);
    (0..sol.n_slices())
        .map(|m| {
            let u = sol.slice(m);
            let a: Vec<f64> = u.iter().map(|&v| sol.nl.a(v)).collect();
            st.set_faces(&a);
            let mut diss = crate::quad::Neumaier::default();
            for axis in 0..g.d {
                for i in 0..u.len() {
                    let q = st.neighbour(i, axis, 1);
                    let grad = (u[q] - u[i]) / g.dx();
                    diss.add(st.faces[axis][i] * grad * grad);
                }
            }
            TraceRow {
                t: g.time(m),
                mass: crate::quad::sum(u.iter().copied()) * cell,
                lp: crate::quad::sum(u.iter().map(|v| v.abs().powf(p))) * cell,
                dissipation: diss.total() * cell,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{regularize, Diffusion, Sigma};
    use std::f64::consts::{PI, TAU};

    fn heat() -> Nonlinearity {
        Nonlinearity::new(Diffusion::Constant(1.0), Sigma::Zero)
    }

    #[test]
    fn exact_heat_solution() {
        let g = Grid::new(1, 64, 1e-5, 1000).unwrap();
        let u0 = g.sample(|x| (TAU * x[0]).cos());
        let sol = solve(
            &u0,
            &heat(),
            &ZeroForcing,
            &Counterterm::None,
            &g,
            &SolverConfig::default(),
        )
        .unwrap();
        let t = g.final_time();
        let last = sol.slice(g.n_t);
        let err: f64 = last
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (-4.0 * PI * PI * t).exp() * (TAU * g.coords(i)[0]).cos()).powi(2))
            .sum::<f64>()
            * g.cell();
        assert!(err.sqrt() < 1e-3);
    }

    #[test]
    fn constants_are_steady() {
        let g = Grid::new(2, 16, 1e-3, 20).unwrap();
        let nl = Nonlinearity::standard(1.5, 0.01, 1.0).unwrap();
        let u0 = vec![0.3; g.len()];
        for scheme in [Scheme::ExplicitRk2, Scheme::Imex] {
            let cfg = SolverConfig {
                scheme,
                ..Default::default()
            };
            let sol = solve(&u0, &nl, &ZeroForcing, &Counterterm::None, &g, &cfg).unwrap();
            assert!(sol.slice(20).iter().all(|&v| (v - 0.3).abs() < 1e-14));
        }
    }

    #[test]
    fn zero_forcing_conserves_mass_and_dissipates() {
        let g = Grid::new(2, 32, 1e-3, 50).unwrap();
        let nl = Nonlinearity::new(regularize(1.5, 0.05).unwrap(), Sigma::Zero);
        let u0 = g.sample(|x| 0.5 + 0.4 * (TAU * x[0]).sin() * (TAU * x[1]).cos());
        for scheme in [Scheme::ExplicitRk2, Scheme::Imex] {
            let cfg = SolverConfig {
                scheme,
                ..Default::default()
            };
            let sol = solve(&u0, &nl, &ZeroForcing, &Counterterm::None, &g, &cfg).unwrap();
            let tr = mass_and_energy_trace(&sol, 2.0);
            for w in tr.windows(2) {
                assert!((w[1].mass - w[0].mass).abs() < 1e-12);
                assert!(w[1].lp <= w[0].lp + 1e-15);
            }
            let direct = crate::quad::sum(u0.iter().map(|v| v * v)) * g.cell();
            assert!((tr[0].lp - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        let g = Grid::new(2, 16, 1e-3, 10).unwrap();
        let nl = Nonlinearity::standard(1.5, 0.01, 2.0).unwrap();
        let noise = crate::noise::sample_space_white(2, 4, 99).unwrap();
        let ct = Counterterm::for_noise(&noise, 1e-3, 10.0);
        let u0 = g.sample(|x| 1.0 + 0.2 * (TAU * x[1]).cos());
        let a = solve(&u0, &nl, &noise, &ct, &g, &SolverConfig::default()).unwrap();
        let b = solve(&u0, &nl, &noise, &ct, &g, &SolverConfig::default()).unwrap();
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn unregularized_and_mismatched_inputs_are_rejected() {
        let g = Grid::new(1, 16, 1e-3, 1).unwrap();
        let nl = Nonlinearity::new(crate::nonlinearity::make_porous(1.5).unwrap(), Sigma::Zero);
        assert!(solve(
            &[0.0; 16],
            &nl,
            &ZeroForcing,
            &Counterterm::None,
            &g,
            &SolverConfig::default()
        )
        .is_err());
        assert!(solve(
            &[0.0; 8],
            &heat(),
            &ZeroForcing,
            &Counterterm::None,
            &g,
            &SolverConfig::default()
        )
        .is_err());
    }

    #[test]
    fn step_control_gives_up() {
        let g = Grid::new(1, 256, 1.0, 1).unwrap();
        let cfg = SolverConfig {
            max_halvings: 3,
            ..Default::default()
        };
        let u0 = g.sample(|x| (TAU * x[0]).cos());
        let r = solve(&u0, &heat(), &ZeroForcing, &Counterterm::None, &g, &cfg);
        assert!(matches!(r, Err(Error::Cfl { .. })));
        assert!(r.unwrap_err().is_numerical());
    }

    #[test]
    fn coloured_table_interpolates() {
        let ct = Counterterm::coloured(1, 4, 0.8, 0.05, 0.01, 10.0);
        let exact = ColouredCounterterms::new(1, 4, 0.8, 0.05);
        for &a in &[0.02, 0.5, 3.3] {
            let v = ct.value(a);
            assert!((v - exact.constant(a)).abs() < 1e-3 * v);
        }
    }

    #[test]
    fn white_counterterm_scales_inversely() {
        let ct = Counterterm::space_white(2, 8);
        assert!((ct.value(2.0) * 2.0 - ct.value(1.0)).abs() < 1e-14);
        assert!((ct.value(1.0) - crate::model::counterterm_c(2, 1.0, 8)).abs() < 1e-12);
    }

    fn mms_nl() -> Nonlinearity {
        Nonlinearity::new(regularize(1.5, 2.0).unwrap(), Sigma::Constant(1.0))
    }

    /// `u* = e^{-t} cos 2πx` and the forcing that makes it exact.
    fn mms_forcing(nl: Nonlinearity) -> impl Fn(f64, [f64; 2]) -> f64 + Sync {
        move |t, x| {
            let u = (-t).exp() * (TAU * x[0]).cos();
            let ux = -TAU * (-t).exp() * (TAU * x[0]).sin();
            let a = nl.diffusion.eval(u);
            -u - a.d1 * ux * ux + a.v * TAU * TAU * u
        }
    }

    fn mms_error(n: usize, dt: f64, n_t: usize, scheme: Scheme) -> (f64, Vec<f64>) {
        let nl = mms_nl();
        let g = Grid::new(1, n, dt, n_t).unwrap();
        let u0 = g.sample(|x| (TAU * x[0]).cos());
        let cfg = SolverConfig {
            scheme,
            ..Default::default()
        };
        let sol = solve(
            &u0,
            &nl,
            &FnForcing(mms_forcing(nl)),
            &Counterterm::None,
            &g,
            &cfg,
        )
        .unwrap();
        let t = g.final_time();
        let last = sol.slice(n_t).to_vec();
        let err = last
            .iter()
            .enumerate()
            .map(|(i, v)| (v - (-t).exp() * (TAU * g.coords(i)[0]).cos()).powi(2))
            .sum::<f64>()
            * g.cell();
        (err.sqrt(), last)
    }

    #[test]
    fn manufactured_solution_spatial_order() {
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| mms_error(n, 1e-3, 50, Scheme::ExplicitRk2).0)
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.7, "{errs:?}");
        }
    }

    #[test]
    fn manufactured_solution_temporal_order() {
        let t = 0.2;
        let runs: Vec<Vec<f64>> = [10, 20, 40]
            .iter()
            .map(|&k| mms_error(32, t / k as f64, k, Scheme::Imex).1)
            .collect();
        let d = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let order = (d(&runs[0], &runs[1]) / d(&runs[1], &runs[2])).log2();
        assert!(order > 0.7, "{order}");
    }
}

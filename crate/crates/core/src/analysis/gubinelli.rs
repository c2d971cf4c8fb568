use super::FieldView;
use crate::grid::Grid;
use crate::model::{GridLolly, WhiteModel};
use crate::nonlinearity::Nonlinearity;
use rayon::prelude::*;
use serde::Serialize;

/// `ν = ∇u - σ(u) ∇Π[lolly; a(u)]` on every slice, with the pieces kept
/// so that later identities reuse the very same gradients.
#[derive(Clone, Debug)]
pub struct GubinelliField {
    pub grid: Grid,
    pub n_slices: usize,
    /// Fourth-order central differences of `u`.
    pub grad_u: Vec<[f64; 2]>,
    /// Exact `∇_y L_a(t, y)` at `y = x`, `a = a(u(t, x))`; zero without model.
    pub lolly_grad: Vec<[f64; 2]>,
    pub nu: Vec<[f64; 2]>,
}

impl GubinelliField {
    #[inline]
    pub fn idx(&self, m: usize, i: usize) -> usize {
        m * self.grid.len() + i
    }
}

pub(crate) fn grad4(g: &Grid, u: &[f64], i: usize) -> [f64; 2] {
    let j = g.unflatten(i);
    let mut out = [0.0; 2];
    for (axis, o) in out.iter_mut().enumerate().take(g.d) {
        let at = |k: i64| {
            let mut p = [j[0] as i64, j[1] as i64];
            p[axis] += k;
            u[g.flatten_wrapped(p)]
        };
        *o = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * g.dx());
    }
    out
}

/// Gubinelli derivative of the field against the exact lolly gradient.
/// With `model = None` or `σ ≡ 0` this is the discrete gradient.
pub fn gubinelli_nu(
    u: FieldView<'_>,
    nl: &Nonlinearity,
    model: Option<&WhiteModel<'_>>,
) -> GubinelliField {
    let g = u.grid;
    let n = g.len();
    let n_slices = u.n_slices();
    let tables: Option<Vec<GridLolly>> = model.and_then(|md| {
        (0..g.d)
            .map(|axis| GridLolly::gradient(md, &g, axis))
            .collect::<crate::Result<_>>()
            .ok()
    });
    type Slice = (Vec<[f64; 2]>, Vec<[f64; 2]>);
    let per_slice: Vec<Slice> = (0..n_slices)
        .into_par_iter()
        .map(|m| {
            let s = u.slice(m);
            let t = g.time(m);
            let gu: Vec<[f64; 2]> = (0..n).map(|i| grad4(&g, s, i)).collect();
            let lg: Vec<[f64; 2]> = (0..n)
                .map(|i| match model {
                    Some(md) if nl.sigma.sigma(s[i]) != 0.0 => match &tables {
                        Some(tb) => {
                            let mut out = [0.0; 2];
                            for (o, ll) in out.iter_mut().zip(tb) {
                                *o = ll.eval(nl.a(s[i]), t, i);
                            }
                            out
                        }
                        None => md.lolly_grad(nl.a(s[i]), t, g.coords(i)),
                    },
                    _ => [0.0; 2],
                })
                .collect();
            (gu, lg)
        })
        .collect();
    let mut grad_u = Vec::with_capacity(n * n_slices);
    let mut lolly_grad = Vec::with_capacity(n * n_slices);
    for (gu, lg) in per_slice {
        grad_u.extend(gu);
        lolly_grad.extend(lg);
    }
    let nu = (0..n * n_slices)
        .map(|k| {
            let s = nl.sigma.sigma(u.values[k]);
            [
                grad_u[k][0] - s * lolly_grad[k][0],
                grad_u[k][1] - s * lolly_grad[k][1],
            ]
        })
        .collect();
    GubinelliField {
        grid: g,
        n_slices,
        grad_u,
        lolly_grad,
        nu,
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityResidual {
    pub max_abs: f64,
    /// Largest magnitude among the compared terms, for scale.
    pub max_term: f64,
}

/// Max over the trajectory of
/// `a(|∇u|² - σ²c_cherry) - [a|ν|² + 2aσ∇Π·ν + aσ²(|∇Π|² - c_cherry)]`.
pub fn renormalized_measure_identity(
    u: FieldView<'_>,
    nl: &Nonlinearity,
    model: Option<&WhiteModel<'_>>,
    nu: &GubinelliField,
) -> IdentityResidual {
    let g = u.grid;
    let n = g.len();
    let mut max_abs = 0.0f64;
    let mut max_term = 0.0f64;
    for m in 0..u.n_slices() {
        let t = g.time(m);
        for i in 0..n {
            let k = m * n + i;
            let v = u.values[k];
            let a = nl.a(v);
            let s = nl.sigma.sigma(v);
            let c = match model {
                Some(md) => md.counterterms.cherry(a, t),
                None => 0.0,
            };
            let (gu, lg, nv) = (nu.grad_u[k], nu.lolly_grad[k], nu.nu[k]);
            let dot = |p: [f64; 2], q: [f64; 2]| p[0] * q[0] + p[1] * q[1];
            let lhs = a * (dot(gu, gu) - s * s * c);
            let t1 = a * dot(nv, nv);
            let t2 = 2.0 * a * s * dot(lg, nv);
            let t3 = a * s * s * (dot(lg, lg) - c);
            max_abs = max_abs.max((lhs - (t1 + t2 + t3)).abs());
            max_term = max_term
                .max(lhs.abs())
                .max(t1.abs())
                .max(t2.abs())
                .max(t3.abs());
        }
    }
    IdentityResidual { max_abs, max_term }
}

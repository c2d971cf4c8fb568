use super::gubinelli::GubinelliField;
use super::FieldView;
use crate::error::{Error, Result};
use crate::model::WhiteModel;
use crate::nonlinearity::Nonlinearity;
use crate::quad::Neumaier;
use crate::solver::Forcing;
use serde::Serialize;

/// `L^p` energy balance of a trajectory, term by term.
///
/// With `g' = |v|^{p-2}`, `g = sgn(v)|v|^{p-1}/(p-1)` and
/// `G = |v|^p/(p(p-1))`, the classical solution satisfies
/// `∫G(u(T)) + ∫g'a|ν|² = ∫G(u₀) + singular + cherry + dumb_cherry + dumb_c`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyLedger {
    pub p: f64,
    pub final_energy: f64,
    pub dissipation: f64,
    pub initial_energy: f64,
    /// `∫ gσξ - (gσ)'σ c_dumb`.
    pub singular: f64,
    /// `-∫ g'aσ(σ(|∇Π|² - c_cherry) + 2∇Π·ν)`.
    pub cherry: f64,
    /// `∫ g'σ²(c_dumb - a c_cherry)`.
    pub dumb_cherry: f64,
    /// `∫ gσ'σ(c_dumb - C^a)`.
    pub dumb_c: f64,
    /// Right side minus left side.
    pub margin: f64,
}

struct Weights {
    p: f64,
}

impl Weights {
    fn g1(&self, v: f64) -> f64 {
        // |v|^{p-2}; at v = 0 the value only ever multiplies a vanishing factor.
        if v == 0.0 {
            return if self.p == 2.0 { 1.0 } else { 0.0 };
        }
        v.abs().powf(self.p - 2.0)
    }

    fn g(&self, v: f64) -> f64 {
        v.signum() * v.abs().powf(self.p - 1.0) / (self.p - 1.0)
    }

    fn big_g(&self, v: f64) -> f64 {
        v.abs().powf(self.p) / (self.p * (self.p - 1.0))
    }
}

/// Evaluate every ledger term by trapezoid in time and Riemann sums in space.
/// The noise enters through `forcing`; counterterms come from the model when
/// one is given and vanish otherwise.
pub fn energy_report(
    u: FieldView<'_>,
    nl: &Nonlinearity,
    forcing: &dyn Forcing,
    model: Option<&WhiteModel<'_>>,
    nu: &GubinelliField,
    p: f64,
) -> Result<EnergyLedger> {
    if !(p > 1.0) {
        return Err(Error::Domain(format!("p = {p} must exceed 1")));
    }
    let g = u.grid;
    let n = g.len();
    let w = Weights { p };
    let last = u.n_slices() - 1;
    let energy = |m: usize| crate::quad::sum(u.slice(m).iter().map(|&v| w.big_g(v))) * g.cell();
    let mut terms = [
        Neumaier::default(),
        Neumaier::default(),
        Neumaier::default(),
        Neumaier::default(),
        Neumaier::default(),
    ];
    let mut xi = vec![0.0; n];
    if forcing.is_static() {
        forcing.sample(0.0, &g, &mut xi)?;
    }
    for m in 0..=last {
        let t = g.time(m);
        if !forcing.is_static() {
            forcing.sample(t, &g, &mut xi)?;
        }
        let tw = if m == 0 || m == last { 0.5 } else { 1.0 } * g.dt * g.cell();
        for i in 0..n {
            let k = m * n + i;
            let v = u.values[k];
            let a = nl.a(v);
            let s = nl.sigma.eval(v);
            let (cd, cc, cap) = match model {
                Some(md) => (
                    md.counterterms.dumb(a, t),
                    md.counterterms.cherry(a, t),
                    md.counterterms.constant(a),
                ),
                None => (0.0, 0.0, 0.0),
            };
            let (nv, lg) = (nu.nu[k], nu.lolly_grad[k]);
            let nn = nv[0] * nv[0] + nv[1] * nv[1];
            let ll = lg[0] * lg[0] + lg[1] * lg[1];
            let ln = lg[0] * nv[0] + lg[1] * nv[1];
            let (gv, g1) = (w.g(v), w.g1(v));
            terms[0].add(tw * g1 * a * nn);
            let gs_prime = g1 * s.v + gv * s.d1;
            terms[1].add(tw * (gv * s.v * xi[i] - gs_prime * s.v * cd));
            terms[2].add(-tw * g1 * a * s.v * (s.v * (ll - cc) + 2.0 * ln));
            terms[3].add(tw * g1 * s.v * s.v * (cd - a * cc));
            terms[4].add(tw * gv * s.d1 * s.v * (cd - cap));
        }
    }
    let [dissipation, singular, cherry, dumb_cherry, dumb_c] = terms.map(|t| t.total());
    let (final_energy, initial_energy) = (energy(last), energy(0));
    let margin =
        initial_energy + singular + cherry + dumb_cherry + dumb_c - final_energy - dissipation;
    Ok(EnergyLedger {
        p,
        final_energy,
        dissipation,
        initial_energy,
        singular,
        cherry,
        dumb_cherry,
        dumb_c,
        margin,
    })
}

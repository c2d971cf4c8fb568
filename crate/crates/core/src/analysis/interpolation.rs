use super::gubinelli::GubinelliField;
use super::seminorm::{large_velocity_with, LollyIncrements};
use super::{FieldView, Sweep};
use crate::error::{Error, Result};
use crate::kinetic::split_velocities;
use crate::model::WhiteModel;
use crate::nonlinearity::Nonlinearity;
use crate::stats::{fit_loglog, LineFit};
use serde::Serialize;

/// The two competing costs of a velocity split at threshold `δ`.
pub trait SplitCosts: Sync {
    /// `‖u^<‖_{L¹}`.
    fn small(&self, delta: f64) -> Result<f64>;
    /// Large-velocity modelledness constant.
    fn large(&self, delta: f64) -> Result<f64>;
}

/// `small = δ^{1/(M-1)}`, `large = δ^{-α-ϵ}`.
#[derive(Clone, Copy, Debug)]
pub struct SyntheticSplitCosts {
    pub m: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl SplitCosts for SyntheticSplitCosts {
    fn small(&self, delta: f64) -> Result<f64> {
        Ok(delta.powf(1.0 / (self.m - 1.0)))
    }

    fn large(&self, delta: f64) -> Result<f64> {
        Ok(delta.powf(-self.alpha - self.eps))
    }
}

/// Costs measured on a trajectory: space-time `L¹` norm of `u^<` and the
/// sup ratio of the large-velocity seminorm.
pub struct FieldSplitCosts<'a, 'm> {
    pub u: FieldView<'a>,
    pub nl: &'a Nonlinearity,
    pub model: Option<&'a WhiteModel<'m>>,
    pub nu: &'a GubinelliField,
    pub alpha: f64,
    pub r: f64,
    pub sweep: &'a Sweep,
    increments: Option<LollyIncrements>,
}

impl<'a, 'm> FieldSplitCosts<'a, 'm> {
    pub fn new(
        u: FieldView<'a>,
        nl: &'a Nonlinearity,
        model: Option<&'a WhiteModel<'m>>,
        nu: &'a GubinelliField,
        alpha: f64,
        r: f64,
        sweep: &'a Sweep,
    ) -> Result<Self> {
        let increments = LollyIncrements::build(u, nl, model, sweep)?;
        Ok(FieldSplitCosts {
            u,
            nl,
            model,
            nu,
            alpha,
            r,
            sweep,
            increments,
        })
    }
}

impl SplitCosts for FieldSplitCosts<'_, '_> {
    fn small(&self, delta: f64) -> Result<f64> {
        let g = self.u.grid;
        let mut total = 0.0;
        for m in 0..self.u.n_slices() {
            let s = split_velocities(self.u.slice(m), self.nl, delta)?;
            total += crate::kinetic::less_l1(&s, &g) * g.dt;
        }
        Ok(total)
    }

    fn large(&self, delta: f64) -> Result<f64> {
        Ok(large_velocity_with(
            self.u,
            self.nl,
            self.model,
            self.nu,
            delta,
            self.alpha,
            self.r,
            self.sweep,
            self.increments.as_ref(),
        )?
        .sup_ratio)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InterpolationReport {
    pub lambdas: Vec<f64>,
    pub k_values: Vec<f64>,
    pub argmin_delta: Vec<f64>,
    pub delta_fit: Option<LineFit>,
    pub k_fit: LineFit,
    /// `2α(M-1)/(1+(M-1)(α+ϵ))`.
    pub predicted_delta_slope: f64,
    /// `2α/(1+(M-1)(α+ϵ))`.
    pub predicted_k_slope: f64,
    pub nondecreasing: bool,
}

/// `K(λ) = min_δ small(δ) + λ^{2α} large(δ)` over `δ = 2^{-1}, …, 2^{-depth}`.
pub fn k_functional_interpolation(
    costs: &dyn SplitCosts,
    m: f64,
    alpha: f64,
    lambdas: &[f64],
    eps: f64,
    depth: u32,
) -> Result<InterpolationReport> {
    if lambdas.len() < 2 || depth == 0 {
        return Err(Error::Domain(
            "need at least two scales and one threshold".into(),
        ));
    }
    let deltas: Vec<f64> = (1..=depth as i32).map(|k| 2f64.powi(-k)).collect();
    let table = deltas
        .iter()
        .map(|&d| Ok((d, costs.small(d)?, costs.large(d)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut k_values = Vec::with_capacity(lambdas.len());
    let mut argmin_delta = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let w = lam.powf(2.0 * alpha);
        let (d, k) = table.iter().map(|&(d, s, l)| (d, s + w * l)).fold(
            (f64::NAN, f64::INFINITY),
            |b, c| if c.1 < b.1 { c } else { b },
        );
        argmin_delta.push(d);
        k_values.push(k);
    }
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&i, &j| lambdas[i].total_cmp(&lambdas[j]));
    let nondecreasing = order.windows(2).all(|w| k_values[w[1]] >= k_values[w[0]]);
    let distinct = argmin_delta.iter().any(|&d| d != argmin_delta[0]);
    let delta_fit = if distinct {
        Some(fit_loglog(lambdas, &argmin_delta)?)
    } else {
        None
    };
    let k_fit = fit_loglog(lambdas, &k_values)?;
    let denom = 1.0 + (m - 1.0) * (alpha + eps);
    Ok(InterpolationReport {
        lambdas: lambdas.to_vec(),
        k_values,
        argmin_delta,
        delta_fit,
        k_fit,
        predicted_delta_slope: 2.0 * alpha * (m - 1.0) / denom,
        predicted_k_slope: 2.0 * alpha / denom,
        nondecreasing,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{gubinelli_nu, ShiftFamily};
    use super::*;
    use crate::grid::Grid;
    use crate::nonlinearity::{Diffusion, Sigma};
    use std::f64::consts::TAU;

    fn dyadic(lo: i32, hi: i32) -> Vec<f64> {
        (lo..=hi).map(|k| 2f64.powi(-k)).collect()
    }

    #[test]
    fn synthetic_family_matches_closed_form_minimizer() {
        let (m, alpha, eps) = (1.5, 0.9, 0.01);
        let c = SyntheticSplitCosts { m, alpha, eps };
        let rep = k_functional_interpolation(&c, m, alpha, &dyadic(4, 40), eps, 80).unwrap();
        let want_d = 2.0 * alpha * (m - 1.0) / (1.0 + (m - 1.0) * alpha);
        let want_k = 2.0 * alpha / (1.0 + (m - 1.0) * alpha);
        assert!((rep.delta_fit.unwrap().slope - want_d).abs() < 0.05);
        assert!((rep.k_fit.slope - want_k).abs() < 0.05);
        assert!(rep.nondecreasing);
    }

    #[test]
    fn saturated_diffusivity_gives_slope_two_alpha() {
        let g = Grid::new(1, 32, 1e-3, 8).unwrap();
        let vals: Vec<f64> = (0..=8)
            .flat_map(|m| {
                g.sample(move |x| 1.0 + 0.3 * (TAU * x[0]).cos() * (1.0 - m as f64 * 0.01))
            })
            .collect();
        let view = FieldView::new(g, &vals).unwrap();
        let nl = Nonlinearity::new(Diffusion::Constant(1.0), Sigma::Zero);
        let nu = gubinelli_nu(view, &nl, None);
        let sweep = Sweep::dyadic(&g, &[ShiftFamily::Spatial], 1.0, 1).unwrap();
        let alpha = 0.9;
        let costs = FieldSplitCosts::new(view, &nl, None, &nu, alpha, 1.0, &sweep).unwrap();
        assert_eq!(costs.small(0.25).unwrap(), 0.0);
        let rep = k_functional_interpolation(&costs, 1.5, alpha, &dyadic(1, 6), 0.01, 3).unwrap();
        assert!((rep.k_fit.slope - 2.0 * alpha).abs() < 1e-10);
        assert!(rep.nondecreasing);
    }

    #[test]
    fn k_is_nondecreasing_on_a_random_family() {
        for (m, alpha) in [(1.2, 0.7), (1.8, 0.95)] {
            let c = SyntheticSplitCosts { m, alpha, eps: 0.0 };
            let lams: Vec<f64> = (0..60).map(|i| 1.3f64.powi(-i)).collect();
            assert!(
                k_functional_interpolation(&c, m, alpha, &lams, 0.0, 40)
                    .unwrap()
                    .nondecreasing
            );
        }
    }
}

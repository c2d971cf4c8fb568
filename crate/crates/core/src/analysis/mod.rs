//! Estimators on solved trajectories: Gubinelli derivative, increment
//! seminorms, the ζ-test characterization, the energy ledger and the
//! K-functional.

mod energy;
mod gubinelli;
mod interpolation;
mod seminorm;
mod zeta;

pub use energy::{energy_report, EnergyLedger};
pub use gubinelli::{
    gubinelli_nu, renormalized_measure_identity, GubinelliField, IdentityResidual,
};
pub use interpolation::{
    k_functional_interpolation, FieldSplitCosts, InterpolationReport, SplitCosts,
    SyntheticSplitCosts,
};
pub use seminorm::{besov_seminorm, large_velocity_seminorm, modelledness_seminorm};
pub use zeta::{zeta_test_seminorm, ZetaLibrary, ZetaReport};

use crate::error::{Error, Result};
use crate::grid::{parabolic_norm_raw, Grid};
use crate::stats::fit_loglog;
use serde::{Deserialize, Serialize};

/// Borrowed space-time field: `values[m * len + i] = u(t_m, x_i)`.
#[derive(Clone, Copy, Debug)]
pub struct FieldView<'a> {
    pub grid: Grid,
    pub values: &'a [f64],
}

impl<'a> FieldView<'a> {
    pub fn new(grid: Grid, values: &'a [f64]) -> Result<Self> {
        if values.is_empty() || !values.len().is_multiple_of(grid.len()) {
            return Err(Error::Domain(
                "field length is not a multiple of the grid size".into(),
            ));
        }
        Ok(FieldView { grid, values })
    }

    pub fn n_slices(&self) -> usize {
        self.values.len() / self.grid.len()
    }

    #[inline]
    pub fn at(&self, m: usize, i: usize) -> f64 {
        self.values[m * self.grid.len() + i]
    }

    pub fn slice(&self, m: usize) -> &'a [f64] {
        let n = self.grid.len();
        &self.values[m * n..(m + 1) * n]
    }
}

impl crate::solver::SolutionField {
    pub fn view(&self) -> FieldView<'_> {
        FieldView {
            grid: self.grid,
            values: &self.values,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftFamily {
    Temporal,
    Spatial,
    Diagonal,
}

/// Grid-aligned space-time shift: `steps` time steps and a lattice offset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Shift {
    pub family: ShiftFamily,
    pub steps: usize,
    pub offset: [i64; 2],
}

impl Shift {
    pub fn spatial(&self, g: &Grid) -> [f64; 2] {
        [
            self.offset[0] as f64 * g.dx(),
            self.offset[1] as f64 * g.dx(),
        ]
    }

    pub fn norm(&self, g: &Grid) -> f64 {
        let y = self.spatial(g);
        parabolic_norm_raw(self.steps as f64 * g.dt, &y[..g.d])
    }
}

/// Dyadic shifts of the requested families with `‖y‖ ≤ r`.
///
/// Spatial shifts move `2^k` cells along the first axis; temporal shifts
/// move `2^k` steps; diagonal shifts pair `2^k` cells with the number of
/// steps closest to the parabolic diagonal `s = |y|²`.
pub fn dyadic_shifts(g: &Grid, families: &[ShiftFamily], r: f64) -> Vec<Shift> {
    let mut out = Vec::new();
    for &family in families {
        let mut k = 0u32;
        loop {
            let p = 1usize << k;
            let shift = match family {
                ShiftFamily::Temporal => Shift {
                    family,
                    steps: p,
                    offset: [0, 0],
                },
                ShiftFamily::Spatial => Shift {
                    family,
                    steps: 0,
                    offset: [p as i64, 0],
                },
                ShiftFamily::Diagonal => {
                    let y = p as f64 * g.dx();
                    let steps = (y * y / g.dt).round() as usize;
                    Shift {
                        family,
                        steps,
                        offset: [p as i64, 0],
                    }
                }
            };
            let in_range =
                shift.norm(g) <= r && shift.steps <= g.n_t && (shift.offset[0] as usize) <= g.n / 2;
            if !in_range {
                break;
            }
            if family != ShiftFamily::Diagonal || shift.steps >= 1 {
                out.push(shift);
            }
            k += 1;
        }
    }
    out
}

/// Shifts together with the time subsampling used by every estimator.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub shifts: Vec<Shift>,
    /// Only every `time_stride`-th base slice enters the Riemann sums,
    /// weighted by `time_stride · dt`.
    pub time_stride: usize,
}

impl Sweep {
    pub fn new(shifts: Vec<Shift>, time_stride: usize) -> Result<Self> {
        if shifts.is_empty() {
            return Err(Error::Domain("empty shift set".into()));
        }
        if time_stride == 0 {
            return Err(Error::Domain("time stride must be positive".into()));
        }
        Ok(Sweep {
            shifts,
            time_stride,
        })
    }

    pub fn dyadic(g: &Grid, families: &[ShiftFamily], r: f64, time_stride: usize) -> Result<Self> {
        Sweep::new(dyadic_shifts(g, families, r), time_stride)
    }

    /// Base slices of `D_y` for a shift of `steps` time steps.
    pub(crate) fn base_slices(&self, n_slices: usize, steps: usize) -> Result<Vec<usize>> {
        if steps >= n_slices {
            return Err(Error::Domain(format!(
                "time shift of {steps} steps leaves D_y empty"
            )));
        }
        Ok((0..n_slices - steps).step_by(self.time_stride).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeminormKind {
    Besov,
    Modelledness,
    LargeVelocity,
    ZetaTest,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeminormSample {
    pub label: String,
    /// Shift norm `‖y‖` or test-function scale `λ`.
    pub scale: f64,
    pub value: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeminormReport {
    pub kind: SeminormKind,
    pub r: f64,
    pub exponent: f64,
    pub samples: Vec<SeminormSample>,
    /// Log-log slope over samples with positive value; `None` with fewer
    /// than two such samples.
    pub fitted_slope: Option<f64>,
    pub sup_ratio: f64,
}

impl SeminormReport {
    pub(crate) fn build(
        kind: SeminormKind,
        r: f64,
        exponent: f64,
        raw: Vec<(String, f64, f64)>,
    ) -> Self {
        let samples: Vec<SeminormSample> = raw
            .into_iter()
            .map(|(label, scale, value)| SeminormSample {
                label,
                scale,
                value,
                ratio: value / scale.powf(exponent),
            })
            .collect();
        let sup_ratio = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
        let fitted_slope = fit_positive(&samples);
        SeminormReport {
            kind,
            r,
            exponent,
            samples,
            fitted_slope,
            sup_ratio,
        }
    }

    /// Slope restricted to samples whose label starts with `prefix`.
    pub fn slope_of(&self, prefix: &str) -> Option<f64> {
        let s: Vec<SeminormSample> = self
            .samples
            .iter()
            .filter(|s| s.label.starts_with(prefix))
            .cloned()
            .collect();
        fit_positive(&s)
    }
}

fn fit_positive(samples: &[SeminormSample]) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter(|s| s.value > 0.0 && s.scale > 0.0)
        .map(|s| (s.scale, s.value))
        .unzip();
    if x.len() < 2 {
        return None;
    }
    fit_loglog(&x, &y).ok().map(|f| f.slope)
}

pub(crate) fn shift_label(s: &Shift) -> String {
    match s.family {
        ShiftFamily::Temporal => format!("temporal:{}", s.steps),
        ShiftFamily::Spatial => format!("spatial:{}", s.offset[0]),
        ShiftFamily::Diagonal => format!("diagonal:{}", s.offset[0]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_shift_sets() {
        let g = Grid::new(1, 64, 1.0 / 4096.0, 64).unwrap();
        let s = dyadic_shifts(&g, &[ShiftFamily::Spatial], 0.3);
        assert_eq!(
            s.iter().map(|s| s.offset[0]).collect::<Vec<_>>(),
            vec![1, 2, 4, 8, 16]
        );
        let t = dyadic_shifts(&g, &[ShiftFamily::Temporal], 1.0);
        assert_eq!(t.last().unwrap().steps, 64);
        let d = dyadic_shifts(&g, &[ShiftFamily::Diagonal], 1.0);
        for s in &d {
            let y = s.spatial(&g)[0];
            assert!((s.steps as f64 * g.dt - y * y).abs() < 1e-12);
        }
        assert!(Sweep::new(vec![], 1).is_err());
        let sw = Sweep::new(t, 1).unwrap();
        assert!(sw.base_slices(65, 65).is_err());
        assert_eq!(sw.base_slices(65, 64).unwrap(), vec![0]);
    }
}

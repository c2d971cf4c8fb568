//! Gaussian noise on the torus as a truncated random Fourier series.
//!
//! Modes are indexed by integer lattice points `j` with wave vector
//! `k = 2πj`; the cutoff keeps `|j| ≤ K_max`.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::smooth;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{PI, TAU};
use std::sync::OnceLock;

/// Full lattice `{j ∈ ℤ^d : |j| ≤ K}` in lexicographic order.
///
/// The order is symmetric: entry `i` and entry `len-1-i` are negatives, and
/// the zero mode sits in the middle.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub d: usize,
    pub k_max: usize,
    pub modes: Vec<[i32; 2]>,
}

impl Lattice {
    pub fn new(d: usize, k_max: usize) -> Self {
        let k = k_max as i32;
        let k2 = (k_max * k_max) as i32;
        let mut modes = Vec::new();
        for a in -k..=k {
            if d == 1 {
                modes.push([a, 0]);
                continue;
            }
            for b in -k..=k {
                if a * a + b * b <= k2 {
                    modes.push([a, b]);
                }
            }
        }
        Lattice { d, k_max, modes }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn zero_index(&self) -> usize {
        self.modes.len() / 2
    }

    pub fn partner(&self, i: usize) -> usize {
        self.modes.len() - 1 - i
    }

    /// `|k|² = 4π²|j|²`.
    pub fn k2(&self, i: usize) -> f64 {
        let j = self.modes[i];
        4.0 * PI * PI * (j[0] * j[0] + j[1] * j[1]) as f64
    }

    pub fn k_vec(&self, i: usize) -> [f64; 2] {
        let j = self.modes[i];
        [TAU * j[0] as f64, TAU * j[1] as f64]
    }

    pub fn index_of(&self, j: [i32; 2]) -> Option<usize> {
        self.modes.binary_search(&j).ok()
    }

    /// `e_k(x) = exp(i k·x)`.
    pub fn e(&self, i: usize, x: [f64; 2]) -> Complex64 {
        let j = self.modes[i];
        Complex64::from_polar(1.0, TAU * (j[0] as f64 * x[0] + j[1] as f64 * x[1]))
    }

    /// Distinct nonzero `|j|²` values with multiplicities, for radial sums.
    pub fn shells(&self) -> Vec<(f64, usize)> {
        let mut counts = std::collections::BTreeMap::<i64, usize>::new();
        for j in &self.modes {
            let r = (j[0] as i64).pow(2) + (j[1] as i64).pow(2);
            if r > 0 {
                *counts.entry(r).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .map(|(r, c)| (4.0 * PI * PI * r as f64, c))
            .collect()
    }
}

/// Stream id of a lattice point, independent of the cutoff so that
/// realizations at different `K_max` share their common modes.
fn stream_id(j: [i32; 2]) -> u64 {
    let a = (j[0] as i64 + (1 << 20)) as u64;
    let b = (j[1] as i64 + (1 << 20)) as u64;
    (a << 21) | b
}

fn mode_rng(seed: u64, j: [i32; 2]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(j));
    rng
}

/// Even unit-mass time mollifier `ρ_ε(r) = ε⁻¹ρ(r/ε)` supported in `(-ε, ε)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    pub eps: f64,
}

struct MollTables {
    norm: f64,
    // ρ*ρ on [0, 2] at spacing 2/CONV_N
    conv: Vec<f64>,
}

const CONV_N: usize = 4000;

fn moll_tables() -> &'static MollTables {
    static T: OnceLock<MollTables> = OnceLock::new();
    T.get_or_init(|| {
        let norm = crate::quad::trapezoid(-1.0, 1.0, 4000, |r| smooth::bump(r).v);
        let rho = |r: f64| smooth::bump(r).v / norm;
        let conv = (0..=CONV_N)
            .map(|i| {
                let s = 2.0 * i as f64 / CONV_N as f64;
                // (ρ*ρ)(s) = ∫ ρ(r) ρ(s - r) dr over r ∈ (s-1, 1)
                let lo = s - 1.0;
                if lo >= 1.0 {
                    0.0
                } else {
                    crate::quad::trapezoid(lo, 1.0, 2000, |r| rho(r) * rho(s - r))
                }
            })
            .collect();
        MollTables { norm, conv }
    })
}

impl Mollifier {
    pub fn rho(&self, r: f64) -> f64 {
        smooth::bump(r / self.eps).v / (moll_tables().norm * self.eps)
    }

    /// `(ρ_ε * ρ_ε)(r)`, linearly interpolated from a fine table.
    pub fn autoconv(&self, r: f64) -> f64 {
        let s = (r / self.eps).abs();
        if s >= 2.0 {
            return 0.0;
        }
        let tab = &moll_tables().conv;
        let x = s * CONV_N as f64 / 2.0;
        let i = (x as usize).min(CONV_N - 1);
        let f = x - i as f64;
        ((1.0 - f) * tab[i] + f * tab[i + 1]) / self.eps
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    SpaceWhite,
    Coloured,
}

/// Mollified per-mode Brownian paths for coloured noise.
#[derive(Clone, Debug)]
pub struct ColouredPaths {
    pub alpha_prime: f64,
    pub mollifier: Mollifier,
    /// Path grid spacing; nodes `t_i = i·h`, `i = 0..=n_steps`.
    pub h: f64,
    pub n_steps: usize,
    /// `√c_k` per mode.
    pub weights: Vec<f64>,
    /// Raw increments `ΔB_k` on `[-pad, T + pad]`, `pad = pad_steps·h`.
    pub increments: Vec<Vec<Complex64>>,
    pub pad_steps: usize,
    /// `η_k(t_i) = ∫ ρ_ε(t_i - r) dB_k(r)`.
    pub eta: Vec<Vec<Complex64>>,
}

impl ColouredPaths {
    pub fn span(&self) -> f64 {
        self.h * self.n_steps as f64
    }

    /// Unmollified `B_k(t)` at a path node.
    pub fn brownian(&self, mode: usize, step: usize) -> Complex64 {
        let inc = &self.increments[mode];
        inc[self.pad_steps..self.pad_steps + step].iter().sum()
    }

    /// Linear interpolation of `η_k` at time `t`.
    pub fn eta_at(&self, mode: usize, t: f64) -> Complex64 {
        let x = t / self.h;
        let i = (x.floor() as usize).min(self.n_steps.saturating_sub(1));
        let f = x - i as f64;
        let e = &self.eta[mode];
        e[i] * (1.0 - f) + e[i + 1] * f
    }
}

/// A noise realization.
#[derive(Clone, Debug)]
pub struct SpectralNoise {
    pub kind: NoiseKind,
    pub lattice: Lattice,
    pub seed: u64,
    /// `ξ̂_k` for space-white noise (zero for coloured).
    pub coeffs: Vec<Complex64>,
    pub coloured: Option<ColouredPaths>,
}

/// Colour weight `c_k = (1 + |k|)^{-(d - 2 + 2α')}`.
pub fn colour_weight(d: usize, k: f64, alpha_prime: f64) -> f64 {
    (1.0 + k).powf(-(d as f64 - 2.0 + 2.0 * alpha_prime))
}

fn check_dims(d: usize, k_max: usize) -> Result<()> {
    if !(1..=2).contains(&d) {
        return Err(Error::Domain(format!("d must be 1 or 2, got {d}")));
    }
    if k_max < 1 {
        return Err(Error::Domain("cutoff must be at least 1".into()));
    }
    Ok(())
}

/// Space-white noise with unit-variance complex Gaussian coefficients.
pub fn sample_space_white(d: usize, k_max: usize, seed: u64) -> Result<SpectralNoise> {
    check_dims(d, k_max)?;
    let lattice = Lattice::new(d, k_max);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); lattice.len()];
    let z = lattice.zero_index();
    let mut rng = mode_rng(seed, [0, 0]);
    coeffs[z] = Complex64::new(rng.sample(StandardNormal), 0.0);
    for i in z + 1..lattice.len() {
        let mut rng = mode_rng(seed, lattice.modes[i]);
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        let c = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        coeffs[i] = c;
        coeffs[lattice.partner(i)] = c.conj();
    }
    Ok(SpectralNoise {
        kind: NoiseKind::SpaceWhite,
        lattice,
        seed,
        coeffs,
        coloured: None,
    })
}

/// Coloured noise: white in time, weights `c_k` in space, mollified in time.
///
/// `span` is the final time the paths must cover and `h` the path step.
pub fn sample_coloured(
    d: usize,
    k_max: usize,
    alpha_prime: f64,
    mollifier_eps: f64,
    span: f64,
    h: f64,
    seed: u64,
) -> Result<SpectralNoise> {
    check_dims(d, k_max)?;
    if !(alpha_prime > 2.0 / 3.0 && alpha_prime < 1.0) {
        return Err(Error::Domain(format!(
            "alpha' must lie in (2/3,1), got {alpha_prime}"
        )));
    }
    if !(mollifier_eps > 0.0) {
        return Err(Error::Domain("mollifier width must be positive".into()));
    }
    if !(h > 0.0) || h > mollifier_eps / 4.0 {
        return Err(Error::Resolution(format!(
            "path step {h} does not resolve the mollifier (need ≤ {})",
            mollifier_eps / 4.0
        )));
    }
    let lattice = Lattice::new(d, k_max);
    let mollifier = Mollifier { eps: mollifier_eps };
    let n_steps = (span / h).ceil().max(1.0) as usize;
    let pad_steps = (mollifier_eps / h).ceil() as usize + 1;
    let total = n_steps + 2 * pad_steps;
    let sq = h.sqrt();
    let z = lattice.zero_index();
    let mut increments = vec![Vec::new(); lattice.len()];
    for i in z..lattice.len() {
        let mut rng = mode_rng(seed, lattice.modes[i]);
        let inc: Vec<Complex64> = (0..total)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                if i == z {
                    Complex64::new(re * sq, 0.0)
                } else {
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im) * (sq * std::f64::consts::FRAC_1_SQRT_2)
                }
            })
            .collect();
        if i != z {
            increments[lattice.partner(i)] = inc.iter().map(|c| c.conj()).collect();
        }
        increments[i] = inc;
    }
    // discrete mollifier weights against increment midpoints
    let taps: Vec<(i64, f64)> = (-(pad_steps as i64)..pad_steps as i64)
        .map(|m| (m, mollifier.rho((m as f64 + 0.5) * h)))
        .filter(|(_, w)| *w > 0.0)
        .collect();
    let eta = increments
        .iter()
        .map(|inc| {
            (0..=n_steps)
                .map(|i| {
                    // increment index m covers [(m - pad) h, (m - pad + 1) h]
                    taps.iter()
                        .map(|&(off, w)| {
                            // r_m - t_i = (off + 1/2) h  ⇒  ρ(t_i - r_m) = ρ(-(off+1/2)h), ρ even
                            let m = (i as i64 + pad_steps as i64 + off) as usize;
                            inc[m] * w
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let weights = (0..lattice.len())
        .map(|i| colour_weight(d, lattice.k2(i).sqrt(), alpha_prime).sqrt())
        .collect();
    let coeffs = vec![Complex64::new(0.0, 0.0); lattice.len()];
    Ok(SpectralNoise {
        kind: NoiseKind::Coloured,
        lattice,
        seed,
        coeffs,
        coloured: Some(ColouredPaths {
            alpha_prime,
            mollifier,
            h,
            n_steps,
            weights,
            increments,
            pad_steps,
            eta,
        }),
    })
}

impl SpectralNoise {
    /// All coefficients zero.
    pub fn zero(d: usize, k_max: usize) -> Self {
        let lattice = Lattice::new(d, k_max);
        let coeffs = vec![Complex64::new(0.0, 0.0); lattice.len()];
        SpectralNoise {
            kind: NoiseKind::SpaceWhite,
            lattice,
            seed: 0,
            coeffs,
            coloured: None,
        }
    }

    /// Single active pair `±j` with `ξ̂_j = c`, `ξ̂_{-j} = c̄`.
    pub fn single_mode(d: usize, k_max: usize, j: [i32; 2], c: Complex64) -> Result<Self> {
        let mut n = SpectralNoise::zero(d, k_max);
        let i = n
            .lattice
            .index_of(j)
            .ok_or_else(|| Error::Domain(format!("mode {j:?} outside the cutoff")))?;
        n.coeffs[i] = c;
        let p = n.lattice.partner(i);
        n.coeffs[p] = if p == i {
            Complex64::new(c.re, 0.0)
        } else {
            c.conj()
        };
        Ok(n)
    }

    /// Space-white noise from explicit coefficients (e.g. a replayed dump).
    pub fn from_coeffs(lattice: Lattice, coeffs: Vec<Complex64>, seed: u64) -> Result<Self> {
        if coeffs.len() != lattice.len() {
            return Err(Error::Domain(
                "coefficient count does not match the lattice".into(),
            ));
        }
        Ok(SpectralNoise {
            kind: NoiseKind::SpaceWhite,
            lattice,
            seed,
            coeffs,
            coloured: None,
        })
    }

    pub fn d(&self) -> usize {
        self.lattice.d
    }

    pub fn k_max(&self) -> usize {
        self.lattice.k_max
    }

    /// Per-mode coefficient multiplying `e_k(x)` at time `t`.
    pub fn mode_amplitude(&self, i: usize, t: f64) -> Complex64 {
        match &self.coloured {
            None => self.coeffs[i],
            Some(c) => c.eta_at(i, t) * c.weights[i],
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if let Some(c) = &self.coloured {
            if !(0.0..=c.span() + 1e-12).contains(&t) {
                return Err(Error::Domain(format!(
                    "t = {t} outside noise span [0, {}]",
                    c.span()
                )));
            }
        }
        Ok(())
    }

    /// Complex value of the truncated series; the imaginary part is rounding.
    pub fn eval_complex(&self, t: f64, x: [f64; 2]) -> Result<Complex64> {
        self.check_time(t)?;
        Ok((0..self.lattice.len())
            .map(|i| self.mode_amplitude(i, t) * self.lattice.e(i, x))
            .sum())
    }

    pub fn evaluate(&self, t: f64, x: [f64; 2]) -> Result<f64> {
        Ok(self.eval_complex(t, x)?.re)
    }

    /// The realization on the spatial grid at time `t`.
    pub fn on_grid(&self, t: f64, grid: &Grid) -> Result<Vec<f64>> {
        self.check_time(t)?;
        let amps: Vec<Complex64> = (0..self.lattice.len())
            .map(|i| self.mode_amplitude(i, t))
            .collect();
        Ok(synthesize(grid, &self.lattice, &amps))
    }
}

/// `Re Σ_j c_j e^{2πi j·x}` at every grid point, by separable partial sums.
pub fn synthesize(grid: &Grid, lattice: &Lattice, coeffs: &[Complex64]) -> Vec<f64> {
    let n = grid.n;
    let tw: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, TAU * m as f64 / n as f64))
        .collect();
    let phase = |j: i32, i: usize| tw[((j as i64 * i as i64).rem_euclid(n as i64)) as usize];
    if grid.d == 1 {
        return (0..n)
            .map(|i| {
                lattice
                    .modes
                    .iter()
                    .zip(coeffs)
                    .map(|(j, c)| c * phase(j[0], i))
                    .sum::<Complex64>()
                    .re
            })
            .collect();
    }
    // group modes by first index
    let k = lattice.k_max as i32;
    let mut rows: Vec<Vec<(i32, Complex64)>> = vec![Vec::new(); (2 * k + 1) as usize];
    for (j, c) in lattice.modes.iter().zip(coeffs) {
        rows[(j[0] + k) as usize].push((j[1], *c));
    }
    let inner: Vec<Vec<Complex64>> = rows
        .iter()
        .map(|row| {
            (0..n)
                .map(|i2| row.iter().map(|&(j2, c)| c * phase(j2, i2)).sum())
                .collect()
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for i1 in 0..n {
        for i2 in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            for (r, row) in inner.iter().enumerate() {
                s += phase(r as i32 - k, i1) * row[i2];
            }
            out[i1 * n + i2] = s.re;
        }
    }
    out
}

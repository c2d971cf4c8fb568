//! Space-time grid on `[0,T] × T^d`, parabolic geometry and rescaled test
//! functions.

use crate::error::{Error, Result};
use crate::smooth::{self, D2};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

/// Uniform grid: `x_j = j/n` per axis, `t_m = m·dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub dt: f64,
    pub n_t: usize,
}

impl Grid {
    pub fn new(d: usize, n: usize, dt: f64, n_t: usize) -> Result<Self> {
        let g = Grid { d, n, dt, n_t };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.d) {
            return Err(Error::Config(format!("d must be 1 or 2, got {}", self.d)));
        }
        if self.n < 8 || !self.n.is_power_of_two() {
            return Err(Error::Config(format!(
                "n must be a power of two ≥ 8, got {}",
                self.n
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.n_t as f64
    }

    /// Number of spatial points.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `dx^d`.
    pub fn cell(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    pub fn time(&self, m: usize) -> f64 {
        self.dt * m as f64
    }

    /// Multi-index of a flat spatial index (axis 0 varies slowest).
    pub fn unflatten(&self, i: usize) -> [usize; 2] {
        if self.d == 1 {
            [i, 0]
        } else {
            [i / self.n, i % self.n]
        }
    }

    /// Flat index of a (possibly out-of-range) multi-index, wrapped on the torus.
    pub fn flatten_wrapped(&self, j: [i64; 2]) -> usize {
        let n = self.n as i64;
        let a = j[0].rem_euclid(n) as usize;
        if self.d == 1 {
            a
        } else {
            a * self.n + j[1].rem_euclid(n) as usize
        }
    }

    pub fn coords(&self, i: usize) -> [f64; 2] {
        let j = self.unflatten(i);
        let dx = self.dx();
        [
            j[0] as f64 * dx,
            if self.d == 2 { j[1] as f64 * dx } else { 0.0 },
        ]
    }

    /// Evaluate `f(x)` at every spatial grid point.
    pub fn sample(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.coords(i))).collect()
    }
}

/// Space-time point with spatial coordinates canonicalized to `[0,1)`.
/// Unused coordinates (for `d = 1`) are zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub t: f64,
    pub x: [f64; 2],
}

impl SpaceTimePoint {
    pub fn new(t: f64, x: [f64; 2]) -> Self {
        SpaceTimePoint {
            t,
            x: [wrap(x[0]), wrap(x[1])],
        }
    }
}

/// Canonical representative in `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Shortest representative of `a - b` on the circle, in `[-1/2, 1/2)`.
pub fn torus_diff(a: f64, b: f64) -> f64 {
    let r = wrap(a - b);
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// `(|t| + |x|²)^{1/2}` for a displacement, spatial part taken as the
/// shortest torus representative.
pub fn parabolic_norm(p: &SpaceTimePoint) -> f64 {
    let x0 = torus_diff(p.x[0], 0.0);
    let x1 = torus_diff(p.x[1], 0.0);
    (p.t.abs() + x0 * x0 + x1 * x1).sqrt()
}

/// Parabolic norm of a raw displacement (no wrapping).
pub fn parabolic_norm_raw(t: f64, x: &[f64]) -> f64 {
    (t.abs() + x.iter().map(|v| v * v).sum::<f64>()).sqrt()
}

/// Parabolic dilation `S^λ(t, x) = (λ² t, λ x)` of a raw displacement.
pub fn dilate(lambda: f64, t: f64, x: [f64; 2]) -> (f64, [f64; 2]) {
    (lambda * lambda * t, [lambda * x[0], lambda * x[1]])
}

/// The unit test profile
/// `φ(t, x) = c · b(2t) · Π_i b(κ x_i)`, `b(z) = exp(1/(z²-1))`, `κ = √(2d)`.
///
/// The product form keeps the profile smooth in `t` and supported in the
/// parabolic unit ball, and makes Fourier weights separable. `c` caps every
/// partial derivative of order ≤ 2 at 1.
#[derive(Clone, Copy, Debug)]
pub struct Profile {
    pub d: usize,
    pub moments_killed: bool,
}

struct BumpConsts {
    sup: [f64; 3],
    mass: f64,
}

fn bump_consts() -> &'static BumpConsts {
    static C: OnceLock<BumpConsts> = OnceLock::new();
    C.get_or_init(|| {
        let mut sup = [0.0f64; 3];
        let n = 200_000;
        for i in 0..=n {
            let z = -1.0 + 2.0 * i as f64 / n as f64;
            let b = smooth::bump(z);
            sup[0] = sup[0].max(b.v.abs());
            sup[1] = sup[1].max(b.d1.abs());
            sup[2] = sup[2].max(b.d2.abs());
        }
        let mass = crate::quad::trapezoid(-1.0, 1.0, 4000, |z| smooth::bump(z).v);
        BumpConsts { sup, mass }
    })
}

impl Profile {
    pub fn new(d: usize) -> Self {
        Profile {
            d,
            moments_killed: false,
        }
    }

    pub fn killed(d: usize) -> Self {
        Profile {
            d,
            moments_killed: true,
        }
    }

    pub fn kappa(&self) -> f64 {
        (2.0 * self.d as f64).sqrt()
    }

    /// Normalization constant.
    pub fn c(&self) -> f64 {
        let s = bump_consts().sup;
        let k = self.kappa();
        let mut worst = 0.0f64;
        // orders (time a, space α) with a + |α| ≤ 2; mixed spatial pairs only in 2D
        let tf = |a: usize| 2f64.powi(a as i32) * s[a];
        let xf = |m: usize| k.powi(m as i32) * s[m];
        let rest = s[0].powi(self.d as i32 - 1);
        for a in 0..=2 {
            for m in 0..=(2 - a) {
                worst = worst.max(tf(a) * xf(m) * rest);
            }
        }
        if self.d == 2 {
            worst = worst.max(tf(0) * xf(1) * xf(1));
        }
        let c = 1.0 / worst;
        if self.moments_killed {
            // the subtracted copy has derivatives at most 2^d·4 times larger
            c / (1.0 + 4.0 * 2f64.powi(self.d as i32))
        } else {
            c
        }
    }

    /// Time factor `b(2u)`.
    pub fn time_factor(&self, u: f64) -> D2 {
        let b = smooth::bump(2.0 * u);
        D2 {
            v: b.v,
            d1: 2.0 * b.d1,
            d2: 4.0 * b.d2,
        }
    }

    /// One spatial axis factor `b(κ z)`.
    pub fn axis_factor(&self, z: f64) -> f64 {
        smooth::bump(self.kappa() * z).v
    }

    fn space_factor(&self, z: [f64; 2]) -> f64 {
        let f = |s: f64| {
            let mut v = self.axis_factor(s * z[0]);
            if self.d == 2 {
                v *= self.axis_factor(s * z[1]);
            }
            v
        };
        if self.moments_killed {
            f(1.0) - 2f64.powi(self.d as i32) * f(2.0)
        } else {
            f(1.0)
        }
    }

    pub fn eval(&self, t: f64, z: [f64; 2]) -> f64 {
        self.c() * self.time_factor(t).v * self.space_factor(z)
    }

    /// `∫ b(2u) du`.
    pub fn time_mass(&self) -> f64 {
        0.5 * bump_consts().mass
    }

    /// `∫ b(κ z) cos(ω z) dz` along one axis.
    pub fn axis_ft(&self, omega: f64) -> f64 {
        let k = self.kappa();
        let r = 1.0 / k;
        // integrand vanishes to all orders at ±r; trapezoid is spectral
        let panels = 1024 + (omega.abs() * r * 8.0) as usize;
        crate::quad::trapezoid(-r, r, panels, |z| smooth::bump(k * z).v * (omega * z).cos())
    }

    /// Spatial Fourier transform `∫ X(z) e^{iω·z} dz` of the space factor.
    pub fn space_ft(&self, omega: [f64; 2]) -> f64 {
        let full = |s: f64| {
            let mut v = self.axis_ft(omega[0] * s);
            if self.d == 2 {
                v *= self.axis_ft(omega[1] * s);
            }
            v
        };
        if self.moments_killed {
            // 2^d X(2z) transforms to X̂(ω/2)
            full(1.0) - full(0.5)
        } else {
            full(1.0)
        }
    }

    /// `∫ φ`.
    pub fn mass(&self) -> f64 {
        self.c() * self.time_mass() * self.space_ft([0.0, 0.0])
    }
}

/// `φ_x^λ`: a profile rescaled parabolically around `base`.
#[derive(Clone, Copy, Debug)]
pub struct TestFunction {
    pub profile: Profile,
    pub base: SpaceTimePoint,
    pub scale: f64,
}

impl TestFunction {
    pub fn new(profile: Profile, base: SpaceTimePoint, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::Domain(format!(
                "scale must lie in (0,1], got {scale}"
            )));
        }
        Ok(TestFunction {
            profile,
            base,
            scale,
        })
    }

    pub fn d(&self) -> usize {
        self.profile.d
    }
}

/// `λ^{-(d+2)} φ(S^{1/λ}(eval − base))`.
pub fn rescaled_test(tf: &TestFunction, eval: &SpaceTimePoint) -> f64 {
    let l = tf.scale;
    let d = tf.d();
    let u = (eval.t - tf.base.t) / (l * l);
    let z0 = torus_diff(eval.x[0], tf.base.x[0]) / l;
    let z1 = if d == 2 {
        torus_diff(eval.x[1], tf.base.x[1]) / l
    } else {
        0.0
    };
    tf.profile.eval(u, [z0, z1]) / l.powi(d as i32 + 2)
}

//! Smooth cutoff building blocks shared by the kernels, the nonlinearity and
//! the velocity split.

/// Value and first two derivatives of a scalar function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct D2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl D2 {
    pub const fn constant(v: f64) -> Self {
        D2 {
            v,
            d1: 0.0,
            d2: 0.0,
        }
    }
}

/// C^∞ step: 0 for `s <= 0`, 1 for `s >= 1`, built from `exp(-1/s)`.
pub fn step(s: f64) -> D2 {
    if s <= 0.0 {
        return D2::constant(0.0);
    }
    if s >= 1.0 {
        return D2::constant(1.0);
    }
    // S = 1/(1+e^h) with h = 1/s - 1/(1-s).
    let r = 1.0 - s;
    let h = 1.0 / s - 1.0 / r;
    let (p, q) = if h > 0.0 {
        let e = (-h).exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    } else {
        let e = h.exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    };
    let pq = p * q;
    let w = 1.0 / (s * s) + 1.0 / (r * r);
    let dw = -2.0 / (s * s * s) + 2.0 / (r * r * r);
    let d1 = pq * w;
    let d2 = d1 * (q - p) * w + pq * dw;
    D2 { v: p, d1, d2 }
}

/// Low-pass cutoff: 1 on `[0, 1]`, 0 on `[2, ∞)`.
pub fn cutoff_low(r: f64) -> D2 {
    let s = step(r - 1.0);
    D2 {
        v: 1.0 - s.v,
        d1: -s.d1,
        d2: -s.d2,
    }
}

/// High-pass cutoff `1 - cutoff_low`: 0 on `[0, 1]`, 1 on `[2, ∞)`.
pub fn cutoff_high(r: f64) -> D2 {
    step(r - 1.0)
}

/// Dyadic slice `cutoff_low(r) - cutoff_low(2r)`, supported in `(1/2, 2)`.
///
/// The dilates `dyadic(2^q r)` telescope, so they sum to one exactly.
pub fn dyadic(r: f64) -> D2 {
    let a = cutoff_low(r);
    let b = cutoff_low(2.0 * r);
    D2 {
        v: a.v - b.v,
        d1: a.d1 - 2.0 * b.d1,
        d2: a.d2 - 4.0 * b.d2,
    }
}

/// `exp(1/(z²-1))` on `|z| < 1`, zero outside, with two derivatives.
pub fn bump(z: f64) -> D2 {
    let q = z * z - 1.0;
    if q >= 0.0 {
        return D2::constant(0.0);
    }
    let v = (1.0 / q).exp();
    let g1 = -2.0 * z / (q * q);
    let g2 = (6.0 * z * z + 2.0) / (q * q * q);
    D2 {
        v,
        d1: v * g1,
        d2: v * (g1 * g1 + g2),
    }
}

/// Indicator of `[-1/2, 1/2]` with edges smoothed over width `2r`.
///
/// Integer translates sum to one.
pub fn smoothed_box(x: f64, r: f64) -> D2 {
    let w = 2.0 * r;
    let a = step((x + 0.5 + r) / w);
    let b = step((x - 0.5 + r) / w);
    D2 {
        v: a.v - b.v,
        d1: (a.d1 - b.d1) / w,
        d2: (a.d2 - b.d2) / (w * w),
    }
}

//! Acceptance suite: one line per criterion, nonzero exit if a required
//! criterion fails. Criterion 12 is exploratory and only warns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spmlab::analysis::{
    besov_seminorm, gubinelli_nu, k_functional_interpolation, renormalized_measure_identity,
};
use spmlab::analysis::{FieldView, ShiftFamily, Sweep, SyntheticSplitCosts};
use spmlab::grid::{Grid, SpaceTimePoint};
use spmlab::kinetic::{kinetic_residual, less_l1, split_velocities, ProductTest};
use spmlab::model::{
    counterterm_conditions, fit_homogeneity, vanishing_expectation, HomogeneitySetup, Symbol,
    WhiteCounterterms, WhiteModel,
};
use spmlab::noise::{sample_space_white, SpectralNoise};
use spmlab::nonlinearity::{regularize, Diffusion, Nonlinearity, Sigma};
use spmlab::solver::{
    solve, Counterterm, FnForcing, Scheme, SolutionField, SolverConfig, ZeroForcing,
};
use spmlab::stats::fit_loglog;
use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn sci(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:.2e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Option<Duration>,
    advisory: bool,
    run: fn() -> Verdict,
}

fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

fn main() {
    let all = [
        Criterion {
            id: 1,
            name: "regularized diffusivity gluing",
            budget: secs(1),
            advisory: false,
            run: gluing,
        },
        Criterion {
            id: 2,
            name: "counterterm identity",
            budget: secs(1),
            advisory: false,
            run: counterterm_identity,
        },
        Criterion {
            id: 3,
            name: "recentering laws",
            budget: None,
            advisory: false,
            run: recentering,
        },
        Criterion {
            id: 4,
            name: "vanishing expectation",
            budget: secs(120),
            advisory: false,
            run: expectation,
        },
        Criterion {
            id: 5,
            name: "homogeneity fits",
            budget: secs(600),
            advisory: false,
            run: homogeneity,
        },
        Criterion {
            id: 6,
            name: "solver convergence",
            budget: secs(60),
            advisory: false,
            run: convergence,
        },
        Criterion {
            id: 7,
            name: "kinetic residual refinement",
            budget: secs(300),
            advisory: false,
            run: kinetic,
        },
        Criterion {
            id: 8,
            name: "velocity-split scaling",
            budget: secs(60),
            advisory: false,
            run: split_scaling,
        },
        Criterion {
            id: 9,
            name: "renormalized measure identity",
            budget: None,
            advisory: false,
            run: measure_identity,
        },
        Criterion {
            id: 10,
            name: "K-functional synthetic family",
            budget: None,
            advisory: false,
            run: k_functional,
        },
        Criterion {
            id: 11,
            name: "counterterm-condition integrals",
            budget: None,
            advisory: false,
            run: integrals,
        },
        Criterion {
            id: 12,
            name: "Besov ratio under cutoff doubling",
            budget: None,
            advisory: true,
            run: besov_stability,
        },
    ];
    let filter: Option<u8> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for c in all.iter().filter(|c| filter.is_none_or(|f| f == c.id)) {
        let start = Instant::now();
        let v = (c.run)();
        let took = start.elapsed();
        let in_time = c.budget.is_none_or(|b| took <= b);
        let ok = v.pass && in_time;
        let tag = match (ok, c.advisory) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        let budget = if in_time {
            String::new()
        } else {
            format!(", over budget {:?}", c.budget.unwrap())
        };
        println!(
            "criterion {:>2} {tag} [{}] {} ({:.2}s{budget})",
            c.id,
            c.name,
            v.detail,
            took.as_secs_f64()
        );
        if !ok && !c.advisory {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn gluing() -> Verdict {
    let mut worst = 0.0f64;
    let mut dominated = true;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in [1.2, 1.5, 1.9] {
        for eps in [0.1, 0.01] {
            let r = regularize(m, eps).unwrap();
            let Diffusion::Regularized { p0, .. } = r else {
                unreachable!()
            };
            let inner = r.eval(eps);
            // M|v|^{M-1} and its two derivatives, by hand
            let want = [
                m * eps.powf(m - 1.0),
                m * (m - 1.0) * eps.powf(m - 2.0),
                m * (m - 1.0) * (m - 2.0) * eps.powf(m - 3.0),
            ];
            for (got, want) in [inner.v, inner.d1, inner.d2].into_iter().zip(want) {
                worst = worst.max(rel(got, want));
            }
            for _ in 0..10_000 {
                let v: f64 = rng.random_range(-3.0 * eps..3.0 * eps);
                let a = r.a(v);
                dominated &=
                    a >= p0 * (1.0 - 1e-12) && a >= m * v.abs().powf(m - 1.0) * (1.0 - 1e-12);
            }
        }
    }
    verdict(
        worst < 1e-9 && dominated,
        format!("max rel mismatch {worst:.2e}, a_ε ≥ max(p0, a): {dominated}"),
    )
}

/// `t + Σ_j e^{-a|k|²t}(1 - e^{-a|k|²t})/(a|k|²)` over the raw lattice.
fn dumb_minus_cherry_oracle(d: usize, k_max: usize, a: f64, t: f64) -> f64 {
    let k = k_max as i64;
    let mut s = t;
    for j0 in -k..=k {
        for j1 in if d == 2 { -k..=k } else { 0..=0 } {
            let r = j0 * j0 + j1 * j1;
            if r == 0 || r > k * k {
                continue;
            }
            let ak2 = a * 4.0 * PI * PI * r as f64;
            let e = (-ak2 * t).exp();
            s += e * (1.0 - e) / ak2;
        }
    }
    s
}

fn counterterm_identity() -> Verdict {
    let ct = WhiteCounterterms::new(2, 64);
    let mut worst = 0.0f64;
    for i in 0..20 {
        for j in 0..20 {
            let a = 0.1 + 1.9 * i as f64 / 19.0;
            let t = j as f64 / 19.0;
            let lhs = ct.dumb(a, t) - a * ct.cherry(a, t);
            worst = worst.max((lhs - dumb_minus_cherry_oracle(2, 64, a, t)).abs());
        }
    }
    verdict(
        worst < 1e-12,
        format!("max |residual| {worst:.2e} on 20×20 (a,t), K=64"),
    )
}

fn recentering() -> Verdict {
    let noise = sample_space_white(2, 32, 3).unwrap();
    let m = WhiteModel::new(&noise).unwrap();
    let a = 0.7;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pt = || SpaceTimePoint::new(rng.random_range(0.05..1.0), [rng.random(), rng.random()]);
    let pairs: Vec<_> = (0..100).map(|_| (pt(), pt(), pt())).collect();
    let mut worst = [0.0f64; 5];
    for (x, y, z) in &pairs {
        let lolly = |b: &SpaceTimePoint, e: &SpaceTimePoint| m.eval_lolly(a, b, e, 0).unwrap();
        let r = [
            m.eval(Symbol::Xi, a, x, z).unwrap() - m.eval(Symbol::Xi, a, y, z).unwrap(),
            lolly(x, z) - lolly(y, z) - lolly(x, y),
            m.eval_dumb(a, x, z).unwrap() - m.eval_dumb(a, y, z).unwrap() - lolly(x, y) * m.xi(z.x),
            m.eval_cherry(a, x, z).unwrap() - m.eval_cherry(a, y, z).unwrap(),
            {
                let (p, q) = (m.eval_xnoise(x, z), m.eval_xnoise(y, z));
                let xi = m.xi(z.x);
                (p[0] - q[0] - (y.x[0] - x.x[0]) * xi)
                    .abs()
                    .max((p[1] - q[1] - (y.x[1] - x.x[1]) * xi).abs())
            },
        ];
        for (w, r) in worst.iter_mut().zip(r) {
            *w = w.max(r.abs());
        }
    }
    let max = worst.iter().fold(0.0f64, |a, &b| a.max(b));
    verdict(
        max < 1e-12,
        format!("max residual per symbol [{}]", sci(&worst)),
    )
}

fn expectation() -> Verdict {
    let seeds: Vec<u64> = (0..10_000).collect();
    let (dumb, cherry) = vanishing_expectation(2, 32, 1.0, 0.5, [0.3, 0.7], &seeds).unwrap();
    let zd = dumb.mean / dumb.se;
    let zc = cherry.mean / cherry.se;
    verdict(
        zd.abs() <= 3.0 && zc.abs() <= 3.0,
        format!("z-scores dumb {zd:.2}, cherry {zc:.2}"),
    )
}

fn homogeneity() -> Verdict {
    let setup = HomogeneitySetup {
        d: 2,
        k_max: 64,
        a: 1.0,
        base: SpaceTimePoint::new(0.5, [0.5, 0.5]),
        lambdas: (1..=5).map(|k| 2f64.powi(-k)).collect(),
        seeds: (0..200).collect(),
        alpha: 1.0,
        quad_n: 128,
    };
    let xi = fit_homogeneity(Symbol::Xi, &setup).unwrap().fit.slope;
    let lolly = fit_homogeneity(Symbol::Lolly, &setup).unwrap().fit.slope;
    verdict(
        (xi + 1.0).abs() < 0.2 && (lolly - 1.0).abs() < 0.15,
        format!("ξ slope {xi:.3} (want -1 ± 0.2), lolly slope {lolly:.3} (want 1 ± 0.15)"),
    )
}

fn mms_error(n: usize, dt: f64, n_t: usize, scheme: Scheme) -> (f64, Vec<f64>) {
    let nl = Nonlinearity::new(regularize(1.5, 2.0).unwrap(), Sigma::Constant(1.0));
    let exact = |t: f64, x: f64| (-t).exp() * (TAU * x).cos();
    let f = move |t: f64, x: [f64; 2]| {
        let u = exact(t, x[0]);
        let ux = -TAU * (-t).exp() * (TAU * x[0]).sin();
        let a = nl.diffusion.eval(u);
        -u - a.d1 * ux * ux + a.v * TAU * TAU * u
    };
    let g = Grid::new(1, n, dt, n_t).unwrap();
    let u0 = g.sample(|x| exact(0.0, x[0]));
    let cfg = SolverConfig {
        scheme,
        ..Default::default()
    };
    let sol = solve(&u0, &nl, &FnForcing(f), &Counterterm::None, &g, &cfg).unwrap();
    let t = g.final_time();
    let last = sol.slice(n_t).to_vec();
    let err: f64 = last
        .iter()
        .enumerate()
        .map(|(i, v)| (v - exact(t, g.coords(i)[0])).powi(2))
        .sum::<f64>()
        * g.cell();
    (err.sqrt(), last)
}

fn convergence() -> Verdict {
    let errs: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| mms_error(n, 1e-3, 50, Scheme::ExplicitRk2).0)
        .collect();
    let spatial = errs
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .fold(f64::INFINITY, f64::min);

    let t = 0.2;
    let runs: Vec<Vec<f64>> = [10, 20, 40]
        .iter()
        .map(|&k| mms_error(32, t / k as f64, k, Scheme::Imex).1)
        .collect();
    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let temporal = (dist(&runs[0], &runs[1]) / dist(&runs[1], &runs[2])).log2();

    let g = Grid::new(1, 64, 1e-5, 1000).unwrap();
    let heat = Nonlinearity::new(Diffusion::Constant(1.0), Sigma::Zero);
    let u0 = g.sample(|x| (TAU * x[0]).cos());
    let sol = solve(
        &u0,
        &heat,
        &ZeroForcing,
        &Counterterm::None,
        &g,
        &SolverConfig::default(),
    )
    .unwrap();
    let tf = g.final_time();
    let heat_err = (sol
        .slice(g.n_t)
        .iter()
        .enumerate()
        .map(|(i, v)| (v - (-4.0 * PI * PI * tf).exp() * (TAU * g.coords(i)[0]).cos()).powi(2))
        .sum::<f64>()
        * g.cell())
    .sqrt();
    verdict(
        spatial >= 1.7 && temporal >= 0.7 && heat_err < 1e-3,
        format!("spatial order {spatial:.2}, temporal order {temporal:.2}, heat L² error {heat_err:.1e}"),
    )
}

fn noisy_solution(
    n: usize,
    dt: f64,
    n_t: usize,
    k_max: usize,
    seed: u64,
) -> (SolutionField, Nonlinearity, SpectralNoise, Counterterm) {
    let nl = Nonlinearity::standard(1.5, 0.01, 2.0).unwrap();
    let noise = sample_space_white(1, k_max, seed).unwrap();
    let ct = Counterterm::for_noise(&noise, nl.diffusion.floor(), nl.a(4.0));
    let g = Grid::new(1, n, dt, n_t).unwrap();
    let u0 = g.sample(|x| 1.0 + 0.3 * (TAU * x[0]).cos());
    let sol = solve(&u0, &nl, &noise, &ct, &g, &SolverConfig::default()).unwrap();
    (sol, nl, noise, ct)
}

fn kinetic() -> Verdict {
    let test = ProductTest {
        amp: 1.0,
        t_center: 0.005,
        t_radius: 0.004,
        v_center: 1.0,
        v_radius: 0.8,
    };
    let r: Vec<f64> = (0..3)
        .map(|l| {
            let f = 1usize << l;
            let (sol, _, noise, ct) =
                noisy_solution(32 * f, 5e-5 / (f * f) as f64, 200 * f * f, 3, 7);
            kinetic_residual(&sol, &noise, &ct, &test)
                .unwrap()
                .residual
                .abs()
        })
        .collect();
    let factors = [r[0] / r[1], r[1] / r[2]];
    verdict(
        factors.iter().all(|&q| q >= 1.5),
        format!(
            "residuals [{}], factors {:.2} and {:.2}",
            sci(&r),
            factors[0],
            factors[1]
        ),
    )
}

fn split_slope(u: &[f64], nl: &Nonlinearity, g: &Grid) -> f64 {
    let (x, y): (Vec<f64>, Vec<f64>) = (1..=8)
        .map(|k| {
            let delta = 2f64.powi(-k);
            (delta, less_l1(&split_velocities(u, nl, delta).unwrap(), g))
        })
        .unzip();
    fit_loglog(&x, &y).unwrap().slope
}

fn split_scaling() -> Verdict {
    let mut worst = 0.0f64;
    let mut slopes = Vec::new();
    for m in [1.2, 1.5] {
        let want = 1.0 / (m - 1.0);
        let nl = Nonlinearity::new(regularize(m, 1e-16).unwrap(), Sigma::Zero);
        let g = Grid::new(1, 64, 1e-5, 200).unwrap();
        let u0 = g.sample(|x| 1.0 + 0.3 * (TAU * x[0]).cos());
        let sol = solve(
            &u0,
            &nl,
            &ZeroForcing,
            &Counterterm::None,
            &g,
            &SolverConfig::default(),
        )
        .unwrap();
        let solved = split_slope(sol.slice(g.n_t), &nl, &g);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let synth: Vec<f64> = (0..g.len())
            .map(|_| rng.random_range(0.5..2.0) * if rng.random() { 1.0 } else { -1.0 })
            .collect();
        let synthetic = split_slope(&synth, &nl, &g);
        worst = worst
            .max((solved - want).abs())
            .max((synthetic - want).abs());
        slopes.push(format!(
            "M={m}: solved {solved:.3}, synthetic {synthetic:.3} (want {want:.3})"
        ));
    }
    verdict(worst < 0.1, slopes.join("; "))
}

fn measure_identity() -> Verdict {
    let (sol, nl, noise, _) = noisy_solution(64, 1e-5, 200, 4, 9);
    let model = WhiteModel::new(&noise).unwrap();
    let view = sol.view();
    let nu = gubinelli_nu(view, &nl, Some(&model));
    let id = renormalized_measure_identity(view, &nl, Some(&model), &nu);
    verdict(
        id.max_abs < 1e-10,
        format!(
            "max residual {:.2e} (largest term {:.2e})",
            id.max_abs, id.max_term
        ),
    )
}

fn k_functional() -> Verdict {
    let alpha = 0.9;
    let eps = 0.01;
    let lambdas: Vec<f64> = (4..=40).map(|k| 2f64.powi(-k)).collect();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for m in [1.2, 1.5] {
        let rep = k_functional_interpolation(
            &SyntheticSplitCosts { m, alpha, eps },
            m,
            alpha,
            &lambdas,
            eps,
            80,
        )
        .unwrap();
        let want_d = 2.0 * alpha * (m - 1.0) / (1.0 + (m - 1.0) * alpha);
        let want_k = 2.0 * alpha / (1.0 + (m - 1.0) * alpha);
        let got_d = rep.delta_fit.map_or(f64::NAN, |f| f.slope);
        let got_k = rep.k_fit.slope;
        worst = worst
            .max((got_d - want_d).abs())
            .max((got_k - want_k).abs());
        parts.push(format!(
            "M={m}: δ slope {got_d:.3}/{want_d:.3}, K slope {got_k:.3}/{want_k:.3}"
        ));
    }
    verdict(worst < 0.05, parts.join("; "))
}

fn integrals() -> Verdict {
    let nl = Nonlinearity::standard(1.5, 0.01, 2.0).unwrap();
    let c: Vec<_> = [32, 64, 128]
        .iter()
        .map(|&k| counterterm_conditions(&nl, 2, 1.0, k))
        .collect();
    let change =
        |f: fn(&spmlab::model::CountertermIntegrals) -> f64, i: usize| rel(f(&c[i + 1]), f(&c[i]));
    let ti = |c: &spmlab::model::CountertermIntegrals| c.time_independent;
    let dc = |c: &spmlab::model::CountertermIntegrals| c.dumb_cherry;
    let finite = c.iter().all(|c| c.finite);
    let (ti0, ti1, dc0, dc1) = (change(ti, 0), change(ti, 1), change(dc, 0), change(dc, 1));
    let pass = finite && ti1 < 0.05 && dc1 < 0.05 && ti1 <= ti0 && dc1 <= dc0;
    verdict(
        pass,
        format!(
            "relative change 32→64→128: time-independent {ti0:.2e}→{ti1:.2e}, dumb-cherry {dc0:.2e}→{dc1:.2e}"
        ),
    )
}

fn besov_stability() -> Verdict {
    let nl = Nonlinearity::standard(1.5, 0.01, 2.0).unwrap();
    let g = Grid::new(2, 128, 1e-5, 200).unwrap();
    let sweep =
        Sweep::dyadic(&g, &[ShiftFamily::Spatial, ShiftFamily::Temporal], 0.25, 10).unwrap();
    let field = |k_max: usize| {
        let noise = sample_space_white(2, k_max, 21).unwrap();
        let ct = Counterterm::for_noise(&noise, nl.diffusion.floor(), nl.a(4.0));
        let u0 = g.sample(|x| 1.0 + 0.3 * (TAU * x[0]).cos() * (TAU * x[1]).sin());
        solve(&u0, &nl, &noise, &ct, &g, &SolverConfig::default())
            .unwrap()
            .values
    };
    let coarse = field(32);
    let fine = field(64);
    fn view(g: Grid, v: &[f64]) -> FieldView<'_> {
        FieldView::new(g, v).unwrap()
    }
    let alpha_fit = besov_seminorm(view(g, &coarse), 1.0, 0.25, &sweep)
        .unwrap()
        .fitted_slope
        .unwrap_or(f64::NAN);
    let alpha = 0.9 * alpha_fit;
    let r32 = besov_seminorm(view(g, &coarse), alpha, 0.25, &sweep)
        .unwrap()
        .sup_ratio;
    let r64 = besov_seminorm(view(g, &fine), alpha, 0.25, &sweep)
        .unwrap()
        .sup_ratio;
    let change = rel(r64, r32);
    verdict(
        change < 0.5,
        format!(
            "α_fit {alpha_fit:.3}, sup ratio {r32:.3e} → {r64:.3e}, change {:.1}%",
            100.0 * change
        ),
    )
}

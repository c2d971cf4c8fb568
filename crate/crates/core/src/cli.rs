//! Command-line experiment runner.

use crate::analysis::{
    besov_seminorm, energy_report, gubinelli_nu, k_functional_interpolation,
    large_velocity_seminorm, modelledness_seminorm, renormalized_measure_identity,
    zeta_test_seminorm, FieldSplitCosts, FieldView, SeminormReport, Sweep, SyntheticSplitCosts,
};
use crate::config::{ExperimentConfig, NoiseChoice};
use crate::error::{Error, Result};
use crate::grid::{Grid, SpaceTimePoint};
use crate::io;
use crate::kinetic::{less_l1, split_velocities, KineticAccumulator, ProductTest};
use crate::model::{
    counterterm_conditions, fit_homogeneity, vanishing_expectation, HomogeneitySetup, Symbol,
    WhiteModel,
};
use crate::noise::{NoiseKind, SpectralNoise};
use crate::nonlinearity::{regularization_constants, validate_assumptions, Nonlinearity};
use crate::solver::{mass_and_energy_trace, solve, solve_observed, NoiseId, SolutionField};
use crate::stats::fit_loglog;
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "spmlab",
    version,
    about = "Renormalized stochastic porous-medium laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment TOML file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir`; default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Replaces the top-level `seed` of the config (and its hash).
    #[arg(long)]
    pub seed_override: Option<u64>,
    /// Trajectory slab: written by `solve`, read by the analysis commands.
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Recentering, counterterm identity, vanishing expectations, homogeneity fits.
    ModelCheck(Common),
    /// Integrate the equation and write traces and the trajectory.
    Solve(Common),
    /// Kinetic residual under mesh refinement.
    KineticCheck(Common),
    /// Scaling of the small-velocity part with the threshold.
    Split(Common),
    /// Besov, modelledness, ζ-test and large-velocity seminorms.
    Seminorms(Common),
    /// Energy ledger.
    Energy(Common),
    /// K-functional table on the trajectory and the synthetic family.
    Interpolate(Common),
    /// Hypotheses on the nonlinearity and counterterm-condition integrals.
    Validate(Common),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ModelCheck(_) => "model-check",
            Command::Solve(_) => "solve",
            Command::KineticCheck(_) => "kinetic-check",
            Command::Split(_) => "split",
            Command::Seminorms(_) => "seminorms",
            Command::Energy(_) => "energy",
            Command::Interpolate(_) => "interpolate",
            Command::Validate(_) => "validate",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::ModelCheck(c)
            | Command::Solve(c)
            | Command::KineticCheck(c)
            | Command::Split(c)
            | Command::Seminorms(c)
            | Command::Energy(c)
            | Command::Interpolate(c)
            | Command::Validate(c) => c,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_FAILURE,
    }
}

/// Parse arguments, run, and map the outcome to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli.command) {
        Ok(dir) => {
            println!("{}: artifacts in {}", cli.command.name(), dir.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Run one subcommand; returns the output directory.
pub fn run(cmd: &Command) -> Result<PathBuf> {
    let c = cmd.common();
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(s) = c.seed_override {
        cfg.seed = s;
    }
    let out = c
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    let ctx = Ctx {
        hash: cfg.hash(),
        cfg,
        out: out.clone(),
        trajectory: c.trajectory.clone(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match cmd {
        Command::ModelCheck(_) => model_check(&ctx),
        Command::Solve(_) => run_solve(&ctx),
        Command::KineticCheck(_) => kinetic_check(&ctx),
        Command::Split(_) => split(&ctx),
        Command::Seminorms(_) => seminorms(&ctx),
        Command::Energy(_) => energy(&ctx),
        Command::Interpolate(_) => interpolate(&ctx),
        Command::Validate(_) => validate(&ctx),
    })?;
    Ok(out)
}

struct Ctx {
    cfg: ExperimentConfig,
    hash: String,
    out: PathBuf,
    trajectory: Option<PathBuf>,
}

impl Ctx {
    fn emit<R: Serialize, S: Serialize>(&self, name: &str, rows: &[R], summary: &S) -> Result<()> {
        io::write_csv(&self.out.join(format!("{name}.csv")), &self.hash, rows)?;
        io::write_summary(
            &self.out.join(format!("{name}.json")),
            name,
            &self.hash,
            self.cfg.seed,
            summary,
        )
    }

    fn nl(&self) -> Result<Nonlinearity> {
        self.cfg.nonlinearity.build()
    }

    fn noise(&self, seed: u64) -> Result<SpectralNoise> {
        self.cfg
            .noise
            .build(self.cfg.grid.d, self.cfg.grid.final_time(), seed)
    }

    fn u_bound(&self) -> f64 {
        self.cfg.initial.mean.abs() + self.cfg.initial.amplitude.abs() + 1.0
    }

    fn solve_with(&self, grid: &Grid, noise: &SpectralNoise) -> Result<SolutionField> {
        let nl = self.nl()?;
        let ct = self.cfg.noise.counterterm(noise, &nl, self.u_bound());
        let u0 = self.cfg.initial.sample(grid);
        let mut sol = solve(&u0, &nl, noise, &ct, grid, &self.cfg.solver.build())?;
        sol.noise = Some(noise_id(&self.cfg, noise));
        Ok(sol)
    }

    /// Trajectory from `--trajectory` if the file exists, else a fresh solve.
    fn field(&self, noise: &SpectralNoise) -> Result<(Grid, Vec<f64>)> {
        if let Some(p) = self.trajectory.as_ref().filter(|p| p.exists()) {
            let t = io::read_trajectory(p)?;
            if t.hash != self.hash {
                return Err(Error::Config(format!(
                    "{} was produced by a different configuration ({} ≠ {})",
                    p.display(),
                    t.hash,
                    self.hash
                )));
            }
            return Ok((t.grid, t.values));
        }
        let sol = self.solve_with(&self.cfg.grid, noise)?;
        Ok((sol.grid, sol.values))
    }

    fn model<'a>(&self, noise: &'a SpectralNoise) -> Option<WhiteModel<'a>> {
        (noise.kind == NoiseKind::SpaceWhite)
            .then(|| WhiteModel::new(noise).ok())
            .flatten()
    }

    fn sweep(&self, g: &Grid) -> Result<Sweep> {
        let a = &self.cfg.analysis;
        Sweep::dyadic(g, &a.families, a.r, a.time_stride)
    }

    fn lambdas(&self, exps: &[i32]) -> Vec<f64> {
        exps.iter().map(|&k| 2f64.powi(-k)).collect()
    }
}

fn noise_id(cfg: &ExperimentConfig, noise: &SpectralNoise) -> NoiseId {
    let kind = match cfg.noise.kind {
        NoiseChoice::SpaceWhite => "space_white",
        NoiseChoice::Coloured => "coloured",
        NoiseChoice::Zero => "zero",
    };
    NoiseId {
        kind: kind.into(),
        seed: noise.seed,
        k_max: noise.k_max(),
    }
}

#[derive(Serialize)]
struct CheckRow {
    check: String,
    symbol: String,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn check(check: &str, symbol: &str, value: f64, tolerance: f64, pass: bool) -> CheckRow {
    CheckRow {
        check: check.into(),
        symbol: symbol.into(),
        value,
        tolerance,
        pass,
    }
}

fn model_check(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let d = cfg.grid.d;
    let k = cfg.noise.k_max;
    let zero = cfg.noise.kind == NoiseChoice::Zero;
    let noise = if zero {
        SpectralNoise::zero(d, k)
    } else {
        crate::noise::sample_space_white(d, k, cfg.seed)?
    };
    let model = WhiteModel::new(&noise)?;
    let a = cfg.model.a;
    let mut rows = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let point = |rng: &mut ChaCha8Rng| {
        let x = [
            rng.random::<f64>(),
            if d == 2 { rng.random::<f64>() } else { 0.0 },
        ];
        SpaceTimePoint::new(rng.random::<f64>(), x)
    };
    let triples: Vec<_> = (0..100)
        .map(|_| (point(&mut rng), point(&mut rng), point(&mut rng)))
        .collect();
    for tau in Symbol::ALL {
        let mut worst = 0.0f64;
        for (x, y, z) in &triples {
            worst = worst.max(model.recenter_residual(tau, a, x, y, std::slice::from_ref(z))?);
        }
        rows.push(check(
            "recentering",
            tau.name(),
            worst,
            1e-12,
            worst < 1e-12,
        ));
    }

    let mut worst = 0.0f64;
    let ct = &model.counterterms;
    for i in 0..20 {
        for j in 0..20 {
            let a = 0.1 + 1.9 * i as f64 / 19.0;
            let t = j as f64 / 19.0;
            worst =
                worst.max((ct.dumb(a, t) - a * ct.cherry(a, t) - ct.dumb_minus_cherry(a, t)).abs());
        }
    }
    rows.push(check(
        "counterterm_identity",
        "dumb-cherry",
        worst,
        1e-12,
        worst < 1e-12,
    ));

    let s = cfg.model.s;
    let (dumb, cherry) = if zero {
        Default::default()
    } else {
        let seeds: Vec<u64> = (0..cfg.model.samples as u64)
            .map(|i| cfg.seed.wrapping_add(i))
            .collect();
        let (dm, cm) = vanishing_expectation(d, k, a, s, [0.3, 0.6], &seeds)?;
        ((dm.mean, dm.se), (cm.mean, cm.se))
    };
    for (name, (mean, se)) in [("dumb", dumb), ("cherry", cherry)] {
        rows.push(check(
            "vanishing_expectation",
            name,
            mean,
            3.0 * se,
            mean.abs() <= 3.0 * se,
        ));
    }

    let mut fits = Vec::new();
    if !zero {
        let setup = HomogeneitySetup {
            d,
            k_max: cfg.model.k_max.unwrap_or(k),
            a,
            base: SpaceTimePoint::new(s, [0.5, 0.5]),
            lambdas: ctx.lambdas(&cfg.model.lambda_exponents),
            seeds: (0..cfg.model.samples as u64)
                .map(|i| cfg.seed.wrapping_add(i))
                .collect(),
            // space-white noise scales like a field of regularity 2 - d/2
            alpha: 2.0 - d as f64 / 2.0,
            quad_n: 256,
        };
        for (tau, tol) in [(Symbol::Xi, 0.2), (Symbol::Lolly, 0.15)] {
            let f = fit_homogeneity(tau, &setup)?;
            rows.push(check(
                "homogeneity",
                tau.name(),
                f.fit.slope,
                tol,
                (f.fit.slope - f.predicted).abs() < tol,
            ));
            fits.push(f);
        }
    }
    let all_pass = rows.iter().all(|r| r.pass);
    ctx.emit(
        "model-check",
        &rows,
        &json!({ "all_pass": all_pass, "checks": rows, "homogeneity": fits }),
    )
}

#[derive(Serialize)]
struct TraceCsv {
    member: usize,
    seed: u64,
    t: f64,
    mass: f64,
    lp: f64,
    dissipation: f64,
}

fn run_solve(ctx: &Ctx) -> Result<()> {
    use rayon::prelude::*;
    let cfg = &ctx.cfg;
    let members: Vec<u64> = (0..cfg.ensemble as u64)
        .map(|i| cfg.seed.wrapping_add(i))
        .collect();
    let sols = members
        .par_iter()
        .map(|&seed| {
            let noise = ctx.noise(seed)?;
            let sol = ctx.solve_with(&cfg.grid, &noise)?;
            Ok((noise, sol))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (member, (noise, sol)) in sols.iter().enumerate() {
        let tr = mass_and_energy_trace(sol, cfg.analysis.p);
        rows.extend(tr.iter().map(|r| TraceCsv {
            member,
            seed: noise.seed,
            t: r.t,
            mass: r.mass,
            lp: r.lp,
            dissipation: r.dissipation,
        }));
        summaries.push(json!({
            "member": member,
            "noise": sol.noise,
            "substeps": sol.substeps.iter().map(|&s| s as u64).sum::<u64>(),
            "max_abs_u": sol.values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            "mass_drift": tr.last().unwrap().mass - tr[0].mass,
        }));
    }
    let (noise0, sol0) = &sols[0];
    let path = ctx
        .trajectory
        .clone()
        .unwrap_or_else(|| ctx.out.join("trajectory.bin"));
    io::write_trajectory(&path, &sol0.grid, &sol0.values, &ctx.hash)?;
    if noise0.kind == NoiseKind::SpaceWhite {
        io::dump_noise(&ctx.out.join("noise.csv"), noise0, &ctx.hash)?;
    }
    ctx.emit(
        "solve",
        &rows,
        &json!({ "scheme": sol0.scheme, "trajectory": path.strip_prefix(&ctx.out).unwrap_or(&path), "members": summaries }),
    )
}

#[derive(Serialize)]
struct KineticRow {
    n: usize,
    dt: f64,
    lhs: f64,
    forcing: f64,
    measure: f64,
    residual: f64,
    ratio: f64,
}

fn kinetic_check(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let noise = ctx.noise(cfg.seed)?;
    let nl = ctx.nl()?;
    let ct = cfg.noise.counterterm(&noise, &nl, ctx.u_bound());
    let t_final = cfg.grid.final_time();
    let test = ProductTest {
        amp: 1.0,
        t_center: 0.5 * t_final,
        t_radius: 0.4 * t_final,
        v_center: cfg.initial.mean,
        v_radius: 2.0 * cfg.initial.amplitude.abs() + 0.2,
    };
    let mut rows: Vec<KineticRow> = Vec::new();
    for level in 0..3 {
        let f = 1usize << level;
        let g = Grid::new(
            cfg.grid.d,
            cfg.grid.n * f,
            cfg.grid.dt / (f * f) as f64,
            cfg.grid.n_t * f * f,
        )?;
        let u0 = cfg.initial.sample(&g);
        let mut acc = KineticAccumulator::new(g, nl, &noise, &ct, &test)?;
        solve_observed(
            &u0,
            &nl,
            &noise,
            &ct,
            &g,
            &cfg.solver.build(),
            &mut |m, u| acc.add_slice(m, u),
        )?;
        let r = acc.finish();
        let ratio = rows
            .last()
            .map_or(f64::NAN, |p| p.residual.abs() / r.residual.abs());
        rows.push(KineticRow {
            n: g.n,
            dt: g.dt,
            lhs: r.lhs,
            forcing: r.forcing,
            measure: r.measure,
            residual: r.residual,
            ratio,
        });
    }
    let min_ratio = rows[1..]
        .iter()
        .map(|r| r.ratio)
        .fold(f64::INFINITY, f64::min);
    ctx.emit(
        "kinetic-check",
        &rows,
        &json!({ "min_ratio": min_ratio, "pass": min_ratio >= 1.5, "test": test }),
    )
}

#[derive(Serialize)]
struct SplitRow {
    delta: f64,
    less_l1: f64,
    partition_error: f64,
}

fn split(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let noise = ctx.noise(cfg.seed)?;
    let nl = ctx.nl()?;
    let (g, vals) = ctx.field(&noise)?;
    let last = FieldView::new(g, &vals)?;
    let u = last.slice(last.n_slices() - 1);
    let mut rows = Vec::new();
    for k in 1..=cfg.analysis.delta_depth as i32 {
        let delta = 2f64.powi(-k);
        let s = split_velocities(u, &nl, delta)?;
        let err = (0..u.len())
            .map(|i| (u[i] - s.u_less[i] - s.u_greater[i]).abs())
            .fold(0.0, f64::max);
        rows.push(SplitRow {
            delta,
            less_l1: less_l1(&s, &g),
            partition_error: err,
        });
    }
    // Below a(eps_reg) the quartic core, not the porous law, sets u^<.
    let cut = nl.a(cfg.nonlinearity.eps_reg);
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.delta > cut && r.less_l1 > 0.0)
        .map(|r| (r.delta, r.less_l1))
        .unzip();
    let fit = if x.len() >= 2 {
        Some(fit_loglog(&x, &y)?)
    } else {
        None
    };
    let predicted = 1.0 / (cfg.nonlinearity.m - 1.0);
    ctx.emit("split", &rows, &json!({ "fit": fit, "fit_points": x.len(), "delta_floor": cut, "slope": fit.map(|f| f.slope), "predicted": predicted }))
}

#[derive(Serialize)]
struct SeminormRow {
    kind: String,
    label: String,
    scale: f64,
    value: f64,
    ratio: f64,
}

fn seminorm_rows(rows: &mut Vec<SeminormRow>, name: &str, r: &SeminormReport) {
    rows.extend(r.samples.iter().map(|s| SeminormRow {
        kind: name.into(),
        label: s.label.clone(),
        scale: s.scale,
        value: s.value,
        ratio: s.ratio,
    }));
}

fn seminorms(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let a = &cfg.analysis;
    let noise = ctx.noise(cfg.seed)?;
    let nl = ctx.nl()?;
    let model = ctx.model(&noise);
    let (g, vals) = ctx.field(&noise)?;
    let view = FieldView::new(g, &vals)?;
    let nu = gubinelli_nu(view, &nl, model.as_ref());
    let sweep = ctx.sweep(&g)?;
    let besov = besov_seminorm(view, a.alpha, a.r, &sweep)?;
    let modl = modelledness_seminorm(view, &nl, model.as_ref(), &nu, a.beta, a.r, &sweep)?;
    let large = large_velocity_seminorm(
        view,
        &nl,
        model.as_ref(),
        &nu,
        a.delta,
        a.alpha,
        a.r,
        &sweep,
    )?;
    let lambdas = ctx.lambdas(&a.lambda_exponents);
    let zeta = zeta_test_seminorm(
        view,
        &nl,
        model.as_ref(),
        &nu,
        a.gamma,
        a.r,
        &lambdas,
        &sweep,
    )?;
    let identity = renormalized_measure_identity(view, &nl, model.as_ref(), &nu);
    let mut rows = Vec::new();
    seminorm_rows(&mut rows, "besov", &besov);
    seminorm_rows(&mut rows, "modelledness", &modl);
    seminorm_rows(&mut rows, "large_velocity", &large);
    seminorm_rows(&mut rows, "zeta_time", &zeta.time_term);
    seminorm_rows(&mut rows, "zeta_pairing", &zeta.pairing_term);
    let brief = |r: &SeminormReport| json!({ "exponent": r.exponent, "fitted_slope": r.fitted_slope, "sup_ratio": r.sup_ratio });
    ctx.emit(
        "seminorms",
        &rows,
        &json!({
            "besov": brief(&besov),
            "modelledness": brief(&modl),
            "large_velocity": brief(&large),
            "zeta": { "time": brief(&zeta.time_term), "pairing": brief(&zeta.pairing_term), "total": zeta.total },
            "measure_identity": identity,
            "model": model.is_some(),
        }),
    )
}

fn energy(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let noise = ctx.noise(cfg.seed)?;
    let nl = ctx.nl()?;
    let model = ctx.model(&noise);
    let (g, vals) = ctx.field(&noise)?;
    let view = FieldView::new(g, &vals)?;
    let nu = gubinelli_nu(view, &nl, model.as_ref());
    let ledger = energy_report(view, &nl, &noise, model.as_ref(), &nu, cfg.analysis.p)?;
    ctx.emit("energy", &[ledger], &ledger)
}

#[derive(Serialize)]
struct KRow {
    source: &'static str,
    lambda: f64,
    k: f64,
    argmin_delta: f64,
}

fn interpolate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let a = &cfg.analysis;
    let noise = ctx.noise(cfg.seed)?;
    let nl = ctx.nl()?;
    let model = ctx.model(&noise);
    let (g, vals) = ctx.field(&noise)?;
    let view = FieldView::new(g, &vals)?;
    let nu = gubinelli_nu(view, &nl, model.as_ref());
    let sweep = ctx.sweep(&g)?;
    let m = cfg.nonlinearity.m;
    let lambdas = ctx.lambdas(&a.lambda_exponents);
    let field_costs = FieldSplitCosts::new(view, &nl, model.as_ref(), &nu, a.alpha, a.r, &sweep)?;
    let field = k_functional_interpolation(
        &field_costs,
        m,
        a.alpha,
        &lambdas,
        cfg.model.epsilon,
        a.delta_depth,
    )?;
    let synth_costs = SyntheticSplitCosts {
        m,
        alpha: a.alpha,
        eps: cfg.model.epsilon,
    };
    let synth_l: Vec<f64> = (4..=40).map(|k| 2f64.powi(-k)).collect();
    let synth =
        k_functional_interpolation(&synth_costs, m, a.alpha, &synth_l, cfg.model.epsilon, 80)?;
    let mut rows = Vec::new();
    for (source, r) in [("field", &field), ("synthetic", &synth)] {
        for i in 0..r.lambdas.len() {
            rows.push(KRow {
                source,
                lambda: r.lambdas[i],
                k: r.k_values[i],
                argmin_delta: r.argmin_delta[i],
            });
        }
    }
    ctx.emit(
        "interpolate",
        &rows,
        &json!({ "field": field, "synthetic": synth }),
    )
}

#[derive(Serialize)]
struct KeyValue {
    key: String,
    value: f64,
}

fn validate(ctx: &Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let nl = ctx.nl()?;
    let report = validate_assumptions(&nl, cfg.model.alpha)?;
    let t = cfg.grid.final_time();
    let k = cfg.noise.k_max;
    let ints = [
        counterterm_conditions(&nl, cfg.grid.d, t, k),
        counterterm_conditions(&nl, cfg.grid.d, t, 2 * k),
    ];
    let u0 = cfg.initial.sample(&cfg.grid);
    let amax = u0.iter().map(|&v| nl.a(v)).fold(0.0, f64::max);
    let dt_limit = cfg.solver.cfl * cfg.grid.dx().powi(2) / amax;
    let reg = regularization_constants(&nl.diffusion);
    let mut rows = vec![
        KeyValue {
            key: "m_bound".into(),
            value: report.m_bound,
        },
        KeyValue {
            key: "sup_a_lower".into(),
            value: report.sup_a_lower,
        },
        KeyValue {
            key: "sup_a1".into(),
            value: report.sup_a1,
        },
        KeyValue {
            key: "sup_a2".into(),
            value: report.sup_a2,
        },
        KeyValue {
            key: "a_floor".into(),
            value: report.a_floor,
        },
        KeyValue {
            key: "initial_dt_limit".into(),
            value: dt_limit,
        },
    ];
    for (i, s) in report.sup_sigma.iter().enumerate() {
        rows.push(KeyValue {
            key: format!("sup_sigma_{i}"),
            value: *s,
        });
    }
    for c in &ints {
        rows.push(KeyValue {
            key: format!("time_independent_k{}", c.k_max),
            value: c.time_independent,
        });
        rows.push(KeyValue {
            key: format!("dumb_cherry_k{}", c.k_max),
            value: c.dumb_cherry,
        });
    }
    let rel = |a: f64, b: f64| {
        if a == 0.0 && b == 0.0 {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    };
    let stable = rel(ints[0].time_independent, ints[1].time_independent) < 0.05
        && rel(ints[0].dumb_cherry, ints[1].dumb_cherry) < 0.05;
    ctx.emit(
        "validate",
        &rows,
        &json!({
            "assumptions": report,
            "all_ok": report.all_ok(),
            "counterterm_integrals": ints,
            "counterterm_stable": stable,
            "regularization_constants": reg,
            "explicit_substeps_needed": (cfg.grid.dt / dt_limit).log2().ceil().max(0.0),
        }),
    )
}

/// Path helper for tests and callers that want a subcommand's artifacts.
pub fn artifact(out: &Path, subcommand: &str, ext: &str) -> PathBuf {
    out.join(format!("{subcommand}.{ext}"))
}

//! Experiment configuration: one TOML file, unknown keys rejected.

use crate::analysis::ShiftFamily;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::noise::{sample_coloured, sample_space_white, SpectralNoise};
use crate::nonlinearity::{make_sigma, regularize, Diffusion, Nonlinearity, Sigma};
use crate::solver::{Counterterm, Scheme, SolverConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "defaults::ensemble")]
    pub ensemble: usize,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub grid: Grid,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

mod defaults {
    pub fn ensemble() -> usize {
        1
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SigmaChoice {
    /// `v^N` times a plateau cutoff of radius `c_supp`.
    Compact,
    Constant,
    Zero,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearityConfig {
    pub m: f64,
    pub eps_reg: f64,
    /// Vanishing order of `σ`; defaults to `ceil(M + 1)`.
    pub n: Option<u32>,
    pub c_supp: f64,
    pub sigma: SigmaChoice,
    /// Value of `σ` when `sigma = "constant"`.
    pub sigma_value: f64,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        NonlinearityConfig {
            m: 1.5,
            eps_reg: 0.01,
            n: None,
            c_supp: 2.0,
            sigma: SigmaChoice::Compact,
            sigma_value: 1.0,
        }
    }
}

impl NonlinearityConfig {
    pub fn build(&self) -> Result<Nonlinearity> {
        let diffusion: Diffusion = regularize(self.m, self.eps_reg)?;
        let sigma = match self.sigma {
            SigmaChoice::Compact => {
                make_sigma(self.n.unwrap_or((self.m + 1.0).ceil() as u32), self.c_supp)?
            }
            SigmaChoice::Constant => Sigma::Constant(self.sigma_value),
            SigmaChoice::Zero => Sigma::Zero,
        };
        Ok(Nonlinearity::new(diffusion, sigma))
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    SpaceWhite,
    Coloured,
    Zero,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub kind: NoiseChoice,
    pub k_max: usize,
    pub alpha_prime: f64,
    pub mollifier_eps: f64,
    /// Path grid step for coloured noise; defaults to `mollifier_eps / 8`.
    pub path_step: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            kind: NoiseChoice::SpaceWhite,
            k_max: 8,
            alpha_prime: 0.9,
            mollifier_eps: 0.05,
            path_step: None,
        }
    }
}

impl NoiseConfig {
    pub fn build(&self, d: usize, span: f64, seed: u64) -> Result<SpectralNoise> {
        match self.kind {
            NoiseChoice::SpaceWhite => sample_space_white(d, self.k_max, seed),
            NoiseChoice::Coloured => sample_coloured(
                d,
                self.k_max,
                self.alpha_prime,
                self.mollifier_eps,
                span,
                self.path_step.unwrap_or(self.mollifier_eps / 8.0),
                seed,
            ),
            NoiseChoice::Zero => Ok(SpectralNoise::zero(d, self.k_max)),
        }
    }

    /// Counterterm matched to this noise; none for the zero field.
    pub fn counterterm(
        &self,
        noise: &SpectralNoise,
        nl: &Nonlinearity,
        u_bound: f64,
    ) -> Counterterm {
        match self.kind {
            NoiseChoice::Zero => Counterterm::None,
            _ => {
                let a_min = nl.diffusion.floor().max(1e-12);
                let a_max = nl.a(u_bound).max(2.0 * a_min) * 4.0;
                Counterterm::for_noise(noise, a_min, a_max)
            }
        }
    }
}

/// `u₀ = mean + amplitude · cos(2πx₁)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub mean: f64,
    pub amplitude: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            mean: 1.0,
            amplitude: 0.3,
        }
    }
}

impl InitialConfig {
    pub fn sample(&self, g: &Grid) -> Vec<f64> {
        g.sample(|x| self.mean + self.amplitude * (std::f64::consts::TAU * x[0]).cos())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Noise regularity assumed by `validate`, in `(2/3, 1)`.
    pub alpha: f64,
    /// The small `ϵ` in the blow-up exponents.
    pub epsilon: f64,
    /// Frozen diffusivity for model checks.
    pub a: f64,
    /// Time at which expectations are checked.
    pub s: f64,
    /// Monte-Carlo sample count.
    pub samples: usize,
    /// Test-function scales `λ = 2^{-k}`.
    pub lambda_exponents: Vec<i32>,
    /// Cutoff for the homogeneity fits; defaults to the noise cutoff.
    pub k_max: Option<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            alpha: 0.9,
            epsilon: 0.01,
            a: 1.0,
            s: 0.5,
            samples: 200,
            lambda_exponents: vec![1, 2, 3, 4, 5],
            k_max: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub scheme: Scheme,
    pub max_halvings: u32,
    pub cfl: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            scheme: d.scheme,
            max_halvings: d.max_halvings,
            cfl: d.cfl,
        }
    }
}

impl SolverSection {
    pub fn build(&self) -> SolverConfig {
        SolverConfig {
            scheme: self.scheme,
            max_halvings: self.max_halvings,
            cfl: self.cfl,
            ..SolverConfig::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Shift cap `R`.
    pub r: f64,
    pub p: f64,
    pub time_stride: usize,
    pub families: Vec<ShiftFamily>,
    /// Thresholds `δ = 2^{-1}, …, 2^{-delta_depth}`.
    pub delta_depth: u32,
    /// Threshold for the large-velocity seminorm.
    pub delta: f64,
    /// Scales `λ = 2^{-k}` for the ζ-test and K-functional.
    pub lambda_exponents: Vec<i32>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.9,
            beta: 1.5,
            gamma: 1.5,
            r: 0.25,
            p: 2.0,
            time_stride: 1,
            families: vec![
                ShiftFamily::Temporal,
                ShiftFamily::Spatial,
                ShiftFamily::Diagonal,
            ],
            delta_depth: 8,
            delta: 0.25,
            lambda_exponents: vec![2, 3],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Build every component once so bad values surface as config errors.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.grid.validate().map_err(cfg_err)?;
        self.nonlinearity.build().map_err(cfg_err)?;
        if self.noise.kind == NoiseChoice::Coloured {
            // cheap dry run of the parameter checks on a tiny span
            self.noise
                .build(self.grid.d, 1e-9, self.seed)
                .map_err(cfg_err)?;
        } else if !(1..=2).contains(&self.grid.d) || self.noise.k_max == 0 {
            return Err(Error::Config("noise cutoff must be at least 1".into()));
        }
        if self.ensemble == 0 {
            return Err(Error::Config("ensemble must be at least 1".into()));
        }
        let a = &self.analysis;
        if a.time_stride == 0
            || a.delta_depth == 0
            || !(a.delta > 0.0 && a.delta < 1.0)
            || !(a.p > 1.0)
        {
            return Err(Error::Config(
                "analysis: need time_stride ≥ 1, delta_depth ≥ 1, 0 < delta < 1, p > 1".into(),
            ));
        }
        if self.model.samples == 0 || !(self.model.a > 0.0) {
            return Err(Error::Config("model: need samples ≥ 1 and a > 0".into()));
        }
        if self.solver.cfl <= 0.0 {
            return Err(Error::Config("solver: cfl must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "seed = 7\n[grid]\nd = 1\nn = 32\ndt = 1e-4\nn_t = 10\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.noise.kind, NoiseChoice::SpaceWhite);
        assert_eq!(c.analysis.families.len(), 3);
        assert!(matches!(
            c.nonlinearity.build().unwrap().sigma,
            Sigma::Compact { n: 3, .. }
        ));
    }

    #[test]
    fn seed_is_mandatory_and_unknown_keys_rejected() {
        let no_seed = MINIMAL.replace("seed = 7\n", "");
        assert!(matches!(
            ExperimentConfig::from_toml(&no_seed),
            Err(Error::Config(_))
        ));
        let extra = format!("{MINIMAL}[noise]\nkmax = 3\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&extra),
            Err(Error::Config(_))
        ));
        let top = format!("colour = 1\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&top).is_err());
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad_grid = MINIMAL.replace("n = 32", "n = 30");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad_grid),
            Err(Error::Config(_))
        ));
        let bad_m = format!("{MINIMAL}[nonlinearity]\nm = 0.5\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&bad_m),
            Err(Error::Config(_))
        ));
        let coarse = format!("{MINIMAL}[noise]\nkind = \"coloured\"\npath_step = 0.1\n");
        assert!(matches!(
            ExperimentConfig::from_toml(&coarse),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let b = ExperimentConfig::from_toml(&format!("{MINIMAL}\n# comment\n")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::from_toml(&MINIMAL.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }
}

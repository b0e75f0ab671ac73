//! Experiment configuration read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trigger_codesign::codesign::{DEFAULT_ALPHA0, DEFAULT_MAX_ITER, DEFAULT_TOL};
use trigger_codesign::model::{make_bimodal_mixture, DEFAULT_K_SIGMA, DEFAULT_POINTS};
use trigger_codesign::oracle::DEFAULT_ALPHA_STEP;
use trigger_codesign::simulator::DEFAULT_SAMPLES;
use trigger_codesign::{DensitySpec, ProblemSpec};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub noise: Option<NoiseConfig>,
    /// Law of the initial error `x_0 − init_mean`; defaults to the noise law.
    pub init: Option<NoiseConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub iteration: IterationConfig,
    #[serde(default)]
    pub mc: McConfig,
    pub sweep: Option<SweepConfig>,
    pub oracle: Option<OracleConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub a: f64,
    pub lambda: f64,
    pub horizon: usize,
    #[serde(default)]
    pub init_mean: f64,
}

/// Exactly one of `mu`, the mixture triple, or `tabulated` must be given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Offset of the equal-weight, unit-variance bimodal mixture.
    pub mu: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub means: Option<Vec<f64>>,
    pub sigmas: Option<Vec<f64>>,
    /// CSV file with header `x,pdf`, relative to the config file.
    pub tabulated: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub k_sigma: f64,
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            k_sigma: DEFAULT_K_SIGMA,
            points: DEFAULT_POINTS,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterationConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub alpha0: f64,
}

impl Default for IterationConfig {
    fn default() -> Self {
        IterationConfig {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            alpha0: DEFAULT_ALPHA0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            samples: DEFAULT_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Discrete noise law for the exhaustive solver.
    pub support: Option<Vec<f64>>,
    pub probs: Option<Vec<f64>>,
    #[serde(default = "default_alpha_step")]
    pub alpha_step: f64,
}

fn default_alpha_step() -> f64 {
    DEFAULT_ALPHA_STEP
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Problem spec with the configured noise.
    pub fn problem(&self) -> Result<ProblemSpec, CliError> {
        let noise = self
            .noise
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [noise] section".into()))?;
        let noise = noise.density("noise", &self.base_dir)?;
        self.problem_with(noise)
    }

    /// Problem spec with the bimodal noise of offset `mu`.
    pub fn problem_for_mu(&self, mu: f64) -> Result<ProblemSpec, CliError> {
        let noise =
            make_bimodal_mixture(mu).map_err(|e| CliError::Config(format!("sweep.mu: {e}")))?;
        self.problem_with(noise)
    }

    fn problem_with(&self, noise: DensitySpec) -> Result<ProblemSpec, CliError> {
        let init_error = match &self.init {
            Some(init) => init.density("init", &self.base_dir)?,
            None => noise.clone(),
        };
        let sys = &self.system;
        let spec = ProblemSpec {
            a: sys.a,
            lambda: sys.lambda,
            horizon: sys.horizon,
            noise,
            init: init_error.shifted(-sys.init_mean),
            init_mean: sys.init_mean,
        };
        spec.validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(spec)
    }
}

impl NoiseConfig {
    fn density(&self, section: &str, base: &Path) -> Result<DensitySpec, CliError> {
        let mixture = self.weights.is_some() || self.means.is_some() || self.sigmas.is_some();
        let forms = [self.mu.is_some(), mixture, self.tabulated.is_some()];
        if forms.iter().filter(|f| **f).count() != 1 {
            return Err(CliError::Config(format!(
                "[{section}] needs exactly one of `mu`, `weights`/`means`/`sigmas`, or `tabulated`"
            )));
        }
        let spec = if let Some(mu) = self.mu {
            make_bimodal_mixture(mu).map_err(|e| CliError::Config(format!("{section}.mu: {e}")))?
        } else if let Some(path) = &self.tabulated {
            read_tabulated(&base.join(path))
                .map_err(|e| CliError::Config(format!("{section}.tabulated: {e}")))?
        } else {
            let field = |v: &Option<Vec<f64>>, key: &str| {
                v.clone().ok_or_else(|| {
                    CliError::Config(format!("{section}.{key} is required for a mixture"))
                })
            };
            DensitySpec::GaussianMixture {
                weights: field(&self.weights, "weights")?,
                means: field(&self.means, "means")?,
                sigmas: field(&self.sigmas, "sigmas")?,
            }
        };
        spec.validate()
            .map_err(|e| CliError::Config(format!("[{section}]: {e}")))?;
        Ok(spec)
    }
}

#[derive(Deserialize)]
struct TabRow {
    x: f64,
    pdf: f64,
}

fn read_tabulated(path: &Path) -> Result<DensitySpec, String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut abscissae = Vec::new();
    let mut values = Vec::new();
    for row in rdr.deserialize() {
        let row: TabRow = row.map_err(|e| format!("{}: {e}", path.display()))?;
        abscissae.push(row.x);
        values.push(row.pdf);
    }
    Ok(DensitySpec::Tabulated { abscissae, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, toml::de::Error> {
        toml::from_str(text)
    }

    const CASE_STUDY: &str = r#"
[system]
a = 1.0
lambda = 0.5
horizon = 1

[noise]
mu = 0.95
"#;

    #[test]
    fn defaults_fill_optional_sections() {
        let cfg = parse(CASE_STUDY).unwrap();
        assert_eq!(cfg.grid, GridConfig::default());
        assert_eq!(cfg.iteration.max_iter, DEFAULT_MAX_ITER);
        assert_eq!(cfg.mc.samples, DEFAULT_SAMPLES);
        let spec = cfg.problem().unwrap();
        assert_eq!(spec, ProblemSpec::bimodal(1.0, 0.5, 1, 0.95).unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse(&format!("{CASE_STUDY}\n[grid]\npionts = 11\n")).unwrap_err();
        assert!(err.to_string().contains("pionts"), "{err}");
        assert!(parse("[system]\na = 1.0\nlambda = 0.5\nhorizon = 1\nextra = 2\n").is_err());
    }

    #[test]
    fn type_errors_name_the_key() {
        let err = parse("[system]\na = 1.0\nlambda = \"abc\"\nhorizon = 1\n").unwrap_err();
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn noise_forms_are_exclusive() {
        let mut cfg = parse(CASE_STUDY).unwrap();
        cfg.noise.as_mut().unwrap().sigmas = Some(vec![1.0]);
        assert!(matches!(cfg.problem(), Err(CliError::Config(_))));
        cfg.noise = Some(NoiseConfig::default());
        assert!(matches!(cfg.problem(), Err(CliError::Config(_))));
        cfg.noise = None;
        assert!(cfg.problem().is_err());
        assert!(cfg.problem_for_mu(0.5).is_ok());
    }

    #[test]
    fn init_mean_shifts_the_initial_state() {
        let mut cfg = parse(CASE_STUDY).unwrap();
        cfg.system.init_mean = 2.0;
        cfg.init = Some(NoiseConfig {
            weights: Some(vec![1.0]),
            means: Some(vec![0.0]),
            sigmas: Some(vec![0.5]),
            ..Default::default()
        });
        let spec = cfg.problem().unwrap();
        assert_eq!(spec.init, DensitySpec::gaussian(2.0, 0.5));
        assert_eq!(spec.init_error(), DensitySpec::gaussian(0.0, 0.5));
    }

    #[test]
    fn tabulated_noise_is_read_relative_to_the_config() {
        let dir = tempfile::TempDir::new().unwrap();
        let rows: String = (-4..=4)
            .map(|i| format!("{},{}\n", i as f64 / 4.0, 1.0 - (i as f64 / 4.0).abs()))
            .collect();
        fs::write(dir.path().join("tri.csv"), format!("x,pdf\n{rows}")).unwrap();
        let cfg_path = dir.path().join("cfg.toml");
        fs::write(
            &cfg_path,
            CASE_STUDY.replace("mu = 0.95", "tabulated = \"tri.csv\""),
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&cfg_path).unwrap();
        let spec = cfg.problem().unwrap();
        match &spec.noise {
            DensitySpec::Tabulated { abscissae, values } => {
                assert_eq!(abscissae.len(), 9);
                assert_eq!((abscissae[0], abscissae[8]), (-1.0, 1.0));
                assert_eq!(values[4], 1.0);
            }
            other => panic!("unexpected noise {other:?}"),
        }
        assert!(spec.noise.is_even());

        fs::write(dir.path().join("bad.csv"), "x,pdf\n0,oops\n").unwrap();
        fs::write(
            &cfg_path,
            CASE_STUDY.replace("mu = 0.95", "tabulated = \"bad.csv\""),
        )
        .unwrap();
        let err = ExperimentConfig::load(&cfg_path)
            .unwrap()
            .problem()
            .unwrap_err();
        assert!(err.to_string().contains("noise.tabulated"), "{err}");
    }
}

use std::path::{Path, PathBuf};

use pdmp_harvest::kernels::{Kernel, KernelKind, KernelSpec};
use pdmp_harvest::model::{BioParams, EconParams, JumpRates, Model};
use pdmp_harvest::simulator::default_horizon;
use pdmp_harvest::solver::{GridSpec, RGridSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Model parameters; the growth law is logistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub r: f64,
    pub k: f64,
    pub p: f64,
    pub q: f64,
    pub c: f64,
    pub delta: f64,
    pub e_max: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            r: 1.0,
            k: 1.0,
            p: 2.0,
            q: 1.0,
            c: 1.0,
            delta: 0.05,
            e_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsSection {
    pub biomass: Option<KernelSpec>,
    pub growth: Option<KernelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub x0: f64,
    /// Defaults to the model's growth rate.
    pub r0: Option<f64>,
    /// Defaults to `ln(1e6) / δ`.
    pub horizon: Option<f64>,
    pub dt: f64,
    pub replicates: usize,
    /// Replicates written out as `trajectory_<k>.csv`.
    pub trajectories: usize,
    pub seed: u64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            x0: 0.3,
            r0: None,
            horizon: None,
            dt: 1e-3,
            replicates: 1000,
            trajectories: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    /// Probe rate; defaults to `0.02 δ`.
    pub lambda1: Option<f64>,
    pub r_sweep: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl Default for SensitivitySection {
    fn default() -> Self {
        Self {
            lambda1: None,
            r_sweep: vec![0.8, 1.0, 1.2],
            epsilons: vec![0.02, 0.04, 0.08],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    /// Run the growth-rate checks, which need several 2-D solves.
    pub dual: bool,
    /// Biomass grid spacing for the regularity checks, in units of `K`.
    pub spacing: f64,
    /// Grid spacing for the 2-D regularity checks, in units of `K`.
    pub dual_spacing: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            dual: true,
            spacing: 1e-3,
            dual_spacing: 5e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: Option<PathBuf>,
    pub model: ModelSection,
    pub rates: JumpRates,
    pub kernels: KernelsSection,
    pub solver: GridSpec,
    pub r_grid: RGridSpec,
    pub simulate: SimulateSection,
    pub sensitivity: SensitivitySection,
    pub verify: VerifySection,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

/// Everything a command needs, checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: Model,
    pub biomass_kernel: Kernel,
    pub growth_kernel: Option<Kernel>,
    pub output_dir: PathBuf,
    pub hash: String,
}

impl Resolved {
    pub fn seed(&self) -> u64 {
        self.config.simulate.seed
    }

    pub fn two_d(&self) -> bool {
        self.config.rates.lambda_r > 0.0
    }

    pub fn lambda1(&self) -> f64 {
        self.config
            .sensitivity
            .lambda1
            .unwrap_or(0.02 * self.model.econ.delta)
    }

    pub fn horizon(&self) -> f64 {
        self.config
            .simulate
            .horizon
            .unwrap_or_else(|| default_horizon(self.model.econ.delta))
    }

    pub fn r0(&self) -> f64 {
        self.config.simulate.r0.unwrap_or(self.model.bio.r)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.into(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.into(),
            source,
        })
    }

    /// Validates and builds the model objects. `base` anchors a relative
    /// output directory; with none set the output goes to `base/out`.
    pub fn resolve(self, base: &Path) -> Result<Resolved, ConfigError> {
        let m = &self.model;
        let bio = BioParams::new(m.r, m.k).map_err(invalid)?;
        let econ = EconParams::new(m.p, m.q, m.c, m.delta, m.e_max).map_err(invalid)?;
        let model = Model::new(bio, econ).map_err(invalid)?;
        JumpRates::new(self.rates.lambda_x, self.rates.lambda_r).map_err(invalid)?;
        let biomass_spec = self
            .kernels
            .biomass
            .clone()
            .unwrap_or_else(KernelSpec::identity);
        if matches!(biomass_spec.kind, KernelKind::GrowthMultiplicative { .. }) {
            return Err(invalid("kernels.biomass must act on biomass"));
        }
        let biomass_kernel = Kernel::new(biomass_spec).map_err(invalid)?;
        let growth_kernel = match &self.kernels.growth {
            Some(spec) => {
                if !matches!(spec.kind, KernelKind::GrowthMultiplicative { .. }) {
                    return Err(invalid("kernels.growth must be growth-multiplicative"));
                }
                Some(Kernel::new(spec.clone()).map_err(invalid)?)
            }
            None => None,
        };
        if self.rates.lambda_r > 0.0 && growth_kernel.is_none() {
            return Err(invalid(
                "rates.lambda_r > 0 needs a [kernels.growth] section",
            ));
        }
        let s = &self.simulate;
        if !(s.x0 > 0.0)
            || !(s.dt > 0.0)
            || s.r0.is_some_and(|r| !(r > 0.0))
            || s.horizon.is_some_and(|h| !(h > 0.0))
        {
            return Err(invalid("simulate: x0, r0, dt and horizon must be positive"));
        }
        if s.trajectories > s.replicates {
            return Err(invalid(
                "simulate.trajectories cannot exceed simulate.replicates",
            ));
        }
        if self.sensitivity.lambda1.is_some_and(|l| !(l > 0.0)) {
            return Err(invalid("sensitivity.lambda1 must be positive"));
        }
        if self.sensitivity.r_sweep.iter().any(|r| !(*r > 0.0)) {
            return Err(invalid("sensitivity.r_sweep entries must be positive"));
        }
        if self
            .sensitivity
            .epsilons
            .iter()
            .any(|e| !(*e > 0.0 && *e < 1.0))
        {
            return Err(invalid("sensitivity.epsilons must lie in (0, 1)"));
        }
        let output_dir = match &self.output_dir {
            Some(d) if d.is_absolute() => d.clone(),
            Some(d) => base.join(d),
            None => base.join("out"),
        };
        let hashed = RunConfig {
            output_dir: None,
            ..self.clone()
        };
        let hash = hex::encode(Sha256::digest(
            toml::to_string(&hashed).map_err(invalid)?.as_bytes(),
        ));
        Ok(Resolved {
            config: self,
            model,
            biomass_kernel,
            growth_kernel,
            output_dir,
            hash,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use pdmp_harvest::kernels::DiscreteLaw;

    const FULL: &str = r#"
output_dir = "results"

[model]
r = 1.0
k = 1.0
p = 2.0
q = 1.0
c = 1.0
delta = 0.05
e_max = 1.0

[rates]
lambda_x = 0.1
lambda_r = 0.2

[kernels.biomass]
kind = "uniform-multiplicative"
z_lo = 0.8
z_hi = 1.2

[kernels.growth]
kind = "growth-multiplicative"
xi = 0.1
law = { support = [-1.0, 1.0], weights = [0.5, 0.5] }

[solver]
nodes = 501

[r_grid]
nodes = 21

[simulate]
x0 = 0.4
replicates = 10
seed = 9
"#;

    #[test]
    fn full_config_resolves() {
        let cfg: RunConfig = toml::from_str(FULL).unwrap();
        let res = cfg.resolve(Path::new("/tmp/base")).unwrap();
        assert!(res.two_d());
        assert_eq!(res.output_dir, Path::new("/tmp/base/results"));
        assert_eq!(res.config.solver.nodes, 501);
        assert_eq!(res.config.r_grid.nodes, 21);
        assert_eq!(res.seed(), 9);
        assert_eq!(res.hash.len(), 64);
        assert!((res.lambda1() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn empty_config_is_the_baseline() {
        let res = RunConfig::default().resolve(Path::new(".")).unwrap();
        assert!(!res.two_d());
        assert_eq!(res.model.econ.c, 1.0);
        assert!((res.horizon() - 1e6f64.ln() / 0.05).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(toml::from_str::<RunConfig>("[model]\nr = 1.0").is_err());
        assert!(toml::from_str::<RunConfig>("[solver]\nnodez = 3").is_err());
        let mut cfg = RunConfig::default();
        cfg.rates.lambda_r = 0.1;
        assert!(cfg.resolve(Path::new(".")).is_err());
        let mut cfg = RunConfig::default();
        cfg.model.delta = 0.0;
        assert!(cfg.resolve(Path::new(".")).is_err());
        let mut cfg = RunConfig::default();
        cfg.kernels.biomass = Some(KernelSpec::growth(0.1, DiscreteLaw::symmetric_pair()));
        assert!(cfg.resolve(Path::new(".")).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default().resolve(Path::new(".")).unwrap().hash;
        let mut cfg = RunConfig::default();
        cfg.simulate.seed = 1;
        assert_ne!(a, cfg.resolve(Path::new(".")).unwrap().hash);
        let moved = RunConfig {
            output_dir: Some("elsewhere".into()),
            ..RunConfig::default()
        };
        assert_eq!(a, moved.resolve(Path::new(".")).unwrap().hash);
    }
}

//! Experiment configuration (TOML).
//!
//! ```toml
//! [environment]
//! d = 1
//! theta0 = [0.5]
//! theta_box = [[0.0, 1.0]]
//! z_support = [0.0, 1.0]
//! covariates = { law = "uniform-box", bounds = [[-0.5, 0.5]] }
//! noise = { law = "uniform", lo = 0.0, hi = 1.0 }
//!
//! [[policy]]
//! name = "deep-c"
//! gamma = 2.2
//!
//! [run]
//! reps = 100
//! base_seed = 7
//! horizons = [1000, 4000]
//! ```
//!
//! Unknown keys are rejected. Environment fields have no defaults; `base_seed`
//! defaults to 0, `parallelism` to 0 (all cores, or `PRICELAB_THREADS`).

use std::fs;
use std::path::{Path, PathBuf};

use pricelab_core::estimator::BallConstraints;
use pricelab_core::grid::Interval;
use pricelab_core::model::{
    alpha_bounds, alpha_prime_subgaussian, estimate_kappas, oracle_z_star, AssumptionConstants,
    CovariateLaw, EnvironmentSpec, NoiseLaw, DEFAULT_Z_FLOOR,
};
use pricelab_core::policies::{compute_gamma, PolicySpec};
use pricelab_core::rng::{stream, Purpose};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Replication index reserved for configuration-time Monte Carlo (constant
/// estimation), far away from any episode stream.
const SETUP_STREAM: u64 = (1 << 55) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    #[serde(rename = "policy")]
    pub policies: Vec<PolicyConfig>,
    pub run: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub d: usize,
    pub theta0: Vec<f64>,
    pub theta_box: Vec<[f64; 2]>,
    pub z_support: [f64; 2],
    pub covariates: CovariateConfig,
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CovariateConfig {
    StandardNormal,
    UniformBox { bounds: Vec<[f64; 2]> },
    Spherical { radius: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    Uniform { lo: f64, hi: f64 },
    Piecewise { edges: Vec<f64>, densities: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Oracle,
    UniformRandom,
    FixedPrice,
    DeepC,
    DeepCRounds,
    DecoupledDeepC,
    SparseDeepC,
}

/// How the default L1 radius follows from the sparsity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rho1Rule {
    /// `sqrt(s)`: contains a unit-norm parameter with `s` equal entries.
    #[default]
    SqrtS,
    /// `1 / sqrt(s)`.
    InverseSqrtS,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub name: PolicyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsity: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho1_rule: Option<Rho1Rule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub reps: u64,
    #[serde(default)]
    pub base_seed: u64,
    pub horizons: Vec<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 means `PRICELAB_THREADS` or all cores.
    #[serde(default)]
    pub parallelism: usize,
    #[serde(default)]
    pub traces: bool,
    /// Write real timings into `summary.csv` (makes it run-dependent).
    #[serde(default)]
    pub record_wall_clock: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("pricelab-out")
}

/// Constants for the theory-driven defaults. Missing alphas are derived from
/// the supports; missing kappas are estimated only when `estimate_kappa` is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa2: Option<f64>,
    #[serde(default)]
    pub estimate_kappa: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_probes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_samples: Option<usize>,
    /// Residual floor used when the residual support starts at 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_floor: Option<f64>,
    /// Monte Carlo size for the unbounded-covariate valuation ceiling;
    /// defaults to `10 n^2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_prime_samples: Option<u64>,
}

const DEFAULT_KAPPA_PROBES: usize = 200;
const DEFAULT_KAPPA_SAMPLES: usize = 20_000;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text).map_err(|msg| CliError::Config(format!("{}: {msg}", path.display())))
    }

    /// Parse and validate. Errors carry the line and column when the problem
    /// is local to a key.
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<(), String> {
        self.environment_spec(1).map_err(|e| format!("[environment]: {e}"))?;
        if self.policies.is_empty() {
            return Err("at least one [[policy]] block is required".into());
        }
        for (i, p) in self.policies.iter().enumerate() {
            p.check().map_err(|e| format!("[[policy]] #{}: {e}", i + 1))?;
        }
        if self.run.reps == 0 {
            return Err("[run] reps must be at least 1".into());
        }
        if self.run.horizons.is_empty() {
            return Err("[run] horizons must not be empty".into());
        }
        if let Some(&n) = self.run.horizons.iter().find(|&&n| n < 2) {
            return Err(format!("[run] horizon {n} is too short (need n >= 2)"));
        }
        Ok(())
    }

    pub fn environment_spec(&self, horizon: usize) -> Result<EnvironmentSpec, String> {
        let env = &self.environment;
        let iv = |v: [f64; 2]| Interval::new(v[0], v[1]);
        let covariates = match &env.covariates {
            CovariateConfig::StandardNormal => CovariateLaw::StandardNormal,
            CovariateConfig::UniformBox { bounds } => {
                CovariateLaw::UniformBox(bounds.iter().copied().map(iv).collect())
            }
            CovariateConfig::Spherical { radius } => CovariateLaw::Spherical { radius: iv(*radius) },
        };
        let noise = match &env.noise {
            NoiseConfig::Uniform { lo, hi } => NoiseLaw::Uniform { lo: *lo, hi: *hi },
            NoiseConfig::Piecewise { edges, densities } => {
                NoiseLaw::piecewise(edges.clone(), densities).map_err(|e| e.to_string())?
            }
        };
        let spec = EnvironmentSpec {
            d: env.d,
            theta0: env.theta0.clone(),
            covariates,
            noise,
            horizon,
            theta_box: env.theta_box.iter().copied().map(iv).collect(),
            z_support: iv(env.z_support),
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    fn z_floor(&self) -> f64 {
        self.constants
            .as_ref()
            .and_then(|c| c.z_floor)
            .unwrap_or(DEFAULT_Z_FLOOR)
    }

    /// `(alpha1, alpha2)` at horizon `n`: configured values, else derived
    /// from the supports (bounded covariates) or, for `alpha2` under
    /// unbounded covariates, from the high-probability valuation ceiling.
    pub fn alphas(&self, spec: &EnvironmentSpec, n: usize) -> Result<(f64, f64), String> {
        let c = self.constants.clone().unwrap_or_default();
        let derived = match spec.covariate_box() {
            Some(b) => {
                let v = alpha_bounds(spec.z_support, &spec.theta_box, &b, Some(self.z_floor()))
                    .map_err(|e| e.to_string())?;
                Some((v.alpha1, v.alpha2))
            }
            None => None,
        };
        let alpha1 = match (c.alpha1, derived) {
            (Some(a), _) => a,
            (None, Some((a, _))) => a,
            (None, None) => {
                return Err(
                    "constants.alpha1 is required when covariates are unbounded".into(),
                )
            }
        };
        let alpha2 = match (c.alpha2, derived) {
            (Some(a), _) => a,
            (None, Some((_, a))) => a,
            (None, None) => {
                let n = n as u64;
                let samples = c
                    .alpha_prime_samples
                    .unwrap_or_else(|| n.saturating_mul(n).saturating_mul(10));
                let mut rng = stream(self.run.base_seed, SETUP_STREAM, Purpose::Auxiliary);
                alpha_prime_subgaussian(spec, n, samples, &mut rng).map_err(|e| e.to_string())?
            }
        };
        Ok((alpha1, alpha2))
    }

    /// Constants at horizon `n`, or an error naming what is missing.
    pub fn assumption_constants(
        &self,
        spec: &EnvironmentSpec,
        n: usize,
    ) -> Result<AssumptionConstants, String> {
        let c = self.constants.clone().unwrap_or_default();
        let (alpha1, alpha2) = self.alphas(spec, n)?;
        let (kappa1, kappa2) = match (c.kappa1, c.kappa2) {
            (Some(a), Some(b)) => (a, b),
            _ if c.estimate_kappa => {
                let z_star = oracle_z_star(&spec.noise);
                let mut rng = stream(self.run.base_seed, SETUP_STREAM - 1, Purpose::Auxiliary);
                let (k1, k2) = estimate_kappas(
                    spec,
                    z_star,
                    c.kappa_probes.unwrap_or(DEFAULT_KAPPA_PROBES),
                    c.kappa_samples.unwrap_or(DEFAULT_KAPPA_SAMPLES),
                    &mut rng,
                );
                (c.kappa1.unwrap_or(k1), c.kappa2.unwrap_or(k2))
            }
            _ => {
                return Err("constants.kappa1 and constants.kappa2 are required \
                            (or set constants.estimate_kappa = true)"
                    .into())
            }
        };
        AssumptionConstants::new(alpha1, alpha2, kappa1, kappa2).map_err(|e| e.to_string())
    }

    /// Resolve every policy block into a concrete policy for horizon `n`.
    pub fn policy_specs(&self, spec: &EnvironmentSpec) -> Result<Vec<PolicySpec>, String> {
        self.policies
            .iter()
            .enumerate()
            .map(|(i, p)| {
                p.resolve(self, spec)
                    .map_err(|e| format!("[[policy]] #{}: {e}", i + 1))
            })
            .collect()
    }
}

impl PolicyConfig {
    pub fn new(name: PolicyName) -> Self {
        PolicyConfig {
            name,
            gamma: None,
            price: None,
            sparsity: None,
            rho1: None,
            rho1_rule: None,
            rho2: None,
            explore_lo: None,
            explore_hi: None,
            round_cap: None,
        }
    }

    fn check(&self) -> Result<(), String> {
        let name = self.name;
        let positive = |key: &str, v: Option<f64>| match v {
            Some(x) if !(x > 0.0) => Err(format!("`{key}` must be positive, got {x}")),
            _ => Ok(()),
        };
        positive("gamma", self.gamma)?;
        positive("price", self.price)?;
        positive("rho1", self.rho1)?;
        positive("rho2", self.rho2)?;
        positive("explore_lo", self.explore_lo)?;
        positive("explore_hi", self.explore_hi)?;
        if self.round_cap == Some(0) || self.sparsity == Some(0) {
            return Err("`round_cap` and `sparsity` must be at least 1".into());
        }
        let allowed: &[&str] = match name {
            PolicyName::Oracle | PolicyName::UniformRandom => &[],
            PolicyName::FixedPrice => &["price"],
            PolicyName::DeepC => &["gamma"],
            PolicyName::DeepCRounds => &["gamma", "round_cap"],
            PolicyName::DecoupledDeepC => &[
                "gamma", "sparsity", "rho1", "rho1_rule", "rho2", "explore_lo", "explore_hi",
            ],
            PolicyName::SparseDeepC => &["gamma", "sparsity", "rho1", "rho1_rule", "rho2"],
        };
        for key in self.set_keys() {
            if !allowed.contains(&key) {
                return Err(format!("`{key}` does not apply to this policy"));
            }
        }
        match name {
            PolicyName::FixedPrice if self.price.is_none() => Err("missing key `price`".into()),
            PolicyName::DeepC | PolicyName::DecoupledDeepC | PolicyName::SparseDeepC
                if self.gamma.is_none() =>
            {
                Err("missing key `gamma`".into())
            }
            _ => Ok(()),
        }
    }

    fn set_keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        let mut mark = |k, set: bool| {
            if set {
                keys.push(k)
            }
        };
        mark("gamma", self.gamma.is_some());
        mark("price", self.price.is_some());
        mark("sparsity", self.sparsity.is_some());
        mark("rho1", self.rho1.is_some());
        mark("rho1_rule", self.rho1_rule.is_some());
        mark("rho2", self.rho2.is_some());
        mark("explore_lo", self.explore_lo.is_some());
        mark("explore_hi", self.explore_hi.is_some());
        mark("round_cap", self.round_cap.is_some());
        keys
    }

    fn balls(&self, d: usize) -> Result<BallConstraints, String> {
        let s = self.sparsity.unwrap_or(d) as f64;
        let rho1 = self.rho1.unwrap_or(match self.rho1_rule.unwrap_or_default() {
            Rho1Rule::SqrtS => s.sqrt(),
            Rho1Rule::InverseSqrtS => 1.0 / s.sqrt(),
        });
        BallConstraints::new(rho1, self.rho2.unwrap_or(1.0)).map_err(|e| e.to_string())
    }

    fn resolve(&self, cfg: &ExperimentConfig, spec: &EnvironmentSpec) -> Result<PolicySpec, String> {
        let n = spec.horizon;
        let gamma = || self.gamma.ok_or_else(|| "missing key `gamma`".to_string());
        Ok(match self.name {
            PolicyName::Oracle => PolicySpec::Oracle,
            PolicyName::UniformRandom => PolicySpec::UniformRandom,
            PolicyName::FixedPrice => PolicySpec::FixedPrice {
                price: self.price.ok_or("missing key `price`")?,
            },
            PolicyName::DeepC => PolicySpec::DeepC { gamma: gamma()? },
            PolicyName::DeepCRounds => {
                let gamma = match self.gamma {
                    Some(g) => g,
                    None => {
                        let c = cfg.assumption_constants(spec, n)?;
                        compute_gamma(&c, n).map_err(|e| e.to_string())?
                    }
                };
                PolicySpec::DeepCRounds {
                    gamma,
                    round_cap: self.round_cap,
                }
            }
            PolicyName::DecoupledDeepC => {
                let (lo, hi) = match (self.explore_lo, self.explore_hi) {
                    (Some(lo), Some(hi)) => (lo, hi),
                    (lo, hi) => {
                        let bounded = spec.covariate_box().is_some();
                        let lo = match lo {
                            Some(v) => v,
                            None if bounded => cfg.alphas(spec, n)?.0,
                            None => cfg.z_floor(),
                        };
                        let hi = match hi {
                            Some(v) => v,
                            None => cfg.alphas(spec, n)?.1,
                        };
                        (lo, hi)
                    }
                };
                if !(lo <= hi) {
                    return Err(format!("exploration interval [{lo}, {hi}] is empty"));
                }
                PolicySpec::Decoupled {
                    gamma: gamma()?,
                    balls: self.balls(spec.d)?,
                    explore: Interval::new(lo, hi),
                }
            }
            PolicyName::SparseDeepC => PolicySpec::Sparse {
                gamma: gamma()?,
                balls: self.balls(spec.d)?,
            },
        })
    }

    /// Set a sweepable hyperparameter. Returns `false` when the parameter
    /// does not apply to this policy.
    pub fn set_param(&mut self, param: SweepParam, value: f64) -> bool {
        let name = self.name;
        let applies = match param {
            SweepParam::Gamma => !matches!(
                name,
                PolicyName::Oracle | PolicyName::UniformRandom | PolicyName::FixedPrice
            ),
            SweepParam::Price => name == PolicyName::FixedPrice,
            SweepParam::Rho1 | SweepParam::Rho2 | SweepParam::Sparsity => {
                matches!(name, PolicyName::DecoupledDeepC | PolicyName::SparseDeepC)
            }
            SweepParam::ExploreLo | SweepParam::ExploreHi => name == PolicyName::DecoupledDeepC,
            SweepParam::RoundCap => name == PolicyName::DeepCRounds,
        };
        if !applies {
            return false;
        }
        match param {
            SweepParam::Gamma => self.gamma = Some(value),
            SweepParam::Price => self.price = Some(value),
            SweepParam::Rho1 => self.rho1 = Some(value),
            SweepParam::Rho2 => self.rho2 = Some(value),
            SweepParam::Sparsity => self.sparsity = Some(value as usize),
            SweepParam::ExploreLo => self.explore_lo = Some(value),
            SweepParam::ExploreHi => self.explore_hi = Some(value),
            SweepParam::RoundCap => self.round_cap = Some(value as usize),
        }
        true
    }
}

/// Hyperparameters accepted by `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    Price,
    Rho1,
    Rho2,
    Sparsity,
    ExploreLo,
    ExploreHi,
    RoundCap,
}

impl SweepParam {
    pub const ALL: [(&'static str, SweepParam); 8] = [
        ("gamma", SweepParam::Gamma),
        ("price", SweepParam::Price),
        ("rho1", SweepParam::Rho1),
        ("rho2", SweepParam::Rho2),
        ("sparsity", SweepParam::Sparsity),
        ("explore_lo", SweepParam::ExploreLo),
        ("explore_hi", SweepParam::ExploreHi),
        ("round_cap", SweepParam::RoundCap),
    ];

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.iter().find(|(n, _)| *n == name).map(|(_, p)| *p)
    }

    pub fn as_str(self) -> &'static str {
        Self::ALL.iter().find(|(_, p)| *p == self).unwrap().0
    }

    pub fn is_integer(self) -> bool {
        matches!(self, SweepParam::Sparsity | SweepParam::RoundCap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[environment]
d = 1
theta0 = [0.5]
theta_box = [[0.0, 1.0]]
z_support = [0.0, 1.0]
covariates = { law = "uniform-box", bounds = [[-0.5, 0.5]] }
noise = { law = "uniform", lo = 0.0, hi = 1.0 }

[[policy]]
name = "deep-c"
gamma = 2.2

[[policy]]
name = "deep-c-rounds"

[run]
reps = 2
horizons = [100]

[constants]
kappa1 = 0.1
kappa2 = 1.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.run.base_seed, 0);
        assert_eq!(cfg.run.parallelism, 0);
        assert_eq!(cfg.policies.len(), 2);
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_key_is_named_with_location() {
        let text = MINIMAL.replace("gamma = 2.2", "gamm = 2.2");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.contains("gamm"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn missing_environment_field() {
        let text = MINIMAL.replace("z_support = [0.0, 1.0]\n", "");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.contains("z_support"), "{err}");
    }

    #[test]
    fn rounds_gamma_defaults_from_constants() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        let spec = cfg.environment_spec(100).unwrap();
        let specs = cfg.policy_specs(&spec).unwrap();
        // alpha2 = e^0.5, so 10 alpha2^2 = 10 e; kappa1 = 0.1 gives 100 / ln 100
        let expect = (10.0 * std::f64::consts::E).max(100.0 / 100f64.ln());
        assert!((specs[1].gamma().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn missing_kappas_is_an_error() {
        let text = MINIMAL.replace("kappa1 = 0.1\nkappa2 = 1.0\n", "");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let spec = cfg.environment_spec(100).unwrap();
        let err = cfg.policy_specs(&spec).unwrap_err();
        assert!(err.contains("kappa"), "{err}");
    }

    #[test]
    fn inapplicable_key_rejected() {
        let text = MINIMAL.replace("gamma = 2.2", "gamma = 2.2\nprice = 1.0");
        assert!(ExperimentConfig::parse(&text).unwrap_err().contains("price"));
    }

    #[test]
    fn rho1_rules() {
        let mut p = PolicyConfig::new(PolicyName::SparseDeepC);
        p.gamma = Some(1.0);
        p.sparsity = Some(4);
        assert_eq!(p.balls(100).unwrap().rho1, 2.0);
        p.rho1_rule = Some(Rho1Rule::InverseSqrtS);
        assert_eq!(p.balls(100).unwrap().rho1, 0.5);
        p.rho1 = Some(3.0);
        assert_eq!(p.balls(100).unwrap().rho1, 3.0);
    }
}

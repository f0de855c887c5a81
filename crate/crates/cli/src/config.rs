//! JSON run configurations. Unknown keys are rejected and parse errors carry
//! the path of the offending field.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use uowq_core::harness::verify::GridSpec;
use uowq_core::harness::{
    EnsembleSpec, FamilySpec, SeedScheme, SourceSpec, TheoremConfig, WeightRule,
};
use uowq_core::trainer::{ToySpec, ToyTasksSpec, TrainConfig};

#[derive(Debug)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() || self.path == "." || self.path == "?" {
            write!(f, "{}", self.message)
        } else {
            write!(f, "at `{}`: {}", self.path, self.message)
        }
    }
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| ConfigError {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: String::new(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse(&text)
}

/// Configs whose master seed can be overridden from the command line.
pub trait Seeded {
    fn seed_mut(&mut self) -> &mut u64;
}

macro_rules! seeded {
    ($($t:ty),*) => {$(
        impl Seeded for $t {
            fn seed_mut(&mut self) -> &mut u64 {
                &mut self.seed
            }
        }
    )*};
}

seeded!(
    WeightsConfig,
    SimulateConfig,
    SweepConfig,
    TrainRunConfig,
    VerifyConfig
);

/// Source given directly by its parameter vector.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitSource {
    pub theta: Vec<f64>,
    pub budget: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcesSpec {
    /// Displacements `c / sqrt(N_0)` in seeded random directions.
    Generated(Vec<SourceSpec>),
    Explicit(Vec<ExplicitSource>),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherSource {
    /// Closed-form Fisher at the target parameter.
    #[default]
    Analytic,
    /// Projected empirical Fisher over `samples` target draws.
    Empirical { samples: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default)]
    pub seed: u64,
    pub family: FamilySpec,
    pub n0: usize,
    pub sources: SourcesSpec,
    #[serde(default)]
    pub fisher: FisherSource,
    /// Budget fractions for the sub-budget diagnostic.
    #[serde(default)]
    pub profile_fractions: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSpec {
    Optimal,
    Explicit {
        weights: Vec<f64>,
        /// Full budgets when omitted.
        #[serde(default)]
        quantities: Option<Vec<usize>>,
    },
}

fn default_trials() -> usize {
    4000
}

fn default_plans() -> Vec<PlanSpec> {
    vec![PlanSpec::Optimal]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ensemble: Option<EnsembleSpec>,
    #[serde(default = "default_plans")]
    pub plans: Vec<PlanSpec>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Optional theorem check; a failed verdict exits with code 4.
    #[serde(default)]
    pub theorem: Option<TheoremConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantityAxis {
    pub grid: Vec<usize>,
    pub rule: WeightRule,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub seed: u64,
    pub ensemble: EnsembleSpec,
    #[serde(default)]
    pub source_index: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed_scheme: SeedScheme,
    #[serde(default)]
    pub weight: Option<GridSpec>,
    #[serde(default)]
    pub quantity: Option<QuantityAxis>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainMode {
    MultiSource {
        #[serde(default)]
        toy: ToySpec,
        /// Also train the target-only baseline.
        #[serde(default = "yes")]
        baseline: bool,
    },
    MultiTask {
        #[serde(default)]
        toy: ToyTasksSpec,
        #[serde(default = "yes")]
        baseline: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    #[serde(default)]
    pub seed: u64,
    pub mode: TrainMode,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub seed: u64,
    pub theorems: Vec<TheoremConfig>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_family_names_the_field() {
        let err = parse::<WeightsConfig>(r#"{"family":{"categorial":{"probabilities":[0.5,0.5]}},"n0":10,"sources":{"generated":[]}}"#)
            .unwrap_err();
        assert_eq!(err.path, "family");
        assert!(err.message.contains("categorial"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse::<SweepConfig>(
            r#"{"ensemble":{"family":{"gaussian_iso":{"mean":[0]}},"n0":5,"sources":[{"c":0,"budget":5,"direction_seed":0,"extra":1}]}}"#,
        )
        .unwrap_err();
        assert!(err.path.starts_with("ensemble.sources"), "{}", err.path);
    }

    #[test]
    fn defaults_fill_in() {
        let c: SimulateConfig = parse(r#"{"ensemble":{"family":{"gaussian_iso":{"mean":[0]}},"n0":5,"sources":[{"c":0,"budget":5,"direction_seed":0}]}}"#).unwrap();
        assert_eq!(c.trials, 4000);
        assert!(matches!(c.plans[..], [PlanSpec::Optimal]));
    }
}

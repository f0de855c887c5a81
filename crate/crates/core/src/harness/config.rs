use serde::{Deserialize, Serialize};

use super::{generate_ensemble, SourceSpec, TaskEnsemble};
use crate::error::{Error, Result};
use crate::model::{ModelFamily, ParameterVector};

/// A model family together with the target parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    /// Full probability vector; the free parameters are its first `m - 1` entries.
    Categorical {
        probabilities: Vec<f64>,
    },
    GaussianIso {
        mean: Vec<f64>,
    },
    /// Row-major `classes x features` weight matrix; zeros when omitted.
    SoftmaxRegression {
        features: usize,
        classes: usize,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

impl FamilySpec {
    pub fn build(&self) -> Result<(ModelFamily, ParameterVector)> {
        match self {
            FamilySpec::Categorical { probabilities } => {
                let fam = ModelFamily::categorical(probabilities.len())?;
                let total: f64 = probabilities.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::Parameter(format!(
                        "categorical probabilities sum to {total}, not 1"
                    )));
                }
                let theta =
                    ParameterVector::new(probabilities[..probabilities.len() - 1].to_vec())?;
                fam.validate(&theta)?;
                Ok((fam, theta))
            }
            FamilySpec::GaussianIso { mean } => {
                let fam = ModelFamily::gaussian_iso(mean.len())?;
                Ok((fam, ParameterVector::new(mean.clone())?))
            }
            FamilySpec::SoftmaxRegression {
                features,
                classes,
                weights,
            } => {
                let fam = ModelFamily::softmax_regression(*features, *classes)?;
                let theta = match weights {
                    Some(w) => ParameterVector::new(w.clone())?,
                    None => ParameterVector::zeros(fam.dimension()),
                };
                fam.validate(&theta)?;
                Ok((fam, theta))
            }
        }
    }

    pub fn uniform_categorical(outcomes: usize) -> Self {
        FamilySpec::Categorical {
            probabilities: vec![1.0 / outcomes as f64; outcomes],
        }
    }
}

/// Target and sources generated under the `c / sqrt(N_0)` displacement regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub family: FamilySpec,
    pub n0: usize,
    pub sources: Vec<SourceSpec>,
}

impl EnsembleSpec {
    pub fn build(&self, master_seed: u64) -> Result<TaskEnsemble> {
        let (family, theta0) = self.family.build()?;
        generate_ensemble(family, theta0, self.n0, &self.sources, master_seed)
    }

    /// One source with the given regime constant and budget.
    pub fn single(
        family: FamilySpec,
        n0: usize,
        c: f64,
        budget: usize,
        direction_seed: u64,
    ) -> Self {
        Self {
            family,
            n0,
            sources: vec![SourceSpec {
                c,
                budget,
                direction_seed,
            }],
        }
    }
}

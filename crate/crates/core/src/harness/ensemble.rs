use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{analytic_fisher, DirectionMatrix};
use crate::model::{ModelFamily, ParameterVector};
use crate::optimizer::{optimal_plan, QpMatrix, TransferPlan};
use crate::rng;

/// Redraws allowed per source before giving up on a displacement.
pub const MAX_DIRECTION_DRAWS: usize = 1000;

/// Requested source: displacement `c / sqrt(N_0)` in a seeded random direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub c: f64,
    pub budget: usize,
    pub direction_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceTask {
    pub theta: ParameterVector,
    pub budget: usize,
    /// `sqrt(N_0) * |theta_i - theta_0|`.
    pub c: f64,
}

/// Target `(theta_0, N_0)` and `K >= 1` sources.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskEnsemble {
    pub family: ModelFamily,
    pub theta0: ParameterVector,
    pub n0: usize,
    pub sources: Vec<SourceTask>,
    pub master_seed: u64,
}

fn unit_direction(d: usize, r: &mut rng::StreamRng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Draws each source as `theta_0 + (c_i / sqrt(N_0)) u_i` with `u_i` uniform on
/// the unit sphere, redrawing `u_i` while the result leaves the valid region.
pub fn generate_ensemble(
    family: ModelFamily,
    theta0: ParameterVector,
    n0: usize,
    specs: &[SourceSpec],
    master_seed: u64,
) -> Result<TaskEnsemble> {
    family.validate(&theta0)?;
    if n0 == 0 {
        return Err(Error::Argument(
            "target sample size N_0 must be >= 1".into(),
        ));
    }
    if specs.is_empty() {
        return Err(Error::Argument(
            "an ensemble needs at least one source".into(),
        ));
    }
    let d = family.dimension();
    let scale = 1.0 / (n0 as f64).sqrt();
    let mut sources = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        if !(spec.c.is_finite() && spec.c >= 0.0) {
            return Err(Error::Argument(format!(
                "source {i}: c must be finite and >= 0, got {}",
                spec.c
            )));
        }
        if spec.budget == 0 {
            return Err(Error::Argument(format!("source {i}: budget must be >= 1")));
        }
        let theta = if spec.c == 0.0 {
            theta0.clone()
        } else {
            let mut r = rng::seeded(spec.direction_seed);
            let radius = spec.c * scale;
            let mut found = None;
            for _ in 0..MAX_DIRECTION_DRAWS {
                let u = unit_direction(d, &mut r);
                let cand: Vec<f64> = theta0.iter().zip(&u).map(|(a, b)| a + radius * b).collect();
                if family.validate(&cand).is_ok() {
                    found = Some(ParameterVector::new(cand)?);
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::Regime(format!(
                    "source {i}: no valid parameter at distance {radius} (c = {}, N_0 = {n0}) after {MAX_DIRECTION_DRAWS} draws",
                    spec.c
                ))
            })?
        };
        sources.push(SourceTask {
            c: theta.distance(&theta0) / scale,
            theta,
            budget: spec.budget,
        });
    }
    Ok(TaskEnsemble {
        family,
        theta0,
        n0,
        sources,
        master_seed,
    })
}

impl TaskEnsemble {
    /// Ensemble from explicit source parameters and budgets.
    pub fn from_parameters(
        family: ModelFamily,
        theta0: ParameterVector,
        n0: usize,
        sources: Vec<(ParameterVector, usize)>,
    ) -> Result<Self> {
        family.validate(&theta0)?;
        if n0 == 0 || sources.is_empty() || sources.iter().any(|(_, n)| *n == 0) {
            return Err(Error::Argument(
                "ensemble needs N_0 >= 1, K >= 1 and every N_i >= 1".into(),
            ));
        }
        let root = (n0 as f64).sqrt();
        let sources = sources
            .into_iter()
            .map(|(theta, budget)| {
                family.validate(&theta)?;
                Ok(SourceTask {
                    c: root * theta.distance(&theta0),
                    theta,
                    budget,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            family,
            theta0,
            n0,
            sources,
            master_seed: 0,
        })
    }

    pub fn dimension(&self) -> usize {
        self.family.dimension()
    }

    pub fn budgets(&self) -> Vec<usize> {
        self.sources.iter().map(|s| s.budget).collect()
    }

    pub fn regime_constants(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.c).collect()
    }

    pub fn directions(&self) -> Result<DirectionMatrix> {
        let cols: Vec<&[f64]> = self.sources.iter().map(|s| &s.theta[..]).collect();
        DirectionMatrix::from_parameters(&self.theta0, &cols)
    }

    /// `Theta^T J(theta_0) Theta` with the analytic Fisher information.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        analytic_fisher(&self.family, &self.theta0)?.project(&self.directions()?)
    }

    /// `(theta_i - theta_0)^T J (theta_i - theta_0) / d`.
    pub fn discrepancy(&self, source: usize) -> Result<f64> {
        let g = self.gram()?;
        if source >= g.nrows() {
            return Err(Error::Argument(format!(
                "source index {source} out of range"
            )));
        }
        Ok(g[(source, source)] / self.dimension() as f64)
    }

    pub fn qp_matrix(&self) -> Result<QpMatrix> {
        let budgets: Vec<f64> = self.sources.iter().map(|s| s.budget as f64).collect();
        QpMatrix::from_gram(self.gram()?, &budgets, self.dimension())
    }

    pub fn optimal_plan(&self) -> Result<TransferPlan> {
        optimal_plan(
            &self.qp_matrix()?,
            &self.budgets(),
            self.n0,
            self.dimension(),
        )
    }

    /// Analytic plan for explicit weights with full quantities.
    pub fn plan_for_weights(&self, weights: &[f64]) -> Result<TransferPlan> {
        TransferPlan::from_weights(
            weights,
            &self.budgets(),
            &self.gram()?,
            self.n0,
            self.dimension(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn categorical3() -> (ModelFamily, ParameterVector) {
        (
            ModelFamily::categorical(3).unwrap(),
            ParameterVector::new(vec![1.0 / 3.0, 1.0 / 3.0]).unwrap(),
        )
    }

    #[test]
    fn zero_displacement_copies_target() {
        let (f, t0) = categorical3();
        let e = generate_ensemble(
            f,
            t0.clone(),
            100,
            &[SourceSpec {
                c: 0.0,
                budget: 10,
                direction_seed: 1,
            }],
            0,
        )
        .unwrap();
        assert_eq!(e.sources[0].theta, t0);
        assert_eq!(e.sources[0].c, 0.0);
    }

    #[test]
    fn displacement_has_requested_length() {
        let (f, t0) = categorical3();
        let spec = SourceSpec {
            c: 2.0,
            budget: 10,
            direction_seed: 7,
        };
        let e = generate_ensemble(f, t0.clone(), 400, &[spec], 0).unwrap();
        assert!((e.sources[0].theta.distance(&t0) - 0.1).abs() < 1e-12);
        assert!((e.sources[0].c - 2.0).abs() < 1e-10);
        let again = generate_ensemble(f, t0, 400, &[spec], 0).unwrap();
        assert_eq!(e, again);
    }

    #[test]
    fn impossible_displacement_is_a_regime_error() {
        let (f, t0) = categorical3();
        let spec = SourceSpec {
            c: 50.0,
            budget: 10,
            direction_seed: 7,
        };
        assert!(matches!(
            generate_ensemble(f, t0, 100, &[spec], 0),
            Err(Error::Regime(_))
        ));
    }

    #[test]
    fn discrepancy_matches_fisher_quadratic_form() {
        let f = ModelFamily::gaussian_iso(3).unwrap();
        let e = generate_ensemble(
            f,
            ParameterVector::zeros(3),
            100,
            &[SourceSpec {
                c: 3.0,
                budget: 50,
                direction_seed: 2,
            }],
            0,
        )
        .unwrap();
        // identity Fisher: t = |delta|^2 / d = c^2 / (N_0 d)
        assert!((e.discrepancy(0).unwrap() - 9.0 / 300.0).abs() < 1e-14);
    }
}

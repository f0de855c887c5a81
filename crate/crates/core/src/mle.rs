//! Weighted maximum-likelihood estimation.
//!
//! The estimator maximizes
//! `sum_target log p(x) + sum_i w_i sum_{source i} log p(x)`.
//! Categorical and Gaussian fits have closed forms (a weighted mixture of
//! empirical distributions and a weighted mean). Everything else, and any fit
//! with a ridge term, goes through a damped Newton ascent (`d <= 200`) or
//! gradient ascent with an adaptive step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelFamily, ParameterVector, Sample};

/// Samples drawn from one source task together with their weight.
#[derive(Clone, Debug)]
pub struct SourceBlock {
    pub samples: Vec<Sample>,
    pub weight: f64,
    /// Declared budget `N_i`; the block may not hold more samples.
    pub budget: Option<usize>,
}

impl SourceBlock {
    pub fn new(samples: Vec<Sample>, weight: f64) -> Self {
        Self {
            samples,
            weight,
            budget: None,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = Some(budget);
        self
    }
}

#[derive(Clone, Debug)]
pub struct WeightedDataset {
    target: Vec<Sample>,
    sources: Vec<SourceBlock>,
}

impl WeightedDataset {
    pub fn new(target: Vec<Sample>, sources: Vec<SourceBlock>) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::Argument(
                "weighted dataset needs at least one target sample".into(),
            ));
        }
        for (i, b) in sources.iter().enumerate() {
            if !b.weight.is_finite() || b.weight < 0.0 {
                return Err(Error::Argument(format!(
                    "source {i} weight must be finite and non-negative, got {}",
                    b.weight
                )));
            }
            if let Some(budget) = b.budget {
                if b.samples.len() > budget {
                    return Err(Error::Argument(format!(
                        "source {i} holds {} samples, more than its budget {budget}",
                        b.samples.len()
                    )));
                }
            }
        }
        Ok(Self { target, sources })
    }

    pub fn target(&self) -> &[Sample] {
        &self.target
    }

    pub fn sources(&self) -> &[SourceBlock] {
        &self.sources
    }

    /// `N_0 + sum_i w_i n_i`.
    pub fn total_weight(&self) -> f64 {
        self.target.len() as f64
            + self
                .sources
                .iter()
                .map(|b| b.weight * b.samples.len() as f64)
                .sum::<f64>()
    }

    /// Every `(sample, weight)` pair with zero-weight sources dropped.
    fn weighted(&self) -> impl Iterator<Item = (&Sample, f64)> {
        self.target.iter().map(|x| (x, 1.0)).chain(
            self.sources
                .iter()
                .filter(|b| b.weight > 0.0)
                .flat_map(|b| b.samples.iter().map(move |x| (x, b.weight))),
        )
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MleOptions {
    /// Stop when the gradient of the normalized objective is below this.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Coefficient of the `-ridge * |theta|^2` penalty.
    pub ridge: f64,
    #[serde(default)]
    pub initial: Option<ParameterVector>,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iter: 10_000,
            ridge: 0.0,
            initial: None,
        }
    }
}

/// Result of the iterative solver.
#[derive(Clone, Debug)]
pub struct MleFit {
    pub theta: ParameterVector,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Above this dimension the solver switches from Newton to gradient ascent.
pub const NEWTON_MAX_DIM: usize = 200;

/// Weighted MLE. Uses the closed form when one exists and `ridge == 0`.
pub fn fit_weighted_mle(
    family: &ModelFamily,
    data: &WeightedDataset,
    opts: &MleOptions,
) -> Result<ParameterVector> {
    if opts.ridge == 0.0 {
        match family {
            ModelFamily::Categorical { .. } | ModelFamily::GaussianIso { .. } => {
                return closed_form(family, data);
            }
            ModelFamily::SoftmaxRegression { .. } => {}
        }
    }
    fit_weighted_mle_iterative(family, data, opts).map(|f| f.theta)
}

/// Closed-form weighted MLE for the categorical and Gaussian families.
pub fn closed_form(family: &ModelFamily, data: &WeightedDataset) -> Result<ParameterVector> {
    let total = data.total_weight();
    match *family {
        ModelFamily::Categorical { outcomes } => {
            let mut mass = vec![0.0; outcomes];
            for (x, w) in data.weighted() {
                match x {
                    Sample::Outcome(k) if *k < outcomes => mass[*k] += w,
                    _ => {
                        return Err(Error::Domain {
                            family: family.name(),
                            detail: format!("{x:?}"),
                        })
                    }
                }
            }
            ParameterVector::new(mass[..outcomes - 1].iter().map(|m| m / total).collect())
        }
        ModelFamily::GaussianIso { dim } => {
            let mut sum = vec![0.0; dim];
            for (x, w) in data.weighted() {
                match x {
                    Sample::Point(v) if v.len() == dim => {
                        for (s, a) in sum.iter_mut().zip(v) {
                            *s += w * a;
                        }
                    }
                    _ => {
                        return Err(Error::Domain {
                            family: family.name(),
                            detail: format!("{x:?}"),
                        })
                    }
                }
            }
            ParameterVector::new(sum.into_iter().map(|s| s / total).collect())
        }
        ModelFamily::SoftmaxRegression { .. } => Err(Error::Unsupported {
            operation: "closed-form weighted MLE",
            family: family.name(),
        }),
    }
}

/// Normalized objective `(1/W) sum w log p - ridge |theta|^2`, with `W = N_0 + sum w_i n_i`.
pub fn weighted_log_likelihood(
    family: &ModelFamily,
    theta: &[f64],
    data: &WeightedDataset,
    ridge: f64,
) -> Result<f64> {
    let total = data.total_weight();
    let mut acc = 0.0;
    for (x, w) in data.weighted() {
        acc += w * family.log_density(theta, x)?;
    }
    Ok(acc / total - ridge * theta.iter().map(|v| v * v).sum::<f64>())
}

fn gradient(
    family: &ModelFamily,
    theta: &[f64],
    data: &WeightedDataset,
    ridge: f64,
) -> Result<DVector<f64>> {
    let total = data.total_weight();
    let mut g = DVector::zeros(theta.len());
    for (x, w) in data.weighted() {
        for (gi, si) in g.iter_mut().zip(family.score(theta, x)?) {
            *gi += w * si;
        }
    }
    g /= total;
    for (gi, t) in g.iter_mut().zip(theta) {
        *gi -= 2.0 * ridge * t;
    }
    Ok(g)
}

fn hessian(
    family: &ModelFamily,
    theta: &[f64],
    data: &WeightedDataset,
    ridge: f64,
) -> Result<DMatrix<f64>> {
    let d = theta.len();
    let total = data.total_weight();
    let mut h = DMatrix::zeros(d, d);
    for (x, w) in data.weighted() {
        family.accumulate_hessian(theta, x, w / total, &mut h)?;
    }
    for i in 0..d {
        h[(i, i)] -= 2.0 * ridge;
    }
    Ok(h)
}

fn default_start(family: &ModelFamily) -> Vec<f64> {
    match *family {
        ModelFamily::Categorical { outcomes } => vec![1.0 / outcomes as f64; outcomes - 1],
        _ => vec![0.0; family.dimension()],
    }
}

/// Objective value, or `-inf` outside the valid parameter region.
fn objective_or_neg_inf(
    family: &ModelFamily,
    theta: &[f64],
    data: &WeightedDataset,
    ridge: f64,
) -> Result<f64> {
    match weighted_log_likelihood(family, theta, data, ridge) {
        Ok(v) => Ok(v),
        Err(Error::Parameter(_)) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}

/// Iterative weighted MLE: damped Newton with backtracking line search, or
/// gradient ascent with an adaptive step above [`NEWTON_MAX_DIM`].
pub fn fit_weighted_mle_iterative(
    family: &ModelFamily,
    data: &WeightedDataset,
    opts: &MleOptions,
) -> Result<MleFit> {
    let d = family.dimension();
    let mut theta = match &opts.initial {
        Some(p) => p.to_vec(),
        None => default_start(family),
    };
    family.validate(&theta)?;
    let mut f = weighted_log_likelihood(family, &theta, data, opts.ridge)?;
    let mut step = 1.0;
    let mut grad_norm = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let g = gradient(family, &theta, data, opts.ridge)?;
        grad_norm = g.norm();
        if grad_norm <= opts.tolerance {
            return Ok(MleFit {
                theta: ParameterVector::new(theta)?,
                iterations: iter,
                grad_norm,
            });
        }
        let direction = if d <= NEWTON_MAX_DIM {
            newton_direction(&hessian(family, &theta, data, opts.ridge)?, &g)
        } else {
            g.clone()
        };
        let slope = g.dot(&direction);
        let mut a = if d <= NEWTON_MAX_DIM { 1.0 } else { step };
        let mut accepted = false;
        while a > 1e-20 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(direction.iter())
                .map(|(t, s)| t + a * s)
                .collect();
            let fc = objective_or_neg_inf(family, &cand, data, opts.ridge)?;
            // Armijo; once the predicted gain is below the rounding noise of
            // the objective, fall back to requiring a smaller gradient.
            let noise_level = slope <= 1e-10 * f.abs().max(1.0) && fc.is_finite();
            if fc >= f + 1e-4 * a * slope
                || (noise_level && gradient(family, &cand, data, opts.ridge)?.norm() < grad_norm)
            {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            a *= 0.5;
        }
        if !accepted {
            break;
        }
        step = (a * 2.0).min(1e6);
    }
    // One final check: the line search may have stalled exactly at the optimum.
    let g = gradient(family, &theta, data, opts.ridge)?;
    grad_norm = grad_norm.min(g.norm());
    if g.norm() <= opts.tolerance {
        return Ok(MleFit {
            theta: ParameterVector::new(theta)?,
            iterations: opts.max_iter,
            grad_norm: g.norm(),
        });
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        grad_norm,
        last: theta,
    })
}

/// Solves `(-H + mu I) step = g`, growing `mu` until the system is positive definite.
fn newton_direction(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let neg = -h;
    let scale = neg
        .diagonal()
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut mu = 0.0;
    for _ in 0..40 {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += mu;
        }
        if let Some(ch) = m.cholesky() {
            return ch.solve(g);
        }
        mu = if mu == 0.0 { 1e-12 * scale } else { mu * 10.0 };
    }
    g.clone()
}

/// Mixture-distribution view of a categorical weighted MLE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureDistribution {
    /// Convex coefficients over (target empirical, source empiricals...).
    pub component_weights: Vec<f64>,
    /// Outcome probabilities of the mixture.
    pub probabilities: Vec<f64>,
}

pub fn mixture_view(family: &ModelFamily, data: &WeightedDataset) -> Result<MixtureDistribution> {
    let ModelFamily::Categorical { outcomes } = *family else {
        return Err(Error::Unsupported {
            operation: "mixture_view",
            family: family.name(),
        });
    };
    let total = data.total_weight();
    let empirical = |samples: &[Sample]| -> Result<Vec<f64>> {
        let mut counts = vec![0.0; outcomes];
        for x in samples {
            match x {
                Sample::Outcome(k) if *k < outcomes => counts[*k] += 1.0,
                _ => {
                    return Err(Error::Domain {
                        family: "categorical",
                        detail: format!("{x:?}"),
                    })
                }
            }
        }
        let n = samples.len().max(1) as f64;
        Ok(counts.into_iter().map(|c| c / n).collect())
    };
    let mut component_weights = vec![data.target.len() as f64 / total];
    let mut probabilities: Vec<f64> = empirical(&data.target)?
        .into_iter()
        .map(|p| p * component_weights[0])
        .collect();
    for b in &data.sources {
        let coef = b.weight * b.samples.len() as f64 / total;
        component_weights.push(coef);
        if coef > 0.0 {
            for (acc, p) in probabilities.iter_mut().zip(empirical(&b.samples)?) {
                *acc += coef * p;
            }
        }
    }
    Ok(MixtureDistribution {
        component_weights,
        probabilities,
    })
}

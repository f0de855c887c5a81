//! The generalization measure `E[D(P_theta0 || P_theta_hat)]`: exact KL for
//! closed-form families, its asymptotic predictions, and Monte Carlo
//! estimates over repeated weighted-MLE fits.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::analytic_fisher;
use crate::harness::TaskEnsemble;
use crate::mle::{fit_weighted_mle, MleOptions, SourceBlock, WeightedDataset};
use crate::model::{ModelFamily, ParameterVector};
use crate::optimizer::TransferPlan;
use crate::rng;

/// Asymptotic KL split into its two terms, in nats.
/// `total = (d/2) (variance_term + bias_term)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlPrediction {
    pub variance_term: f64,
    pub bias_term: f64,
    pub total: f64,
}

impl KlPrediction {
    fn new(variance_term: f64, bias_term: f64, d: usize) -> Self {
        Self {
            variance_term,
            bias_term,
            total: 0.5 * d as f64 * (variance_term + bias_term),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
    pub master_seed: u64,
}

impl MonteCarloEstimate {
    pub fn from_values(values: &[f64], master_seed: u64) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::Argument(format!(
                "Monte Carlo estimate needs >= 2 trials, got {n}"
            )));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            trials: n,
            master_seed,
        })
    }
}

/// `D(P_p || P_q)` in nats.
pub fn kl_exact(family: &ModelFamily, theta_p: &[f64], theta_q: &[f64]) -> Result<f64> {
    match family {
        ModelFamily::Categorical { .. } => {
            let p = family.probabilities(theta_p)?;
            let q = family.probabilities(theta_q)?;
            let mut acc = 0.0;
            for (a, b) in p.iter().zip(&q) {
                if *a > 0.0 {
                    if *b <= 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    acc += a * (a / b).ln();
                }
            }
            Ok(acc.max(0.0))
        }
        ModelFamily::GaussianIso { dim } => {
            if theta_p.len() != *dim || theta_q.len() != *dim {
                return Err(Error::Parameter(format!(
                    "gaussian_iso expects {dim} parameters"
                )));
            }
            Ok(0.5
                * theta_p
                    .iter()
                    .zip(theta_q)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>())
        }
        ModelFamily::SoftmaxRegression { .. } => Err(Error::Unsupported {
            operation: "kl_exact",
            family: family.name(),
        }),
    }
}

/// Single-source asymptotic KL at `(N_0, n_1, w_1, t, d)`.
pub fn predict_kl_single(n0: f64, n1: f64, w1: f64, t: f64, d: usize) -> KlPrediction {
    let denom = (n0 + w1 * n1).powi(2);
    KlPrediction::new(
        (n0 + w1 * w1 * n1) / denom,
        w1 * w1 * n1 * n1 * t / denom,
        d,
    )
}

/// Multi-source asymptotic KL. `m` is the `K x K` QP matrix built with the
/// same quantities used here for `b_i = w_i n_i`.
pub fn predict_kl_multi(
    n0: f64,
    quantities: &[f64],
    weights: &[f64],
    m: &DMatrix<f64>,
    d: usize,
) -> Result<KlPrediction> {
    let k = quantities.len();
    if weights.len() != k || m.nrows() != k || m.ncols() != k {
        return Err(Error::Argument(format!(
            "predict_kl_multi: {} quantities, {} weights, {}x{} matrix",
            k,
            weights.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let b: Vec<f64> = weights.iter().zip(quantities).map(|(w, n)| w * n).collect();
    let s: f64 = b.iter().sum();
    let denom = (n0 + s).powi(2);
    if s <= 0.0 {
        return Ok(KlPrediction::new(n0 / denom, 0.0, d));
    }
    let alpha: Vec<f64> = b.iter().map(|v| v / s).collect();
    let t = quadratic(m, &alpha);
    Ok(KlPrediction::new(n0 / denom, s * s * t / denom, d))
}

pub(crate) fn quadratic(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..v.len() {
        if v[i] == 0.0 {
            continue;
        }
        for j in 0..v.len() {
            acc += v[i] * m[(i, j)] * v[j];
        }
    }
    acc
}

/// Weighted-MLE estimates over `trials` fresh draws from the ensemble.
///
/// Each trial uses its own stream derived from `(master_seed, trial)`; the
/// target and each source draw from separate sub-streams, so a source with
/// zero weight or quantity leaves the others untouched.
pub fn mc_estimates(
    ensemble: &TaskEnsemble,
    weights: &[f64],
    quantities: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<Vec<ParameterVector>> {
    let k = ensemble.sources.len();
    if weights.len() != k || quantities.len() != k {
        return Err(Error::Argument(format!(
            "plan has {} weights and {} quantities for {k} sources",
            weights.len(),
            quantities.len()
        )));
    }
    for (i, (&n, src)) in quantities.iter().zip(&ensemble.sources).enumerate() {
        if n > src.budget {
            return Err(Error::Argument(format!(
                "quantity {n} for source {i} exceeds budget {}",
                src.budget
            )));
        }
    }
    let family = ensemble.family;
    let opts = MleOptions::default();
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let trial_seed = rng::derive_seed(master_seed, trial as u64);
            let mut r = rng::stream(trial_seed, 0);
            let target = family.sample_with(&ensemble.theta0, ensemble.n0, &mut r)?;
            let mut blocks = Vec::with_capacity(k);
            for (i, src) in ensemble.sources.iter().enumerate() {
                if weights[i] > 0.0 && quantities[i] > 0 {
                    let mut r = rng::stream(trial_seed, i as u64 + 1);
                    let xs = family.sample_with(&src.theta, quantities[i], &mut r)?;
                    blocks.push(SourceBlock::new(xs, weights[i]).with_budget(src.budget));
                }
            }
            let data = WeightedDataset::new(target, blocks)?;
            fit_weighted_mle(&family, &data, &opts)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .enumerate()
        .map(|(trial, r)| r.map_err(|e| e.in_trial(trial)))
        .collect()
}

/// Monte Carlo `E[KL(theta_0 || theta_hat)]` for an explicit weight/quantity plan.
pub fn mc_expected_kl_with(
    ensemble: &TaskEnsemble,
    weights: &[f64],
    quantities: &[usize],
    trials: usize,
    master_seed: u64,
) -> Result<MonteCarloEstimate> {
    if trials < 2 {
        return Err(Error::Argument(format!(
            "Monte Carlo needs >= 2 trials, got {trials}"
        )));
    }
    let estimates = mc_estimates(ensemble, weights, quantities, trials, master_seed)?;
    let kls = estimates
        .iter()
        .enumerate()
        .map(|(i, est)| {
            kl_exact(&ensemble.family, &ensemble.theta0, est).map_err(|e| e.in_trial(i))
        })
        .collect::<Result<Vec<f64>>>()?;
    MonteCarloEstimate::from_values(&kls, master_seed)
}

pub fn mc_expected_kl(
    ensemble: &TaskEnsemble,
    plan: &TransferPlan,
    trials: usize,
    master_seed: u64,
) -> Result<MonteCarloEstimate> {
    mc_expected_kl_with(
        ensemble,
        &plan.weights,
        &plan.quantities,
        trials,
        master_seed,
    )
}

/// Returns `(mean KL(theta_0 || est), 0.5 tr(J(theta_0) Cov))` where `Cov` is
/// the empirical second moment of `est - theta_0`.
pub fn mse_kl_bridge(
    family: &ModelFamily,
    theta0: &ParameterVector,
    estimates: &[ParameterVector],
) -> Result<(f64, f64)> {
    if estimates.len() < 2 {
        return Err(Error::Argument(
            "mse_kl_bridge needs at least two estimates".into(),
        ));
    }
    let j = analytic_fisher(family, theta0)?;
    let n = estimates.len() as f64;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for est in estimates {
        lhs += kl_exact(family, theta0, est)?;
        let delta: Vec<f64> = est.iter().zip(theta0.iter()).map(|(a, b)| a - b).collect();
        rhs += j.quadratic_form(&delta)?;
    }
    Ok((lhs / n, 0.5 * rhs / n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_examples() {
        let g = ModelFamily::gaussian_iso(1).unwrap();
        assert_eq!(kl_exact(&g, &[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(kl_exact(&g, &[0.0], &[1.0]).unwrap(), 0.5);
        let b = ModelFamily::categorical(2).unwrap();
        let v = kl_exact(&b, &[0.5], &[0.25]).unwrap();
        let oracle = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.14384).abs() < 1e-5);
        assert_eq!(kl_exact(&b, &[0.5], &[0.5]).unwrap(), 0.0);
        assert_eq!(kl_exact(&b, &[0.5], &[1.0]).unwrap(), f64::INFINITY);
        let s = ModelFamily::softmax_regression(1, 2).unwrap();
        assert!(kl_exact(&s, &[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn single_prediction_examples() {
        let p = predict_kl_single(100.0, 400.0, 0.0, 0.3, 3);
        assert!((p.total - 3.0 / 200.0).abs() < 1e-15);
        let p = predict_kl_single(100.0, 400.0, 1.0, 0.0, 2);
        assert!((p.total - 2.0 / (2.0 * 500.0)).abs() < 1e-15);
        assert!(p.variance_term >= 0.0 && p.bias_term == 0.0);
    }

    #[test]
    fn multi_prediction_zero_weights() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]);
        let p = predict_kl_multi(50.0, &[10.0, 20.0], &[0.0, 0.0], &m, 4).unwrap();
        assert!((p.total - 4.0 / 100.0).abs() < 1e-15);
        assert_eq!(p.bias_term, 0.0);
        assert!(predict_kl_multi(50.0, &[10.0], &[0.0, 0.0], &m, 4).is_err());
    }

    #[test]
    fn monte_carlo_estimate_statistics() {
        let e = MonteCarloEstimate::from_values(&[1.0, 3.0], 5).unwrap();
        assert_eq!(e.mean, 2.0);
        assert!((e.std_error - 1.0).abs() < 1e-15);
        assert!(MonteCarloEstimate::from_values(&[1.0], 0).is_err());
    }

    #[test]
    fn bridge_examples() {
        let fam = ModelFamily::categorical(3).unwrap();
        let theta0 = ParameterVector::new(vec![0.2, 0.3]).unwrap();
        let (l, r) = mse_kl_bridge(&fam, &theta0, &[theta0.clone(), theta0.clone()]).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        let est = ParameterVector::new(vec![0.22, 0.27]).unwrap();
        let (l, r) = mse_kl_bridge(&fam, &theta0, &[est.clone(), est.clone()]).unwrap();
        assert!((l - kl_exact(&fam, &theta0, &est).unwrap()).abs() < 1e-15);
        let j = analytic_fisher(&fam, &theta0).unwrap();
        let q = j.quadratic_form(&[0.02, -0.03]).unwrap();
        assert!((r - 0.5 * q).abs() < 1e-15);
        assert!(mse_kl_bridge(&fam, &theta0, &[est]).is_err());
    }
}

//! Parametric model families on which every quantity can be computed exactly.
//!
//! * `categorical(m)`: free parameters are the first `m - 1` outcome
//!   probabilities, the last one is implied. Densities and scores require an
//!   interior point (every probability at least [`MIN_PROBABILITY`]).
//! * `gaussian_iso(d)`: unit-covariance Gaussian, only the mean is a parameter.
//! * `softmax_regression(p, c)`: conditional model `y | z ~ softmax(W z)` with
//!   `W` stored row-major as `c x p`. Features are drawn standard normal when
//!   sampling and are otherwise treated as fixed data, so `log_density` is the
//!   conditional log-likelihood.

use std::fmt;
use std::ops::Deref;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Smallest admissible categorical probability for densities and scores.
pub const MIN_PROBABILITY: f64 = 1e-9;

const SIMPLEX_SLACK: f64 = 1e-12;

/// A finite real parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &ParameterVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(p: ParameterVector) -> Self {
        p.0
    }
}

/// One observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sample {
    Outcome(usize),
    Point(Vec<f64>),
    Labeled { features: Vec<f64>, label: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Categorical { outcomes: usize },
    GaussianIso { dim: usize },
    SoftmaxRegression { features: usize, classes: usize },
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelFamily::Categorical { outcomes } => write!(f, "categorical(m={outcomes})"),
            ModelFamily::GaussianIso { dim } => write!(f, "gaussian_iso(d={dim})"),
            ModelFamily::SoftmaxRegression { features, classes } => {
                write!(f, "softmax_regression(p={features}, c={classes})")
            }
        }
    }
}

impl ModelFamily {
    pub fn categorical(outcomes: usize) -> Result<Self> {
        if outcomes < 2 {
            return Err(Error::Argument(format!(
                "categorical family needs at least 2 outcomes, got {outcomes}"
            )));
        }
        Ok(ModelFamily::Categorical { outcomes })
    }

    pub fn gaussian_iso(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument(
                "gaussian_iso dimension must be positive".into(),
            ));
        }
        Ok(ModelFamily::GaussianIso { dim })
    }

    pub fn softmax_regression(features: usize, classes: usize) -> Result<Self> {
        if features == 0 || classes < 2 {
            return Err(Error::Argument(format!(
                "softmax_regression needs features >= 1 and classes >= 2, got ({features}, {classes})"
            )));
        }
        Ok(ModelFamily::SoftmaxRegression { features, classes })
    }

    /// Config-file name of the family.
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Categorical { .. } => "categorical",
            ModelFamily::GaussianIso { .. } => "gaussian_iso",
            ModelFamily::SoftmaxRegression { .. } => "softmax_regression",
        }
    }

    /// Number of free parameters `d`.
    pub fn dimension(&self) -> usize {
        match *self {
            ModelFamily::Categorical { outcomes } => outcomes - 1,
            ModelFamily::GaussianIso { dim } => dim,
            ModelFamily::SoftmaxRegression { features, classes } => features * classes,
        }
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dimension() {
            return Err(Error::Parameter(format!(
                "{} expects {} parameters, got {}",
                self,
                self.dimension(),
                theta.len()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("parameters must be finite".into()));
        }
        Ok(())
    }

    /// Full outcome probability vector for a categorical parameter, without
    /// interior checks beyond the closed simplex.
    pub fn probabilities(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let ModelFamily::Categorical { .. } = self else {
            return Err(Error::Unsupported {
                operation: "probabilities",
                family: self.name(),
            });
        };
        self.check_len(theta)?;
        let mut p = theta.to_vec();
        p.push(1.0 - theta.iter().sum::<f64>());
        if p.iter().any(|&v| v < -SIMPLEX_SLACK) {
            return Err(Error::Parameter(format!(
                "categorical probabilities {p:?} leave the simplex"
            )));
        }
        for v in &mut p {
            *v = v.max(0.0);
        }
        Ok(p)
    }

    /// Checks that `theta` is a point where densities, scores and Fisher
    /// information are finite.
    pub fn validate(&self, theta: &[f64]) -> Result<()> {
        self.check_len(theta)?;
        if let ModelFamily::Categorical { .. } = self {
            let last = 1.0 - theta.iter().sum::<f64>();
            if let Some(v) = theta
                .iter()
                .chain(std::iter::once(&last))
                .find(|&&v| v < MIN_PROBABILITY)
            {
                return Err(Error::Parameter(format!(
                    "categorical probability {v} is below the interior bound {MIN_PROBABILITY}"
                )));
            }
        }
        Ok(())
    }

    fn check_sample(&self, x: &Sample) -> Result<()> {
        let bad = |detail: String| Error::Domain {
            family: self.name(),
            detail,
        };
        match (*self, x) {
            (ModelFamily::Categorical { outcomes }, Sample::Outcome(k)) => {
                if *k >= outcomes {
                    return Err(bad(format!("outcome {k} >= {outcomes}")));
                }
            }
            (ModelFamily::GaussianIso { dim }, Sample::Point(v)) => {
                if v.len() != dim || v.iter().any(|a| !a.is_finite()) {
                    return Err(bad(format!("expected {dim} finite coordinates")));
                }
            }
            (
                ModelFamily::SoftmaxRegression { features, classes },
                Sample::Labeled { features: z, label },
            ) => {
                if z.len() != features || z.iter().any(|a| !a.is_finite()) {
                    return Err(bad(format!("expected {features} finite features")));
                }
                if *label >= classes {
                    return Err(bad(format!("label {label} >= {classes}")));
                }
            }
            _ => return Err(bad(format!("wrong sample kind {x:?}"))),
        }
        Ok(())
    }

    pub fn log_density(&self, theta: &[f64], x: &Sample) -> Result<f64> {
        self.validate(theta)?;
        self.check_sample(x)?;
        Ok(match (*self, x) {
            (ModelFamily::Categorical { outcomes }, Sample::Outcome(k)) => {
                if *k + 1 == outcomes {
                    (1.0 - theta.iter().sum::<f64>()).ln()
                } else {
                    theta[*k].ln()
                }
            }
            (ModelFamily::GaussianIso { dim }, Sample::Point(v)) => {
                let sq: f64 = v.iter().zip(theta).map(|(a, m)| (a - m) * (a - m)).sum();
                -0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln() - 0.5 * sq
            }
            (
                ModelFamily::SoftmaxRegression { features, classes },
                Sample::Labeled { features: z, label },
            ) => {
                let logits = softmax_logits(theta, z, features, classes);
                logits[*label] - log_sum_exp(&logits)
            }
            _ => unreachable!("checked by check_sample"),
        })
    }

    /// Gradient of `log_density` with respect to the parameters.
    pub fn score(&self, theta: &[f64], x: &Sample) -> Result<Vec<f64>> {
        self.validate(theta)?;
        self.check_sample(x)?;
        Ok(match (*self, x) {
            (ModelFamily::Categorical { outcomes }, Sample::Outcome(k)) => {
                if *k + 1 == outcomes {
                    let last = 1.0 - theta.iter().sum::<f64>();
                    vec![-1.0 / last; outcomes - 1]
                } else {
                    let mut g = vec![0.0; outcomes - 1];
                    g[*k] = 1.0 / theta[*k];
                    g
                }
            }
            (ModelFamily::GaussianIso { .. }, Sample::Point(v)) => {
                v.iter().zip(theta).map(|(a, m)| a - m).collect()
            }
            (
                ModelFamily::SoftmaxRegression { features, classes },
                Sample::Labeled { features: z, label },
            ) => {
                let probs = softmax(&softmax_logits(theta, z, features, classes));
                let mut g = vec![0.0; features * classes];
                for (k, pk) in probs.iter().enumerate() {
                    let coef = if k == *label { 1.0 - pk } else { -pk };
                    for (j, zj) in z.iter().enumerate() {
                        g[k * features + j] = coef * zj;
                    }
                }
                g
            }
            _ => unreachable!("checked by check_sample"),
        })
    }

    /// Adds `weight * Hessian(log_density)` at `(theta, x)` into `acc`.
    pub(crate) fn accumulate_hessian(
        &self,
        theta: &[f64],
        x: &Sample,
        weight: f64,
        acc: &mut DMatrix<f64>,
    ) -> Result<()> {
        self.validate(theta)?;
        self.check_sample(x)?;
        match (*self, x) {
            (ModelFamily::Categorical { outcomes }, Sample::Outcome(k)) => {
                if *k + 1 == outcomes {
                    let last = 1.0 - theta.iter().sum::<f64>();
                    acc.add_scalar_mut(-weight / (last * last));
                } else {
                    acc[(*k, *k)] -= weight / (theta[*k] * theta[*k]);
                }
            }
            (ModelFamily::GaussianIso { dim }, Sample::Point(_)) => {
                for i in 0..dim {
                    acc[(i, i)] -= weight;
                }
            }
            (
                ModelFamily::SoftmaxRegression { features, classes },
                Sample::Labeled { features: z, .. },
            ) => {
                let probs = softmax(&softmax_logits(theta, z, features, classes));
                for k in 0..classes {
                    for l in 0..classes {
                        let c = if k == l {
                            probs[k] - probs[k] * probs[l]
                        } else {
                            -probs[k] * probs[l]
                        };
                        if c == 0.0 {
                            continue;
                        }
                        for j in 0..features {
                            for i in 0..features {
                                acc[(k * features + j, l * features + i)] -=
                                    weight * c * z[j] * z[i];
                            }
                        }
                    }
                }
            }
            _ => unreachable!("checked by check_sample"),
        }
        Ok(())
    }

    /// Draws `n` i.i.d. samples. Identical `(theta, n, seed)` give identical output.
    pub fn sample(&self, theta: &[f64], n: usize, seed: u64) -> Result<Vec<Sample>> {
        let mut rng = rng::seeded(seed);
        self.sample_with(theta, n, &mut rng)
    }

    /// Draws `n` samples from a caller-supplied generator. Categorical
    /// sampling accepts the closed simplex, so degenerate distributions work.
    pub fn sample_with<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Sample>> {
        match *self {
            ModelFamily::Categorical { .. } => {
                let p = self.probabilities(theta)?;
                let mut cdf = Vec::with_capacity(p.len());
                let mut acc = 0.0;
                for v in &p {
                    acc += v;
                    cdf.push(acc);
                }
                let total = acc;
                Ok((0..n)
                    .map(|_| {
                        let u: f64 = rng.random::<f64>() * total;
                        Sample::Outcome(draw_index(&cdf, &p, u))
                    })
                    .collect())
            }
            ModelFamily::GaussianIso { dim } => {
                self.check_len(theta)?;
                Ok((0..n)
                    .map(|_| {
                        Sample::Point(
                            (0..dim)
                                .map(|i| {
                                    theta[i] + Distribution::<f64>::sample(&StandardNormal, rng)
                                })
                                .collect::<Vec<f64>>(),
                        )
                    })
                    .collect())
            }
            ModelFamily::SoftmaxRegression { features, classes } => {
                self.check_len(theta)?;
                Ok((0..n)
                    .map(|_| {
                        let z: Vec<f64> =
                            (0..features).map(|_| StandardNormal.sample(rng)).collect();
                        let probs = softmax(&softmax_logits(theta, &z, features, classes));
                        let mut cdf = Vec::with_capacity(classes);
                        let mut acc = 0.0;
                        for v in &probs {
                            acc += v;
                            cdf.push(acc);
                        }
                        let u: f64 = rng.random::<f64>() * acc;
                        let label = draw_index(&cdf, &probs, u);
                        Sample::Labeled { features: z, label }
                    })
                    .collect())
            }
        }
    }

    /// Draws feature vectors and labels them with the conditional model at `theta`.
    pub fn label_features<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        features: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<Vec<Sample>> {
        let ModelFamily::SoftmaxRegression {
            features: p,
            classes,
        } = *self
        else {
            return Err(Error::Unsupported {
                operation: "label_features",
                family: self.name(),
            });
        };
        self.check_len(theta)?;
        features
            .iter()
            .map(|z| {
                if z.len() != p {
                    return Err(Error::Argument(format!(
                        "feature vector of length {} != {p}",
                        z.len()
                    )));
                }
                let probs = softmax(&softmax_logits(theta, z, p, classes));
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut label = classes - 1;
                for (k, v) in probs.iter().enumerate() {
                    acc += v;
                    if u < acc {
                        label = k;
                        break;
                    }
                }
                Ok(Sample::Labeled {
                    features: z.clone(),
                    label,
                })
            })
            .collect()
    }
}

/// First index whose cumulative mass exceeds `u`, skipping zero-mass outcomes.
fn draw_index(cdf: &[f64], p: &[f64], u: f64) -> usize {
    let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    if p[idx] > 0.0 {
        return idx;
    }
    // u landed on the upper edge; fall back to the last outcome with mass.
    p.iter().rposition(|&v| v > 0.0).unwrap_or(idx)
}

pub(crate) fn softmax_logits(
    theta: &[f64],
    z: &[f64],
    features: usize,
    classes: usize,
) -> Vec<f64> {
    (0..classes)
        .map(|k| {
            theta[k * features..(k + 1) * features]
                .iter()
                .zip(z)
                .map(|(w, zj)| w * zj)
                .sum()
        })
        .collect()
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(v: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(v);
    v.iter().map(|x| (x - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn fd_gradient(family: &ModelFamily, theta: &[f64], x: &Sample, h: f64) -> Vec<f64> {
        (0..theta.len())
            .map(|i| {
                let mut up = theta.to_vec();
                let mut dn = theta.to_vec();
                up[i] += h;
                dn[i] -= h;
                (family.log_density(&up, x).unwrap() - family.log_density(&dn, x).unwrap())
                    / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1.0);
        num / den
    }

    #[test]
    fn log_density_examples() {
        let bern = ModelFamily::categorical(2).unwrap();
        assert_eq!(
            bern.log_density(&[0.5], &Sample::Outcome(0)).unwrap(),
            0.5f64.ln()
        );
        let g = ModelFamily::gaussian_iso(1).unwrap();
        let v = g.log_density(&[0.0], &Sample::Point(vec![0.0])).unwrap();
        assert!((v + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        let cat = ModelFamily::categorical(3).unwrap();
        let v = cat.log_density(&[0.2, 0.3], &Sample::Outcome(2)).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_density_errors() {
        let cat = ModelFamily::categorical(3).unwrap();
        assert!(matches!(
            cat.log_density(&[0.2, 0.3], &Sample::Outcome(3)),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            cat.log_density(&[0.7, 0.4], &Sample::Outcome(0)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            cat.log_density(&[0.2], &Sample::Outcome(0)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            cat.log_density(&[0.2, 0.3], &Sample::Point(vec![1.0])),
            Err(Error::Domain { .. })
        ));
        let sm = ModelFamily::softmax_regression(2, 3).unwrap();
        let x = Sample::Labeled {
            features: vec![1.0, 2.0],
            label: 3,
        };
        assert!(sm.log_density(&[0.0; 6], &x).is_err());
    }

    #[test]
    fn score_examples() {
        let g = ModelFamily::gaussian_iso(1).unwrap();
        assert_eq!(
            g.score(&[0.0], &Sample::Point(vec![1.0])).unwrap(),
            vec![1.0]
        );
        let cat = ModelFamily::categorical(4).unwrap();
        let theta = [0.25, 0.25, 0.25];
        let mut mean = [0.0; 3];
        for k in 0..4 {
            let s = cat.score(&theta, &Sample::Outcome(k)).unwrap();
            for i in 0..3 {
                mean[i] += 0.25 * s[i];
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn softmax_score_matches_finite_differences() {
        let fam = ModelFamily::softmax_regression(3, 4).unwrap();
        let mut r = rng::seeded(11);
        let theta: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = Sample::Labeled {
            features: vec![0.3, -1.2, 0.8],
            label: 2,
        };
        let s = fam.score(&theta, &x).unwrap();
        let fd = fd_gradient(&fam, &theta, &x, 1e-5);
        assert!(rel_err(&s, &fd) < 1e-6);
    }

    #[test]
    fn score_fd_agreement_all_families() {
        let mut r = rng::seeded(2024);
        let fams = [
            ModelFamily::categorical(4).unwrap(),
            ModelFamily::gaussian_iso(3).unwrap(),
            ModelFamily::softmax_regression(2, 3).unwrap(),
        ];
        for fam in fams {
            for _ in 0..100 {
                let theta: Vec<f64> = match fam {
                    ModelFamily::Categorical { outcomes } => {
                        let raw: Vec<f64> =
                            (0..outcomes).map(|_| r.random_range(0.2..1.0)).collect();
                        let s: f64 = raw.iter().sum();
                        raw[..outcomes - 1].iter().map(|v| v / s).collect()
                    }
                    _ => (0..fam.dimension())
                        .map(|_| r.random_range(-1.5..1.5))
                        .collect(),
                };
                let x = fam.sample_with(&theta, 1, &mut r).unwrap().pop().unwrap();
                let s = fam.score(&theta, &x).unwrap();
                let fd = fd_gradient(&fam, &theta, &x, 1e-6);
                assert!(rel_err(&s, &fd) <= 1e-6, "{fam}: {s:?} vs {fd:?}");
            }
        }
    }

    #[test]
    fn hessian_matches_score_differences() {
        let mut r = rng::seeded(5);
        for fam in [
            ModelFamily::categorical(3).unwrap(),
            ModelFamily::gaussian_iso(2).unwrap(),
            ModelFamily::softmax_regression(2, 3).unwrap(),
        ] {
            let theta: Vec<f64> = match fam {
                ModelFamily::Categorical { .. } => vec![0.3, 0.45],
                _ => (0..fam.dimension())
                    .map(|_| r.random_range(-1.0..1.0))
                    .collect(),
            };
            let x = fam.sample_with(&theta, 1, &mut r).unwrap().pop().unwrap();
            let d = fam.dimension();
            let mut h = DMatrix::zeros(d, d);
            fam.accumulate_hessian(&theta, &x, 1.0, &mut h).unwrap();
            for i in 0..d {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[i] += 1e-6;
                dn[i] -= 1e-6;
                let su = fam.score(&up, &x).unwrap();
                let sd = fam.score(&dn, &x).unwrap();
                for j in 0..d {
                    let fd = (su[j] - sd[j]) / 2e-6;
                    assert!(
                        (h[(j, i)] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                        "{fam} ({j},{i})"
                    );
                }
            }
        }
    }

    #[test]
    fn sampling_examples() {
        let cat = ModelFamily::categorical(2).unwrap();
        assert!(cat.sample(&[0.5], 0, 1).unwrap().is_empty());
        assert_eq!(
            cat.sample(&[1.0], 5, 9).unwrap(),
            vec![Sample::Outcome(0); 5]
        );
        let s = cat.sample(&[0.5], 100_000, 3).unwrap();
        let freq = s.iter().filter(|x| **x == Sample::Outcome(0)).count() as f64 / 1e5;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
        assert!(cat.sample(&[1.2], 3, 0).is_err());
    }

    #[test]
    fn empirical_score_mean_is_near_zero() {
        let n = 100_000usize;
        let bound = |d: usize| 5.0 * d as f64 / (n as f64).sqrt();
        let cases: Vec<(ModelFamily, Vec<f64>)> = vec![
            (ModelFamily::categorical(3).unwrap(), vec![0.2, 0.3]),
            (ModelFamily::gaussian_iso(2).unwrap(), vec![0.5, -1.0]),
            (
                ModelFamily::softmax_regression(2, 2).unwrap(),
                vec![0.5, -0.3, -0.2, 0.8],
            ),
        ];
        for (fam, theta) in cases {
            let xs = fam.sample(&theta, n, 77).unwrap();
            let mut mean = vec![0.0; fam.dimension()];
            for x in &xs {
                for (m, g) in mean.iter_mut().zip(fam.score(&theta, x).unwrap()) {
                    *m += g / n as f64;
                }
            }
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= bound(fam.dimension()), "{fam}: {norm}");
        }
    }

    proptest! {
        #[test]
        fn categorical_normalizes(raw in proptest::collection::vec(0.01f64..1.0, 2..7)) {
            let m = raw.len();
            let total: f64 = raw.iter().sum();
            let theta: Vec<f64> = raw[..m - 1].iter().map(|v| v / total).collect();
            let fam = ModelFamily::categorical(m).unwrap();
            let sum: f64 = (0..m).map(|k| fam.log_density(&theta, &Sample::Outcome(k)).unwrap().exp()).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn seeded_sampling_is_reproducible(seed in any::<u64>(), n in 0usize..50) {
            let fam = ModelFamily::softmax_regression(2, 3).unwrap();
            let theta = [0.1, -0.2, 0.3, 0.0, 0.5, -0.5];
            prop_assert_eq!(fam.sample(&theta, n, seed).unwrap(), fam.sample(&theta, n, seed).unwrap());
        }
    }
}

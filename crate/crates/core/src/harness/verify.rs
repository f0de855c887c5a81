//! Oracle comparisons for the closed-form claims: weight and quantity
//! optimality, dimension scaling, multi-source optimality, the weighted-average
//! expectation, and the MSE/KL bridge.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    linear_grid, sweep_quantity, sweep_weight, EnsembleSpec, FamilySpec, SeedScheme, SweepResult,
    TaskEnsemble, WeightRule,
};
use crate::error::{Error, Result};
use crate::kl::{
    mc_estimates, mc_expected_kl, mc_expected_kl_with, mse_kl_bridge, predict_kl_single,
    MonteCarloEstimate,
};
use crate::model::{ModelFamily, ParameterVector};
use crate::optimizer::single_source_weight;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TheoremId {
    #[serde(rename = "T1-weight")]
    T1Weight,
    #[serde(rename = "T1-quantity")]
    T1Quantity,
    #[serde(rename = "P1-dim")]
    P1Dim,
    #[serde(rename = "T2-weights")]
    T2Weights,
    #[serde(rename = "L1-expectation")]
    L1Expectation,
    #[serde(rename = "L2-bridge")]
    L2Bridge,
}

/// One comparison: `observed` against `bound` with the stated relation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub bound: f64,
    pub relation: &'static str,
}

impl Check {
    fn at_most(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: observed <= bound,
            observed,
            bound,
            relation: "<=",
        }
    }

    fn below(name: impl Into<String>, observed: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: observed < bound,
            observed,
            bound,
            relation: "<",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verification {
    pub theorem: TheoremId,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub data: VerificationData,
}

impl Verification {
    fn new(theorem: TheoremId, checks: Vec<Check>, data: VerificationData) -> Self {
        Self {
            theorem,
            passed: checks.iter().all(|c| c.passed),
            checks,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationData {
    WeightSweep {
        t: f64,
        w_star: f64,
        sweep: SweepResult,
        at_optimum: OptimumFidelity,
    },
    QuantitySweep {
        t: f64,
        sweep: SweepResult,
        derivatives: Vec<DerivativeProbe>,
    },
    DimensionScaling {
        points: Vec<DimensionPoint>,
    },
    RandomPlans {
        optimal: crate::optimizer::TransferPlan,
        optimal_mc: MonteCarloEstimate,
        best_random_predicted: f64,
        top_random: Vec<RandomPlanResult>,
    },
    Expectation {
        expected: Vec<f64>,
        mean: Vec<f64>,
        std_error: Vec<f64>,
    },
    Bridge {
        expected_kl: f64,
        half_trace: f64,
        relative_gap: f64,
    },
}

/// MC versus asymptotic prediction at the optimal single-source weight.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimumFidelity {
    pub n0: usize,
    pub t: f64,
    pub w_star: f64,
    pub mc: MonteCarloEstimate,
    pub predicted: f64,
    /// `|mc - predicted| / predicted`.
    pub relative_gap: f64,
    /// Standard error of `relative_gap`.
    pub relative_gap_se: f64,
}

/// Runs the Monte Carlo estimate at `w* = 1/(1 + t N_1)` for source 0.
pub fn optimum_fidelity(
    ensemble: &TaskEnsemble,
    trials: usize,
    seed: u64,
) -> Result<OptimumFidelity> {
    let t = ensemble.discrepancy(0)?;
    let n1 = ensemble.sources[0].budget;
    let w = single_source_weight(t, n1 as f64);
    let k = ensemble.sources.len();
    let mut weights = vec![0.0; k];
    let mut quantities = vec![0; k];
    weights[0] = w;
    quantities[0] = n1;
    let mc = mc_expected_kl_with(ensemble, &weights, &quantities, trials, seed)?;
    let predicted =
        predict_kl_single(ensemble.n0 as f64, n1 as f64, w, t, ensemble.dimension()).total;
    Ok(OptimumFidelity {
        n0: ensemble.n0,
        t,
        w_star: w,
        relative_gap: (mc.mean - predicted).abs() / predicted,
        relative_gap_se: mc.std_error / predicted,
        mc,
        predicted,
    })
}

/// Composed objective `n -> KL(N_0, n, w*(n), t, d)` and its derivative.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeProbe {
    pub n: f64,
    pub objective: f64,
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

pub fn composed_quantity_objective(n0: f64, n: f64, t: f64, d: usize) -> f64 {
    predict_kl_single(n0, n, single_source_weight(t, n), t, d).total
}

/// `d/dn` of [`composed_quantity_objective`]: `-(d/2) / (N_0 + n + N_0 n t)^2`.
pub fn composed_quantity_derivative(n0: f64, n: f64, t: f64, d: usize) -> f64 {
    -0.5 * d as f64 / (n0 + n + n0 * n * t).powi(2)
}

pub fn derivative_probe(n0: f64, n: f64, t: f64, d: usize) -> DerivativeProbe {
    let h = 1e-4 * (n0 + n);
    let f = |x: f64| composed_quantity_objective(n0, x, t, d);
    let fd = (f(n + h) - f(n - h)) / (2.0 * h);
    let analytic = composed_quantity_derivative(n0, n, t, d);
    DerivativeProbe {
        n,
        objective: f(n),
        analytic,
        finite_difference: fd,
        relative_error: ((fd - analytic) / analytic).abs(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionPoint {
    pub d: usize,
    pub predicted: f64,
    pub mc: MonteCarloEstimate,
    pub predicted_ratio: f64,
    pub mc_ratio: f64,
    pub mc_ratio_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomPlanResult {
    pub weights: Vec<f64>,
    pub predicted: f64,
    pub mc: MonteCarloEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub ensemble: EnsembleSpec,
    pub grid: GridSpec,
    pub trials: usize,
    pub tolerance_steps: f64,
    /// Relative slack on top of 3 standard errors at the optimum.
    pub relative_tolerance: f64,
    pub seed_scheme: SeedScheme,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleSpec::single(FamilySpec::uniform_categorical(3), 2000, 2.0, 2000, 1),
            grid: GridSpec {
                start: 0.0,
                stop: 2.0,
                step: 0.05,
            },
            trials: 4000,
            tolerance_steps: 2.0,
            relative_tolerance: 0.15,
            seed_scheme: SeedScheme::Common,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantityConfig {
    pub ensemble: EnsembleSpec,
    /// Quantities `k N_1 / points` for `k = 1..=points`.
    pub points: usize,
    pub trials: usize,
    pub derivative_tolerance: f64,
    pub seed_scheme: SeedScheme,
}

impl Default for QuantityConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleSpec::single(FamilySpec::uniform_categorical(3), 1000, 1.0, 1000, 1),
            points: 10,
            trials: 4000,
            derivative_tolerance: 1e-6,
            seed_scheme: SeedScheme::Common,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimensionConfig {
    pub dims: Vec<usize>,
    pub n0: usize,
    pub n1: usize,
    /// Shared `(theta_1 - theta_0)^T J (theta_1 - theta_0) / d`.
    pub t: f64,
    /// Source weight; the optimal weight when omitted.
    pub weight: Option<f64>,
    pub trials: usize,
    pub direction_seed: u64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            dims: vec![1, 2, 4],
            n0: 1000,
            n1: 1000,
            t: 0.002,
            weight: None,
            trials: 4000,
            direction_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomPlansConfig {
    pub ensemble: EnsembleSpec,
    pub random_plans: usize,
    pub weight_max: f64,
    pub top: usize,
    pub trials_optimal: usize,
    pub trials_random: usize,
}

impl Default for RandomPlansConfig {
    fn default() -> Self {
        use super::SourceSpec;
        Self {
            ensemble: EnsembleSpec {
                family: FamilySpec::uniform_categorical(4),
                n0: 1000,
                sources: vec![
                    SourceSpec {
                        c: 0.5,
                        budget: 1000,
                        direction_seed: 11,
                    },
                    SourceSpec {
                        c: 2.0,
                        budget: 2000,
                        direction_seed: 12,
                    },
                    SourceSpec {
                        c: 4.0,
                        budget: 4000,
                        direction_seed: 13,
                    },
                ],
            },
            random_plans: 10_000,
            weight_max: 3.0,
            top: 10,
            trials_optimal: 5000,
            trials_random: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpectationConfig {
    pub ensemble: EnsembleSpec,
    pub weight: f64,
    /// Source quantity; the full budget when omitted.
    pub quantity: Option<usize>,
    pub trials: usize,
}

impl Default for ExpectationConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleSpec::single(FamilySpec::uniform_categorical(3), 1000, 2.0, 1000, 1),
            weight: 0.5,
            quantity: None,
            trials: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeConfig {
    pub ensemble: EnsembleSpec,
    /// Source weights; all zero (target-only estimates) when omitted.
    pub weights: Option<Vec<f64>>,
    pub trials: usize,
    pub relative_tolerance: f64,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self {
            ensemble: EnsembleSpec::single(FamilySpec::uniform_categorical(3), 5000, 0.0, 5000, 1),
            weights: None,
            trials: 5000,
            relative_tolerance: 0.10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TheoremConfig {
    #[serde(rename = "T1-weight")]
    T1Weight(WeightConfig),
    #[serde(rename = "T1-quantity")]
    T1Quantity(QuantityConfig),
    #[serde(rename = "P1-dim")]
    P1Dim(DimensionConfig),
    #[serde(rename = "T2-weights")]
    T2Weights(RandomPlansConfig),
    #[serde(rename = "L1-expectation")]
    L1Expectation(ExpectationConfig),
    #[serde(rename = "L2-bridge")]
    L2Bridge(BridgeConfig),
}

impl TheoremConfig {
    pub fn id(&self) -> TheoremId {
        match self {
            TheoremConfig::T1Weight(_) => TheoremId::T1Weight,
            TheoremConfig::T1Quantity(_) => TheoremId::T1Quantity,
            TheoremConfig::P1Dim(_) => TheoremId::P1Dim,
            TheoremConfig::T2Weights(_) => TheoremId::T2Weights,
            TheoremConfig::L1Expectation(_) => TheoremId::L1Expectation,
            TheoremConfig::L2Bridge(_) => TheoremId::L2Bridge,
        }
    }

    pub fn default_for(id: TheoremId) -> Self {
        match id {
            TheoremId::T1Weight => TheoremConfig::T1Weight(WeightConfig::default()),
            TheoremId::T1Quantity => TheoremConfig::T1Quantity(QuantityConfig::default()),
            TheoremId::P1Dim => TheoremConfig::P1Dim(DimensionConfig::default()),
            TheoremId::T2Weights => TheoremConfig::T2Weights(RandomPlansConfig::default()),
            TheoremId::L1Expectation => TheoremConfig::L1Expectation(ExpectationConfig::default()),
            TheoremId::L2Bridge => TheoremConfig::L2Bridge(BridgeConfig::default()),
        }
    }
}

fn combined(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

pub fn verify_theorem(config: &TheoremConfig, seed: u64) -> Result<Verification> {
    match config {
        TheoremConfig::T1Weight(c) => verify_weight(c, seed),
        TheoremConfig::T1Quantity(c) => verify_quantity(c, seed),
        TheoremConfig::P1Dim(c) => verify_dimension(c, seed),
        TheoremConfig::T2Weights(c) => verify_random_plans(c, seed),
        TheoremConfig::L1Expectation(c) => verify_expectation(c, seed),
        TheoremConfig::L2Bridge(c) => verify_bridge(c, seed),
    }
}

fn verify_weight(c: &WeightConfig, seed: u64) -> Result<Verification> {
    let ensemble = c.ensemble.build(seed)?;
    let grid = linear_grid(c.grid.start, c.grid.stop, c.grid.step)?;
    let t = ensemble.discrepancy(0)?;
    let w_star = single_source_weight(t, ensemble.sources[0].budget as f64);
    let sweep = sweep_weight(
        &ensemble,
        0,
        &grid,
        c.trials,
        rng::derive_seed(seed, 1),
        c.seed_scheme,
    )?;
    let at_optimum = optimum_fidelity(&ensemble, c.trials, rng::derive_seed(seed, 2))?;
    let argmin_w = sweep.points[sweep.mc_argmin].axis_value;
    let checks = vec![
        Check::at_most(
            "mc_argmin_distance_in_steps",
            (argmin_w - w_star).abs() / c.grid.step,
            c.tolerance_steps,
        ),
        Check::at_most(
            "fidelity_at_optimum",
            (at_optimum.mc.mean - at_optimum.predicted).abs(),
            3.0 * at_optimum.mc.std_error + c.relative_tolerance * at_optimum.predicted,
        ),
    ];
    Ok(Verification::new(
        TheoremId::T1Weight,
        checks,
        VerificationData::WeightSweep {
            t,
            w_star,
            sweep,
            at_optimum,
        },
    ))
}

fn verify_quantity(c: &QuantityConfig, seed: u64) -> Result<Verification> {
    if c.points == 0 {
        return Err(Error::Argument(
            "quantity verification needs at least one grid point".into(),
        ));
    }
    let ensemble = c.ensemble.build(seed)?;
    let n1 = ensemble.sources[0].budget;
    let grid: Vec<usize> = (1..=c.points).map(|k| (k * n1) / c.points).collect();
    let t = ensemble.discrepancy(0)?;
    let d = ensemble.dimension();
    let n0 = ensemble.n0 as f64;
    let sweep = sweep_quantity(
        &ensemble,
        0,
        &grid,
        WeightRule::Optimal,
        c.trials,
        rng::derive_seed(seed, 1),
        c.seed_scheme,
    )?;

    // strictness margin relative to the previous value
    let worst_predicted_step = sweep
        .points
        .windows(2)
        .map(|w| (w[1].predicted - w[0].predicted) / w[0].predicted)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_mc_excess = sweep
        .points
        .windows(2)
        .map(|w| (w[1].mc.mean - w[0].mc.mean) / combined(w[0].mc.std_error, w[1].mc.std_error))
        .fold(f64::NEG_INFINITY, f64::max);
    let derivatives: Vec<DerivativeProbe> = grid
        .iter()
        .map(|&n| derivative_probe(n0, n as f64, t, d))
        .collect();
    let worst_derivative = derivatives
        .iter()
        .map(|p| p.relative_error)
        .fold(0.0, f64::max);
    let max_derivative = derivatives
        .iter()
        .map(|p| p.analytic)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut checks = Vec::new();
    if sweep.points.len() > 1 {
        checks.push(Check::at_most(
            "predicted_relative_step",
            worst_predicted_step,
            -1e-12,
        ));
        checks.push(Check::at_most(
            "mc_increase_in_combined_se",
            worst_mc_excess,
            3.0,
        ));
    }
    checks.push(Check::at_most(
        "derivative_relative_error",
        worst_derivative,
        c.derivative_tolerance,
    ));
    checks.push(Check::below("derivative_sign", max_derivative, 0.0));
    Ok(Verification::new(
        TheoremId::T1Quantity,
        checks,
        VerificationData::QuantitySweep {
            t,
            sweep,
            derivatives,
        },
    ))
}

fn verify_dimension(c: &DimensionConfig, seed: u64) -> Result<Verification> {
    if c.dims.len() < 2 || c.dims.contains(&0) {
        return Err(Error::Argument(
            "dimension scaling needs at least two positive dimensions".into(),
        ));
    }
    if !(c.t >= 0.0 && c.t.is_finite()) {
        return Err(Error::Argument(format!(
            "t must be finite and >= 0, got {}",
            c.t
        )));
    }
    let w = c
        .weight
        .unwrap_or_else(|| single_source_weight(c.t, c.n1 as f64));
    let runs = c
        .dims
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let family = ModelFamily::gaussian_iso(d)?;
            let mut r = rng::seeded(rng::derive_seed(c.direction_seed, d as u64));
            let u: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            // identity Fisher: |delta|^2 = d t
            let radius = (d as f64 * c.t).sqrt();
            let theta1 = ParameterVector::new(u.iter().map(|x| radius * x / norm).collect())?;
            let ensemble = TaskEnsemble::from_parameters(
                family,
                ParameterVector::zeros(d),
                c.n0,
                vec![(theta1, c.n1)],
            )?;
            let mc = mc_expected_kl_with(
                &ensemble,
                &[w],
                &[c.n1],
                c.trials,
                rng::derive_seed(seed, i as u64),
            )?;
            let predicted =
                predict_kl_single(c.n0 as f64, c.n1 as f64, w, ensemble.discrepancy(0)?, d).total;
            Ok((d, predicted, mc))
        })
        .collect::<Result<Vec<_>>>()?;
    let (d_ref, p_ref, mc_ref) = runs[0];
    let mut checks = Vec::new();
    let mut points = Vec::new();
    for &(d, predicted, mc) in &runs {
        let scale = d as f64 / d_ref as f64;
        let predicted_ratio = predicted / p_ref;
        let mc_ratio = mc.mean / mc_ref.mean;
        let mc_ratio_se =
            mc_ratio * combined(mc.std_error / mc.mean, mc_ref.std_error / mc_ref.mean);
        if d != d_ref {
            checks.push(Check::at_most(
                format!("predicted_ratio_error_d{d}"),
                (predicted_ratio - scale).abs(),
                1e-12 * scale,
            ));
            checks.push(Check::at_most(
                format!("mc_ratio_error_d{d}"),
                (mc_ratio - scale).abs(),
                3.0 * mc_ratio_se,
            ));
        }
        points.push(DimensionPoint {
            d,
            predicted,
            mc,
            predicted_ratio,
            mc_ratio,
            mc_ratio_se,
        });
    }
    Ok(Verification::new(
        TheoremId::P1Dim,
        checks,
        VerificationData::DimensionScaling { points },
    ))
}

fn verify_random_plans(c: &RandomPlansConfig, seed: u64) -> Result<Verification> {
    if c.random_plans == 0 || c.top == 0 || c.top > c.random_plans {
        return Err(Error::Argument("need 1 <= top <= random_plans".into()));
    }
    if !(c.weight_max > 0.0 && c.weight_max.is_finite()) {
        return Err(Error::Argument(
            "weight_max must be positive and finite".into(),
        ));
    }
    let ensemble = c.ensemble.build(seed)?;
    let k = ensemble.sources.len();
    let optimal = ensemble.optimal_plan()?;
    let gram = ensemble.gram()?;
    let mut r = rng::seeded(rng::derive_seed(seed, 1));
    let weights: Vec<Vec<f64>> = (0..c.random_plans)
        .map(|_| (0..k).map(|_| r.random_range(0.0..c.weight_max)).collect())
        .collect();
    let budgets = ensemble.budgets();
    let mut scored = weights
        .par_iter()
        .map(|w| {
            let plan = crate::optimizer::TransferPlan::from_weights(
                w,
                &budgets,
                &gram,
                ensemble.n0,
                ensemble.dimension(),
            )?;
            Ok((w.clone(), plan.predicted_kl.total))
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    let best_random_predicted = scored[0].1;
    let optimal_mc = mc_expected_kl(
        &ensemble,
        &optimal,
        c.trials_optimal,
        rng::derive_seed(seed, 2),
    )?;
    let top_random = scored[..c.top]
        .iter()
        .enumerate()
        .map(|(i, (w, p))| {
            let mc = mc_expected_kl_with(
                &ensemble,
                w,
                &budgets,
                c.trials_random,
                rng::derive_seed_path(seed, &[3, i as u64]),
            )?;
            Ok(RandomPlanResult {
                weights: w.clone(),
                predicted: *p,
                mc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best_mc = top_random
        .iter()
        .min_by(|a, b| a.mc.mean.total_cmp(&b.mc.mean))
        .expect("top is non-empty");
    let opt_total = optimal.predicted_kl.total;
    let checks = vec![
        Check::at_most(
            "analytic_optimal_vs_best_random",
            opt_total,
            best_random_predicted * (1.0 + 1e-12),
        ),
        Check::at_most(
            "mc_optimal_vs_best_random_mc",
            optimal_mc.mean,
            best_mc.mc.mean + 3.0 * combined(optimal_mc.std_error, best_mc.mc.std_error),
        ),
        Check::at_most(
            "mc_optimal_vs_best_random_predicted",
            optimal_mc.mean,
            best_random_predicted + 3.0 * optimal_mc.std_error,
        ),
    ];
    Ok(Verification::new(
        TheoremId::T2Weights,
        checks,
        VerificationData::RandomPlans {
            optimal,
            optimal_mc,
            best_random_predicted,
            top_random,
        },
    ))
}

fn verify_expectation(c: &ExpectationConfig, seed: u64) -> Result<Verification> {
    let ensemble = c.ensemble.build(seed)?;
    let src = &ensemble.sources[0];
    let n = c.quantity.unwrap_or(src.budget);
    let k = ensemble.sources.len();
    let mut weights = vec![0.0; k];
    let mut quantities = vec![0; k];
    weights[0] = c.weight;
    quantities[0] = n;
    let estimates = mc_estimates(
        &ensemble,
        &weights,
        &quantities,
        c.trials,
        rng::derive_seed(seed, 1),
    )?;
    let n0 = ensemble.n0 as f64;
    let b = c.weight * n as f64;
    let d = ensemble.dimension();
    let trials = estimates.len() as f64;
    let mut checks = Vec::new();
    let (mut expected, mut mean, mut std_error) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..d {
        let e = (n0 * ensemble.theta0[j] + b * src.theta[j]) / (n0 + b);
        let m = estimates.iter().map(|x| x[j]).sum::<f64>() / trials;
        let var = estimates.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / (trials - 1.0);
        let se = (var / trials).sqrt();
        checks.push(Check::at_most(
            format!("coordinate_{j}_deviation"),
            (m - e).abs(),
            3.0 * se,
        ));
        expected.push(e);
        mean.push(m);
        std_error.push(se);
    }
    Ok(Verification::new(
        TheoremId::L1Expectation,
        checks,
        VerificationData::Expectation {
            expected,
            mean,
            std_error,
        },
    ))
}

fn verify_bridge(c: &BridgeConfig, seed: u64) -> Result<Verification> {
    let ensemble = c.ensemble.build(seed)?;
    let k = ensemble.sources.len();
    let weights = c.weights.clone().unwrap_or_else(|| vec![0.0; k]);
    let estimates = mc_estimates(
        &ensemble,
        &weights,
        &ensemble.budgets(),
        c.trials,
        rng::derive_seed(seed, 1),
    )?;
    let (expected_kl, half_trace) = mse_kl_bridge(&ensemble.family, &ensemble.theta0, &estimates)?;
    let relative_gap = (expected_kl - half_trace).abs() / half_trace;
    Ok(Verification::new(
        TheoremId::L2Bridge,
        vec![Check::at_most(
            "relative_gap",
            relative_gap,
            c.relative_tolerance,
        )],
        VerificationData::Bridge {
            expected_kl,
            half_trace,
            relative_gap,
        },
    ))
}

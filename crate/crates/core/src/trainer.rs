//! Full-batch gradient training with per-epoch weight recomputation.
//!
//! Multi-source: the target model trains on the pooled weighted loss; after
//! each update period the weights are re-derived from the optimal plan at the
//! current target parameters, with directions to the pretrained source
//! parameters and the projected empirical Fisher over the target data.
//!
//! Multi-task: every task is both target and source. Tasks update in a fixed
//! round-robin order and see the most recent parameters of the others.
//!
//! The loss divides by the unweighted pooled count, so changing the weights
//! also rescales the effective step size.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{projected_gram, DirectionMatrix};
use crate::mle::{fit_weighted_mle, MleOptions, WeightedDataset};
use crate::model::{ModelFamily, ParameterVector, Sample};
use crate::optimizer::{optimal_plan, QpMatrix};
use crate::rng;

/// Ridge used when fitting source parameters before target training.
pub const PRETRAIN_RIDGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Epochs between plan recomputations.
    pub weight_update_period: usize,
    /// Coefficient of `ridge * |theta|^2` added to the loss.
    pub ridge: f64,
    /// Standard deviation of the initial parameters; 0 starts at the origin.
    pub init_scale: f64,
    /// Stop once an update moves the parameters by at most this much.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 200,
            weight_update_period: 1,
            ridge: 0.0,
            init_scale: 0.0,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.weight_update_period == 0 {
            return Err(Error::Argument(
                "epochs and weight_update_period must be >= 1".into(),
            ));
        }
        if !(self.ridge >= 0.0 && self.init_scale >= 0.0 && self.tolerance >= 0.0) {
            return Err(Error::Argument(
                "ridge, init_scale and tolerance must be >= 0".into(),
            ));
        }
        Ok(())
    }

    fn initial(&self, d: usize, stream: u64) -> ParameterVector {
        if self.init_scale == 0.0 {
            return ParameterVector::zeros(d);
        }
        let mut r = rng::stream(self.seed, stream);
        let v = (0..d)
            .map(|_| self.init_scale * r.sample::<f64, _>(StandardNormal))
            .collect();
        ParameterVector::new(v).expect("finite draws")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochBudget,
    Converged,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Weighted loss before this epoch's update, with this epoch's weights.
    pub loss: f64,
    /// Weights used by this epoch's update (all zero at epoch 0 and 1).
    pub weights: Vec<f64>,
    pub grad_norm: f64,
    /// Held-out mean NLL after the update.
    pub holdout_nll: Option<f64>,
    pub holdout_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    pub final_theta: ParameterVector,
    pub stop_reason: StopReason,
    /// Parameter count used in every plan.
    pub d: usize,
}

impl TrainTrace {
    pub fn final_weights(&self) -> &[f64] {
        &self.records.last().expect("trace has epoch 0").weights
    }

    pub fn final_holdout_nll(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.holdout_nll)
    }
}

/// A source block in the loss: samples and their weight.
#[derive(Clone, Copy, Debug)]
pub struct WeightedBlock<'a> {
    pub samples: &'a [Sample],
    pub weight: f64,
}

fn pooled_count(target: &[Sample], blocks: &[WeightedBlock<'_>]) -> f64 {
    (target.len() + blocks.iter().map(|b| b.samples.len()).sum::<usize>()) as f64
}

/// `[sum_target nll + sum_k w_k sum_{source k} nll] / |pooled data|`.
pub fn weighted_loss(
    family: &ModelFamily,
    theta: &[f64],
    target: &[Sample],
    blocks: &[WeightedBlock<'_>],
) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::Argument("weighted loss needs target data".into()));
    }
    let nll = |xs: &[Sample]| -> Result<f64> {
        let mut acc = 0.0;
        for x in xs {
            acc -= family.log_density(theta, x)?;
        }
        Ok(acc)
    };
    let mut total = nll(target)?;
    for b in blocks {
        if b.weight != 0.0 {
            total += b.weight * nll(b.samples)?;
        }
    }
    Ok(total / pooled_count(target, blocks))
}

fn weighted_loss_gradient(
    family: &ModelFamily,
    theta: &[f64],
    target: &[Sample],
    blocks: &[WeightedBlock<'_>],
    ridge: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = theta.len();
    let mut grad = vec![0.0; d];
    let mut loss = 0.0;
    let mut add = |xs: &[Sample], w: f64| -> Result<()> {
        for x in xs {
            loss -= w * family.log_density(theta, x)?;
            for (g, s) in grad.iter_mut().zip(family.score(theta, x)?) {
                *g -= w * s;
            }
        }
        Ok(())
    };
    add(target, 1.0)?;
    for b in blocks {
        if b.weight != 0.0 {
            add(b.samples, b.weight)?;
        }
    }
    let pool = pooled_count(target, blocks);
    let sq: f64 = theta.iter().map(|v| v * v).sum();
    let loss = loss / pool + ridge * sq;
    let grad = grad
        .iter()
        .zip(theta)
        .map(|(g, v)| g / pool + 2.0 * ridge * v)
        .collect();
    Ok((loss, grad))
}

fn holdout_metrics(
    family: &ModelFamily,
    theta: &[f64],
    holdout: &[Sample],
) -> Result<(Option<f64>, Option<f64>)> {
    if holdout.is_empty() {
        return Ok((None, None));
    }
    let ModelFamily::SoftmaxRegression { features, classes } = *family else {
        let mut nll = 0.0;
        for x in holdout {
            nll -= family.log_density(theta, x)?;
        }
        return Ok((Some(nll / holdout.len() as f64), None));
    };
    let mut nll = 0.0;
    let mut correct = 0usize;
    for x in holdout {
        nll -= family.log_density(theta, x)?;
        if let Sample::Labeled { features: z, label } = x {
            let logits = crate::model::softmax_logits(theta, z, features, classes);
            let best = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map_or(0, |(i, _)| i);
            correct += usize::from(best == *label);
        }
    }
    let n = holdout.len() as f64;
    Ok((Some(nll / n), Some(correct as f64 / n)))
}

/// Plan weights at `theta` for sources with parameters `others` and data sizes
/// `budgets`; the Fisher is the projected empirical one over `target`.
fn recompute_weights(
    family: &ModelFamily,
    theta: &ParameterVector,
    target: &[Sample],
    others: &[&[f64]],
    budgets: &[usize],
) -> Result<Vec<f64>> {
    let dirs = DirectionMatrix::from_parameters(theta, others)?;
    let gram = projected_gram(family, theta, target, &dirs)?;
    let d = family.dimension();
    let bf: Vec<f64> = budgets.iter().map(|&n| n as f64).collect();
    let qp = QpMatrix::from_gram(gram, &bf, d)?;
    Ok(optimal_plan(&qp, budgets, target.len(), d)?.weights)
}

fn step(theta: &ParameterVector, grad: &[f64], lr: f64) -> Result<(ParameterVector, f64)> {
    let next: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - lr * g).collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!(
            "non-finite parameter after a step of size {lr}"
        )));
    }
    let moved = next
        .iter()
        .zip(theta.iter())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok((ParameterVector::new(next)?, moved))
}

fn check_data(family: &ModelFamily, target: &[Sample]) -> Result<()> {
    if !matches!(family, ModelFamily::SoftmaxRegression { .. }) {
        return Err(Error::Unsupported {
            operation: "training",
            family: family.name(),
        });
    }
    if target.is_empty() {
        return Err(Error::Argument("training needs target data".into()));
    }
    Ok(())
}

/// Fits each source's parameters on its full data (ridge-stabilized MLE).
pub fn pretrain_sources(
    family: &ModelFamily,
    sources: &[Vec<Sample>],
) -> Result<Vec<ParameterVector>> {
    let opts = MleOptions {
        ridge: PRETRAIN_RIDGE,
        ..MleOptions::default()
    };
    sources
        .iter()
        .map(|xs| {
            fit_weighted_mle(
                family,
                &WeightedDataset::new(xs.clone(), Vec::new())?,
                &opts,
            )
        })
        .collect()
}

/// Target training with weights re-derived from the optimal plan.
pub fn train_multi_source(
    family: &ModelFamily,
    target: &[Sample],
    sources: &[Vec<Sample>],
    source_params: &[ParameterVector],
    holdout: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    check_data(family, target)?;
    if sources.is_empty() || sources.len() != source_params.len() {
        return Err(Error::Argument(
            "need K >= 1 source blocks, each with pretrained parameters".into(),
        ));
    }
    if sources.iter().any(Vec::is_empty) {
        return Err(Error::Argument("source blocks must be non-empty".into()));
    }
    let budgets: Vec<usize> = sources.iter().map(Vec::len).collect();
    let others: Vec<&[f64]> = source_params.iter().map(|p| &p[..]).collect();
    let mut weights = vec![0.0; sources.len()];
    let recompute =
        |theta: &ParameterVector| recompute_weights(family, theta, target, &others, &budgets);
    run_loop(
        family,
        target,
        sources,
        holdout,
        cfg,
        0,
        &mut weights,
        recompute,
        None,
    )
}

/// Target-only baseline: the same loop with no sources, so the loss is the
/// plain target mean NLL.
pub fn train_target_only(
    family: &ModelFamily,
    target: &[Sample],
    holdout: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainTrace> {
    cfg.validate()?;
    check_data(family, target)?;
    let mut weights = Vec::new();
    run_loop(
        family,
        target,
        &[],
        holdout,
        cfg,
        0,
        &mut weights,
        |_| Ok(Vec::new()),
        None,
    )
}

#[allow(clippy::too_many_arguments)]
fn run_loop<F>(
    family: &ModelFamily,
    target: &[Sample],
    sources: &[Vec<Sample>],
    holdout: &[Sample],
    cfg: &TrainConfig,
    init_stream: u64,
    weights: &mut Vec<f64>,
    recompute: F,
    task: Option<usize>,
) -> Result<TrainTrace>
where
    F: Fn(&ParameterVector) -> Result<Vec<f64>>,
{
    let wrap = |epoch: usize| {
        move |e: Error| Error::Epoch {
            epoch,
            task,
            source: Box::new(e),
        }
    };
    let d = family.dimension();
    let mut theta = cfg.initial(d, init_stream);
    let blocks = |w: &[f64]| -> Vec<WeightedBlock<'_>> {
        sources
            .iter()
            .zip(w)
            .map(|(s, &weight)| WeightedBlock { samples: s, weight })
            .collect()
    };
    let (loss0, grad0) =
        weighted_loss_gradient(family, &theta, target, &blocks(weights), cfg.ridge)
            .map_err(wrap(0))?;
    let (nll0, acc0) = holdout_metrics(family, &theta, holdout).map_err(wrap(0))?;
    let mut records = vec![EpochRecord {
        epoch: 0,
        loss: loss0,
        weights: weights.clone(),
        grad_norm: norm(&grad0),
        holdout_nll: nll0,
        holdout_accuracy: acc0,
    }];
    let mut stop_reason = StopReason::EpochBudget;
    for epoch in 1..=cfg.epochs {
        let (loss, grad) =
            weighted_loss_gradient(family, &theta, target, &blocks(weights), cfg.ridge)
                .map_err(wrap(epoch))?;
        let (next, moved) = step(&theta, &grad, cfg.learning_rate).map_err(wrap(epoch))?;
        theta = next;
        let (nll, acc) = holdout_metrics(family, &theta, holdout).map_err(wrap(epoch))?;
        records.push(EpochRecord {
            epoch,
            loss,
            weights: weights.clone(),
            grad_norm: norm(&grad),
            holdout_nll: nll,
            holdout_accuracy: acc,
        });
        if moved <= cfg.tolerance {
            stop_reason = StopReason::Converged;
            break;
        }
        if epoch < cfg.epochs && (epoch - 1) % cfg.weight_update_period == 0 && !weights.is_empty()
        {
            *weights = recompute(&theta).map_err(wrap(epoch))?;
        }
    }
    Ok(TrainTrace {
        records,
        final_theta: theta,
        stop_reason,
        d,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One task of a multi-task run.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskData {
    pub train: Vec<Sample>,
    pub holdout: Vec<Sample>,
}

struct TaskState {
    theta: ParameterVector,
    weights: Vec<f64>,
    records: Vec<EpochRecord>,
    moved: f64,
}

/// Round-robin training where each task weights the other tasks' data by its
/// own plan. Returns one trace per task; weights are indexed by the other
/// tasks in their original order.
pub fn train_multi_task(
    family: &ModelFamily,
    tasks: &[TaskData],
    cfg: &TrainConfig,
) -> Result<Vec<TrainTrace>> {
    cfg.validate()?;
    if tasks.len() < 2 {
        return Err(Error::Argument(
            "multi-task training needs K >= 2 tasks".into(),
        ));
    }
    for t in tasks {
        check_data(family, &t.train)?;
    }
    let k = tasks.len();
    let d = family.dimension();
    let others_of = |i: usize| (0..k).filter(move |&j| j != i);
    let mut states: Vec<TaskState> = (0..k)
        .map(|i| {
            let theta = cfg.initial(d, i as u64);
            let weights = vec![0.0; k - 1];
            let blocks: Vec<WeightedBlock<'_>> = others_of(i)
                .zip(&weights)
                .map(|(j, &weight)| WeightedBlock {
                    samples: &tasks[j].train,
                    weight,
                })
                .collect();
            let wrap = |e: Error| Error::Epoch {
                epoch: 0,
                task: Some(i),
                source: Box::new(e),
            };
            let (loss, grad) =
                weighted_loss_gradient(family, &theta, &tasks[i].train, &blocks, cfg.ridge)
                    .map_err(wrap)?;
            let (nll, acc) = holdout_metrics(family, &theta, &tasks[i].holdout).map_err(wrap)?;
            Ok(TaskState {
                records: vec![EpochRecord {
                    epoch: 0,
                    loss,
                    weights: weights.clone(),
                    grad_norm: norm(&grad),
                    holdout_nll: nll,
                    holdout_accuracy: acc,
                }],
                theta,
                weights,
                moved: f64::INFINITY,
            })
        })
        .collect::<Result<_>>()?;

    let mut stop_reason = StopReason::EpochBudget;
    for epoch in 1..=cfg.epochs {
        for i in 0..k {
            let wrap = |e: Error| Error::Epoch {
                epoch,
                task: Some(i),
                source: Box::new(e),
            };
            let blocks: Vec<WeightedBlock<'_>> = others_of(i)
                .zip(&states[i].weights)
                .map(|(j, &weight)| WeightedBlock {
                    samples: &tasks[j].train,
                    weight,
                })
                .collect();
            let (loss, grad) = weighted_loss_gradient(
                family,
                &states[i].theta,
                &tasks[i].train,
                &blocks,
                cfg.ridge,
            )
            .map_err(wrap)?;
            let (next, moved) = step(&states[i].theta, &grad, cfg.learning_rate).map_err(wrap)?;
            let (nll, acc) = holdout_metrics(family, &next, &tasks[i].holdout).map_err(wrap)?;
            let used = states[i].weights.clone();
            states[i].theta = next;
            states[i].moved = moved;
            states[i].records.push(EpochRecord {
                epoch,
                loss,
                weights: used,
                grad_norm: norm(&grad),
                holdout_nll: nll,
                holdout_accuracy: acc,
            });
            if epoch < cfg.epochs && (epoch - 1) % cfg.weight_update_period == 0 {
                let others: Vec<&[f64]> = others_of(i).map(|j| &states[j].theta[..]).collect();
                let budgets: Vec<usize> = others_of(i).map(|j| tasks[j].train.len()).collect();
                let w =
                    recompute_weights(family, &states[i].theta, &tasks[i].train, &others, &budgets)
                        .map_err(wrap)?;
                states[i].weights = w;
            }
        }
        if states.iter().all(|s| s.moved <= cfg.tolerance) {
            stop_reason = StopReason::Converged;
            break;
        }
    }
    Ok(states
        .into_iter()
        .map(|s| TrainTrace {
            records: s.records,
            final_theta: s.theta,
            stop_reason,
            d,
        })
        .collect())
}

/// Synthetic softmax-regression problem: a target task, shifted sources and a
/// held-out target set.
#[derive(Clone, Debug)]
pub struct ToyProblem {
    pub family: ModelFamily,
    pub theta0: ParameterVector,
    pub source_thetas: Vec<ParameterVector>,
    pub target: Vec<Sample>,
    pub sources: Vec<Vec<Sample>>,
    pub holdout: Vec<Sample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySpec {
    pub features: usize,
    pub classes: usize,
    /// Standard deviation of the true target weights.
    pub signal: f64,
    pub n_target: usize,
    pub n_holdout: usize,
    /// `(c_k, N_k)`: source k sits at distance `c_k / sqrt(n_target)`.
    pub sources: Vec<(f64, usize)>,
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            features: 5,
            classes: 3,
            signal: 1.0,
            n_target: 30,
            n_holdout: 2000,
            sources: vec![(0.0, 1000), (30.0, 1000)],
        }
    }
}

impl ToyProblem {
    pub fn generate(spec: &ToySpec, seed: u64) -> Result<Self> {
        let family = ModelFamily::softmax_regression(spec.features, spec.classes)?;
        if spec.n_target == 0 || !(spec.signal >= 0.0) {
            return Err(Error::Argument(
                "toy problem needs n_target >= 1 and signal >= 0".into(),
            ));
        }
        let d = family.dimension();
        let mut r = rng::stream(seed, 0);
        let theta0 = ParameterVector::new(
            (0..d)
                .map(|_| spec.signal * r.sample::<f64, _>(StandardNormal))
                .collect(),
        )?;
        let scale = 1.0 / (spec.n_target as f64).sqrt();
        let mut source_thetas = Vec::new();
        let mut sources = Vec::new();
        for (k, &(c, n)) in spec.sources.iter().enumerate() {
            if !(c >= 0.0 && c.is_finite()) || n == 0 {
                return Err(Error::Argument(format!(
                    "source {k}: need finite c >= 0 and N >= 1"
                )));
            }
            let mut r = rng::stream(seed, 10 + k as u64);
            let u: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
            let un = norm(&u);
            let theta = ParameterVector::new(
                theta0
                    .iter()
                    .zip(&u)
                    .map(|(a, b)| a + c * scale * b / un)
                    .collect(),
            )?;
            sources.push(family.sample_with(&theta, n, &mut r)?);
            source_thetas.push(theta);
        }
        let mut r = rng::stream(seed, 1);
        let target = family.sample_with(&theta0, spec.n_target, &mut r)?;
        let mut r = rng::stream(seed, 2);
        let holdout = family.sample_with(&theta0, spec.n_holdout, &mut r)?;
        Ok(Self {
            family,
            theta0,
            source_thetas,
            target,
            sources,
            holdout,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTasksSpec {
    pub features: usize,
    pub classes: usize,
    pub signal: f64,
    pub n_holdout: usize,
    /// `(c_k, N_k)`: task k sits at distance `c_k / sqrt(N_k)` from a shared center.
    pub tasks: Vec<(f64, usize)>,
}

impl Default for ToyTasksSpec {
    fn default() -> Self {
        Self {
            features: 5,
            classes: 3,
            signal: 1.0,
            n_holdout: 2000,
            tasks: vec![(0.0, 40), (0.0, 40)],
        }
    }
}

/// Tasks scattered around a shared center, each with its own held-out set.
pub fn generate_tasks(
    spec: &ToyTasksSpec,
    seed: u64,
) -> Result<(ModelFamily, Vec<ParameterVector>, Vec<TaskData>)> {
    let family = ModelFamily::softmax_regression(spec.features, spec.classes)?;
    if spec.tasks.len() < 2 || !(spec.signal >= 0.0) {
        return Err(Error::Argument(
            "need at least two tasks and signal >= 0".into(),
        ));
    }
    let d = family.dimension();
    let mut r = rng::stream(seed, 0);
    let center: Vec<f64> = (0..d)
        .map(|_| spec.signal * r.sample::<f64, _>(StandardNormal))
        .collect();
    let mut thetas = Vec::new();
    let mut tasks = Vec::new();
    for (k, &(c, n)) in spec.tasks.iter().enumerate() {
        if !(c >= 0.0 && c.is_finite()) || n == 0 {
            return Err(Error::Argument(format!(
                "task {k}: need finite c >= 0 and N >= 1"
            )));
        }
        let mut r = rng::stream(seed, 10 + k as u64);
        let u: Vec<f64> = (0..d).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let un = norm(&u);
        let radius = c / (n as f64).sqrt();
        let theta = ParameterVector::new(
            center
                .iter()
                .zip(&u)
                .map(|(a, b)| a + radius * b / un)
                .collect(),
        )?;
        let train = family.sample_with(&theta, n, &mut r)?;
        let holdout = family.sample_with(&theta, spec.n_holdout, &mut r)?;
        thetas.push(theta);
        tasks.push(TaskData { train, holdout });
    }
    Ok((family, thetas, tasks))
}

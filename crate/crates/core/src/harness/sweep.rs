use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::TaskEnsemble;
use crate::error::{Error, Result};
use crate::kl::{mc_expected_kl_with, predict_kl_single, MonteCarloEstimate};
use crate::optimizer::single_source_weight;
use crate::rng;

/// `start, start + step, ...` up to `stop` inclusive (within rounding).
pub fn linear_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
        return Err(Error::Argument(format!(
            "bad grid {start}..{stop} step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

fn check_increasing(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("empty grid".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// How Monte Carlo streams are assigned to grid points.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedScheme {
    /// Each point gets streams derived from `(seed, point, trial)`.
    PerPoint,
    /// Every point reuses the streams of `(seed, trial)`; differences between
    /// points then reflect the curve rather than independent noise.
    #[default]
    Common,
}

impl SeedScheme {
    fn point_seed(self, seed: u64, point: usize) -> u64 {
        match self {
            SeedScheme::PerPoint => rng::derive_seed(seed, point as u64),
            SeedScheme::Common => seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    Fixed(f64),
    /// `w*(n) = 1 / (1 + t n)`.
    Optimal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    /// Source weight used at this point.
    pub weight: f64,
    pub mc: MonteCarloEstimate,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: String,
    pub source_index: usize,
    pub points: Vec<SweepPoint>,
    pub mc_argmin: usize,
    pub predicted_argmin: usize,
    pub n0: usize,
    pub regime_constants: Vec<f64>,
}

impl SweepResult {
    fn new(
        axis: &str,
        source_index: usize,
        points: Vec<SweepPoint>,
        ensemble: &TaskEnsemble,
    ) -> Self {
        let argmin = |f: &dyn Fn(&SweepPoint) -> f64| {
            points
                .iter()
                .enumerate()
                .min_by(|a, b| f(a.1).total_cmp(&f(b.1)))
                .map_or(0, |(i, _)| i)
        };
        Self {
            axis: axis.to_string(),
            source_index,
            mc_argmin: argmin(&|p| p.mc.mean),
            predicted_argmin: argmin(&|p| p.predicted),
            points,
            n0: ensemble.n0,
            regime_constants: ensemble.regime_constants(),
        }
    }

    /// Rows `axis_value, mc_mean, mc_stderr, predicted`.
    pub fn csv_rows(&self) -> Vec<[f64; 4]> {
        self.points
            .iter()
            .map(|p| [p.axis_value, p.mc.mean, p.mc.std_error, p.predicted])
            .collect()
    }
}

pub const CSV_HEADER: [&str; 4] = ["axis_value", "mc_mean", "mc_stderr", "predicted"];

/// Varies the weight of one source, all other sources pinned to weight 0.
pub fn sweep_weight(
    ensemble: &TaskEnsemble,
    source_index: usize,
    grid: &[f64],
    trials: usize,
    seed: u64,
    scheme: SeedScheme,
) -> Result<SweepResult> {
    check_increasing(grid)?;
    if grid.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(Error::Argument(
            "weights in the grid must be finite and >= 0".into(),
        ));
    }
    let k = ensemble.sources.len();
    if source_index >= k {
        return Err(Error::Argument(format!(
            "source index {source_index} out of range for K = {k}"
        )));
    }
    let t = ensemble.discrepancy(source_index)?;
    let n1 = ensemble.sources[source_index].budget;
    let d = ensemble.dimension();
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(p, &w)| {
            let mut weights = vec![0.0; k];
            let mut quantities = vec![0; k];
            weights[source_index] = w;
            quantities[source_index] = n1;
            let mc = mc_expected_kl_with(
                ensemble,
                &weights,
                &quantities,
                trials,
                scheme.point_seed(seed, p),
            )?;
            Ok(SweepPoint {
                axis_value: w,
                weight: w,
                mc,
                predicted: predict_kl_single(ensemble.n0 as f64, n1 as f64, w, t, d).total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::new("weight", source_index, points, ensemble))
}

/// Varies the quantity drawn from one source, other sources unused.
pub fn sweep_quantity(
    ensemble: &TaskEnsemble,
    source_index: usize,
    grid: &[usize],
    rule: WeightRule,
    trials: usize,
    seed: u64,
    scheme: SeedScheme,
) -> Result<SweepResult> {
    let k = ensemble.sources.len();
    if source_index >= k {
        return Err(Error::Argument(format!(
            "source index {source_index} out of range for K = {k}"
        )));
    }
    let gf: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    check_increasing(&gf)?;
    let budget = ensemble.sources[source_index].budget;
    if let Some(n) = grid.iter().find(|&&n| n > budget) {
        return Err(Error::Argument(format!(
            "quantity {n} exceeds the source budget {budget}"
        )));
    }
    if let WeightRule::Fixed(w) = rule {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::Argument(format!(
                "fixed weight must be finite and >= 0, got {w}"
            )));
        }
    }
    let t = ensemble.discrepancy(source_index)?;
    let d = ensemble.dimension();
    let points = grid
        .par_iter()
        .enumerate()
        .map(|(p, &n)| {
            let w = match rule {
                WeightRule::Fixed(w) => w,
                WeightRule::Optimal => single_source_weight(t, n as f64),
            };
            let mut weights = vec![0.0; k];
            let mut quantities = vec![0; k];
            weights[source_index] = w;
            quantities[source_index] = n;
            let mc = mc_expected_kl_with(
                ensemble,
                &weights,
                &quantities,
                trials,
                scheme.point_seed(seed, p),
            )?;
            Ok(SweepPoint {
                axis_value: n as f64,
                weight: w,
                mc,
                predicted: predict_kl_single(ensemble.n0 as f64, n as f64, w, t, d).total,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult::new("quantity", source_index, points, ensemble))
}

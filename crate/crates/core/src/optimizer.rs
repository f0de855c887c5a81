//! Optimal source weights.
//!
//! Single source: `w* = 1 / (1 + t N_1)`. Multiple sources: build the `K x K`
//! matrix `M = (diag(d/N_i) + Theta^T J Theta) / d`, minimize `a^T M a` over
//! the probability simplex to get `(alpha*, t*)`, then `s* = 1/t*` and
//! `w*_i = s* alpha*_i / N_i`. Quantities are always the full budgets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fisher::{DirectionMatrix, FisherOperator};
use crate::kl::{predict_kl_multi, quadratic, KlPrediction};

/// Budget and Fisher provenance of a [`QpMatrix`].
#[derive(Clone, Debug, PartialEq)]
pub struct QpProvenance {
    pub budgets: Vec<f64>,
    pub d: usize,
    /// `Theta^T J(theta_0) Theta`.
    pub gram: DMatrix<f64>,
}

/// Symmetric PSD matrix of the simplex QP.
#[derive(Clone, Debug, PartialEq)]
pub struct QpMatrix {
    m: DMatrix<f64>,
    provenance: Option<QpProvenance>,
}

impl QpMatrix {
    /// Wraps an arbitrary symmetric matrix (symmetry checked to 1e-12 relative).
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::Argument(format!(
                "QP matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("QP matrix entries must be finite".into()));
        }
        let scale = m.abs().max().max(1.0);
        if (&m - m.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::Argument("QP matrix is not symmetric".into()));
        }
        let m = (&m + m.transpose()) * 0.5;
        Ok(Self {
            m,
            provenance: None,
        })
    }

    /// `M = (diag(d/N_1, ..., d/N_K) + gram) / d`.
    pub fn from_gram(gram: DMatrix<f64>, budgets: &[f64], d: usize) -> Result<Self> {
        let k = budgets.len();
        if gram.nrows() != k || gram.ncols() != k {
            return Err(Error::Argument(format!(
                "gram is {}x{} but there are {k} budgets",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if d == 0 {
            return Err(Error::Argument(
                "parameter dimension d must be positive".into(),
            ));
        }
        if let Some(b) = budgets.iter().find(|&&b| !(b >= 1.0) || !b.is_finite()) {
            return Err(Error::Argument(format!(
                "source budgets must be >= 1, got {b}"
            )));
        }
        let df = d as f64;
        let mut m = &gram / df;
        for i in 0..k {
            m[(i, i)] += 1.0 / budgets[i];
        }
        let mut qp = Self::new(m)?;
        qp.provenance = Some(QpProvenance {
            budgets: budgets.to_vec(),
            d,
            gram,
        });
        Ok(qp)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn provenance(&self) -> Option<&QpProvenance> {
        self.provenance.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn objective(&self, alpha: &[f64]) -> f64 {
        quadratic(&self.m, alpha)
    }
}

/// Builds the QP matrix from directions `Theta`, a Fisher operator at `theta_0`,
/// and the source budgets.
pub fn build_qp_matrix(
    directions: &DirectionMatrix,
    fisher: &FisherOperator,
    budgets: &[f64],
    d: usize,
) -> Result<QpMatrix> {
    if budgets.len() != directions.sources() {
        return Err(Error::Argument(format!(
            "{} budgets for {} direction columns",
            budgets.len(),
            directions.sources()
        )));
    }
    QpMatrix::from_gram(fisher.project(directions)?, budgets, d)
}

/// Optimal single-source weight `1 / (1 + t N_1)`.
pub fn single_source_weight(t: f64, n1: f64) -> f64 {
    debug_assert!(t >= 0.0 && n1 >= 0.0);
    1.0 / (1.0 + t * n1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    /// Frank-Wolfe gap at the returned point.
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub alpha: Vec<f64>,
    pub t: f64,
    pub diagnostics: SolverDiagnostics,
}

/// Options for [`solve_simplex_qp_with`].
#[derive(Clone, Copy, Debug)]
pub struct QpOptions {
    /// Stop when the Frank-Wolfe gap is below `gap_tolerance * trace(M)`.
    pub gap_tolerance: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-12,
            max_iter: 200_000,
        }
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if ui - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn frank_wolfe_gap(m: &DMatrix<f64>, alpha: &[f64]) -> f64 {
    let a = DVector::from_column_slice(alpha);
    let g = 2.0 * m * &a;
    let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
    (g.dot(&a) - min).max(0.0)
}

fn largest_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Exact minimizer on the face spanned by `support`, if it is KKT-optimal.
fn polish(m: &DMatrix<f64>, support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    let mut kkt = DMatrix::zeros(s + 1, s + 1);
    for (a, &i) in support.iter().enumerate() {
        for (b, &j) in support.iter().enumerate() {
            kkt[(a, b)] = 2.0 * m[(i, j)];
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(s + 1);
    rhs[s] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut alpha = vec![0.0; m.nrows()];
    for (a, &i) in support.iter().enumerate() {
        if sol[a] < 0.0 {
            return None;
        }
        alpha[i] = sol[a];
    }
    let total: f64 = alpha.iter().sum();
    Some(alpha.into_iter().map(|v| v / total).collect())
}

pub fn solve_simplex_qp(m: &QpMatrix) -> Result<QpSolution> {
    solve_simplex_qp_with(m, &QpOptions::default())
}

/// Accelerated projected gradient on the simplex with function-value restart,
/// stopped on the Frank-Wolfe gap. Iterates start at the uniform point.
pub fn solve_simplex_qp_with(qp: &QpMatrix, opts: &QpOptions) -> Result<QpSolution> {
    let m = qp.matrix();
    let k = m.nrows();
    let finish = |alpha: Vec<f64>, iterations: usize| {
        let gap = frank_wolfe_gap(m, &alpha);
        QpSolution {
            t: quadratic(m, &alpha).max(0.0),
            alpha,
            diagnostics: SolverDiagnostics { iterations, gap },
        }
    };
    if k == 1 {
        return Ok(finish(vec![1.0], 0));
    }
    let tol = opts.gap_tolerance * m.trace().abs();
    let lambda = largest_eigenvalue(m);
    let uniform = vec![1.0 / k as f64; k];
    if lambda <= 0.0 {
        return Ok(finish(uniform, 0));
    }
    let mut step = 1.0 / (2.0 * lambda * (1.0 + 1e-9));
    let f = |a: &[f64]| quadratic(m, a);

    let mut x = uniform.clone();
    let mut fx = f(&x);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    let mut last_gap = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let yv = DVector::from_column_slice(&y);
        let g = 2.0 * m * yv;
        let trial: Vec<f64> = y
            .iter()
            .zip(g.iter())
            .map(|(yi, gi)| yi - step * gi)
            .collect();
        let x_next = project_simplex(&trial);
        let f_next = f(&x_next);
        if f_next > fx + 1e-15 * fx.abs() {
            if y == x {
                // a plain projected step went uphill: the step is too long
                step *= 0.5;
            }
            // restart momentum from the last accepted iterate
            y = x.clone();
            momentum = 1.0;
            continue;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        y = x_next
            .iter()
            .zip(&x)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        x = x_next;
        fx = f_next;
        momentum = next_momentum;

        if iter % 10 == 0 || iter < 10 {
            last_gap = frank_wolfe_gap(m, &x);
            if last_gap <= tol {
                return Ok(finish(x, iter));
            }
            if iter % 50 == 0 || iter < 10 {
                let support: Vec<usize> = (0..k).filter(|&i| x[i] > 0.0).collect();
                if let Some(p) = polish(m, &support) {
                    if frank_wolfe_gap(m, &p) <= tol && f(&p) <= fx + tol {
                        return Ok(finish(p, iter));
                    }
                }
            }
        }
    }
    Err(Error::QpConvergence {
        iterations: opts.max_iter,
        gap: last_gap,
    })
}

fn serialize_total<S: Serializer>(p: &KlPrediction, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(p.total)
}

/// Per-source weights and quantities with their derived quantities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferPlan {
    pub alpha: Vec<f64>,
    pub weights: Vec<f64>,
    pub quantities: Vec<usize>,
    pub s: f64,
    pub t: f64,
    #[serde(serialize_with = "serialize_total")]
    pub predicted_kl: KlPrediction,
    pub solver: Option<SolverDiagnostics>,
}

impl TransferPlan {
    /// Plan for explicit weights and quantities. `gram` is `Theta^T J Theta`;
    /// the QP matrix is rebuilt with the given quantities. Sources with zero
    /// quantity contribute nothing.
    pub fn from_weights(
        weights: &[f64],
        quantities: &[usize],
        gram: &DMatrix<f64>,
        n0: usize,
        d: usize,
    ) -> Result<Self> {
        let k = weights.len();
        if quantities.len() != k || gram.nrows() != k {
            return Err(Error::Argument(
                "weights, quantities and gram disagree on K".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Argument(
                "weights must be finite and non-negative".into(),
            ));
        }
        let eff: Vec<f64> = weights
            .iter()
            .zip(quantities)
            .map(|(w, &n)| if n == 0 { 0.0 } else { *w })
            .collect();
        let budgets: Vec<f64> = quantities.iter().map(|&n| n.max(1) as f64).collect();
        let qp = QpMatrix::from_gram(gram.clone(), &budgets, d)?;
        let nf: Vec<f64> = quantities.iter().map(|&n| n as f64).collect();
        let predicted_kl = predict_kl_multi(n0 as f64, &nf, &eff, qp.matrix(), d)?;
        let b: Vec<f64> = eff.iter().zip(&nf).map(|(w, n)| w * n).collect();
        let s: f64 = b.iter().sum();
        let alpha: Vec<f64> = if s > 0.0 {
            b.iter().map(|v| v / s).collect()
        } else {
            vec![0.0; k]
        };
        let t = if s > 0.0 { qp.objective(&alpha) } else { 0.0 };
        Ok(Self {
            alpha,
            weights: weights.to_vec(),
            quantities: quantities.to_vec(),
            s,
            t,
            predicted_kl,
            solver: None,
        })
    }
}

/// Runs the sequential procedure: `alpha*` from the QP, `s* = 1/t*`,
/// `w*_i = s* alpha*_i / N_i`, `n_i = N_i`.
pub fn optimal_plan(qp: &QpMatrix, budgets: &[usize], n0: usize, d: usize) -> Result<TransferPlan> {
    if budgets.len() != qp.dim() {
        return Err(Error::Argument(format!(
            "{} budgets for a {}-source QP",
            budgets.len(),
            qp.dim()
        )));
    }
    if budgets.contains(&0) {
        return Err(Error::Argument("source budgets must be >= 1".into()));
    }
    let sol = solve_simplex_qp(qp)?;
    if !(sol.t > 0.0) {
        return Err(Error::Argument(
            "t* = 0: the QP matrix vanishes on the simplex, so s* = 1/t* is unbounded".into(),
        ));
    }
    let s = 1.0 / sol.t;
    let weights: Vec<f64> = sol
        .alpha
        .iter()
        .zip(budgets)
        .map(|(a, &n)| s * a / n as f64)
        .collect();
    let nf: Vec<f64> = budgets.iter().map(|&n| n as f64).collect();
    let predicted_kl = predict_kl_multi(n0 as f64, &nf, &weights, qp.matrix(), d)?;
    Ok(TransferPlan {
        alpha: sol.alpha,
        weights,
        quantities: budgets.to_vec(),
        s,
        t: sol.t,
        predicted_kl,
        solver: Some(sol.diagnostics),
    })
}

/// One point of [`sub_budget_profile`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantityProfilePoint {
    pub fraction: f64,
    pub quantities: Vec<usize>,
    pub plan: TransferPlan,
}

/// Re-optimizes the plan with every budget scaled by each fraction, exposing
/// how the predicted KL changes when fewer source samples are used.
pub fn sub_budget_profile(
    gram: &DMatrix<f64>,
    budgets: &[usize],
    n0: usize,
    d: usize,
    fractions: &[f64],
) -> Result<Vec<QuantityProfilePoint>> {
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Argument(format!(
                    "budget fraction {f} outside (0, 1]"
                )));
            }
            let q: Vec<usize> = budgets
                .iter()
                .map(|&n| ((n as f64 * f).round() as usize).max(1))
                .collect();
            let qf: Vec<f64> = q.iter().map(|&n| n as f64).collect();
            let qp = QpMatrix::from_gram(gram.clone(), &qf, d)?;
            Ok(QuantityProfilePoint {
                fraction: f,
                plan: optimal_plan(&qp, &q, n0, d)?,
                quantities: q,
            })
        })
        .collect()
}

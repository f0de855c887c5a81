//! Fisher information: analytic, empirical (mean outer product of per-sample
//! scores) and projected onto a small set of directions.
//!
//! Every reduction is a sequential fixed-order sum, so results are bit-stable.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{ModelFamily, ParameterVector, Sample};

/// Largest dimension for which a dense `d x d` matrix is materialized.
pub const DENSE_MAX_DIM: usize = 1024;

/// Columns are displacements `theta_i - theta_0`, shape `d x K`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionMatrix(DMatrix<f64>);

impl DirectionMatrix {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.ncols() == 0 || columns.nrows() == 0 {
            return Err(Error::Argument(
                "direction matrix needs d >= 1 rows and K >= 1 columns".into(),
            ));
        }
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(
                "direction matrix entries must be finite".into(),
            ));
        }
        Ok(Self(columns))
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let d = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != d) {
            return Err(Error::Argument(
                "direction columns have different lengths".into(),
            ));
        }
        Self::new(DMatrix::from_fn(d, columns.len(), |i, j| columns[j][i]))
    }

    /// `[theta_1 - theta_0, ..., theta_K - theta_0]`.
    pub fn from_parameters(theta0: &[f64], sources: &[&[f64]]) -> Result<Self> {
        let cols: Vec<Vec<f64>> = sources
            .iter()
            .map(|t| {
                if t.len() != theta0.len() {
                    return Err(Error::Argument(
                        "source and target parameters differ in length".into(),
                    ));
                }
                Ok(t.iter().zip(theta0).map(|(a, b)| a - b).collect())
            })
            .collect::<Result<_>>()?;
        Self::from_columns(&cols)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn sources(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

#[derive(Clone, Debug)]
pub enum FisherOperator {
    Dense(DMatrix<f64>),
    /// Row `n` holds `Theta^T g_n` for per-sample score `g_n`.
    Gram {
        directions: DirectionMatrix,
        projections: DMatrix<f64>,
    },
}

impl FisherOperator {
    pub fn dense(&self) -> Option<&DMatrix<f64>> {
        match self {
            FisherOperator::Dense(m) => Some(m),
            FisherOperator::Gram { .. } => None,
        }
    }

    /// `Theta^T J Theta` for the given directions.
    pub fn project(&self, directions: &DirectionMatrix) -> Result<DMatrix<f64>> {
        match self {
            FisherOperator::Dense(j) => {
                if j.nrows() != directions.dim() {
                    return Err(Error::Argument(format!(
                        "Fisher matrix is {}x{} but directions have length {}",
                        j.nrows(),
                        j.ncols(),
                        directions.dim()
                    )));
                }
                let t = directions.matrix();
                Ok(symmetrize(t.transpose() * j * t))
            }
            FisherOperator::Gram {
                directions: own,
                projections,
            } => {
                if own != directions {
                    return Err(Error::Argument(
                        "gram-mode Fisher operator was built for different directions".into(),
                    ));
                }
                Ok(mean_outer(projections))
            }
        }
    }

    /// `v^T J v` in parameter space (dense) or direction space (gram).
    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        match self {
            FisherOperator::Dense(j) => {
                if v.len() != j.nrows() {
                    return Err(Error::Argument(
                        "vector length does not match Fisher dimension".into(),
                    ));
                }
                let mut acc = 0.0;
                for a in 0..v.len() {
                    for b in 0..v.len() {
                        acc += v[a] * j[(a, b)] * v[b];
                    }
                }
                Ok(acc)
            }
            FisherOperator::Gram { projections, .. } => {
                if v.len() != projections.ncols() {
                    return Err(Error::Argument(
                        "vector length does not match number of directions".into(),
                    ));
                }
                let n = projections.nrows() as f64;
                let mut acc = 0.0;
                for row in projections.row_iter() {
                    let p: f64 = row.iter().zip(v).map(|(a, b)| a * b).sum();
                    acc += p * p;
                }
                Ok(acc / n)
            }
        }
    }

    pub fn trace(&self) -> Option<f64> {
        self.dense().map(|m| m.trace())
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `(1/N) sum_n r_n r_n^T` over the rows of `rows`, summed in row order.
fn mean_outer(rows: &DMatrix<f64>) -> DMatrix<f64> {
    let k = rows.ncols();
    let mut acc = DMatrix::zeros(k, k);
    for row in rows.row_iter() {
        for a in 0..k {
            for b in a..k {
                acc[(a, b)] += row[a] * row[b];
            }
        }
    }
    let n = rows.nrows() as f64;
    for a in 0..k {
        for b in a..k {
            acc[(a, b)] /= n;
            acc[(b, a)] = acc[(a, b)];
        }
    }
    acc
}

/// Closed-form Fisher information for the categorical and Gaussian families.
pub fn analytic_fisher(family: &ModelFamily, theta: &ParameterVector) -> Result<FisherOperator> {
    family.validate(theta)?;
    match *family {
        ModelFamily::Categorical { outcomes } => {
            let d = outcomes - 1;
            let last = 1.0 - theta.iter().sum::<f64>();
            let mut j = DMatrix::from_element(d, d, 1.0 / last);
            for i in 0..d {
                j[(i, i)] += 1.0 / theta[i];
            }
            Ok(FisherOperator::Dense(j))
        }
        ModelFamily::GaussianIso { dim } => Ok(FisherOperator::Dense(DMatrix::identity(dim, dim))),
        ModelFamily::SoftmaxRegression { .. } => Err(Error::Unsupported {
            operation: "analytic_fisher",
            family: family.name(),
        }),
    }
}

/// `(1/N) sum g(x) g(x)^T` with scores evaluated at `theta`.
pub fn empirical_fisher(
    family: &ModelFamily,
    theta: &ParameterVector,
    samples: &[Sample],
) -> Result<FisherOperator> {
    if samples.is_empty() {
        return Err(Error::Argument(
            "empirical Fisher needs at least one sample".into(),
        ));
    }
    let d = family.dimension();
    if d > DENSE_MAX_DIM {
        return Err(Error::Scale(format!(
            "dense Fisher requested for d = {d} > {DENSE_MAX_DIM}; use projected_gram"
        )));
    }
    let mut acc = DMatrix::zeros(d, d);
    for x in samples {
        let g = family.score(theta, x)?;
        for a in 0..d {
            if g[a] == 0.0 {
                continue;
            }
            for b in a..d {
                acc[(a, b)] += g[a] * g[b];
            }
        }
    }
    let n = samples.len() as f64;
    for a in 0..d {
        for b in a..d {
            acc[(a, b)] /= n;
            acc[(b, a)] = acc[(a, b)];
        }
    }
    Ok(FisherOperator::Dense(acc))
}

/// Gram-mode operator holding `Theta^T g_n` for every sample.
pub fn gram_operator(
    family: &ModelFamily,
    theta: &ParameterVector,
    samples: &[Sample],
    directions: &DirectionMatrix,
) -> Result<FisherOperator> {
    if samples.is_empty() {
        return Err(Error::Argument(
            "projected Fisher needs at least one sample".into(),
        ));
    }
    if directions.dim() != family.dimension() {
        return Err(Error::Argument(format!(
            "directions have length {} but the family has d = {}",
            directions.dim(),
            family.dimension()
        )));
    }
    let k = directions.sources();
    let t = directions.matrix();
    let mut projections = DMatrix::zeros(samples.len(), k);
    for (n, x) in samples.iter().enumerate() {
        let g = family.score(theta, x)?;
        for c in 0..k {
            projections[(n, c)] = t.column(c).iter().zip(&g).map(|(a, b)| a * b).sum();
        }
    }
    Ok(FisherOperator::Gram {
        directions: directions.clone(),
        projections,
    })
}

/// `(1/N) sum (Theta^T g)(Theta^T g)^T`, a `K x K` matrix, without forming `d x d`.
pub fn projected_gram(
    family: &ModelFamily,
    theta: &ParameterVector,
    samples: &[Sample],
    directions: &DirectionMatrix,
) -> Result<DMatrix<f64>> {
    gram_operator(family, theta, samples, directions)?.project(directions)
}

/// Checks `a^T M a >= -tol * trace(M) * |a|^2` through the smallest eigenvalue.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let sym = symmetrize(m.clone());
    let min = sym
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    min >= -rel_tol * sym.trace().abs().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn pv(v: &[f64]) -> ParameterVector {
        ParameterVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn analytic_examples() {
        let g = ModelFamily::gaussian_iso(3).unwrap();
        let j = analytic_fisher(&g, &pv(&[1.0, -2.0, 0.5])).unwrap();
        assert_eq!(j.dense().unwrap(), &DMatrix::identity(3, 3));
        let b = ModelFamily::categorical(2).unwrap();
        let j = analytic_fisher(&b, &pv(&[0.5])).unwrap();
        assert!((j.dense().unwrap()[(0, 0)] - 4.0).abs() < 1e-12);
        let s = ModelFamily::softmax_regression(2, 2).unwrap();
        assert!(matches!(
            analytic_fisher(&s, &pv(&[0.0; 4])),
            Err(Error::Unsupported { .. })
        ));
    }

    #[test]
    fn empirical_examples() {
        let g = ModelFamily::gaussian_iso(2).unwrap();
        let theta = pv(&[1.0, 2.0]);
        let j = empirical_fisher(&g, &theta, &[Sample::Point(vec![1.0, 2.0])]).unwrap();
        assert_eq!(j.dense().unwrap(), &DMatrix::zeros(2, 2));
        let xs = vec![Sample::Point(vec![2.0, 0.0]); 5];
        let j = empirical_fisher(&g, &theta, &xs).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 4.0]);
        assert!((j.dense().unwrap() - expected).abs().max() < 1e-15);
        assert!(empirical_fisher(&g, &theta, &[]).is_err());
    }

    #[test]
    fn empirical_converges_to_analytic() {
        let fam = ModelFamily::categorical(3).unwrap();
        let theta = pv(&[0.2, 0.3]);
        let xs = fam.sample(&theta, 100_000, 42).unwrap();
        let emp = empirical_fisher(&fam, &theta, &xs).unwrap();
        let ana = analytic_fisher(&fam, &theta).unwrap();
        let (e, a) = (emp.dense().unwrap(), ana.dense().unwrap());
        for i in 0..2 {
            for k in 0..2 {
                assert!((e[(i, k)] - a[(i, k)]).abs() / a[(i, k)] <= 0.05);
            }
        }
    }

    #[test]
    fn gram_examples() {
        let fam = ModelFamily::categorical(4).unwrap();
        let theta = pv(&[0.1, 0.2, 0.3]);
        let xs = fam.sample(&theta, 500, 3).unwrap();
        let zero = DirectionMatrix::from_columns(&[vec![0.0; 3]]).unwrap();
        assert_eq!(
            projected_gram(&fam, &theta, &xs, &zero).unwrap(),
            DMatrix::zeros(1, 1)
        );

        let basis =
            DirectionMatrix::from_columns(&[vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let g = projected_gram(&fam, &theta, &xs, &basis).unwrap();
        let dense = empirical_fisher(&fam, &theta, &xs).unwrap();
        let e = dense.dense().unwrap();
        let idx = [0, 2];
        for a in 0..2 {
            for b in 0..2 {
                assert!((g[(a, b)] - e[(idx[a], idx[b])]).abs() < 1e-12);
            }
        }
        let wrong = DirectionMatrix::from_columns(&[vec![1.0, 0.0]]).unwrap();
        assert!(projected_gram(&fam, &theta, &xs, &wrong).is_err());
    }

    #[test]
    fn gram_matches_dense_on_random_instance() {
        let fam = ModelFamily::gaussian_iso(50).unwrap();
        let mut r = rng::seeded(9);
        let theta = pv(&(0..50)
            .map(|_| r.random_range(-1.0..1.0))
            .collect::<Vec<_>>());
        let xs = fam.sample(&theta, 200, 4).unwrap();
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..50).map(|_| r.random_range(-0.3..0.3)).collect())
            .collect();
        let dirs = DirectionMatrix::from_columns(&cols).unwrap();
        let g = projected_gram(&fam, &theta, &xs, &dirs).unwrap();
        let dense = empirical_fisher(&fam, &theta, &xs)
            .unwrap()
            .project(&dirs)
            .unwrap();
        assert!((g - dense).abs().max() < 1e-10);
    }

    #[test]
    fn operators_are_psd() {
        let fam = ModelFamily::softmax_regression(3, 3).unwrap();
        let mut r = rng::seeded(12);
        let theta = pv(&(0..9)
            .map(|_| r.random_range(-1.0..1.0))
            .collect::<Vec<_>>());
        let xs = fam.sample(&theta, 300, 1).unwrap();
        let j = empirical_fisher(&fam, &theta, &xs).unwrap();
        let m = j.dense().unwrap();
        assert!((m - m.transpose()).abs().max() <= 1e-12);
        assert!(is_psd(m, 1e-10));
        let tr = m.trace();
        for _ in 0..100 {
            let a: Vec<f64> = (0..9).map(|_| r.random_range(-1.0..1.0)).collect();
            let n2: f64 = a.iter().map(|v| v * v).sum();
            assert!(j.quadratic_form(&a).unwrap() >= -1e-10 * tr * n2);
        }
    }

    #[test]
    fn fisher_difference_shrinks_with_shift() {
        let fam = ModelFamily::categorical(3).unwrap();
        let theta0 = pv(&[0.3, 0.3]);
        let j0 = analytic_fisher(&fam, &theta0)
            .unwrap()
            .dense()
            .unwrap()
            .clone();
        let u = [0.6, -0.8];
        let diff = |shift: f64| {
            let t1 = pv(&[0.3 + shift * u[0], 0.3 + shift * u[1]]);
            let j1 = analytic_fisher(&fam, &t1).unwrap().dense().unwrap().clone();
            (j1 - &j0).norm()
        };
        let n0 = 2000.0f64;
        let mut prev = diff(2.0 / n0.sqrt());
        for c in [1.0, 0.5, 0.25] {
            let cur = diff(c / n0.sqrt());
            assert!(cur <= 0.5 * prev * 1.2, "{cur} vs {prev}");
            prev = cur;
        }
    }
}

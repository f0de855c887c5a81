use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest `K` accepted by [`brute_force_simplex`].
pub const BRUTE_FORCE_MAX_SOURCES: usize = 4;

/// Exhaustive minimum of `a^T M a` over the lattice `{a : a_i in step * Z, sum a = 1, a >= 0}`.
///
/// Ties resolve to the lexicographically first lattice point.
pub fn brute_force_simplex(m: &DMatrix<f64>, step: f64) -> Result<(Vec<f64>, f64)> {
    let k = m.nrows();
    if k == 0 || m.ncols() != k {
        return Err(Error::Argument(
            "brute force needs a non-empty square matrix".into(),
        ));
    }
    if k > BRUTE_FORCE_MAX_SOURCES {
        return Err(Error::Scale(format!(
            "brute force simplex limited to K <= {BRUTE_FORCE_MAX_SOURCES}, got {k}"
        )));
    }
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::Argument(format!(
            "lattice step must lie in (0, 0.1], got {step}"
        )));
    }
    if k == 1 {
        return Ok((vec![1.0], m[(0, 0)]));
    }
    let n = (1.0 / step).round() as usize;
    let h = 1.0 / n as f64;
    let mut best = (f64::INFINITY, vec![0usize; k]);
    let mut prefix = vec![0usize; k - 2];
    search(m, h, &mut prefix, 0, n, &mut best);
    let alpha: Vec<f64> = best.1.iter().map(|&i| i as f64 * h).collect();
    let obj = crate::kl::quadratic(m, &alpha);
    Ok((alpha, obj))
}

fn search(
    m: &DMatrix<f64>,
    h: f64,
    prefix: &mut Vec<usize>,
    depth: usize,
    remaining: usize,
    best: &mut (f64, Vec<usize>),
) {
    let k = m.nrows();
    if depth < k - 2 {
        for i in 0..=remaining {
            prefix[depth] = i;
            search(m, h, prefix, depth + 1, remaining - i, best);
        }
        return;
    }
    // Last two coordinates: a_{k-2} = j h, a_{k-1} = (remaining - j) h.
    // f(j) = c0 + c1 (j h) + c2 (j h)^2 along v = e_{k-2} - e_{k-1}.
    let mut p = vec![0.0; k];
    for (i, &v) in prefix.iter().enumerate() {
        p[i] = v as f64 * h;
    }
    p[k - 1] = remaining as f64 * h;
    let (a, b) = (k - 2, k - 1);
    let mp: Vec<f64> = (0..k)
        .map(|r| (0..k).map(|c| m[(r, c)] * p[c]).sum())
        .collect();
    let c0: f64 = p.iter().zip(&mp).map(|(x, y)| x * y).sum();
    let c1 = 2.0 * (mp[a] - mp[b]);
    let c2 = m[(a, a)] + m[(b, b)] - 2.0 * m[(a, b)];
    for j in 0..=remaining {
        let x = j as f64 * h;
        let f = c0 + x * (c1 + x * c2);
        if f < best.0 {
            best.0 = f;
            best.1[..k - 2].copy_from_slice(prefix);
            best.1[a] = j;
            best.1[b] = remaining - j;
        }
    }
}

//! Lawson–Hanson active-set non-negative least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    /// `A^T (b - A x)`; zero on the passive set, non-positive elsewhere at optimum.
    pub dual: Vec<f64>,
    pub iterations: usize,
}

/// Minimises `||b - A x||^2` subject to `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &[f64]) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Err(Error::EmptyMatrix);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::MissingValues("nnls input".into()));
    }
    let bv = DVector::from_column_slice(b);
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())) * bv.amax().max(1.0) * m as f64;
    let tol = 1e-13 * scale.max(1e-300);

    let mut x = DVector::<f64>::zeros(n);
    let mut passive = vec![false; n];
    let dual_of = |x: &DVector<f64>| a.transpose() * (&bv - a * x);
    let mut w = dual_of(&x);
    let max_outer = 3 * n + 10;
    let mut iterations = 0;

    for _ in 0..max_outer {
        let candidate = (0..n)
            .filter(|&j| !passive[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)));
        let Some(j) = candidate else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;
        iterations += 1;

        loop {
            let s = solve_passive(a, &bv, &passive);
            let feasible = (0..n).filter(|&i| passive[i]).all(|i| s[i] > 0.0);
            if feasible {
                x = s;
                break;
            }
            let mut alpha = f64::INFINITY;
            for i in 0..n {
                if passive[i] && s[i] <= 0.0 {
                    let denom = x[i] - s[i];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            x = &x + alpha * (&s - &x);
            for i in 0..n {
                if passive[i] && x[i] <= 1e-15 * (1.0 + x.amax()) {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = dual_of(&x);
    }
    Ok(NnlsSolution {
        x: x.iter().copied().collect(),
        dual: w.iter().copied().collect(),
        iterations,
    })
}

/// Unconstrained least squares on the passive columns; zero elsewhere.
fn solve_passive(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..passive.len()).filter(|&j| passive[j]).collect();
    let sub = a.select_columns(idx.iter());
    let svd = sub.svd(true, true);
    let sol = svd
        .solve(b, 1e-12 * svd.singular_values.max())
        .unwrap_or_else(|_| DVector::zeros(idx.len()));
    let mut full = DVector::zeros(passive.len());
    for (k, &j) in idx.iter().enumerate() {
        full[j] = sol[k];
    }
    full
}

//! Gaussian and logistic GLMs with offsets, prior weights and aliasing.
//!
//! The logistic fit is IRLS on the Bernoulli likelihood and accepts
//! fractional responses in `[0, 1]`. Columns that are (numerically) linear
//! combinations of earlier columns are aliased: their coefficient is fixed at
//! zero, which is how collinear interaction or power terms on small strata are
//! absorbed.

use nalgebra::{DMatrix, DVector};

use super::Family;
use crate::error::{Error, Result};
use crate::numeric::{clip_prob, expit};

const MAX_ITER: usize = 100;
const COEF_TOL: f64 = 1e-8;
const RIDGE: f64 = 1e-8;
/// A column is aliased when `1 - R^2` against earlier columns falls below this.
const ALIAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    /// Intercept first, then one coefficient per column of `x`.
    pub coef: Vec<f64>,
    pub family: Family,
    pub aliased: Vec<bool>,
    pub converged: bool,
    pub iterations: usize,
}

impl GlmFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>, offset: Option<&[f64]>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let mut eta = self.coef[0];
                for j in 0..x.ncols() {
                    eta += self.coef[j + 1] * x[(i, j)];
                }
                eta + offset.map_or(0.0, |o| o[i])
            })
            .collect()
    }

    /// Mean-scale predictions; logistic predictions are clipped away from 0 and 1.
    pub fn predict(&self, x: &DMatrix<f64>, offset: Option<&[f64]>) -> Vec<f64> {
        let eta = self.linear_predictor(x, offset);
        match self.family {
            Family::Gaussian => eta,
            Family::Binomial => eta.into_iter().map(|e| clip_prob(expit(e))).collect(),
        }
    }
}

/// Fits a GLM with intercept. `weights` are prior weights (default 1).
pub fn fit_glm(
    x: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    offset: Option<&[f64]>,
    weights: Option<&[f64]>,
) -> Result<GlmFit> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::LengthMismatch {
            what: "y".into(),
            expected: n,
            got: y.len(),
        });
    }
    if family == Family::Binomial && y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidSpec("binomial response outside [0, 1]".into()));
    }
    let design = with_intercept(x);
    let off = |i: usize| offset.map_or(0.0, |o| o[i]);
    let prior = |i: usize| weights.map_or(1.0, |w| w[i]);

    match family {
        Family::Gaussian => {
            let z: Vec<f64> = (0..n).map(|i| y[i] - off(i)).collect();
            let w: Vec<f64> = (0..n).map(prior).collect();
            let (coef, aliased) = weighted_least_squares(&design, &z, &w)?;
            Ok(GlmFit {
                coef,
                family,
                aliased,
                converged: true,
                iterations: 1,
            })
        }
        Family::Binomial => irls_logistic(&design, y, &off, &prior),
    }
}

fn irls_logistic(
    design: &DMatrix<f64>,
    y: &[f64],
    off: &dyn Fn(usize) -> f64,
    prior: &dyn Fn(usize) -> f64,
) -> Result<GlmFit> {
    let (n, q) = design.shape();
    let wsum: f64 = (0..n).map(prior).sum();
    let ybar = (0..n).map(|i| prior(i) * y[i]).sum::<f64>() / wsum;
    let mut beta = vec![0.0; q];
    beta[0] = crate::numeric::logit(ybar.clamp(1e-4, 1.0 - 1e-4));

    let eta_of = |b: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| off(i) + (0..q).map(|j| design[(i, j)] * b[j]).sum::<f64>())
            .collect()
    };
    let deviance = |eta: &[f64]| -> f64 {
        let mut d = 0.0;
        for i in 0..n {
            let p = expit(eta[i]).clamp(1e-15, 1.0 - 1e-15);
            d -= prior(i) * (y[i] * p.ln() + (1.0 - y[i]) * (1.0 - p).ln());
        }
        d
    };

    let mut eta = eta_of(&beta);
    let mut dev = deviance(&eta);
    let mut aliased = vec![false; q];
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..MAX_ITER {
        iterations = it + 1;
        let mut z = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n {
            let mu = expit(eta[i]);
            let var = (mu * (1.0 - mu)).max(1e-10);
            z[i] = eta[i] - off(i) + (y[i] - mu) / var;
            w[i] = prior(i) * var;
        }
        let (cand, al) = weighted_least_squares(design, &z, &w)?;
        aliased = al;
        // step-halving keeps the deviance non-increasing
        let mut step = 1.0;
        let mut next = cand.clone();
        let mut next_eta = eta_of(&next);
        let mut next_dev = deviance(&next_eta);
        let mut halvings = 0;
        while next_dev > dev * (1.0 + 1e-12) + 1e-12 && halvings < 30 {
            step *= 0.5;
            next = beta
                .iter()
                .zip(&cand)
                .map(|(b, c)| b + step * (c - b))
                .collect();
            next_eta = eta_of(&next);
            next_dev = deviance(&next_eta);
            halvings += 1;
        }
        let change = beta
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        beta = next;
        eta = next_eta;
        dev = next_dev;
        if change < COEF_TOL {
            converged = true;
            break;
        }
    }
    Ok(GlmFit {
        coef: beta,
        family: Family::Binomial,
        aliased,
        converged,
        iterations,
    })
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut d = DMatrix::from_element(n, p + 1, 1.0);
    d.columns_mut(1, p).copy_from(x);
    d
}

/// Solves `min sum w_i (z_i - x_i b)^2`, zeroing aliased columns.
pub(crate) fn weighted_least_squares(
    x: &DMatrix<f64>,
    z: &[f64],
    w: &[f64],
) -> Result<(Vec<f64>, Vec<bool>)> {
    let (n, q) = x.shape();
    let mut gram = DMatrix::<f64>::zeros(q, q);
    let mut rhs = DVector::<f64>::zeros(q);
    for i in 0..n {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        for a in 0..q {
            let xa = wi * x[(i, a)];
            rhs[a] += xa * z[i];
            for b in 0..=a {
                gram[(a, b)] += xa * x[(i, b)];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }

    let aliased = detect_aliased(&gram);
    let keep: Vec<usize> = (0..q).filter(|&j| !aliased[j]).collect();
    if keep.is_empty() {
        return Err(Error::SingularDesign);
    }
    let sub = gram.select_rows(keep.iter()).select_columns(keep.iter());
    let sub_rhs = DVector::from_iterator(keep.len(), keep.iter().map(|&j| rhs[j]));
    // diagonal scaling improves conditioning for power terms
    let scale: Vec<f64> = (0..keep.len()).map(|j| sub[(j, j)].sqrt().max(1e-300)).collect();
    let scaled = DMatrix::from_fn(keep.len(), keep.len(), |a, b| sub[(a, b)] / (scale[a] * scale[b]));
    let scaled_rhs = DVector::from_fn(keep.len(), |a, _| sub_rhs[a] / scale[a]);
    let sol = match scaled.clone().cholesky() {
        Some(ch) => ch.solve(&scaled_rhs),
        None => {
            let mut ridged = scaled;
            for j in 0..keep.len() {
                ridged[(j, j)] += RIDGE;
            }
            ridged
                .cholesky()
                .ok_or(Error::SingularDesign)?
                .solve(&scaled_rhs)
        }
    };
    let mut coef = vec![0.0; q];
    for (k, &j) in keep.iter().enumerate() {
        coef[j] = sol[k] / scale[k];
    }
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::SingularDesign);
    }
    Ok((coef, aliased))
}

/// In-order Cholesky on the correlation-scaled Gram matrix; a column whose
/// pivot collapses is flagged as aliased and skipped.
fn detect_aliased(gram: &DMatrix<f64>) -> Vec<bool> {
    let q = gram.nrows();
    let mut aliased = vec![false; q];
    let diag: Vec<f64> = (0..q).map(|j| gram[(j, j)]).collect();
    let mut l = DMatrix::<f64>::zeros(q, q);
    for j in 0..q {
        if diag[j] <= 0.0 {
            aliased[j] = true;
            continue;
        }
        let r = |a: usize, b: usize| gram[(a, b)] / (diag[a] * diag[b]).sqrt();
        let mut d = r(j, j);
        for k in 0..j {
            if !aliased[k] {
                d -= l[(j, k)] * l[(j, k)];
            }
        }
        if d < ALIAS_TOL {
            aliased[j] = true;
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..q {
            if diag[i] <= 0.0 {
                continue;
            }
            let mut s = r(i, j);
            for k in 0..j {
                if !aliased[k] {
                    s -= l[(i, k)] * l[(j, k)];
                }
            }
            l[(i, j)] = s / ljj;
        }
    }
    aliased
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn exact_line_is_recovered() {
        let xs = [-2.0, -1.0, 0.0, 0.5, 1.0, 3.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let fit = fit_glm(&col(&xs), &y, Family::Gaussian, None, None).unwrap();
        assert!((fit.coef[0] - 2.0).abs() < 1e-10);
        assert!((fit.coef[1] - 3.0).abs() < 1e-10);
        let pred = fit.predict(&col(&xs), None);
        for (p, t) in pred.iter().zip(&y) {
            assert!((p - t).abs() < 1e-10);
        }
    }

    #[test]
    fn full_offset_leaves_nothing_to_fit() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0, 4.0];
        let y: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let fit = fit_glm(&col(&xs), &y, Family::Gaussian, Some(&y), None).unwrap();
        assert!(fit.coef.iter().all(|c| c.abs() < 1e-8));
    }

    #[test]
    fn logistic_fractional_response_recovers_generator() {
        let xs = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let y: Vec<f64> = xs.iter().map(|&x| expit(x)).collect();
        let fit = fit_glm(&col(&xs), &y, Family::Binomial, None, None).unwrap();
        assert!(fit.converged);
        assert!(fit.coef[0].abs() < 1e-6, "{:?}", fit.coef);
        assert!((fit.coef[1] - 1.0).abs() < 1e-6, "{:?}", fit.coef);
    }

    #[test]
    fn huge_linear_predictor_is_clipped() {
        let fit = GlmFit {
            coef: vec![0.0, 100.0],
            family: Family::Binomial,
            aliased: vec![false, false],
            converged: true,
            iterations: 1,
        };
        let p = fit.predict(&col(&[5.0, -5.0]), None);
        assert_eq!(p[0], 1.0 - 1e-6);
        assert!(p[0] < 1.0);
        assert_eq!(p[1], 1e-6);
    }

    #[test]
    fn separable_data_flags_nonconvergence() {
        let xs = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let fit = fit_glm(&col(&xs), &y, Family::Binomial, None, None).unwrap();
        assert!(!fit.converged);
        let p = fit.predict(&col(&xs), None);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn duplicate_column_is_aliased() {
        let x = DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let y = [1.0, 3.0, 1.0, 3.0, 3.0];
        let fit = fit_glm(&x, &y, Family::Gaussian, None, None).unwrap();
        assert_eq!(fit.aliased, vec![false, false, true]);
        assert!((fit.coef[0] - 1.0).abs() < 1e-10 && (fit.coef[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn weights_match_replication() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let y = [0.1, 0.9, 2.2, 2.8];
        let w = [1.0, 2.0, 1.0, 3.0];
        let fit_w = fit_glm(&col(&xs), &y, Family::Gaussian, None, Some(&w)).unwrap();
        let rep_x = [0.0, 1.0, 1.0, 2.0, 3.0, 3.0, 3.0];
        let rep_y = [0.1, 0.9, 0.9, 2.2, 2.8, 2.8, 2.8];
        let fit_r = fit_glm(&col(&rep_x), &rep_y, Family::Gaussian, None, None).unwrap();
        for (a, b) in fit_w.coef.iter().zip(&fit_r.coef) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

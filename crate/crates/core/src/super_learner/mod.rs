//! V-fold cross-validated stacking with a simplex-weighted meta-learner.

mod folds;
pub mod nnls;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub use folds::{make_folds, FoldAssignment};
pub use nnls::{nnls, NnlsSolution};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{fit_learner, Family, FittedLearner, LearnerKind, LearnerSpec};
use crate::numeric::clip_prob;
use crate::seed::child_rng;

/// Default number of cross-validation folds.
pub const DEFAULT_V: usize = 10;

/// Which regression a Super Learner is asked to fit.
#[derive(Debug, Clone)]
pub enum Target {
    /// `E[Y | A, W]` on the design `[A, W]`.
    OutcomeGivenAW,
    /// `P(A = 1 | W)`.
    Propensity,
    Custom { x: DMatrix<f64>, y: Vec<f64>, family: Family },
}

impl Target {
    /// Design matrix, response and loss family for this target.
    pub fn materialize(&self, d: &Dataset) -> (DMatrix<f64>, Vec<f64>, Family) {
        match self {
            Target::OutcomeGivenAW => {
                let fam = if d.outcome_is_binary() {
                    Family::Binomial
                } else {
                    Family::Gaussian
                };
                (d.aw_matrix(None), d.y.clone(), fam)
            }
            Target::Propensity => (d.w.clone(), d.a.clone(), Family::Binomial),
            Target::Custom { x, y, family } => (x.clone(), y.clone(), *family),
        }
    }
}

/// Cross-validated predictions, one column per surviving learner.
#[derive(Debug, Clone)]
pub struct LevelOne {
    pub z: DMatrix<f64>,
    /// Indices into the requested library of the learners kept in `z`.
    pub kept: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Builds the level-one matrix: row `i`, column `m` holds learner `m`'s
/// prediction from a fit that excluded the fold containing `i`.
/// A learner that fails on any fold is dropped with a warning.
pub fn level_one_matrix<R: Rng>(
    x: &DMatrix<f64>,
    y: &[f64],
    specs: &[LearnerSpec],
    folds: &FoldAssignment,
    rng: &mut R,
) -> Result<LevelOne> {
    if specs.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let n = y.len();
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..folds.v)
        .map(|k| (folds.training(k), folds.validation(k)))
        .collect();
    let mut columns = Vec::new();
    let mut kept = Vec::new();
    let mut warnings = Vec::new();
    for (m, spec) in specs.iter().enumerate() {
        // one seed per learner keeps fits independent of library order
        let mut lrng = child_rng(rng);
        let mut col = vec![0.0; n];
        let mut failure = None;
        for (k, (train, valid)) in splits.iter().enumerate() {
            let xt = x.select_rows(train.iter());
            let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let result = fit_learner(spec, &xt, &yt, &mut lrng)
                .and_then(|model| model.predict(&x.select_rows(valid.iter())));
            match result {
                Ok(pred) => {
                    for (&i, p) in valid.iter().zip(pred) {
                        col[i] = p;
                    }
                }
                Err(e) => {
                    failure = Some(format!("learner {spec} dropped: fold {k}: {e}"));
                    break;
                }
            }
        }
        if failure.is_none() && col.iter().any(|v| !v.is_finite()) {
            failure = Some(format!("learner {spec} dropped: non-finite predictions"));
        }
        match failure {
            Some(w) => warnings.push(w),
            None => {
                columns.push(col);
                kept.push(m);
            }
        }
    }
    let z = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    Ok(LevelOne { z, kept, warnings })
}

/// Meta-learning objective `(1/n) sum (y_i - z_i w)^2`.
pub fn meta_objective(z: &DMatrix<f64>, y: &[f64], w: &[f64]) -> f64 {
    let n = y.len();
    (0..n)
        .map(|i| {
            let fit: f64 = (0..z.ncols()).map(|m| z[(i, m)] * w[m]).sum();
            (y[i] - fit).powi(2)
        })
        .sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone)]
pub struct SimplexWeights {
    pub weights: Vec<f64>,
    /// Lawson–Hanson NNLS solution before normalisation.
    pub raw: Vec<f64>,
    /// True when NNLS returned all zeros and the best single column was used.
    pub discrete_fallback: bool,
}

/// Convex combination weights for the columns of `z`.
///
/// Lawson–Hanson NNLS is solved first. Its normalised solution starts an
/// active-set pass on the simplex itself, so the returned weights minimise the
/// squared error over all convex combinations (plain normalisation can lose
/// to a single column). If NNLS returns all zeros, weight 1 goes to the
/// column with the smallest squared error.
pub fn solve_simplex_nnls(z: &DMatrix<f64>, y: &[f64]) -> Result<SimplexWeights> {
    let (n, m) = z.shape();
    if n == 0 || m == 0 {
        return Err(Error::EmptyMatrix);
    }
    if y.len() != n {
        return Err(Error::LengthMismatch {
            what: "y".into(),
            expected: n,
            got: y.len(),
        });
    }
    if z.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::MissingValues("level-one matrix".into()));
    }
    let sol = nnls(z, y)?;
    let total: f64 = sol.x.iter().sum();
    if total > 0.0 {
        let start: Vec<f64> = sol.x.iter().map(|w| w / total).collect();
        Ok(SimplexWeights {
            weights: simplex_least_squares(z, y, start),
            raw: sol.x,
            discrete_fallback: false,
        })
    } else {
        let risks: Vec<f64> = (0..m)
            .map(|j| (0..n).map(|i| (y[i] - z[(i, j)]).powi(2)).sum::<f64>())
            .collect();
        let best = argmin(&risks);
        let mut weights = vec![0.0; m];
        weights[best] = 1.0;
        Ok(SimplexWeights {
            weights,
            raw: sol.x,
            discrete_fallback: true,
        })
    }
}

/// Primal active-set method for `min ||y - Zw||^2` over the simplex, from a
/// feasible start.
fn simplex_least_squares(z: &DMatrix<f64>, y: &[f64], start: Vec<f64>) -> Vec<f64> {
    let m = z.ncols();
    let yv = DVector::from_column_slice(y);
    let gradient = |w: &DVector<f64>| z.transpose() * (z * w - &yv);
    let tol = 1e-13 * (z.amax() * (z.amax() + yv.amax()) * y.len() as f64).max(1e-300);
    let mut w = DVector::from_vec(start);
    let mut free: Vec<bool> = w.iter().map(|&v| v > 0.0).collect();
    for _ in 0..(10 * m + 50) {
        let target = equality_solution(z, &yv, &free);
        if (0..m).filter(|&j| free[j]).all(|j| target[j] > 0.0) {
            w = target;
            let g = gradient(&w);
            let level: f64 = (0..m).filter(|&j| free[j]).map(|j| w[j] * g[j]).sum();
            let entering = (0..m)
                .filter(|&j| !free[j] && g[j] < level - tol)
                .min_by(|&i, &j| g[i].total_cmp(&g[j]));
            match entering {
                Some(j) => free[j] = true,
                None => break,
            }
        } else {
            let mut alpha = 1.0f64;
            for j in (0..m).filter(|&j| free[j] && target[j] <= 0.0) {
                alpha = alpha.min(w[j] / (w[j] - target[j]));
            }
            w += alpha * (&target - &w);
            for j in 0..m {
                if free[j] && target[j] <= 0.0 && w[j] <= 1e-15 {
                    free[j] = false;
                    w[j] = 0.0;
                }
            }
        }
    }
    let total = w.sum();
    w.iter().map(|v| v.max(0.0) / total).collect()
}

/// Least squares over `{w : sum w = 1, w = 0 off the free set}`, written as
/// `w = e_b + sum_j u_j (e_j - e_b)` for the first free column `b` and solved
/// on `Z` directly (not the normal equations) for accuracy with collinear columns.
fn equality_solution(z: &DMatrix<f64>, y: &DVector<f64>, free: &[bool]) -> DVector<f64> {
    let idx: Vec<usize> = (0..free.len()).filter(|&j| free[j]).collect();
    let mut full = DVector::zeros(free.len());
    let Some((&b, rest)) = idx.split_first() else {
        return full;
    };
    full[b] = 1.0;
    if rest.is_empty() {
        return full;
    }
    let zb = z.column(b);
    let d = DMatrix::from_fn(z.nrows(), rest.len(), |i, k| z[(i, rest[k])] - zb[i]);
    let svd = d.svd(true, true);
    let u = svd
        .solve(&(y - zb), 1e-12 * svd.singular_values.max())
        .unwrap_or_else(|_| DVector::zeros(rest.len()));
    for (k, &j) in rest.iter().enumerate() {
        full[j] = u[k];
        full[b] -= u[k];
    }
    full
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Held-out risk of one level-one column.
pub fn cv_risk(pred: impl Iterator<Item = f64>, y: &[f64], family: Family) -> f64 {
    let n = y.len() as f64;
    match family {
        Family::Gaussian => pred.zip(y).map(|(p, t)| (t - p).powi(2)).sum::<f64>() / n,
        Family::Binomial => {
            pred.zip(y)
                .map(|(p, t)| {
                    let p = clip_prob(p);
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum::<f64>()
                / n
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuperLearnerModel {
    /// Library as requested.
    pub specs: Vec<LearnerSpec>,
    /// Full-data refits; `None` for dropped learners and zero-weight learners.
    pub base_models: Vec<Option<FittedLearner>>,
    /// One weight per requested learner (0 for dropped learners); sums to 1.
    pub weights: Vec<f64>,
    /// Held-out risk per requested learner (`NaN` for dropped learners).
    pub cv_risks: Vec<f64>,
    pub family: Family,
    pub warnings: Vec<String>,
}

impl SuperLearnerModel {
    /// Weighted combination of base predictions.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.nrows()];
        for (model, &w) in self.base_models.iter().zip(&self.weights) {
            if let Some(model) = model {
                if w > 0.0 {
                    let p = model.predict(x)?;
                    for (o, v) in out.iter_mut().zip(p) {
                        *o += w * v;
                    }
                }
            }
        }
        if self.family == Family::Binomial {
            out.iter_mut().for_each(|v| *v = clip_prob(*v));
        }
        Ok(out)
    }

    /// Human-readable weight summary, e.g. `glm=0.700 forest(..)=0.300`.
    pub fn describe_weights(&self) -> String {
        self.specs
            .iter()
            .zip(&self.weights)
            .map(|(s, w)| format!("{s}={w:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub fn predict_sl(model: &SuperLearnerModel, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    model.predict(x)
}

/// Fits the ensemble on `(x, y)` with the given fold assignment.
pub fn fit_super_learner<R: Rng>(
    x: &DMatrix<f64>,
    y: &[f64],
    family: Family,
    library: &[LearnerKind],
    folds: &FoldAssignment,
    rng: &mut R,
) -> Result<SuperLearnerModel> {
    let specs: Vec<LearnerSpec> = library
        .iter()
        .map(|&k| LearnerSpec::new(k, family))
        .collect::<Result<_>>()?;
    if folds.n() != y.len() {
        return Err(Error::LengthMismatch {
            what: "fold assignment".into(),
            expected: y.len(),
            got: folds.n(),
        });
    }
    let level_one = level_one_matrix(x, y, &specs, folds, rng)?;
    let mut warnings = level_one.warnings.clone();
    if level_one.kept.is_empty() {
        return Err(Error::AllLearnersFailed);
    }
    let m_all = specs.len();
    let mut cv_risks = vec![f64::NAN; m_all];
    for (c, &m) in level_one.kept.iter().enumerate() {
        cv_risks[m] = cv_risk(level_one.z.column(c).iter().copied(), y, family);
    }
    let simplex = solve_simplex_nnls(&level_one.z, y)?;
    let mut weights = vec![0.0; m_all];
    for (c, &m) in level_one.kept.iter().enumerate() {
        weights[m] = simplex.weights[c];
    }

    let mut base_models = vec![None; m_all];
    for m in 0..m_all {
        let mut lrng = child_rng(rng);
        if weights[m] <= 0.0 {
            continue;
        }
        match fit_learner(&specs[m], x, y, &mut lrng) {
            Ok(model) => base_models[m] = Some(model),
            Err(e) => {
                warnings.push(format!("learner {} dropped: full-data refit: {e}", specs[m]));
                weights[m] = 0.0;
            }
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllLearnersFailed);
    }
    if (total - 1.0).abs() > 0.0 {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    Ok(SuperLearnerModel {
        specs,
        base_models,
        weights,
        cv_risks,
        family,
        warnings,
    })
}

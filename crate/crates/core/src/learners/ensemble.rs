//! Bagged regression forests and gradient boosting on histogram trees.

use nalgebra::DMatrix;
use rand::Rng;

use super::tree::{Binner, Tree, TreeParams};
use super::Family;
use crate::numeric::{clip_prob, expit, logit};

/// Minimum rows per boosting leaf.
const BOOST_MIN_LEAF: usize = 5;
/// L2 penalty on logistic boosting leaves; the squared-error booster is unpenalised.
const BOOST_LAMBDA_BINOMIAL: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    family: Family,
}

impl Forest {
    #[allow(clippy::too_many_arguments)]
    pub fn fit<R: Rng>(
        x: &DMatrix<f64>,
        y: &[f64],
        family: Family,
        n_trees: usize,
        max_depth: usize,
        min_leaf: usize,
        mtry: usize,
        rng: &mut R,
    ) -> Forest {
        let n = y.len();
        let binner = Binner::fit(x);
        let bins = binner.transform(x);
        let hess = vec![1.0; n];
        let params = TreeParams {
            max_depth,
            min_leaf,
            mtry: Some(mtry),
            lambda: 0.0,
        };
        let trees = (0..n_trees)
            .map(|_| {
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                Tree::grow(&binner, &bins, y, &hess, rows, params, rng)
            })
            .collect();
        Forest { trees, family }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let k = self.trees.len() as f64;
        (0..x.nrows())
            .map(|i| {
                let v = self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>() / k;
                match self.family {
                    Family::Gaussian => v,
                    Family::Binomial => clip_prob(v),
                }
            })
            .collect()
    }

    /// Per-tree outputs for one row.
    pub fn tree_outputs(&self, x: &DMatrix<f64>, i: usize) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict_row(x, i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Booster {
    base: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
    family: Family,
    /// Training outcome range; squared-error predictions are clamped into it.
    y_range: (f64, f64),
}

impl Booster {
    #[allow(clippy::too_many_arguments)]
    pub fn fit<R: Rng>(
        x: &DMatrix<f64>,
        y: &[f64],
        family: Family,
        n_rounds: usize,
        learning_rate: f64,
        max_depth: usize,
        rng: &mut R,
    ) -> Booster {
        let n = y.len();
        let binner = Binner::fit(x);
        let bins = binner.transform(x);
        let ybar = y.iter().sum::<f64>() / n as f64;
        let base = match family {
            Family::Gaussian => ybar,
            Family::Binomial => logit(clip_prob(ybar)),
        };
        let lambda = match family {
            Family::Gaussian => 0.0,
            Family::Binomial => BOOST_LAMBDA_BINOMIAL,
        };
        let params = TreeParams {
            max_depth,
            min_leaf: BOOST_MIN_LEAF,
            mtry: None,
            lambda,
        };
        let mut score = vec![base; n];
        let mut grad = vec![0.0; n];
        let mut hess = vec![1.0; n];
        let mut trees = Vec::with_capacity(n_rounds);
        for _ in 0..n_rounds {
            for i in 0..n {
                match family {
                    Family::Gaussian => grad[i] = y[i] - score[i],
                    Family::Binomial => {
                        let p = expit(score[i]);
                        grad[i] = y[i] - p;
                        hess[i] = (p * (1.0 - p)).max(1e-12);
                    }
                }
            }
            let tree = Tree::grow(&binner, &bins, &grad, &hess, (0..n).collect(), params, rng);
            for (i, s) in score.iter_mut().enumerate() {
                *s += learning_rate * tree.predict_row(x, i);
            }
            trees.push(tree);
        }
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Booster {
            base,
            learning_rate,
            trees,
            family,
            y_range: (lo, hi),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| {
                let s = self.base
                    + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>();
                match self.family {
                    Family::Gaussian => s.clamp(self.y_range.0, self.y_range.1),
                    Family::Binomial => clip_prob(expit(s)),
                }
            })
            .collect()
    }
}

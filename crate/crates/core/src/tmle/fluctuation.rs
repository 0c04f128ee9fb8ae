//! One-dimensional logistic fluctuation with an offset.

use crate::numeric::expit;

const MAX_STEPS: usize = 100;
const STEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fluctuation {
    pub epsilon: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Weighted Bernoulli cross-entropy of `expit(offset + eps * h)` against `y`.
pub fn fluctuation_loss(y: &[f64], offset: &[f64], h: &[f64], weights: Option<&[f64]>, eps: f64) -> f64 {
    (0..y.len())
        .map(|i| {
            let w = weights.map_or(1.0, |w| w[i]);
            if w == 0.0 {
                return 0.0;
            }
            let eta = offset[i] + eps * h[i];
            w * (softplus(eta) - y[i] * eta)
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Maximum likelihood `eps` in `logit(Q) = offset + eps * h` for responses in `[0, 1]`.
///
/// Newton iterations with step halving; stops when `|delta eps| < 1e-10` or after
/// 100 steps (then `converged` is false and the last iterate is returned).
pub fn fit_fluctuation(y: &[f64], offset: &[f64], h: &[f64], weights: Option<&[f64]>) -> Fluctuation {
    let n = y.len();
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut eps = 0.0;
    let mut loss = fluctuation_loss(y, offset, h, weights, eps);
    for it in 0..MAX_STEPS {
        let mut score = 0.0;
        let mut info = 0.0;
        for i in 0..n {
            let wi = w(i);
            if wi == 0.0 || h[i] == 0.0 {
                continue;
            }
            let p = expit(offset[i] + eps * h[i]);
            score += wi * h[i] * (y[i] - p);
            info += wi * h[i] * h[i] * p * (1.0 - p);
        }
        if score == 0.0 {
            return Fluctuation {
                epsilon: eps,
                converged: true,
                iterations: it,
            };
        }
        if !(info > 0.0) {
            return Fluctuation {
                epsilon: eps,
                converged: false,
                iterations: it,
            };
        }
        let mut step = score / info;
        let mut next = eps + step;
        let mut next_loss = fluctuation_loss(y, offset, h, weights, next);
        let mut halvings = 0;
        // near the optimum the loss is flat to rounding; only halve on a real increase
        let slack = 1e-14 * (1.0 + loss.abs());
        while next_loss > loss + slack && halvings < 50 && step.abs() >= STEP_TOL {
            step *= 0.5;
            next = eps + step;
            next_loss = fluctuation_loss(y, offset, h, weights, next);
            halvings += 1;
        }
        eps = next;
        loss = next_loss;
        if step.abs() < STEP_TOL {
            return Fluctuation {
                epsilon: eps,
                converged: true,
                iterations: it + 1,
            };
        }
    }
    Fluctuation {
        epsilon: eps,
        converged: false,
        iterations: MAX_STEPS,
    }
}

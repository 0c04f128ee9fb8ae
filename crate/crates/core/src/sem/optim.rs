//! Quasi-Newton minimisation with finite-difference derivatives.

use nalgebra::{DMatrix, DVector};

const POLISH_STEPS: usize = 20;

/// Central-difference gradient with steps `1e-6 * (1 + |x_i|)`.
pub fn numeric_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * (1.0 + x[i].abs());
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Central-difference Hessian with per-coordinate steps `h`.
pub fn numeric_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: &[f64]) -> DMatrix<f64> {
    let p = x.len();
    let f0 = f(x);
    let mut xp = x.to_vec();
    let mut eval = |moves: &[(usize, f64)]| {
        for &(i, d) in moves {
            xp[i] += d;
        }
        let v = f(&xp);
        for &(i, d) in moves {
            xp[i] -= d;
        }
        v
    };
    let mut hess = DMatrix::zeros(p, p);
    for i in 0..p {
        let hi = h[i];
        hess[(i, i)] = (eval(&[(i, hi)]) - 2.0 * f0 + eval(&[(i, -hi)])) / (hi * hi);
        for j in 0..i {
            let hj = h[j];
            let v = (eval(&[(i, hi), (j, hj)]) - eval(&[(i, hi), (j, -hj)]) - eval(&[(i, -hi), (j, hj)])
                + eval(&[(i, -hi), (j, -hj)]))
                / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Symmetrised central-difference Jacobian of a gradient, steps `1e-4 * (1 + |x_i|)`.
fn gradient_jacobian(grad: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let p = x.len();
    let mut xp = x.to_vec();
    let mut jac = DMatrix::zeros(p, p);
    for j in 0..p {
        let h = 1e-4 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let up = grad(&xp);
        xp[j] = x[j] - h;
        let down = grad(&xp);
        xp[j] = x[j];
        for i in 0..p {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    (&jac + jac.transpose()) * 0.5
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
}

/// BFGS with backtracking line search on a central-difference gradient;
/// see [`minimize_with_gradient`].
pub fn minimize(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], gtol: f64, max_iter: usize) -> Minimum {
    minimize_with_gradient(f, &|x| numeric_gradient(f, x), x0, gtol, max_iter)
}

/// BFGS with backtracking line search, stopping when the gradient max-norm
/// drops below `gtol`, followed by damped Newton steps on a Hessian obtained
/// by differencing the gradient.
pub fn minimize_with_gradient(
    f: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    gtol: f64,
    max_iter: usize,
) -> Minimum {
    let p = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f(x.as_slice());
    let mut g = DVector::from_vec(grad(x.as_slice()));
    let mut hinv = DMatrix::<f64>::identity(p, p);
    let mut iterations = 0;

    while iterations < max_iter && g.amax() >= gtol && fx.is_finite() {
        iterations += 1;
        let mut dir = -(&hinv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            hinv = DMatrix::identity(p, p);
            dir = -g.clone();
            slope = g.dot(&dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-20 {
            let cand = &x + t * &dir;
            let fc = f(cand.as_slice());
            if fc.is_finite() && fc <= fx + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if hinv == DMatrix::identity(p, p) {
                break;
            }
            hinv = DMatrix::identity(p, p);
            continue;
        };
        let g_new = DVector::from_vec(grad(x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() && sy > 0.0 {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(p, p);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            hinv = &left * &hinv * &right + rho * &s * s.transpose();
        }
        let stalled = (fx - f_new).abs() <= 1e-16 * (1.0 + fx.abs()) && s.amax() <= 1e-14 * (1.0 + x.amax());
        x = x_new;
        fx = f_new;
        g = g_new;
        if stalled {
            break;
        }
    }

    // Damped Newton polish: affine invariant, so it also finishes badly scaled
    // problems where BFGS stalls.
    for _ in 0..POLISH_STEPS {
        if !fx.is_finite() {
            break;
        }
        let hess = gradient_jacobian(grad, x.as_slice());
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&(-&g));
        let decrement = -step.dot(&g);
        if !(decrement > 1e-20) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-8 {
            let cand = &x + t * &step;
            let fc = f(cand.as_slice());
            if fc.is_finite() && fc <= fx - 1e-4 * t * decrement {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, fc)) = accepted else { break };
        x = cand;
        fx = fc;
        g = DVector::from_vec(grad(x.as_slice()));
    }

    Minimum {
        x: x.iter().copied().collect(),
        value: fx,
        gradient: g.iter().copied().collect(),
        iterations,
    }
}

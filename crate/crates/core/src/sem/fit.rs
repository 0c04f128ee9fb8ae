use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::sem::model::{ParamKind, PathModel};
use crate::sem::optim::{minimize_with_gradient, numeric_hessian};

const GTOL: f64 = 1e-6;

/// Named numeric columns, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PathData {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
}

impl PathData {
    pub fn new(names: Vec<String>, x: DMatrix<f64>) -> Result<PathData> {
        if names.len() != x.ncols() {
            return Err(Error::LengthMismatch {
                what: "column names".into(),
                expected: x.ncols(),
                got: names.len(),
            });
        }
        Ok(PathData { names, x })
    }

    /// Columns `A`, `Y`, `M` (when present) and the covariates under their labels.
    pub fn from_dataset(d: &Dataset) -> PathData {
        let mut names = vec!["A".to_string(), "Y".to_string()];
        let mut cols: Vec<Vec<f64>> = vec![d.a.clone(), d.y.clone()];
        if let Some(m) = &d.m {
            names.push("M".into());
            cols.push(m.clone());
        }
        for (j, name) in d.column_names.iter().enumerate() {
            names.push(name.clone());
            cols.push(d.w.column(j).iter().copied().collect());
        }
        let x = DMatrix::from_fn(d.n(), cols.len(), |i, j| cols[j][i]);
        PathData { names, x }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn subset(&self, rows: &[usize]) -> PathData {
        PathData {
            names: self.names.clone(),
            x: self.x.select_rows(rows.iter()),
        }
    }
}

/// Sample mean and covariance (divisor `n`) of the model variables, in model order.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub ybar: DVector<f64>,
    pub s: DMatrix<f64>,
    pub n: usize,
}

impl SampleMoments {
    pub fn from_data(m: &PathModel, data: &PathData) -> Result<SampleMoments> {
        let cols: Vec<usize> = m
            .variables
            .iter()
            .map(|v| {
                data.names
                    .iter()
                    .position(|c| c == v)
                    .ok_or_else(|| Error::UnknownVariable(v.clone()))
            })
            .collect::<Result<_>>()?;
        let n = data.n();
        if n < 2 {
            return Err(Error::TooFewRows(n));
        }
        let x = data.x.select_columns(cols.iter());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingValues("path data".into()));
        }
        let ybar = DVector::from_fn(cols.len(), |j, _| x.column(j).mean());
        let mut centered = x.clone();
        for j in 0..cols.len() {
            centered.column_mut(j).add_scalar_mut(-ybar[j]);
        }
        let s = centered.transpose() * &centered / n as f64;
        Ok(SampleMoments { ybar, s, n })
    }
}

fn variance_floor(s: &SampleMoments, v: usize) -> f64 {
    let svv = s.s[(v, v)];
    if svv > 0.0 {
        1e-6 * svv
    } else {
        1e-10
    }
}

/// Model-implied mean and covariance: `mu = B alpha`, `Sigma = B Psi B'` with
/// `B = (I - beta)^{-1}`. The exogenous block of `alpha` and `Psi` comes from `exo`.
pub fn implied_moments(m: &PathModel, theta: &[f64], exo: &SampleMoments) -> (DVector<f64>, DMatrix<f64>) {
    let k = m.k();
    let mut beta = DMatrix::<f64>::zeros(k, k);
    for (&e, &v) in &m.fixed {
        let ed = m.edges[e];
        beta[(ed.to, ed.from)] = v;
    }
    let mut alpha = DVector::<f64>::zeros(k);
    let mut psi = DMatrix::<f64>::zeros(k, k);
    let endo: Vec<bool> = (0..k).map(|v| m.is_endogenous(v)).collect();
    for i in 0..k {
        if !endo[i] {
            alpha[i] = exo.ybar[i];
            for j in 0..k {
                if !endo[j] {
                    psi[(i, j)] = exo.s[(i, j)];
                }
            }
        }
    }
    for (j, kind) in m.params.iter().enumerate() {
        match *kind {
            ParamKind::Edge(e) => {
                let ed = m.edges[e];
                beta[(ed.to, ed.from)] = theta[j];
            }
            ParamKind::Intercept(v) => alpha[v] = theta[j],
            ParamKind::Variance(v) => psi[(v, v)] = theta[j],
        }
    }
    // (I - beta) is unit lower-triangular in topological order, so it is always invertible.
    let b = (DMatrix::identity(k, k) - beta)
        .try_inverse()
        .expect("acyclic model has invertible I - beta");
    let mu = &b * alpha;
    let sigma = &b * psi * b.transpose();
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    (mu, sigma)
}

/// `log|Sigma| + tr(Sigma^{-1} S) + (ybar - mu)' Sigma^{-1} (ybar - mu)`;
/// `+inf` when the implied covariance is not positive definite.
pub fn fml_objective(m: &PathModel, theta: &[f64], s: &SampleMoments) -> f64 {
    if theta.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    for (j, kind) in m.params.iter().enumerate() {
        if matches!(kind, ParamKind::Variance(_)) && theta[j] <= 0.0 {
            return f64::INFINITY;
        }
    }
    let (mu, sigma) = implied_moments(m, theta, s);
    fml_from_moments(&mu, &sigma, s)
}

pub(crate) fn fml_from_moments(mu: &DVector<f64>, sigma: &DMatrix<f64>, s: &SampleMoments) -> f64 {
    let Some(chol) = sigma.clone().cholesky() else {
        return f64::INFINITY;
    };
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let trace = chol.solve(&s.s).trace();
    let r = &s.ybar - mu;
    let quad = r.dot(&chol.solve(&r));
    let v = logdet + trace + quad;
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartValues {
    /// Equation-by-equation least squares.
    Ols,
    /// Zero paths, sample means and variances.
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub start: StartValues,
    pub compute_vcov: bool,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            start: StartValues::Ols,
            compute_vcov: true,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFit {
    pub model: PathModel,
    /// Free parameters on the natural scale (variances, not log-variances).
    pub theta_hat: Vec<f64>,
    /// Inverse observed information; `None` when the Hessian is not positive definite.
    pub vcov: Option<DMatrix<f64>>,
    pub fml: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n: usize,
    pub warnings: Vec<String>,
}

impl PathFit {
    pub fn param(&self, from: &str, to: &str) -> Result<f64> {
        let e = self.model.edge_index(from, to)?;
        match self.model.edge_param(from, to)? {
            Some(j) => Ok(self.theta_hat[j]),
            None => Ok(self.model.fixed[&e]),
        }
    }

    /// Standard error of free parameter `j` (NaN without a covariance).
    pub fn se(&self, j: usize) -> f64 {
        match &self.vcov {
            Some(v) => v[(j, j)].max(0.0).sqrt(),
            None => f64::NAN,
        }
    }
}

fn ols_start(m: &PathModel, s: &SampleMoments) -> Vec<f64> {
    let k = m.k();
    let mut coef = vec![0.0; m.edges.len()];
    let mut intercept = vec![0.0; k];
    let mut variance = vec![0.0; k];
    for v in (0..k).filter(|&v| m.is_endogenous(v)) {
        let free: Vec<usize> = (0..m.edges.len())
            .filter(|e| m.edges[*e].to == v && !m.fixed.contains_key(e))
            .collect();
        let fixed: Vec<(usize, f64)> = m
            .fixed
            .iter()
            .filter(|(e, _)| m.edges[**e].to == v)
            .map(|(&e, &c)| (m.edges[e].from, c))
            .collect();
        let parents: Vec<usize> = free.iter().map(|&e| m.edges[e].from).collect();
        let q = parents.len();
        let b = if q > 0 {
            let spp = DMatrix::from_fn(q, q, |i, j| s.s[(parents[i], parents[j])]);
            let rhs = DVector::from_fn(q, |i, _| {
                s.s[(parents[i], v)] - fixed.iter().map(|&(f, c)| c * s.s[(parents[i], f)]).sum::<f64>()
            });
            match spp.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => spp.svd(true, true).solve(&rhs, 1e-12).unwrap_or_else(|_| DVector::zeros(q)),
            }
        } else {
            DVector::zeros(0)
        };
        let mut u = DVector::<f64>::zeros(k);
        u[v] = 1.0;
        for (i, &p) in parents.iter().enumerate() {
            u[p] -= b[i];
            coef[free[i]] = b[i];
        }
        for &(f, c) in &fixed {
            u[f] -= c;
        }
        intercept[v] = u.dot(&s.ybar);
        variance[v] = (u.transpose() * &s.s * &u)[(0, 0)].max(0.0);
    }
    m.params
        .iter()
        .map(|kind| match *kind {
            ParamKind::Edge(e) => coef[e],
            ParamKind::Intercept(v) => intercept[v],
            ParamKind::Variance(v) => variance[v].max(2.0 * variance_floor(s, v)),
        })
        .collect()
}

fn naive_start(m: &PathModel, s: &SampleMoments) -> Vec<f64> {
    m.params
        .iter()
        .map(|kind| match *kind {
            ParamKind::Edge(_) => 0.0,
            ParamKind::Intercept(v) => s.ybar[v],
            ParamKind::Variance(v) => s.s[(v, v)].max(2.0 * variance_floor(s, v)),
        })
        .collect()
}

/// One structural equation with its disturbance variance profiled out.
struct Equation {
    v: usize,
    /// `(position in the reduced vector, parent)` for free paths into `v`.
    paths: Vec<(usize, usize)>,
    /// `(parent, value)` for fixed paths into `v`.
    fixed: Vec<(usize, f64)>,
    intercept: usize,
    /// Index of the variance in `theta`.
    variance: usize,
    floor: f64,
}

/// The fit function over paths and intercepts only. For fixed paths and
/// intercepts, each equation's ML variance is its residual second moment
/// `q = u'Su + r^2`, and the fit function separates into
/// `sum_v log(psi_v) + q_v / psi_v` (plus a constant) with `psi_v = max(q_v, floor)`.
struct Profiled<'a> {
    s: &'a SampleMoments,
    eqs: Vec<Equation>,
    /// `theta` indices of the reduced vector.
    free: Vec<usize>,
    n_theta: usize,
}

impl<'a> Profiled<'a> {
    fn new(m: &PathModel, s: &'a SampleMoments) -> Profiled<'a> {
        let free: Vec<usize> = (0..m.params.len())
            .filter(|&j| !matches!(m.params[j], ParamKind::Variance(_)))
            .collect();
        let pos = |j: usize| free.iter().position(|&f| f == j).unwrap();
        let eqs = m
            .params
            .iter()
            .enumerate()
            .filter_map(|(j, kind)| match *kind {
                ParamKind::Variance(v) => Some((j, v)),
                _ => None,
            })
            .map(|(variance, v)| Equation {
                v,
                paths: m
                    .params
                    .iter()
                    .enumerate()
                    .filter_map(|(j, kind)| match *kind {
                        ParamKind::Edge(e) if m.edges[e].to == v => Some((pos(j), m.edges[e].from)),
                        _ => None,
                    })
                    .collect(),
                fixed: m
                    .fixed
                    .iter()
                    .filter(|(e, _)| m.edges[**e].to == v)
                    .map(|(&e, &c)| (m.edges[e].from, c))
                    .collect(),
                intercept: pos(m
                    .params
                    .iter()
                    .position(|k| *k == ParamKind::Intercept(v))
                    .expect("endogenous variable has an intercept")),
                variance,
                floor: variance_floor(s, v),
            })
            .collect();
        Profiled {
            s,
            eqs,
            free,
            n_theta: m.params.len(),
        }
    }

    /// Residual loadings `u`, `S u`, the mean residual `r` and `q`.
    fn residual(&self, eq: &Equation, x: &[f64]) -> (DVector<f64>, DVector<f64>, f64, f64) {
        let mut u = DVector::<f64>::zeros(self.s.s.nrows());
        u[eq.v] = 1.0;
        for &(i, p) in &eq.paths {
            u[p] -= x[i];
        }
        for &(p, c) in &eq.fixed {
            u[p] -= c;
        }
        let su = &self.s.s * &u;
        let r = u.dot(&self.s.ybar) - x[eq.intercept];
        let q = u.dot(&su) + r * r;
        (u, su, r, q.max(0.0))
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eqs
            .iter()
            .map(|eq| {
                let (_, _, _, q) = self.residual(eq, x);
                let psi = q.max(eq.floor);
                psi.ln() + q / psi
            })
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for eq in &self.eqs {
            let (_, su, r, q) = self.residual(eq, x);
            // d/dq [log psi + q / psi] = 1 / psi on both sides of the floor
            let w = 1.0 / q.max(eq.floor);
            for &(i, p) in &eq.paths {
                g[i] += w * (-2.0 * su[p] - 2.0 * r * self.s.ybar[p]);
            }
            g[eq.intercept] += w * (-2.0 * r);
        }
        g
    }

    fn theta(&self, x: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_theta];
        for (&j, &v) in self.free.iter().zip(x) {
            theta[j] = v;
        }
        for eq in &self.eqs {
            let (_, _, _, q) = self.residual(eq, x);
            theta[eq.variance] = q.max(eq.floor);
        }
        theta
    }
}

/// Maximum-likelihood fit of a recursive path model.
pub fn fit_path_model(m: &PathModel, data: &PathData, opts: FitOptions) -> Result<PathFit> {
    let s = SampleMoments::from_data(m, data)?;
    fit_path_moments(m, &s, opts)
}

pub fn fit_path_moments(m: &PathModel, s: &SampleMoments, opts: FitOptions) -> Result<PathFit> {
    if s.n <= m.n_free() {
        return Err(Error::TooFewObservations {
            n: s.n,
            params: m.n_free(),
        });
    }
    let floors: Vec<f64> = m
        .params
        .iter()
        .map(|kind| match *kind {
            ParamKind::Variance(v) => variance_floor(s, v),
            _ => 0.0,
        })
        .collect();
    let is_var: Vec<bool> = m.params.iter().map(|k| matches!(k, ParamKind::Variance(_))).collect();
    let prof = Profiled::new(m, s);
    let start = match opts.start {
        StartValues::Ols => ols_start(m, s),
        StartValues::Naive => naive_start(m, s),
    };
    let x0: Vec<f64> = prof.free.iter().map(|&j| start[j]).collect();
    let value = |x: &[f64]| prof.value(x);
    let grad = |x: &[f64]| prof.gradient(x);
    let min = minimize_with_gradient(&value, &grad, &x0, GTOL, opts.max_iter);

    let theta_hat = prof.theta(&min.x);
    let worst = min.gradient.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let fml = fml_objective(m, &theta_hat, s);
    let converged = fml.is_finite() && worst < GTOL;
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("NonConvergence: gradient max-norm {worst:.3e}"));
    }

    let vcov = if opts.compute_vcov && converged {
        let f_nat = |t: &[f64]| fml_objective(m, t, s);
        let h: Vec<f64> = theta_hat
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let base = 1e-4 * (1.0 + t.abs());
                if is_var[j] {
                    base.min(0.1 * (t - floors[j]).max(0.0)).max(1e-12)
                } else {
                    base
                }
            })
            .collect();
        let info = numeric_hessian(&f_nat, &theta_hat, &h) * (s.n as f64 / 2.0);
        let inv = info.clone().cholesky().map(|c| c.inverse());
        match inv {
            Some(v) if v.iter().all(|x| x.is_finite()) => Some((&v + v.transpose()) * 0.5),
            _ => {
                warnings.push("NonPDHessian: covariance of estimates unavailable".into());
                None
            }
        }
    } else {
        None
    };
    let k = m.k() as f64;
    Ok(PathFit {
        model: m.clone(),
        theta_hat,
        vcov,
        fml,
        loglik: -(s.n as f64) / 2.0 * (fml + k * (2.0 * std::f64::consts::PI).ln()),
        converged,
        iterations: min.iterations,
        n: s.n,
        warnings,
    })
}

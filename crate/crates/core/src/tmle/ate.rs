use nalgebra::DMatrix;
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{Family, LearnerKind};
use crate::numeric::{clip_prob, expit, logit, mean, z_for_level};
use crate::report::{Epsilon, TmleReport};
use crate::scale::{scale_outcome, ScaleMap};
use crate::super_learner::{fit_super_learner, make_folds, DEFAULT_V};
use crate::tmle::fluctuation::fit_fluctuation;

/// Smallest stratum accepted by [`estimate_cate_stratified`].
pub const MIN_STRATUM: usize = 50;

/// Share of truncated propensities above which a positivity warning is raised.
const POSITIVITY_SHARE: f64 = 0.05;

const TARGET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AteOptions {
    /// Propensities are truncated to `[g_min, 1 - g_min]`.
    pub g_min: f64,
    pub v_folds: usize,
    pub q_library: Vec<LearnerKind>,
    pub g_library: Vec<LearnerKind>,
    pub max_target_iters: usize,
    /// Known treatment probability; skips the propensity fit.
    pub g_constant: Option<f64>,
    pub level: f64,
}

impl Default for AteOptions {
    fn default() -> Self {
        AteOptions {
            g_min: 0.025,
            v_folds: DEFAULT_V,
            q_library: LearnerKind::default_library(),
            g_library: LearnerKind::default_library(),
            max_target_iters: 1,
            g_constant: None,
            level: 0.95,
        }
    }
}

impl AteOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_min > 0.0 && self.g_min < 0.5) {
            return Err(Error::InvalidOption("g_min must lie in (0, 0.5)".into()));
        }
        if self.max_target_iters == 0 {
            return Err(Error::InvalidOption("max_target_iters must be >= 1".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidOption("level must lie in (0, 1)".into()));
        }
        if let Some(g) = self.g_constant {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::InvalidOption("constant propensity must lie in (0, 1)".into()));
            }
        }
        if self.q_library.is_empty() || self.g_library.is_empty() {
            return Err(Error::InvalidOption("learner libraries must be non-empty".into()));
        }
        for k in self.q_library.iter().chain(&self.g_library) {
            k.validate()?;
        }
        Ok(())
    }
}

/// Initial outcome and propensity fits, on the scaled outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct AteNuisance {
    pub y_scaled: Vec<f64>,
    pub q0_a: Vec<f64>,
    pub q0_1: Vec<f64>,
    pub q0_0: Vec<f64>,
    pub g1: Vec<f64>,
    pub g_truncation_count: usize,
    pub scale: Option<ScaleMap>,
    pub warnings: Vec<String>,
}

pub fn clever_covariate_ate(a: f64, g1: f64) -> f64 {
    if a == 1.0 {
        1.0 / g1
    } else {
        -1.0 / (1.0 - g1)
    }
}

/// Clamps to `[g_min, 1 - g_min]`; returns the number of values moved.
pub fn truncate_propensity(g: &mut [f64], g_min: f64) -> usize {
    let mut moved = 0;
    for v in g.iter_mut() {
        let t = v.clamp(g_min, 1.0 - g_min);
        if t != *v {
            moved += 1;
            *v = t;
        }
    }
    moved
}

/// Scaled outcome, or the raw outcome when it is already binary.
pub(crate) fn outcome_for_targeting(d: &Dataset) -> Result<(Vec<f64>, Option<ScaleMap>, Family)> {
    if d.outcome_is_binary() {
        Ok((d.y.clone(), None, Family::Binomial))
    } else {
        let (ys, map) = scale_outcome(&d.y)?;
        Ok((ys, Some(map), Family::Gaussian))
    }
}

/// Propensity `P(A = 1 | W)` by Super Learner (or a supplied constant), truncated.
pub(crate) fn fit_propensity<R: Rng>(
    d: &Dataset,
    opts: &AteOptions,
    folds: &crate::super_learner::FoldAssignment,
    rng: &mut R,
    warnings: &mut Vec<String>,
) -> Result<(Vec<f64>, usize)> {
    let mut g1 = match opts.g_constant {
        Some(g) => vec![g; d.n()],
        None => {
            let sl = fit_super_learner(&d.w, &d.a, Family::Binomial, &opts.g_library, folds, rng)?;
            warnings.extend(sl.warnings.iter().map(|w| format!("g: {w}")));
            sl.predict(&d.w)?
        }
    };
    let moved = truncate_propensity(&mut g1, opts.g_min);
    if moved as f64 > POSITIVITY_SHARE * d.n() as f64 {
        warnings.push(format!(
            "PositivityWarning: {moved} of {} propensities truncated to [{}, {}]",
            d.n(),
            opts.g_min,
            1.0 - opts.g_min
        ));
    }
    Ok((g1, moved))
}

pub fn fit_ate_nuisance<R: Rng>(d: &Dataset, opts: &AteOptions, rng: &mut R) -> Result<AteNuisance> {
    opts.validate()?;
    let n = d.n();
    let (y_scaled, scale, family) = outcome_for_targeting(d)?;
    let folds = make_folds(n, opts.v_folds, Some(&d.a), rng)?;
    let mut warnings = Vec::new();

    let q_sl = fit_super_learner(&d.aw_matrix(None), &y_scaled, family, &opts.q_library, &folds, rng)?;
    warnings.extend(q_sl.warnings.iter().map(|w| format!("Q: {w}")));
    let clip = |v: Vec<f64>| v.into_iter().map(clip_prob).collect::<Vec<_>>();
    let q0_a = clip(q_sl.predict(&d.aw_matrix(None))?);
    let q0_1 = clip(q_sl.predict(&d.aw_matrix(Some(1.0)))?);
    let q0_0 = clip(q_sl.predict(&d.aw_matrix(Some(0.0)))?);

    let (g1, g_truncation_count) = fit_propensity(d, opts, &folds, rng, &mut warnings)?;
    Ok(AteNuisance {
        y_scaled,
        q0_a,
        q0_1,
        q0_0,
        g1,
        g_truncation_count,
        scale,
        warnings,
    })
}

/// Fluctuates the initial fit and assembles the substitution estimate with EIF inference.
pub fn target_ate(d: &Dataset, nu: &AteNuisance, opts: &AteOptions) -> Result<TmleReport> {
    let n = d.n();
    let range = nu.scale.map_or(1.0, |s| s.range());
    let h_a: Vec<f64> = (0..n).map(|i| clever_covariate_ate(d.a[i], nu.g1[i])).collect();
    let h_1: Vec<f64> = nu.g1.iter().map(|&g| 1.0 / g).collect();
    let h_0: Vec<f64> = nu.g1.iter().map(|&g| -1.0 / (1.0 - g)).collect();

    let mut q_a = nu.q0_a.clone();
    let mut q_1 = nu.q0_1.clone();
    let mut q_0 = nu.q0_0.clone();
    let mut warnings = nu.warnings.clone();
    let mut eps_total = 0.0;
    let mut psi = 0.0;
    let mut eif = vec![0.0; n];

    for _ in 0..opts.max_target_iters {
        let offset: Vec<f64> = q_a.iter().map(|&q| logit(q)).collect();
        let fl = fit_fluctuation(&nu.y_scaled, &offset, &h_a, None);
        if !fl.converged {
            warnings.push(format!("NonConvergence: fluctuation stopped after {} steps", fl.iterations));
        }
        let eps = fl.epsilon;
        eps_total += eps;
        let update = |q: &mut Vec<f64>, h: &[f64]| {
            for (qi, hi) in q.iter_mut().zip(h) {
                *qi = expit(logit(*qi) + eps * hi);
            }
        };
        update(&mut q_a, &h_a);
        update(&mut q_1, &h_1);
        update(&mut q_0, &h_0);

        psi = mean(&q_1) - mean(&q_0);
        for i in 0..n {
            eif[i] = range * (h_a[i] * (nu.y_scaled[i] - q_a[i]) + q_1[i] - q_0[i] - psi);
        }
        if mean(&eif).abs() <= TARGET_TOL {
            break;
        }
    }

    let mut report = TmleReport::from_eif(psi * range, eif, z_for_level(opts.level));
    report.epsilon_hat = Epsilon::Single(eps_total);
    report.g_truncation_count = nu.g_truncation_count;
    report.scale = nu.scale;
    report.warnings = warnings;
    Ok(report)
}

/// TMLE of `E[Y(1) - Y(0)]`.
pub fn estimate_ate<R: Rng>(d: &Dataset, opts: &AteOptions, rng: &mut R) -> Result<TmleReport> {
    let nu = fit_ate_nuisance(d, opts, rng)?;
    target_ate(d, &nu, opts)
}

/// Covariate-defined subgroup `W[column] == value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stratum {
    pub column: usize,
    pub value: f64,
}

impl Stratum {
    /// Parses `NAME=VALUE` against the dataset's covariate labels.
    pub fn parse(text: &str, d: &Dataset) -> Result<Stratum> {
        let (name, value) = text
            .split_once('=')
            .ok_or_else(|| Error::InvalidOption(format!("stratum `{text}` is not NAME=VALUE")))?;
        let column = d
            .column_index(name.trim())
            .ok_or_else(|| Error::UnknownVariable(name.trim().to_string()))?;
        let value = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidOption(format!("stratum value `{}` is not a number", value.trim())))?;
        Ok(Stratum { column, value })
    }

    pub fn contains(&self, row: &[f64]) -> bool {
        row[self.column] == self.value
    }
}

/// Runs [`estimate_ate`] on the rows whose covariates satisfy `stratum`.
pub fn estimate_cate_stratified<R: Rng, F: Fn(&[f64]) -> bool>(
    d: &Dataset,
    stratum: F,
    opts: &AteOptions,
    rng: &mut R,
) -> Result<TmleReport> {
    let rows: Vec<usize> = (0..d.n())
        .filter(|&i| {
            let row: Vec<f64> = d.w.row(i).iter().copied().collect();
            stratum(&row)
        })
        .collect();
    if rows.len() < MIN_STRATUM {
        return Err(Error::StratumTooSmall {
            got: rows.len(),
            min: MIN_STRATUM,
        });
    }
    let sub = if rows.len() == d.n() { d.clone() } else { d.subset(&rows) };
    estimate_ate(&sub, opts, rng)
}

/// Analysis-side linear model: `Y ~ 1 + A + W + W_j W_k + A W_k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegressionSpec {
    /// Covariate products `(j, k)` added to the design.
    pub covariate_interactions: Vec<(usize, usize)>,
    /// Covariates `k` interacted with treatment.
    pub treatment_interactions: Vec<usize>,
}

impl RegressionSpec {
    pub fn main_effects() -> Self {
        RegressionSpec::default()
    }

    pub fn design(&self, d: &Dataset) -> DMatrix<f64> {
        let n = d.n();
        let p = d.p();
        let cols = 2 + p + self.covariate_interactions.len() + self.treatment_interactions.len();
        let mut x = DMatrix::zeros(n, cols);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = d.a[i];
            for j in 0..p {
                x[(i, 2 + j)] = d.w[(i, j)];
            }
            let mut c = 2 + p;
            for &(j, k) in &self.covariate_interactions {
                x[(i, c)] = d.w[(i, j)] * d.w[(i, k)];
                c += 1;
            }
            for &k in &self.treatment_interactions {
                x[(i, c)] = d.a[i] * d.w[(i, k)];
                c += 1;
            }
        }
        x
    }

    fn check(&self, d: &Dataset) -> Result<()> {
        let p = d.p();
        let ok = self.covariate_interactions.iter().all(|&(j, k)| j < p && k < p)
            && self.treatment_interactions.iter().all(|&k| k < p);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec("interaction refers to a missing covariate".into()))
        }
    }
}

/// Ordinary least squares fit with the classical covariance.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub vcov: DMatrix<f64>,
    pub residuals: Vec<f64>,
    /// `(X'X)^{-1}`.
    pub xtx_inv: DMatrix<f64>,
}

pub fn ols(x: &DMatrix<f64>, y: &[f64]) -> Result<OlsFit> {
    let (n, q) = x.shape();
    if q >= n {
        return Err(Error::SingularDesign);
    }
    let xtx = x.transpose() * x;
    let chol = xtx.clone().cholesky().ok_or(Error::SingularDesign)?;
    let l = chol.l();
    for j in 0..q {
        if l[(j, j)] * l[(j, j)] <= 1e-10 * xtx[(j, j)].max(f64::MIN_POSITIVE) {
            return Err(Error::SingularDesign);
        }
    }
    let yv = nalgebra::DVector::from_column_slice(y);
    let beta = chol.solve(&(x.transpose() * &yv));
    let resid = &yv - x * &beta;
    let sigma2 = resid.norm_squared() / (n - q) as f64;
    let xtx_inv = chol.inverse();
    Ok(OlsFit {
        coef: beta.iter().copied().collect(),
        vcov: &xtx_inv * sigma2,
        residuals: resid.iter().copied().collect(),
        xtx_inv,
    })
}

/// Linear-model estimate of the treatment contrast at covariate values `at`
/// (one value per treatment-interacted covariate). The influence values stored
/// in the report are the OLS ones; the standard error is the classical one.
pub fn regression_contrast(d: &Dataset, spec: &RegressionSpec, at: &[f64], level: f64) -> Result<TmleReport> {
    spec.check(d)?;
    if at.len() != spec.treatment_interactions.len() {
        return Err(Error::LengthMismatch {
            what: "contrast evaluation point".into(),
            expected: spec.treatment_interactions.len(),
            got: at.len(),
        });
    }
    let x = spec.design(d);
    let fit = ols(&x, &d.y)?;
    let q = x.ncols();
    let mut c = nalgebra::DVector::zeros(q);
    c[1] = 1.0;
    for (t, &v) in at.iter().enumerate() {
        c[q - at.len() + t] = v;
    }
    let psi = c.dot(&nalgebra::DVector::from_column_slice(&fit.coef));
    let se = (c.transpose() * &fit.vcov * &c)[(0, 0)].max(0.0).sqrt();
    let lever = &fit.xtx_inv * &c;
    let n = d.n() as f64;
    let eif: Vec<f64> = (0..d.n())
        .map(|i| n * x.row(i).transpose().dot(&lever) * fit.residuals[i])
        .collect();
    let z = z_for_level(level);
    Ok(TmleReport {
        psi_hat: psi,
        se,
        ci_lower: psi - z * se,
        ci_upper: psi + z * se,
        n: d.n(),
        eif,
        epsilon_hat: Epsilon::Single(0.0),
        g_truncation_count: 0,
        scale: None,
        warnings: Vec::new(),
    })
}

/// Linear-model ATE. With treatment interactions, they are evaluated at the
/// sample covariate means.
pub fn regression_ate(d: &Dataset, spec: &RegressionSpec) -> Result<TmleReport> {
    spec.check(d)?;
    let at: Vec<f64> = spec
        .treatment_interactions
        .iter()
        .map(|&k| d.w.column(k).mean())
        .collect();
    regression_contrast(d, spec, &at, 0.95)
}

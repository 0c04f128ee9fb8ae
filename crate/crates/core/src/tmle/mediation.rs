use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{Family, LearnerKind};
use crate::numeric::{clip_prob, expit, logit, mean, z_for_level};
use crate::report::{Epsilon, TmleReport};
use crate::super_learner::{fit_super_learner, make_folds, FoldAssignment, DEFAULT_V};
use crate::tmle::ate::{fit_propensity, outcome_for_targeting, target_ate, AteNuisance, AteOptions};
use crate::tmle::fluctuation::{fit_fluctuation, Fluctuation};

const POSITIVITY_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct MediationOptions {
    pub g_min: f64,
    /// Floor for the classifier `p(A | M, W)`.
    pub a_min: f64,
    pub v_folds: usize,
    /// Library for `E[Y | A, M, W]`; also used for the total-effect outcome fit.
    pub q_library: Vec<LearnerKind>,
    pub g_library: Vec<LearnerKind>,
    pub a_library: Vec<LearnerKind>,
    /// Library for the regression of the mapped contrast on `W` among controls.
    pub em_library: Vec<LearnerKind>,
    pub level: f64,
}

impl Default for MediationOptions {
    fn default() -> Self {
        let lib = LearnerKind::default_library();
        MediationOptions {
            g_min: 0.025,
            a_min: 0.025,
            v_folds: DEFAULT_V,
            q_library: lib.clone(),
            g_library: lib.clone(),
            a_library: lib.clone(),
            em_library: lib,
            level: 0.95,
        }
    }
}

impl MediationOptions {
    fn ate_options(&self) -> AteOptions {
        AteOptions {
            g_min: self.g_min,
            v_folds: self.v_folds,
            q_library: self.q_library.clone(),
            g_library: self.g_library.clone(),
            max_target_iters: 1,
            g_constant: None,
            level: self.level,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ate_options().validate()?;
        if !(self.a_min > 0.0 && self.a_min < 0.5) {
            return Err(Error::InvalidOption("a_min must lie in (0, 0.5)".into()));
        }
        if self.a_library.is_empty() || self.em_library.is_empty() {
            return Err(Error::InvalidOption("learner libraries must be non-empty".into()));
        }
        for k in self.a_library.iter().chain(&self.em_library) {
            k.validate()?;
        }
        Ok(())
    }
}

/// `Q_M(M | 0, W) / Q_M(M | 1, W)` from `p(A = 1 | M, W)` by Bayes' rule.
/// Returns the ratio and whether the floor was engaged.
pub fn ratio_from_probs(p_a1: f64, g1: f64, a_min: f64) -> (f64, bool) {
    let p = p_a1.clamp(a_min, 1.0 - a_min);
    ((1.0 - p) / p * g1 / (1.0 - g1), p != p_a1)
}

/// Density ratio for every row; also returns how many classifier outputs were floored.
pub fn mediator_density_ratio<R: Rng>(
    d: &Dataset,
    g1: &[f64],
    a_library: &[LearnerKind],
    a_min: f64,
    folds: &FoldAssignment,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    d.mediator()?;
    let x = d.mw_matrix();
    let sl = fit_super_learner(&x, &d.a, Family::Binomial, a_library, folds, rng)?;
    let p = sl.predict(&x)?;
    let mut floored = 0;
    let ratio = p
        .iter()
        .zip(g1)
        .map(|(&p, &g)| {
            let (r, hit) = ratio_from_probs(p, g, a_min);
            floored += usize::from(hit);
            r
        })
        .collect();
    Ok((ratio, floored))
}

pub fn clever_covariate_y(a: f64, g1: f64, ratio: f64) -> f64 {
    if a == 1.0 {
        ratio / g1
    } else {
        -1.0 / (1.0 - g1)
    }
}

pub fn fluctuate_qbar(y_scaled: &[f64], offset: &[f64], c_y: &[f64]) -> Fluctuation {
    fit_fluctuation(y_scaled, offset, c_y, None)
}

/// Fluctuation of the control-arm regression with covariate `1 / (1 - g1)`,
/// using only rows with `A = 0`.
pub fn fluctuate_em(m_mapped: &[f64], offset: &[f64], a: &[f64], g1: &[f64]) -> Result<Fluctuation> {
    if !a.iter().any(|&v| v == 0.0) {
        return Err(Error::NoControls);
    }
    let weights: Vec<f64> = a.iter().map(|&v| f64::from(v == 0.0)).collect();
    let c_m: Vec<f64> = g1.iter().map(|&g| 1.0 / (1.0 - g)).collect();
    Ok(fit_fluctuation(m_mapped, offset, &c_m, Some(&weights)))
}

/// Nuisance fits and targeted quantities on the scaled outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct MediationNuisance {
    pub qbar_a: Vec<f64>,
    pub qbar_1: Vec<f64>,
    pub qbar_0: Vec<f64>,
    pub g1: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Initial control-arm regression of the mapped contrast, in (0, 1).
    pub em0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MediationReport {
    pub nde: TmleReport,
    pub nie: TmleReport,
    pub te: TmleReport,
    pub nuisance: MediationNuisance,
}

/// Natural direct effect by two-stage targeting; total effect by the ATE
/// estimator ignoring `M`; indirect effect as their difference.
pub fn estimate_nde_nie<R: Rng>(d: &Dataset, opts: &MediationOptions, rng: &mut R) -> Result<MediationReport> {
    opts.validate()?;
    d.mediator()?;
    if !d.a.iter().any(|&v| v == 0.0) {
        return Err(Error::NoControls);
    }
    let n = d.n();
    let (y_s, scale, family) = outcome_for_targeting(d)?;
    let range = scale.map_or(1.0, |s| s.range());
    let folds = make_folds(n, opts.v_folds, Some(&d.a), rng)?;
    let mut warnings = Vec::new();

    let q_sl = fit_super_learner(&d.amw_matrix(None), &y_s, family, &opts.q_library, &folds, rng)?;
    warnings.extend(q_sl.warnings.iter().map(|w| format!("Qbar: {w}")));
    let clip = |v: Vec<f64>| v.into_iter().map(clip_prob).collect::<Vec<_>>();
    let qbar_a = clip(q_sl.predict(&d.amw_matrix(None))?);
    let qbar_1 = clip(q_sl.predict(&d.amw_matrix(Some(1.0)))?);
    let qbar_0 = clip(q_sl.predict(&d.amw_matrix(Some(0.0)))?);

    let ate_opts = opts.ate_options();
    let (g1, g_trunc) = fit_propensity(d, &ate_opts, &folds, rng, &mut warnings)?;
    let (ratio, floored) = mediator_density_ratio(d, &g1, &opts.a_library, opts.a_min, &folds, rng)?;
    if floored as f64 > POSITIVITY_SHARE * n as f64 {
        warnings.push(format!(
            "PositivityWarning: {floored} of {n} mediator-classifier outputs floored at {}",
            opts.a_min
        ));
    }

    // Stage 1: outcome regression.
    let c_y: Vec<f64> = (0..n).map(|i| clever_covariate_y(d.a[i], g1[i], ratio[i])).collect();
    let c_y1: Vec<f64> = (0..n).map(|i| ratio[i] / g1[i]).collect();
    let c_y0: Vec<f64> = g1.iter().map(|&g| -1.0 / (1.0 - g)).collect();
    let off: Vec<f64> = qbar_a.iter().map(|&q| logit(q)).collect();
    let f1 = fluctuate_qbar(&y_s, &off, &c_y);
    if !f1.converged {
        warnings.push("NonConvergence: outcome fluctuation".into());
    }
    let upd = |q: &[f64], h: &[f64], e: f64| -> Vec<f64> {
        q.iter().zip(h).map(|(&q, &h)| expit(logit(q) + e * h)).collect()
    };
    let qs_a = upd(&qbar_a, &c_y, f1.epsilon);
    let qs_1 = upd(&qbar_1, &c_y1, f1.epsilon);
    let qs_0 = upd(&qbar_0, &c_y0, f1.epsilon);
    let mapped: Vec<f64> = (0..n).map(|i| (qs_1[i] - qs_0[i] + 1.0) / 2.0).collect();

    // Stage 2: control-arm regression of the mapped contrast on W.
    let controls: Vec<usize> = (0..n).filter(|&i| d.a[i] == 0.0).collect();
    let w0 = d.w.select_rows(controls.iter());
    let m0: Vec<f64> = controls.iter().map(|&i| mapped[i]).collect();
    let folds0 = make_folds(controls.len(), opts.v_folds.min(controls.len()), None, rng)?;
    let em_sl = fit_super_learner(&w0, &m0, Family::Gaussian, &opts.em_library, &folds0, rng)?;
    warnings.extend(em_sl.warnings.iter().map(|w| format!("E_M: {w}")));
    let em0 = clip(em_sl.predict(&d.w)?);
    let off2: Vec<f64> = em0.iter().map(|&e| logit(e)).collect();
    let f2 = fluctuate_em(&mapped, &off2, &d.a, &g1)?;
    if !f2.converged {
        warnings.push("NonConvergence: mediator-stage fluctuation".into());
    }
    let c_m: Vec<f64> = g1.iter().map(|&g| 1.0 / (1.0 - g)).collect();
    let em_star = upd(&em0, &c_m, f2.epsilon);
    let psi_m = mean(&em_star);

    // Influence function on the mapped scale, then back to outcome units.
    // The mapped contrast halves the outcome-stage residual term.
    let k = 2.0 * range;
    let eif_nde: Vec<f64> = (0..n)
        .map(|i| {
            let ctrl = if d.a[i] == 0.0 { c_m[i] * (mapped[i] - em_star[i]) } else { 0.0 };
            k * (c_y[i] * (y_s[i] - qs_a[i]) / 2.0 + ctrl + em_star[i] - psi_m)
        })
        .collect();
    let z = z_for_level(opts.level);
    let mut nde = TmleReport::from_eif((2.0 * psi_m - 1.0) * range, eif_nde, z);
    nde.epsilon_hat = Epsilon::Pair(f1.epsilon, f2.epsilon);
    nde.g_truncation_count = g_trunc;
    nde.scale = scale;
    nde.warnings = warnings.clone();

    // Total effect from (A, W, Y), reusing the folds and propensity.
    let te_sl = fit_super_learner(&d.aw_matrix(None), &y_s, family, &opts.q_library, &folds, rng)?;
    let te_nu = AteNuisance {
        y_scaled: y_s.clone(),
        q0_a: clip(te_sl.predict(&d.aw_matrix(None))?),
        q0_1: clip(te_sl.predict(&d.aw_matrix(Some(1.0)))?),
        q0_0: clip(te_sl.predict(&d.aw_matrix(Some(0.0)))?),
        g1: g1.clone(),
        g_truncation_count: g_trunc,
        scale,
        warnings: te_sl.warnings.iter().map(|w| format!("Q: {w}")).collect(),
    };
    let te = target_ate(d, &te_nu, &ate_opts)?;

    let eif_nie: Vec<f64> = te.eif.iter().zip(&nde.eif).map(|(a, b)| a - b).collect();
    let mut nie = TmleReport::from_eif(te.psi_hat - nde.psi_hat, eif_nie, z);
    nie.epsilon_hat = nde.epsilon_hat;
    nie.g_truncation_count = g_trunc;
    nie.scale = scale;
    nie.warnings = warnings;

    Ok(MediationReport {
        nde,
        nie,
        te,
        nuisance: MediationNuisance {
            qbar_a: qs_a,
            qbar_1: qs_1,
            qbar_0: qs_0,
            g1,
            ratio,
            em0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clever_covariate_examples() {
        assert_eq!(clever_covariate_y(1.0, 0.5, 1.0), 2.0);
        assert_eq!(clever_covariate_y(0.0, 0.5, 123.0), -2.0);
        assert_eq!(clever_covariate_y(1.0, 0.25, 0.5), 2.0);
    }

    #[test]
    fn ratio_is_one_when_classifier_matches_propensity() {
        for &g in &[0.1, 0.3, 0.5, 0.8] {
            let (r, hit) = ratio_from_probs(g, g, 0.025);
            assert!((r - 1.0).abs() < 1e-12);
            assert!(!hit);
        }
    }

    #[test]
    fn ratio_at_symmetric_point() {
        // M | A, W ~ N(A + 0.5 W, 1) at M = 0.5, W = 0, g1 = 0.5.
        let phi = |x: f64| (-0.5 * x * x).exp();
        let (f1, f0) = (phi(0.5 - 1.0), phi(0.5));
        let p_a1 = 0.5 * f1 / (0.5 * f1 + 0.5 * f0);
        let (r, _) = ratio_from_probs(p_a1, 0.5, 0.025);
        assert!((r - f0 / f1).abs() < 1e-12);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floor_engaged() {
        let (r, hit) = ratio_from_probs(0.001, 0.5, 0.025);
        assert!(hit);
        assert!((r - 0.975 / 0.025).abs() < 1e-9);
    }

    #[test]
    fn all_treated_has_no_controls() {
        let err = fluctuate_em(&[0.5, 0.5], &[0.0, 0.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap_err();
        assert_eq!(err, Error::NoControls);
    }

    #[test]
    fn optimal_offsets_give_zero() {
        let m = [0.3, 0.7, 0.4, 0.9];
        let off: Vec<f64> = m.iter().map(|&v| logit(v)).collect();
        let f = fluctuate_em(&m, &off, &[0.0, 0.0, 1.0, 0.0], &[0.5, 0.4, 0.6, 0.3]).unwrap();
        assert!(f.epsilon.abs() < 1e-10);
    }
}

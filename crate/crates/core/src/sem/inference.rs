use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::numeric::quantile_sorted;
use crate::sem::fit::{fit_path_model, FitOptions, PathData, PathFit};
use crate::sem::model::PathModel;

pub const MIN_BOOTSTRAP: usize = 100;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
const MAX_FAILURE_SHARE: f64 = 0.10;

/// Point estimate with a standard error from the estimate covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectEstimate {
    pub estimate: f64,
    pub se: f64,
}

/// Causal effects read off path coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEffects {
    /// `gamma`: the ATE without a mediator, the NDE with one.
    pub direct: EffectEstimate,
    /// `alpha * beta` (mediated models only).
    pub indirect: Option<EffectEstimate>,
    /// `gamma + alpha * beta` (mediated models only).
    pub total: Option<EffectEstimate>,
}

/// Which effect a bootstrap or a simulation reads from a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectKind {
    Direct,
    Indirect,
    Total,
}

/// Coefficient value and its position in `theta` (`None` when fixed).
fn coef_with_index(fit: &PathFit, from: &str, to: &str) -> Result<(f64, Option<usize>)> {
    Ok((fit.param(from, to)?, fit.model.edge_param(from, to)?))
}

fn cov(fit: &PathFit, i: Option<usize>, j: Option<usize>) -> f64 {
    match (&fit.vcov, i, j) {
        (Some(v), Some(i), Some(j)) => v[(i, j)],
        (None, Some(_), Some(_)) => f64::NAN,
        _ => 0.0,
    }
}

/// `ATE = NDE = gamma`, `NIE = alpha * beta`, `TE = gamma + alpha * beta`.
pub fn effects_from_paths(
    fit: &PathFit,
    treatment: &str,
    mediator: Option<&str>,
    outcome: &str,
) -> Result<PathEffects> {
    let (g, gi) = coef_with_index(fit, treatment, outcome)?;
    let direct = EffectEstimate {
        estimate: g,
        se: cov(fit, gi, gi).max(0.0).sqrt(),
    };
    let Some(med) = mediator else {
        return Ok(PathEffects {
            direct,
            indirect: None,
            total: None,
        });
    };
    let (a, ai) = coef_with_index(fit, treatment, med)?;
    let (b, bi) = coef_with_index(fit, med, outcome)?;
    let v2 = [
        [cov(fit, ai, ai), cov(fit, ai, bi)],
        [cov(fit, bi, ai), cov(fit, bi, bi)],
    ];
    let (se_ab, _) = delta_se_product(a, b, v2);
    // gradient of g + a b with respect to (g, a, b) is (1, b, a)
    let grad = [(gi, 1.0), (ai, b), (bi, a)];
    let mut var_te = 0.0;
    for &(i, di) in &grad {
        for &(j, dj) in &grad {
            var_te += di * dj * cov(fit, i, j);
        }
    }
    Ok(PathEffects {
        direct,
        indirect: Some(EffectEstimate {
            estimate: a * b,
            se: se_ab,
        }),
        total: Some(EffectEstimate {
            estimate: g + a * b,
            se: var_te.max(0.0).sqrt(),
        }),
    })
}

impl PathEffects {
    pub fn get(&self, kind: EffectKind) -> Option<EffectEstimate> {
        match kind {
            EffectKind::Direct => Some(self.direct),
            EffectKind::Indirect => self.indirect,
            EffectKind::Total => self.total,
        }
    }
}

/// Delta-method standard error of `a * b`. The flag is set when rounding made
/// the variance negative and it was clamped to zero.
pub fn delta_se_product(a: f64, b: f64, v: [[f64; 2]; 2]) -> (f64, bool) {
    let var = b * b * v[0][0] + a * a * v[1][1] + 2.0 * a * b * v[0][1];
    if var < 0.0 {
        (0.0, true)
    } else {
        (var.sqrt(), false)
    }
}

/// Two-sided Wald test of `theta_j = null`; returns `(z, p_value)`.
pub fn wald_test(fit: &PathFit, j: usize, null: f64) -> (f64, f64) {
    let se = fit.se(j);
    let z = (fit.theta_hat[j] - null) / se;
    let normal = Normal::new(0.0, 1.0).unwrap();
    (z, 2.0 * (1.0 - normal.cdf(z.abs())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapCi {
    pub lower: f64,
    pub upper: f64,
    /// Replicate estimates that succeeded, sorted.
    pub replicates: Vec<f64>,
    pub failures: usize,
}

impl BootstrapCi {
    /// Standard deviation of the replicate estimates.
    pub fn se(&self) -> f64 {
        let n = self.replicates.len() as f64;
        let mean = self.replicates.iter().sum::<f64>() / n;
        (self.replicates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }
}

/// Percentile interval from case-resampling refits. Replicates run in parallel,
/// each on its own random stream, so the result does not depend on scheduling.
pub fn bootstrap_ci<R, F>(
    m: &PathModel,
    data: &PathData,
    effect: F,
    b_reps: usize,
    level: f64,
    rng: &mut R,
) -> Result<BootstrapCi>
where
    R: Rng,
    F: Fn(&PathFit) -> Result<f64> + Sync,
{
    let mut cis = bootstrap_effects(m, data, |fit| Ok(vec![effect(fit)?]), b_reps, level, rng)?;
    Ok(cis.remove(0))
}

/// Like [`bootstrap_ci`] for several effects computed from the same refits.
/// A replicate fails as a whole when the refit or any effect fails.
pub fn bootstrap_effects<R, F>(
    m: &PathModel,
    data: &PathData,
    effects: F,
    b_reps: usize,
    level: f64,
    rng: &mut R,
) -> Result<Vec<BootstrapCi>>
where
    R: Rng,
    F: Fn(&PathFit) -> Result<Vec<f64>> + Sync,
{
    if b_reps < MIN_BOOTSTRAP {
        return Err(Error::TooFewReplicates {
            got: b_reps,
            min: MIN_BOOTSTRAP,
        });
    }
    let n = data.n();
    let base: u64 = rng.gen();
    let opts = FitOptions {
        compute_vcov: false,
        ..FitOptions::default()
    };
    let results: Vec<Option<Vec<f64>>> = (0..b_reps)
        .into_par_iter()
        .map(|r| {
            let mut rr = ChaCha8Rng::seed_from_u64(base);
            rr.set_stream(r as u64);
            let rows: Vec<usize> = (0..n).map(|_| rr.gen_range(0..n)).collect();
            let fit = fit_path_model(m, &data.subset(&rows), opts).ok()?;
            if !fit.converged {
                return None;
            }
            effects(&fit).ok().filter(|v| v.iter().all(|x| x.is_finite()))
        })
        .collect();
    let ok: Vec<&Vec<f64>> = results.iter().flatten().collect();
    let failures = b_reps - ok.len();
    if failures as f64 > MAX_FAILURE_SHARE * b_reps as f64 {
        return Err(Error::TooManyFailures {
            failed: failures,
            total: b_reps,
        });
    }
    let k = ok.first().map_or(0, |v| v.len());
    let alpha = (1.0 - level) / 2.0;
    Ok((0..k)
        .map(|j| {
            let mut replicates: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            replicates.sort_by(f64::total_cmp);
            BootstrapCi {
                lower: quantile_sorted(&replicates, alpha),
                upper: quantile_sorted(&replicates, 1.0 - alpha),
                replicates,
                failures,
            }
        })
        .collect())
}

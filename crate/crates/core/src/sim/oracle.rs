//! Monte Carlo evaluation of counterfactual contrasts straight from the structural equations.

use rand::Rng;

use crate::error::{Error, Result};
use crate::sim::scenario::{
    ate_outcome_mean, draw_ate_covariates, med_mediator_mean, med_outcome_mean, outcome_noise, std_normal, Effect,
    Scenario,
};

/// Monte Carlo mean and standard error of a counterfactual contrast.
///
/// Each draw shares the covariates between arms and uses independent
/// disturbances per potential outcome, so the standard error is non-degenerate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleValue {
    pub mean: f64,
    pub se: f64,
    pub draws: usize,
}

pub fn oracle_contrast<R: Rng>(s: &Scenario, effect: Effect, draws: usize, rng: &mut R) -> Result<OracleValue> {
    if draws < 2 {
        return Err(Error::InvalidOption("oracle needs at least two draws".into()));
    }
    crate::sim::scenario::true_value(s, effect)?;
    // Welford running moments
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for k in 0..draws {
        let diff = match effect {
            Effect::Ate | Effect::Cate => {
                let mut w = draw_ate_covariates(rng);
                if effect == Effect::Cate {
                    w[0] = 1.0;
                }
                let y1 = ate_outcome_mean(s, 1.0, &w) + outcome_noise(s, rng);
                let y0 = ate_outcome_mean(s, 0.0, &w) + outcome_noise(s, rng);
                y1 - y0
            }
            Effect::Nde | Effect::Nie | Effect::Te => {
                let w = std_normal(rng);
                let m0 = med_mediator_mean(s, 0.0, w) + std_normal(rng);
                let m1 = med_mediator_mean(s, 1.0, w) + std_normal(rng);
                let (first, second) = match effect {
                    Effect::Nde => ((1.0, m0), (0.0, m0)),
                    Effect::Nie => ((1.0, m1), (1.0, m0)),
                    _ => ((1.0, m1), (0.0, m0)),
                };
                let y_a = med_outcome_mean(s, first.0, first.1, w) + std_normal(rng);
                let y_b = med_outcome_mean(s, second.0, second.1, w) + std_normal(rng);
                y_a - y_b
            }
        };
        let delta = diff - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (diff - mean);
    }
    let var = m2 / (draws - 1) as f64;
    Ok(OracleValue {
        mean,
        se: (var / draws as f64).sqrt(),
        draws,
    })
}

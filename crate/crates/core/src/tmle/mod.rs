//! Targeted maximum likelihood estimators.

pub mod ate;
pub mod fluctuation;
pub mod mediation;

pub use ate::{
    clever_covariate_ate, estimate_ate, estimate_cate_stratified, fit_ate_nuisance, ols, regression_ate,
    regression_contrast, target_ate, truncate_propensity, AteNuisance, AteOptions, OlsFit, RegressionSpec, Stratum,
};
pub use fluctuation::{fit_fluctuation, fluctuation_loss, Fluctuation};
pub use mediation::{
    clever_covariate_y, estimate_nde_nie, fluctuate_em, fluctuate_qbar, mediator_density_ratio, ratio_from_probs,
    MediationNuisance, MediationOptions, MediationReport,
};

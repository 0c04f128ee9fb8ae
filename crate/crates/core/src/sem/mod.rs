//! Maximum-likelihood path analysis for recursive models with observed variables.

mod fit;
mod inference;
mod model;
pub mod optim;

pub use fit::{
    fit_path_model, fit_path_moments, fml_objective, implied_moments, FitOptions, PathData, PathFit, SampleMoments,
    StartValues,
};
pub use inference::{
    bootstrap_ci, bootstrap_effects, delta_se_product, effects_from_paths, wald_test, BootstrapCi, EffectEstimate, EffectKind,
    PathEffects, DEFAULT_BOOTSTRAP, MIN_BOOTSTRAP,
};
pub use model::{parse_path_model, Edge, ParamKind, PathModel};

/// `M ~ A + W...` and `Y ~ A + M + W...`.
pub fn mediation_model(covariates: &[&str]) -> crate::error::Result<PathModel> {
    let mut edges = vec![("A", "M"), ("A", "Y"), ("M", "Y")];
    for c in covariates {
        edges.push((c, "M"));
        edges.push((c, "Y"));
    }
    PathModel::new(&edges, &[], &[])
}

/// `Y ~ A + W...`.
pub fn outcome_model(covariates: &[&str]) -> crate::error::Result<PathModel> {
    let mut edges = vec![("A", "Y")];
    edges.extend(covariates.iter().map(|c| (*c, "Y")));
    PathModel::new(&edges, &[], &[])
}

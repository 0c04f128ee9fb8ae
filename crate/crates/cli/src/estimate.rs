use std::fs::File;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use tsem_core::data::Dataset;
use tsem_core::error::Error;
use tsem_core::numeric::z_for_level;
use tsem_core::report::{Epsilon, TmleReport};
use tsem_core::seed::{derive_substream, SeedStream};
use tsem_core::sem::{
    bootstrap_effects, effects_from_paths, fit_path_model, mediation_model, outcome_model, parse_path_model,
    EffectKind, FitOptions, PathData, PathModel,
};
use tsem_core::sim::EstimatorConfig;
use tsem_core::tmle::{estimate_ate, estimate_cate_stratified, estimate_nde_nie, Stratum};

use crate::{resolve_seed, CliError, LibraryArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EffectArg {
    Ate,
    Cate,
    Mediation,
    SemPaths,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Input CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    effect: Option<EffectArg>,
    /// Subgroup for `cate`, e.g. `W1=1`.
    #[arg(long)]
    stratum: Option<String>,
    /// Path-model file for `sem-paths` (`Y ~ A + M`, `M ~ A`, ...).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Result CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Floor for the mediator classifier in the density ratio.
    #[arg(long)]
    a_min: Option<f64>,
    #[command(flatten)]
    lib: LibraryArgs,
}

pub const RESULT_HEADER: [&str; 11] = [
    "effect",
    "method",
    "estimate",
    "se",
    "ci_lower",
    "ci_upper",
    "n",
    "epsilon",
    "mean_eif",
    "g_truncated",
    "warnings",
];

struct ResultRow {
    effect: String,
    method: &'static str,
    estimate: f64,
    se: f64,
    lower: f64,
    upper: f64,
    n: usize,
    epsilon: String,
    mean_eif: String,
    g_truncated: String,
    warnings: Vec<String>,
}

impl ResultRow {
    fn from_tmle(effect: &str, r: &TmleReport) -> Self {
        ResultRow {
            effect: effect.to_string(),
            method: "tmle",
            estimate: r.psi_hat,
            se: r.se,
            lower: r.ci_lower,
            upper: r.ci_upper,
            n: r.n,
            epsilon: match r.epsilon_hat {
                Epsilon::Single(e) => e.to_string(),
                Epsilon::Pair(a, b) => format!("{a};{b}"),
            },
            mean_eif: r.mean_eif().to_string(),
            g_truncated: r.g_truncation_count.to_string(),
            warnings: r.warnings.clone(),
        }
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.effect.clone(),
            self.method.to_string(),
            self.estimate.to_string(),
            self.se.to_string(),
            self.lower.to_string(),
            self.upper.to_string(),
            self.n.to_string(),
            self.epsilon.clone(),
            self.mean_eif.clone(),
            self.g_truncated.clone(),
            self.warnings.join("; "),
        ]
    }
}

/// Invalid input (exit 2) versus a failure inside the estimator (exit 3).
fn classify(e: Error) -> CliError {
    match e {
        Error::NonBinaryTreatment { .. }
        | Error::LengthMismatch { .. }
        | Error::MissingValues(_)
        | Error::MediatorRequired
        | Error::TooFewRows(_)
        | Error::Csv(_)
        | Error::InvalidSpec(_)
        | Error::InvalidOption(_)
        | Error::PathModel(_)
        | Error::CyclicModel(_)
        | Error::UnknownVariable(_)
        | Error::MissingEdge { .. }
        | Error::TooFewReplicates { .. } => CliError::input(e.to_string()),
        other => CliError::estimation(other.to_string()),
    }
}

/// Builds the estimator settings from the shared flags.
pub fn estimator_config(lib: &LibraryArgs) -> Result<EstimatorConfig, CliError> {
    let mut cfg = match &lib.library {
        Some(s) => {
            let kinds = crate::split_list(s)
                .iter()
                .map(|k| k.parse())
                .collect::<Result<Vec<_>, _>>()
                .map_err(classify)?;
            let mut c = EstimatorConfig::with_library(kinds, tsem_core::super_learner::DEFAULT_V);
            c.b_reps = EstimatorConfig::default().b_reps;
            c
        }
        None => EstimatorConfig::default(),
    };
    if let Some(v) = lib.folds {
        cfg.ate.v_folds = v;
        cfg.mediation.v_folds = v;
    }
    if let Some(g) = lib.g_min {
        cfg.ate.g_min = g;
        cfg.mediation.g_min = g;
    }
    if let Some(l) = lib.level {
        cfg.level = l;
        cfg.ate.level = l;
        cfg.mediation.level = l;
    }
    if let Some(b) = lib.b_reps {
        cfg.b_reps = b;
    }
    cfg.ate.validate().map_err(classify)?;
    cfg.mediation.validate().map_err(classify)?;
    Ok(cfg)
}

fn sem_rows(
    model: &PathModel,
    d: &Dataset,
    cfg: &EstimatorConfig,
    b_reps: Option<usize>,
    seed: u64,
) -> Result<Vec<ResultRow>, CliError> {
    let data = PathData::from_dataset(d);
    let fit = fit_path_model(model, &data, FitOptions::default()).map_err(classify)?;
    let z = z_for_level(cfg.level);
    let mut warnings = fit.warnings.clone();
    if !fit.converged {
        warnings.push("optimizer did not converge".into());
    }
    let row = |effect: String, est: f64, se: f64, lower: f64, upper: f64| ResultRow {
        effect,
        method: "sem",
        estimate: est,
        se,
        lower,
        upper,
        n: fit.n,
        epsilon: String::new(),
        mean_eif: String::new(),
        g_truncated: String::new(),
        warnings: warnings.clone(),
    };
    let mut rows = Vec::new();
    let has = |v: &str| model.var_index(v).is_ok();
    if has("A") && has("Y") && model.edge_param("A", "Y").is_ok() {
        let med = (has("M") && model.edge_index("A", "M").is_ok() && model.edge_index("M", "Y").is_ok()).then_some("M");
        let eff = effects_from_paths(&fit, "A", med, "Y").map_err(classify)?;
        let kinds: Vec<(EffectKind, &str)> = if med.is_some() {
            vec![(EffectKind::Direct, "nde"), (EffectKind::Indirect, "nie"), (EffectKind::Total, "te")]
        } else {
            vec![(EffectKind::Direct, "ate")]
        };
        let boot = match b_reps {
            Some(b) => {
                let mut rng = derive_substream(SeedStream::new(seed, 0));
                let ks: Vec<EffectKind> = kinds.iter().map(|k| k.0).collect();
                Some(
                    bootstrap_effects(
                        model,
                        &data,
                        |f| {
                            let e = effects_from_paths(f, "A", med, "Y")?;
                            Ok(ks.iter().map(|&k| e.get(k).unwrap().estimate).collect())
                        },
                        b,
                        cfg.level,
                        &mut rng,
                    )
                    .map_err(classify)?,
                )
            }
            None => None,
        };
        for (i, (k, name)) in kinds.iter().enumerate() {
            let e = eff.get(*k).unwrap();
            let (lo, hi) = match &boot {
                Some(b) => (b[i].lower, b[i].upper),
                None => (e.estimate - z * e.se, e.estimate + z * e.se),
            };
            rows.push(row(name.to_string(), e.estimate, e.se, lo, hi));
        }
    }
    for (j, &t) in fit.theta_hat.iter().enumerate() {
        let se = fit.se(j);
        rows.push(row(model.param_label(j), t, se, t - z * se, t + z * se));
    }
    Ok(rows)
}

pub fn run(a: EstimateArgs) -> Result<(), CliError> {
    let path = a.data.ok_or_else(|| CliError::input("--data is required"))?;
    let effect = a.effect.ok_or_else(|| CliError::input("--effect is required"))?;
    let mut cfg = estimator_config(&a.lib)?;
    if let Some(v) = a.a_min {
        cfg.mediation.a_min = v;
        cfg.mediation.validate().map_err(classify)?;
    }
    let seed = resolve_seed(a.seed)?.unwrap_or(0);
    let d = Dataset::from_csv_path(&path).map_err(classify)?;
    if a.stratum.is_some() && effect != EffectArg::Cate {
        return Err(CliError::input("--stratum only applies to --effect cate"));
    }
    if a.model.is_some() && effect != EffectArg::SemPaths {
        return Err(CliError::input("--model only applies to --effect sem-paths"));
    }
    let mut rng = derive_substream(SeedStream::new(seed, 1));
    let rows = match effect {
        EffectArg::Ate => {
            let r = estimate_ate(&d, &cfg.ate, &mut rng).map_err(classify)?;
            vec![ResultRow::from_tmle("ate", &r)]
        }
        EffectArg::Cate => {
            let text = a.stratum.ok_or_else(|| CliError::input("--effect cate needs --stratum NAME=VALUE"))?;
            let s = Stratum::parse(&text, &d).map_err(classify)?;
            let r = estimate_cate_stratified(&d, |w| s.contains(w), &cfg.ate, &mut rng).map_err(classify)?;
            vec![ResultRow::from_tmle("cate", &r)]
        }
        EffectArg::Mediation => {
            d.mediator().map_err(classify)?;
            let r = estimate_nde_nie(&d, &cfg.mediation, &mut rng).map_err(classify)?;
            vec![
                ResultRow::from_tmle("nde", &r.nde),
                ResultRow::from_tmle("nie", &r.nie),
                ResultRow::from_tmle("te", &r.te),
            ]
        }
        EffectArg::SemPaths => {
            let model = match &a.model {
                Some(p) => {
                    let text =
                        std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
                    parse_path_model(&text).map_err(classify)?
                }
                None => {
                    let names: Vec<&str> = d.column_names.iter().map(String::as_str).collect();
                    if d.m.is_some() {
                        mediation_model(&names)
                    } else {
                        outcome_model(&names)
                    }
                    .map_err(classify)?
                }
            };
            sem_rows(&model, &d, &cfg, a.lib.b_reps, seed)?
        }
    };

    if let Some(out) = &a.out {
        let file = File::create(out).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
        let mut w = csv::Writer::from_writer(file);
        let io = |e: csv::Error| CliError::input(format!("{}: {e}", out.display()));
        w.write_record(RESULT_HEADER).map_err(io)?;
        for r in &rows {
            w.write_record(r.fields()).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    }

    println!("{:<14} {:>6} {:>12} {:>10} {:>24}", "effect", "method", "estimate", "se", "ci");
    for r in &rows {
        println!(
            "{:<14} {:>6} {:>12.5} {:>10.5} {:>24}",
            r.effect,
            r.method,
            r.estimate,
            r.se,
            format!("[{:.4}, {:.4}]", r.lower, r.upper)
        );
    }
    let mut warned = std::collections::BTreeSet::new();
    for w in rows.iter().flat_map(|r| &r.warnings) {
        if warned.insert(w.clone()) {
            println!("warning: {w}");
        }
    }
    Ok(())
}

use std::time::Instant;

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::LearnerKind;
use crate::report::TmleReport;
use crate::seed::{derive_substream, stable_hash, Rng, SeedStream};
use crate::sem::{
    bootstrap_effects, effects_from_paths, fit_path_model, mediation_model, EffectKind, FitOptions, PathData,
    DEFAULT_BOOTSTRAP,
};
use crate::sim::record::SimulationRecord;
use crate::sim::scenario::{dgp_sample, Effect, Method, Scenario, ScenarioId};
use crate::tmle::{
    estimate_ate, estimate_cate_stratified, estimate_nde_nie, regression_contrast, AteOptions, MediationOptions,
};

/// Estimator settings shared by every replication of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub ate: AteOptions,
    pub mediation: MediationOptions,
    /// Bootstrap replicates for the path-model intervals.
    pub b_reps: usize,
    pub level: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            ate: AteOptions::default(),
            mediation: MediationOptions::default(),
            b_reps: DEFAULT_BOOTSTRAP,
            level: 0.95,
        }
    }
}

impl EstimatorConfig {
    /// Same library for every nuisance regression.
    pub fn with_library(library: Vec<LearnerKind>, v_folds: usize) -> Self {
        let mut c = EstimatorConfig::default();
        c.ate.q_library = library.clone();
        c.ate.g_library = library.clone();
        c.ate.v_folds = v_folds;
        c.mediation.q_library = library.clone();
        c.mediation.g_library = library.clone();
        c.mediation.a_library = library.clone();
        c.mediation.em_library = library;
        c.mediation.v_folds = v_folds;
        c
    }
}

/// Grid sizes for a scenario family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn ns(self, mediation: bool) -> Vec<usize> {
        match (self, mediation) {
            (Profile::Desk, false) => vec![200, 500, 1000, 2000, 3000],
            (Profile::Desk, true) => vec![500, 1000, 2000],
            (Profile::Paper, false) => vec![200, 500, 750, 1000, 1500, 2000, 3000],
            (Profile::Paper, true) => vec![500, 800, 1000, 1500, 2000, 2500, 3000, 5000],
        }
    }

    pub fn n_sim(self, mediation: bool) -> usize {
        match (self, mediation) {
            (Profile::Desk, false) => 200,
            (Profile::Desk, true) => 100,
            (Profile::Paper, false) => 1000,
            (Profile::Paper, true) => 200,
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::InvalidOption(format!("unknown profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub scenarios: Vec<Scenario>,
    pub methods: Vec<Method>,
    pub ns: Vec<usize>,
    pub n_sim: usize,
    pub master_seed: u64,
    /// Worker threads; 0 means one per logical processor.
    pub jobs: usize,
    /// Fill `wall_ms`; off by default so output files are reproducible byte for byte.
    pub record_timing: bool,
    pub config: EstimatorConfig,
}

/// Random-stream index of the data for replication `rep` of `(scenario, n)`.
pub fn data_stream(s: &Scenario, n: usize, rep: usize) -> u64 {
    stable_hash(&[s.label().as_bytes(), &(n as u64).to_le_bytes(), &(rep as u64).to_le_bytes()])
}

fn estimator_stream(s: &Scenario, n: usize, rep: usize, m: Method) -> u64 {
    stable_hash(&[
        s.label().as_bytes(),
        &(n as u64).to_le_bytes(),
        &(rep as u64).to_le_bytes(),
        m.name().as_bytes(),
    ])
}

struct Estimate {
    effect: Effect,
    estimate: f64,
    se: f64,
    lower: f64,
    upper: f64,
    mean_eif: Option<f64>,
}

fn from_report(effect: Effect, r: &TmleReport, eif: bool) -> Estimate {
    Estimate {
        effect,
        estimate: r.psi_hat,
        se: r.se,
        lower: r.ci_lower,
        upper: r.ci_upper,
        mean_eif: eif.then(|| r.mean_eif()),
    }
}

fn run_method(s: &Scenario, d: &Dataset, m: Method, cfg: &EstimatorConfig, rng: &mut Rng) -> Result<Vec<Estimate>> {
    match (m, s.id) {
        (Method::Tmle, ScenarioId::Cate) => {
            let r = estimate_cate_stratified(d, |w| w[0] == 1.0, &cfg.ate, rng)?;
            Ok(vec![from_report(Effect::Cate, &r, true)])
        }
        (Method::Tmle, id) if id.is_mediation() => {
            let r = estimate_nde_nie(d, &cfg.mediation, rng)?;
            Ok(vec![
                from_report(Effect::Nde, &r.nde, true),
                from_report(Effect::Nie, &r.nie, true),
                from_report(Effect::Te, &r.te, true),
            ])
        }
        (Method::Tmle, _) => {
            let r = estimate_ate(d, &cfg.ate, rng)?;
            Ok(vec![from_report(Effect::Ate, &r, true)])
        }
        (Method::Regression, id) if !id.is_mediation() => {
            let spec = s.regression_spec();
            let at = vec![1.0; spec.treatment_interactions.len()];
            let r = regression_contrast(d, &spec, &at, cfg.level)?;
            let effect = if id == ScenarioId::Cate { Effect::Cate } else { Effect::Ate };
            Ok(vec![from_report(effect, &r, false)])
        }
        (Method::Sem, id) if id.is_mediation() => {
            let model = mediation_model(&["W"])?;
            let data = PathData::from_dataset(d);
            let fit = fit_path_model(&model, &data, FitOptions::default())?;
            let eff = effects_from_paths(&fit, "A", Some("M"), "Y")?;
            let kinds = [EffectKind::Direct, EffectKind::Indirect, EffectKind::Total];
            let boot = bootstrap_effects(
                &model,
                &data,
                |f| {
                    let e = effects_from_paths(f, "A", Some("M"), "Y")?;
                    Ok(kinds.iter().map(|&k| e.get(k).unwrap().estimate).collect())
                },
                cfg.b_reps,
                cfg.level,
                rng,
            )?;
            Ok([Effect::Nde, Effect::Nie, Effect::Te]
                .into_iter()
                .zip(kinds)
                .zip(boot)
                .map(|((effect, k), ci)| {
                    let e = eff.get(k).unwrap();
                    Estimate {
                        effect,
                        estimate: e.estimate,
                        se: e.se,
                        lower: ci.lower,
                        upper: ci.upper,
                        mean_eif: None,
                    }
                })
                .collect())
        }
        _ => Err(Error::InvalidOption(format!(
            "method {m} is not available for scenario {}",
            s.label()
        ))),
    }
}

/// All methods on one replication's data. Estimator failures become failed records.
pub fn run_replication(
    s: &Scenario,
    n: usize,
    rep: usize,
    methods: &[Method],
    cfg: &EstimatorConfig,
    master_seed: u64,
    record_timing: bool,
) -> Vec<SimulationRecord> {
    let seed = data_stream(s, n, rep);
    let data = dgp_sample(s, n, &mut derive_substream(SeedStream::new(master_seed, seed)));
    let mut out = Vec::new();
    for &m in methods {
        let start = Instant::now();
        let mut rng = derive_substream(SeedStream::new(master_seed, estimator_stream(s, n, rep, m)));
        let result = data.as_ref().map_err(Clone::clone).and_then(|d| run_method(s, d, m, cfg, &mut rng));
        let wall_ms = if record_timing {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        let base = SimulationRecord {
            scenario: s.label(),
            method: m.name().to_string(),
            effect: String::new(),
            n,
            rep,
            seed,
            estimate: f64::NAN,
            se: f64::NAN,
            ci_lower: f64::NAN,
            ci_upper: f64::NAN,
            failed: true,
            wall_ms,
            mean_eif: None,
        };
        match result {
            Ok(estimates) => out.extend(estimates.into_iter().map(|e| SimulationRecord {
                effect: e.effect.name().to_string(),
                estimate: e.estimate,
                se: e.se,
                ci_lower: e.lower,
                ci_upper: e.upper,
                failed: !(e.estimate.is_finite() && e.lower <= e.upper),
                mean_eif: e.mean_eif,
                ..base.clone()
            })),
            Err(_) => out.extend(s.effects().into_iter().map(|effect| SimulationRecord {
                effect: effect.name().to_string(),
                ..base.clone()
            })),
        }
    }
    out
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_sim == 0 {
            return Err(Error::InvalidOption("n_sim must be >= 1".into()));
        }
        if self.scenarios.is_empty() || self.methods.is_empty() || self.ns.is_empty() {
            return Err(Error::InvalidOption("grid needs scenarios, methods and sample sizes".into()));
        }
        if let Some(&n) = self.ns.iter().find(|&&n| n < 50) {
            return Err(Error::InvalidOption(format!("sample size {n} is below 50")));
        }
        for s in &self.scenarios {
            for &m in &self.methods {
                if !s.supports(m) {
                    return Err(Error::InvalidOption(format!(
                        "method {m} is not available for scenario {}",
                        s.label()
                    )));
                }
            }
        }
        self.config.ate.validate()?;
        self.config.mediation.validate()
    }
}

/// Runs every (scenario, n, replication) cell in parallel and returns the
/// records sorted by cell and replication. The output depends only on the
/// grid and the master seed, not on the number of workers.
pub fn run_grid(spec: &GridSpec) -> Result<Vec<SimulationRecord>> {
    spec.validate()?;
    let mut tasks = Vec::new();
    for s in &spec.scenarios {
        for &n in &spec.ns {
            for rep in 0..spec.n_sim {
                tasks.push((*s, n, rep));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::InvalidOption(format!("worker pool: {e}")))?;
    let mut records: Vec<SimulationRecord> = pool.install(|| {
        tasks
            .par_iter()
            .flat_map_iter(|(s, n, rep)| {
                run_replication(s, *n, *rep, &spec.methods, &spec.config, spec.master_seed, spec.record_timing)
            })
            .collect()
    });
    records.sort_by(|a, b| a.key().cmp(&b.key()));
    Ok(records)
}

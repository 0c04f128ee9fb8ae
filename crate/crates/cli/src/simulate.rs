use std::fs::File;
use std::path::PathBuf;

use clap::Args;
use tsem_core::sim::{
    metrics_table, run_grid, write_records, GridSpec, Method, Profile, Scenario, ScenarioId,
};

use crate::estimate::estimator_config;
use crate::{resolve_seed, split_list, CliError, LibraryArgs};

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario names, comma separated (`all` for every scenario).
    #[arg(long)]
    scenario: Option<String>,
    /// Treatment coefficient for the ATE and CATE scenarios.
    #[arg(long)]
    psi: Option<f64>,
    /// Methods, comma separated; defaults to every method the scenario supports.
    #[arg(long)]
    methods: Option<String>,
    /// Sample sizes, comma separated; defaults to the profile's grid.
    #[arg(long)]
    ns: Option<String>,
    /// Replications per cell; defaults to the profile's count.
    #[arg(long)]
    nsim: Option<usize>,
    /// Master seed (falls back to TC_SEED).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for records.csv and metrics.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 or absent means one per logical processor.
    #[arg(long)]
    jobs: Option<usize>,
    /// `desk` or `paper`.
    #[arg(long)]
    profile: Option<String>,
    /// Record wall-clock time per estimate (makes outputs run-dependent).
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    lib: LibraryArgs,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    split_list(s)
        .iter()
        .map(|v| v.parse().map_err(|_| CliError::input(format!("bad {what} `{v}`"))))
        .collect()
}

pub fn run(a: SimulateArgs) -> Result<(), CliError> {
    let names = a.scenario.ok_or_else(|| CliError::input("--scenario is required"))?;
    let out = a.out.ok_or_else(|| CliError::input("--out is required"))?;
    let seed = resolve_seed(a.seed)?.ok_or_else(|| CliError::input("--seed is required (or set TC_SEED)"))?;
    let psi = a.psi.unwrap_or(0.5);
    if !psi.is_finite() {
        return Err(CliError::input("--psi must be finite"));
    }
    let profile: Profile = match &a.profile {
        Some(p) => p.parse().map_err(|e: tsem_core::error::Error| CliError::input(e.to_string()))?,
        None => Profile::Desk,
    };
    let ids: Vec<ScenarioId> = if names.trim() == "all" {
        ScenarioId::ALL.to_vec()
    } else {
        split_list(&names)
            .iter()
            .map(|n| n.parse().map_err(|e: tsem_core::error::Error| CliError::input(e.to_string())))
            .collect::<Result<_, _>>()?
    };
    if ids.is_empty() {
        return Err(CliError::input("--scenario is empty"));
    }
    let methods: Option<Vec<Method>> = a.methods.as_deref().map(|m| parse_list(m, "method")).transpose()?;
    let ns: Option<Vec<usize>> = a.ns.as_deref().map(|m| parse_list(m, "sample size")).transpose()?;
    let config = estimator_config(&a.lib)?;

    let mut records = Vec::new();
    for id in ids {
        let s = if id.is_mediation() { Scenario::mediation(id) } else { Scenario::new(id, psi) };
        let med = id.is_mediation();
        let spec = GridSpec {
            scenarios: vec![s],
            methods: methods.clone().unwrap_or_else(|| {
                [Method::Tmle, Method::Regression, Method::Sem]
                    .into_iter()
                    .filter(|&m| s.supports(m))
                    .collect()
            }),
            ns: ns.clone().unwrap_or_else(|| profile.ns(med)),
            n_sim: a.nsim.unwrap_or_else(|| profile.n_sim(med)),
            master_seed: seed,
            jobs: a.jobs.unwrap_or(0),
            record_timing: a.timing,
            config: config.clone(),
        };
        spec.validate().map_err(|e| CliError::input(e.to_string()))?;
        records.extend(run_grid(&spec).map_err(|e| CliError::estimation(e.to_string()))?);
    }
    records.sort_by(|x, y| x.key().cmp(&y.key()));

    std::fs::create_dir_all(&out).map_err(|e| CliError::input(format!("{}: {e}", out.display())))?;
    let path = out.join("records.csv");
    let file = File::create(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    write_records(&records, file).map_err(|e| CliError::input(e.to_string()))?;
    let rows = metrics_table(&records).map_err(|e| CliError::estimation(e.to_string()))?;
    crate::report::write_outputs(&out, &rows)?;
    crate::report::print_table(&rows);
    let failed = records.iter().filter(|r| r.failed).count();
    if failed > 0 {
        println!("{failed} of {} estimates failed", records.len());
    }
    Ok(())
}

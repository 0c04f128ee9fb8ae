use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use tsem_core::sim::{metrics_table, read_records, write_long_format, write_metrics, MetricRow, METRIC_NAMES};

use crate::CliError;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Records CSV written by `simulate`.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Output directory for metrics.csv and one long-format file per metric.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn print_table(rows: &[MetricRow]) {
    println!(
        "{:<22} {:<10} {:<6} {:>6} {:>6} {:>10} {:>8} {:>8} {:>10}",
        "scenario", "method", "effect", "n", "n_sim", "rel_bias", "coverage", "power", "std_rmse"
    );
    for r in rows {
        println!(
            "{:<22} {:<10} {:<6} {:>6} {:>6} {:>10.4} {:>8.3} {:>8.3} {:>10.4}{}",
            r.scenario,
            r.method,
            r.effect,
            r.n,
            r.n_sim,
            r.relative_bias,
            r.coverage,
            r.power,
            r.std_rmse,
            if r.absolute { "  (absolute)" } else { "" }
        );
    }
}

fn create(path: &Path) -> Result<File, CliError> {
    File::create(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Writes `metrics.csv` and `long_<metric>.csv` into `dir`.
pub fn write_outputs(dir: &Path, rows: &[MetricRow]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
    let err = |e: tsem_core::error::Error| CliError::input(e.to_string());
    write_metrics(rows, create(&dir.join("metrics.csv"))?).map_err(err)?;
    for m in METRIC_NAMES {
        write_long_format(rows, m, create(&dir.join(format!("long_{m}.csv")))?).map_err(err)?;
    }
    Ok(())
}

pub fn run(a: ReportArgs) -> Result<(), CliError> {
    let path = a.records.ok_or_else(|| CliError::input("--records is required"))?;
    let file = File::open(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let records = read_records(file).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let rows = metrics_table(&records).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    if let Some(dir) = &a.out {
        write_outputs(dir, &rows)?;
    }
    print_table(&rows);
    Ok(())
}

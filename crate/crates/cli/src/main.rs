use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

mod config;
mod estimate;
mod report;
mod simulate;

/// TMLE, Super Learner and SEM path analysis: estimation and simulation grids.
#[derive(Parser, Debug)]
#[command(name = "tsem", version)]
struct Cli {
    /// `key = value` file of flag defaults; flags given here take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Estimate an effect from a CSV with columns A, Y, optional M and covariates.
    Estimate(estimate::EstimateArgs),
    /// Run a Monte Carlo grid and write records.csv and metrics.csv.
    Simulate(simulate::SimulateArgs),
    /// Aggregate a records CSV into metrics and long-format files.
    Report(report::ReportArgs),
}

/// Nuisance-model settings shared by `estimate` and `simulate`.
#[derive(Args, Debug, Clone)]
pub struct LibraryArgs {
    /// Learners, comma separated: mean, glm, glm.interaction, gam, polyD,
    /// forest[(trees,depth,min_leaf[,mtry])], boost[(rounds,rate,depth)].
    #[arg(long)]
    library: Option<String>,
    /// Cross-validation folds for the Super Learner.
    #[arg(long)]
    folds: Option<usize>,
    /// Propensity truncation bound.
    #[arg(long)]
    g_min: Option<f64>,
    #[arg(long)]
    level: Option<f64>,
    /// Bootstrap replicates for path-model intervals.
    #[arg(long)]
    b_reps: Option<usize>,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: msg.into(),
        }
    }

    pub fn estimation(msg: impl Into<String>) -> Self {
        CliError {
            code: 3,
            message: msg.into(),
        }
    }
}

/// Splits on commas that are not inside parentheses.
pub fn split_list(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in s.chars() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Seed from the flag, else `TC_SEED`.
pub fn resolve_seed(flag: Option<u64>) -> Result<Option<u64>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("TC_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::input(format!("TC_SEED `{v}` is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn run() -> Result<(), CliError> {
    let raw: Vec<String> = std::env::args().collect();
    let args = config::merge_config_args(&Cli::command(), raw)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return if code == 0 {
                Ok(())
            } else {
                Err(CliError {
                    code: 2,
                    message: String::new(),
                })
            };
        }
    };
    match cli.command {
        Cmd::Estimate(a) => estimate::run(a),
        Cmd::Simulate(a) => simulate::run(a),
        Cmd::Report(a) => report::run(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !e.message.is_empty() {
                eprintln!("error: {}", e.message);
            }
            ExitCode::from(e.code)
        }
    }
}

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::sim::metrics::MetricRow;

pub const RECORD_HEADER: [&str; 12] = [
    "scenario", "method", "effect", "n", "rep", "seed", "estimate", "se", "ci_lower", "ci_upper", "failed", "wall_ms",
];

pub const METRIC_HEADER: [&str; 9] = [
    "scenario",
    "method",
    "effect",
    "n",
    "n_sim",
    "relative_bias",
    "coverage",
    "power",
    "std_rmse",
];

/// One estimate from one Monte Carlo replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    /// Scenario label, e.g. `AteCorrect:0.5`.
    pub scenario: String,
    pub method: String,
    pub effect: String,
    pub n: usize,
    pub rep: usize,
    /// Random-stream index that generated the replication's data.
    pub seed: u64,
    pub estimate: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub failed: bool,
    pub wall_ms: u64,
    /// Empirical mean of the influence function (TMLE only; not serialised).
    pub mean_eif: Option<f64>,
}

impl SimulationRecord {
    /// Sort key: cell first, then replication.
    pub fn key(&self) -> (String, String, usize, String, usize) {
        (self.scenario.clone(), self.method.clone(), self.n, self.effect.clone(), self.rep)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

pub fn write_records<W: Write>(records: &[SimulationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.method.clone(),
            r.effect.clone(),
            r.n.to_string(),
            r.rep.to_string(),
            r.seed.to_string(),
            r.estimate.to_string(),
            r.se.to_string(),
            r.ci_lower.to_string(),
            r.ci_upper.to_string(),
            u8::from(r.failed).to_string(),
            r.wall_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<SimulationRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != RECORD_HEADER {
        return Err(Error::Csv(format!("unexpected header: {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(csv_err)?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let bad = |i: usize| Error::Csv(format!("row {}: bad {} `{}`", line + 2, RECORD_HEADER[i], field(i)));
        let num = |i: usize| field(i).parse::<f64>().map_err(|_| bad(i));
        out.push(SimulationRecord {
            scenario: field(0).to_string(),
            method: field(1).to_string(),
            effect: field(2).to_string(),
            n: field(3).parse().map_err(|_| bad(3))?,
            rep: field(4).parse().map_err(|_| bad(4))?,
            seed: field(5).parse().map_err(|_| bad(5))?,
            estimate: num(6)?,
            se: num(7)?,
            ci_lower: num(8)?,
            ci_upper: num(9)?,
            failed: match field(10) {
                "0" => false,
                "1" => true,
                _ => return Err(bad(10)),
            },
            wall_ms: field(11).parse().map_err(|_| bad(11))?,
            mean_eif: None,
        });
    }
    Ok(out)
}

pub fn write_metrics<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRIC_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.method.clone(),
            r.effect.clone(),
            r.n.to_string(),
            r.n_sim.to_string(),
            r.relative_bias.to_string(),
            r.coverage.to_string(),
            r.power.to_string(),
            r.std_rmse.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

/// Long-format rows for one metric: `scenario,effect,metric,n,method,value`
/// (x = `n`, series = `method`).
pub fn write_long_format<W: Write>(rows: &[MetricRow], metric: &str, out: W) -> Result<()> {
    let pick = |r: &MetricRow| -> Result<f64> {
        Ok(match metric {
            "relative_bias" => r.relative_bias,
            "coverage" => r.coverage,
            "power" => r.power,
            "std_rmse" => r.std_rmse,
            other => return Err(Error::InvalidOption(format!("unknown metric `{other}`"))),
        })
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "effect", "metric", "n", "method", "value"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.effect.clone(),
            metric.to_string(),
            r.n.to_string(),
            r.method.clone(),
            pick(r)?.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}

pub const METRIC_NAMES: [&str; 4] = ["relative_bias", "coverage", "power", "std_rmse"];

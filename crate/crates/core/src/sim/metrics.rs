use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::sim::record::SimulationRecord;
use crate::sim::scenario::{true_value, Effect, Scenario};

/// Performance of one method in one cell, over its successful replications.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scenario: String,
    pub method: String,
    pub effect: String,
    pub n: usize,
    /// Successful replications used.
    pub n_sim: usize,
    pub n_failed: usize,
    /// Mean of `(estimate - truth) / truth`; plain bias when `absolute`.
    pub relative_bias: f64,
    pub coverage: f64,
    /// Share of intervals excluding zero.
    pub power: f64,
    /// Root mean squared relative error; plain RMSE when `absolute`.
    pub std_rmse: f64,
    /// Set when the truth is zero and bias/RMSE are reported on the absolute scale.
    pub absolute: bool,
}

/// Aggregates records of a single cell against the known truth.
pub fn metrics(records: &[SimulationRecord], truth: f64) -> Result<MetricRow> {
    let first = records.first().ok_or(Error::NoRecords)?;
    let ok: Vec<&SimulationRecord> = records.iter().filter(|r| !r.failed).collect();
    if ok.is_empty() {
        return Err(Error::NoRecords);
    }
    let k = ok.len() as f64;
    let absolute = truth == 0.0;
    let denom = if absolute { 1.0 } else { truth };
    let rel: Vec<f64> = ok.iter().map(|r| (r.estimate - truth) / denom).collect();
    let relative_bias = rel.iter().sum::<f64>() / k;
    let std_rmse = (rel.iter().map(|e| e * e).sum::<f64>() / k).sqrt();
    let coverage = ok.iter().filter(|r| r.ci_lower < truth && truth < r.ci_upper).count() as f64 / k;
    let power = ok.iter().filter(|r| !(r.ci_lower < 0.0 && 0.0 < r.ci_upper)).count() as f64 / k;
    // Variance decomposition: mean square >= square of mean.
    assert!(
        std_rmse * std_rmse >= relative_bias * relative_bias * (1.0 - 1e-12) - 1e-300,
        "metric algebra violated"
    );
    Ok(MetricRow {
        scenario: first.scenario.clone(),
        method: first.method.clone(),
        effect: first.effect.clone(),
        n: first.n,
        n_sim: ok.len(),
        n_failed: records.len() - ok.len(),
        relative_bias,
        coverage,
        power,
        std_rmse,
        absolute,
    })
}

/// One metric row per (scenario, method, effect, n), in that sort order.
pub fn metrics_table(records: &[SimulationRecord]) -> Result<Vec<MetricRow>> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut groups: BTreeMap<(String, String, String, usize), Vec<SimulationRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.scenario.clone(), r.method.clone(), r.effect.clone(), r.n))
            .or_default()
            .push(r.clone());
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((scenario, _, effect, _), recs) in groups {
        let s = Scenario::from_label(&scenario)?;
        let e: Effect = effect.parse()?;
        let truth = true_value(&s, e)?;
        match metrics(&recs, truth) {
            Ok(row) => rows.push(row),
            Err(Error::NoRecords) => rows.push(MetricRow {
                scenario,
                method: recs[0].method.clone(),
                effect,
                n: recs[0].n,
                n_sim: 0,
                n_failed: recs.len(),
                relative_bias: f64::NAN,
                coverage: f64::NAN,
                power: f64::NAN,
                std_rmse: f64::NAN,
                absolute: truth == 0.0,
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(est: f64, lo: f64, hi: f64) -> SimulationRecord {
        SimulationRecord {
            scenario: "AteCorrect:0.5".into(),
            method: "tmle".into(),
            effect: "ate".into(),
            n: 100,
            rep: 0,
            seed: 0,
            estimate: est,
            se: 0.1,
            ci_lower: lo,
            ci_upper: hi,
            failed: false,
            wall_ms: 0,
            mean_eif: None,
        }
    }

    #[test]
    fn symmetric_errors() {
        let rows = [rec(0.6, 0.5, 0.7), rec(0.4, 0.3, 0.5)];
        let m = metrics(&rows, 0.5).unwrap();
        assert!(m.relative_bias.abs() < 1e-15);
        assert!((m.std_rmse - 0.2).abs() < 1e-12);
        assert_eq!(m.coverage, 0.0);
        assert_eq!(m.power, 1.0);
    }

    #[test]
    fn single_covering_interval() {
        let m = metrics(&[rec(0.5, 0.4, 0.6)], 0.5).unwrap();
        assert_eq!(m.coverage, 1.0);
        assert_eq!(m.n_sim, 1);
    }

    #[test]
    fn zero_truth_is_absolute() {
        let m = metrics(&[rec(0.1, -0.1, 0.3), rec(-0.3, -0.5, -0.1)], 0.0).unwrap();
        assert!(m.absolute);
        assert!((m.relative_bias + 0.1).abs() < 1e-15);
        assert_eq!(m.power, 0.5);
    }

    #[test]
    fn failures_excluded() {
        let mut bad = rec(f64::NAN, f64::NAN, f64::NAN);
        bad.failed = true;
        let m = metrics(&[rec(0.5, 0.4, 0.6), bad], 0.5).unwrap();
        assert_eq!((m.n_sim, m.n_failed), (1, 1));
        assert!(matches!(metrics(&[], 0.5), Err(Error::NoRecords)));
    }
}

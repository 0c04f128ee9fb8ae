use crate::numeric::mean;
use crate::scale::ScaleMap;

/// Fluctuation parameter(s) of a targeting step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Single(f64),
    Pair(f64, f64),
}

/// Point estimate with influence-function inference, in original outcome units.
#[derive(Debug, Clone, PartialEq)]
pub struct TmleReport {
    pub psi_hat: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Efficient influence function values, one per row.
    pub eif: Vec<f64>,
    pub epsilon_hat: Epsilon,
    /// Rows whose propensity estimate had to be truncated.
    pub g_truncation_count: usize,
    pub scale: Option<ScaleMap>,
    /// Rows used (stratum size for CATE).
    pub n: usize,
    pub warnings: Vec<String>,
}

impl TmleReport {
    /// Assembles a report from an estimate and its influence function.
    /// The variance is `sum(eif^2) / n^2`.
    pub fn from_eif(psi_hat: f64, eif: Vec<f64>, z: f64) -> Self {
        let se = eif_standard_error(&eif);
        TmleReport {
            psi_hat,
            se,
            ci_lower: psi_hat - z * se,
            ci_upper: psi_hat + z * se,
            n: eif.len(),
            eif,
            epsilon_hat: Epsilon::Single(0.0),
            g_truncation_count: 0,
            scale: None,
            warnings: Vec::new(),
        }
    }

    pub fn mean_eif(&self) -> f64 {
        mean(&self.eif)
    }
}

pub fn eif_standard_error(eif: &[f64]) -> f64 {
    let n = eif.len() as f64;
    (eif.iter().map(|d| d * d).sum::<f64>() / (n * n)).sqrt()
}

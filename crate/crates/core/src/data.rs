//! Columnar sample container and CSV ingestion.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A sample of covariates `W`, binary treatment `A`, outcome `Y` and an
/// optional mediator `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// n × p covariate matrix.
    pub w: DMatrix<f64>,
    /// Treatment indicators, each exactly 0.0 or 1.0.
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub m: Option<Vec<f64>>,
    /// Labels of the `w` columns.
    pub column_names: Vec<String>,
}

impl Dataset {
    /// Builds and validates a dataset.
    pub fn new(
        w: DMatrix<f64>,
        a: Vec<f64>,
        y: Vec<f64>,
        m: Option<Vec<f64>>,
        column_names: Vec<String>,
    ) -> Result<Self> {
        validate_dataset(Dataset {
            w,
            a,
            y,
            m,
            column_names,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    /// Returns the mediator or `MediatorRequired`.
    pub fn mediator(&self) -> Result<&[f64]> {
        self.m.as_deref().ok_or(Error::MediatorRequired)
    }

    /// Row subset, in the order given.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let w = self.w.select_rows(rows.iter());
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            w,
            a: pick(&self.a),
            y: pick(&self.y),
            m: self.m.as_ref().map(|m| pick(m)),
            column_names: self.column_names.clone(),
        }
    }

    /// Design `[A, W]`, with the treatment column optionally forced to a constant.
    pub fn aw_matrix(&self, a_value: Option<f64>) -> DMatrix<f64> {
        let n = self.n();
        let p = self.p();
        DMatrix::from_fn(n, p + 1, |i, j| match j {
            0 => a_value.unwrap_or(self.a[i]),
            _ => self.w[(i, j - 1)],
        })
    }

    /// Design `[A, M, W]`; panics if there is no mediator.
    pub fn amw_matrix(&self, a_value: Option<f64>) -> DMatrix<f64> {
        let m = self.m.as_ref().expect("mediator present");
        let n = self.n();
        let p = self.p();
        DMatrix::from_fn(n, p + 2, |i, j| match j {
            0 => a_value.unwrap_or(self.a[i]),
            1 => m[i],
            _ => self.w[(i, j - 2)],
        })
    }

    /// Design `[M, W]`; panics if there is no mediator.
    pub fn mw_matrix(&self) -> DMatrix<f64> {
        let m = self.m.as_ref().expect("mediator present");
        let n = self.n();
        let p = self.p();
        DMatrix::from_fn(n, p + 1, |i, j| match j {
            0 => m[i],
            _ => self.w[(i, j - 1)],
        })
    }

    /// True when every outcome is exactly 0 or 1.
    pub fn outcome_is_binary(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Index of a covariate column by label.
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Reads a dataset from CSV: columns `A`, `Y`, optional `M`, all others are covariates.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| Error::Csv(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_csv_reader(file)
    }

    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Csv(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect::<Vec<_>>();
        let find = |name: &str| headers.iter().position(|h| h == name);
        let a_col = find("A").ok_or_else(|| Error::Csv("missing column `A`".into()))?;
        let y_col = find("Y").ok_or_else(|| Error::Csv("missing column `Y`".into()))?;
        let m_col = find("M");
        let w_cols: Vec<usize> = (0..headers.len())
            .filter(|&j| j != a_col && j != y_col && Some(j) != m_col)
            .collect();

        let mut a = Vec::new();
        let mut y = Vec::new();
        let mut m = Vec::new();
        let mut w_flat = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let field = |j: usize| -> Result<f64> {
                let raw = rec.get(j).unwrap_or("");
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                    return Err(Error::MissingValues(format!(
                        "column `{}` row {}",
                        headers[j],
                        line + 1
                    )));
                }
                raw.parse::<f64>().map_err(|_| {
                    Error::Csv(format!(
                        "column `{}` row {}: cannot parse `{raw}`",
                        headers[j],
                        line + 1
                    ))
                })
            };
            a.push(field(a_col)?);
            y.push(field(y_col)?);
            if let Some(mc) = m_col {
                m.push(field(mc)?);
            }
            for &j in &w_cols {
                w_flat.push(field(j)?);
            }
        }
        let n = y.len();
        let w = DMatrix::from_row_slice(n, w_cols.len(), &w_flat);
        let names = w_cols.iter().map(|&j| headers[j].clone()).collect();
        Dataset::new(w, a, y, m_col.map(|_| m), names)
    }
}

/// Checks the dataset invariants and returns it unchanged.
pub fn validate_dataset(d: Dataset) -> Result<Dataset> {
    let n = d.y.len();
    let mismatch = |what: &str, got: usize| Error::LengthMismatch {
        what: what.to_string(),
        expected: n,
        got,
    };
    if d.a.len() != n {
        return Err(mismatch("A", d.a.len()));
    }
    if d.w.nrows() != n {
        return Err(mismatch("W rows", d.w.nrows()));
    }
    if let Some(m) = &d.m {
        if m.len() != n {
            return Err(mismatch("M", m.len()));
        }
    }
    if d.column_names.len() != d.w.ncols() {
        return Err(Error::LengthMismatch {
            what: "column_names".into(),
            expected: d.w.ncols(),
            got: d.column_names.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewRows(n));
    }
    if d.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::MissingValues("Y".into()));
    }
    if d.a.iter().any(|v| !v.is_finite()) {
        return Err(Error::MissingValues("A".into()));
    }
    if let Some((row, &value)) = d.a.iter().enumerate().find(|(_, &v)| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinaryTreatment { row, value });
    }
    if d.w.iter().any(|v| !v.is_finite()) {
        return Err(Error::MissingValues("W".into()));
    }
    if let Some(m) = &d.m {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::MissingValues("M".into()));
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(a: Vec<f64>, y: Vec<f64>) -> Result<Dataset> {
        let n = a.len();
        Dataset::new(DMatrix::zeros(n, 1), a, y, None, vec!["W1".into()])
    }

    #[test]
    fn accepts_valid_input() {
        assert!(tiny(vec![0.0, 1.0, 1.0], vec![1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn rejects_non_binary_treatment() {
        let err = tiny(vec![0.0, 2.0, 1.0], vec![1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::NonBinaryTreatment { row: 1, .. }));
    }

    #[test]
    fn rejects_length_mismatch() {
        let d = Dataset {
            w: DMatrix::zeros(5, 1),
            a: vec![0.0, 1.0, 0.0, 1.0],
            y: vec![0.0; 5],
            m: None,
            column_names: vec!["W1".into()],
        };
        assert!(matches!(validate_dataset(d), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn rejects_nan() {
        let err = tiny(vec![0.0, 1.0], vec![f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::MissingValues(_)));
    }

    #[test]
    fn mediator_required() {
        let d = tiny(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert_eq!(d.mediator().unwrap_err(), Error::MediatorRequired);
    }

    #[test]
    fn csv_columns_are_routed() {
        let text = "W1,A,Y,M,W2\n1,0,2.5,0.1,3\n2,1,3.5,0.2,4\n";
        let d = Dataset::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(d.column_names, vec!["W1", "W2"]);
        assert_eq!(d.a, vec![0.0, 1.0]);
        assert_eq!(d.m.as_deref(), Some(&[0.1, 0.2][..]));
        assert_eq!(d.w[(1, 1)], 4.0);
    }

    #[test]
    fn csv_missing_treatment_column() {
        let text = "W1,Y\n1,2\n2,3\n";
        assert!(matches!(
            Dataset::from_csv_reader(text.as_bytes()),
            Err(Error::Csv(_))
        ));
    }

    #[test]
    fn csv_empty_field_is_missing() {
        let text = "W1,A,Y\n1,0,\n2,1,3\n";
        assert!(matches!(
            Dataset::from_csv_reader(text.as_bytes()),
            Err(Error::MissingValues(_))
        ));
    }
}

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest polynomial degree the basis expansion supports.
pub const MAX_DEGREE: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// All pairwise products `x_j * x_k`, `j < k`.
    Interactions,
    /// Powers `x_j^2 ..= x_j^degree` for every column.
    Polynomial(u32),
}

/// Appends generated columns after the original ones.
///
/// Interactions are emitted in lexicographic `(j, k)` order; polynomial terms
/// column by column, increasing power.
pub fn expand_features(x: &DMatrix<f64>, kind: Expansion) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    let extra: Vec<Box<dyn Fn(usize) -> f64 + '_>> = match kind {
        Expansion::Interactions => {
            let mut cols: Vec<Box<dyn Fn(usize) -> f64 + '_>> = Vec::new();
            for j in 0..p {
                for k in (j + 1)..p {
                    cols.push(Box::new(move |i| x[(i, j)] * x[(i, k)]));
                }
            }
            cols
        }
        Expansion::Polynomial(degree) => {
            if degree == 0 || degree > MAX_DEGREE {
                return Err(Error::InvalidSpec(format!(
                    "polynomial degree must be in 1..={MAX_DEGREE}, got {degree}"
                )));
            }
            let mut cols: Vec<Box<dyn Fn(usize) -> f64 + '_>> = Vec::new();
            for j in 0..p {
                for d in 2..=degree {
                    cols.push(Box::new(move |i| x[(i, j)].powi(d as i32)));
                }
            }
            cols
        }
    };
    let total = p + extra.len();
    let mut out = DMatrix::zeros(n, total);
    out.columns_mut(0, p).copy_from(x);
    for (c, f) in extra.iter().enumerate() {
        for i in 0..n {
            out[(i, p + c)] = f(i);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_products() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let e = expand_features(&x, Expansion::Interactions).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 2.0]));
        let z = expand_features(&DMatrix::zeros(1, 2), Expansion::Interactions).unwrap();
        assert_eq!(z, DMatrix::zeros(1, 3));
    }

    #[test]
    fn cubic_powers() {
        let x = DMatrix::from_row_slice(1, 1, &[2.0]);
        let e = expand_features(&x, Expansion::Polynomial(3)).unwrap();
        assert_eq!(e, DMatrix::from_row_slice(1, 3, &[2.0, 4.0, 8.0]));
    }

    #[test]
    fn ordering_is_lexicographic() {
        let x = DMatrix::from_row_slice(1, 3, &[2.0, 3.0, 5.0]);
        let e = expand_features(&x, Expansion::Interactions).unwrap();
        assert_eq!(e.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 5.0, 6.0, 10.0, 15.0]);
        let e = expand_features(&x.columns(0, 2).into_owned(), Expansion::Polynomial(3)).unwrap();
        assert_eq!(e.row(0).iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0, 8.0, 9.0, 27.0]);
    }

    #[test]
    fn degree_out_of_range() {
        let x = DMatrix::zeros(3, 1);
        assert!(expand_features(&x, Expansion::Polynomial(5)).is_err());
        assert!(expand_features(&x, Expansion::Polynomial(0)).is_err());
    }
}

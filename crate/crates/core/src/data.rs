//! Paired design/response storage shared by the estimators and resampling code.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// A validated (X, Y) pair: X is n×p, Y is n×m, all entries finite, n ≥ 1.
#[derive(Debug, Clone)]
pub struct RegressionData {
    x: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl RegressionData {
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>) -> Result<Self> {
        linalg::validate(&x, "RegressionData: design")?;
        linalg::validate(&y, "RegressionData: response")?;
        if x.nrows() != y.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "RegressionData: design has {} rows, response has {}",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(RegressionData { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Sample count n.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Predictor count p.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Response count m.
    pub fn m(&self) -> usize {
        self.y.ncols()
    }

    /// The sub-sample indexed by `rows` (order preserved).
    pub fn subset(&self, rows: &[usize]) -> Result<RegressionData> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter(
                "subset: row index set is empty".into(),
            ));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::InvalidParameter(format!(
                "subset: row index {bad} out of range for n = {}",
                self.n()
            )));
        }
        Ok(RegressionData {
            x: linalg::select_rows(&self.x, rows),
            y: linalg::select_rows(&self.y, rows),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense;

    #[test]
    fn rejects_row_count_mismatch() {
        let x = dense(3, 2, &[1.0; 6]).unwrap();
        let y = dense(2, 1, &[1.0; 2]).unwrap();
        assert!(RegressionData::new(x, y).is_err());
    }

    #[test]
    fn subset_preserves_order() {
        let x = dense(3, 1, &[1.0, 2.0, 3.0]).unwrap();
        let y = dense(3, 1, &[10.0, 20.0, 30.0]).unwrap();
        let d = RegressionData::new(x, y).unwrap();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.x()[(0, 0)], 3.0);
        assert_eq!(s.y()[(1, 0)], 10.0);
        assert!(d.subset(&[5]).is_err());
        assert!(d.subset(&[]).is_err());
    }
}

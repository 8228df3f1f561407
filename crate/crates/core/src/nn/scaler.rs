//! Per-feature standardization fitted on training data.

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Tensor2D;

/// Columns whose spread is below this (relative to the mean magnitude) are
/// treated as constant and left unscaled.
const CONSTANT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns that had zero variance at fit time; their std is recorded
    /// as 1 so transform maps them to zero.
    pub constant: Vec<bool>,
}

impl StandardScaler {
    /// Fits per-column mean and population standard deviation.
    pub fn fit(x: &Tensor2D) -> Result<StandardScaler> {
        if x.nrows() == 0 {
            return Err(Error::Validation("cannot fit scaler on empty data".into()));
        }
        let n = x.nrows() as f64;
        let means = x.mean_axis(Axis(0)).expect("non-empty");
        let mut stds = Vec::with_capacity(x.ncols());
        let mut constant = Vec::with_capacity(x.ncols());
        for (col, &mean) in x.columns().into_iter().zip(means.iter()) {
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= CONSTANT_EPS * mean.abs().max(1.0) {
                stds.push(1.0);
                constant.push(true);
            } else {
                stds.push(std);
                constant.push(false);
            }
        }
        Ok(StandardScaler {
            means: means.to_vec(),
            stds,
            constant,
        })
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }

    fn check_width(&self, x: &Tensor2D) -> Result<()> {
        if x.ncols() != self.width() {
            return Err(Error::Validation(format!(
                "scaler fitted on {} columns, data has {}",
                self.width(),
                x.ncols()
            )));
        }
        Ok(())
    }

    /// (x - mean) / std per column. Constant columns map to zero.
    pub fn transform(&self, x: &Tensor2D) -> Result<Tensor2D> {
        self.check_width(x)?;
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (mean, std) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| (v - mean) / std);
        }
        Ok(out)
    }

    /// Exact inverse of [`StandardScaler::transform`].
    pub fn inverse(&self, x: &Tensor2D) -> Result<Tensor2D> {
        self.check_width(x)?;
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (mean, std) = (self.means[j], self.stds[j]);
            col.mapv_inplace(|v| v * std + mean);
        }
        Ok(out)
    }

    /// Transforms a single row vector.
    pub fn transform_row(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.width() {
            return Err(Error::Validation(format!(
                "scaler fitted on {} columns, row has {}",
                self.width(),
                values.len()
            )));
        }
        Ok(values
            .iter()
            .enumerate()
            .map(|(j, &v)| (v - self.means[j]) / self.stds[j])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn two_point_example() {
        let x = array![[0.0], [2.0]];
        let scaler = StandardScaler::fit(&x).unwrap();
        assert_eq!(scaler.means, vec![1.0]);
        assert_eq!(scaler.stds, vec![1.0]);
        assert_eq!(scaler.constant, vec![false]);
        let t = scaler.transform(&x).unwrap();
        assert_eq!(t, array![[-1.0], [1.0]]);
    }

    #[test]
    fn inverse_recovers_input() {
        let mut rng = crate::seed::rng(17);
        let x = Array2::from_shape_fn((40, 6), |_| rng.gen_range(-50.0..50.0));
        let scaler = StandardScaler::fit(&x).unwrap();
        let round = scaler.inverse(&scaler.transform(&x).unwrap()).unwrap();
        for (a, b) in x.iter().zip(round.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn transformed_columns_are_standardized() {
        let mut rng = crate::seed::rng(18);
        let x = Array2::from_shape_fn((500, 3), |(_, j)| rng.gen_range(0.0..10.0) * (j + 1) as f64);
        let scaler = StandardScaler::fit(&x).unwrap();
        let t = scaler.transform(&x).unwrap();
        for col in t.columns() {
            let n = col.len() as f64;
            let mean = col.sum() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
            assert!((var.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_column_is_flagged_and_zeroed() {
        let x = array![[3.0, 1.0], [3.0, 2.0], [3.0, 3.0]];
        let scaler = StandardScaler::fit(&x).unwrap();
        assert!(scaler.constant[0]);
        assert!(!scaler.constant[1]);
        assert_eq!(scaler.stds[0], 1.0);
        let t = scaler.transform(&x).unwrap();
        assert!(t.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn width_mismatch_errors() {
        let x = array![[0.0], [2.0]];
        let scaler = StandardScaler::fit(&x).unwrap();
        let bad = array![[0.0, 1.0]];
        assert!(scaler.transform(&bad).is_err());
        assert!(scaler.inverse(&bad).is_err());
    }
}

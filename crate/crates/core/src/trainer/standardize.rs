use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::scalar::{compensated_sum, Scalar};

/// Per-column z-score transform. Zero-variance columns keep a unit stddev.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Standardizer<T> {
    pub fn fit(x: &DMatrix<T>) -> Self {
        let n = T::from_count(x.nrows().max(1));
        let (mut mean, mut std) = (Vec::with_capacity(x.ncols()), Vec::with_capacity(x.ncols()));
        for col in x.column_iter() {
            let m = compensated_sum(col.iter().copied()) / n;
            let var = compensated_sum(col.iter().map(|&v| (v - m) * (v - m))) / n;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s > T::zero() { s } else { T::one() });
        }
        Self { mean, std }
    }

    pub fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            for v in col.iter_mut() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
        out
    }

    pub fn apply_row(&self, row: &[T]) -> Vec<T> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_column() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0_f64, 3.0]);
        let s = Standardizer::fit(&x);
        assert_eq!((s.mean[0], s.std[0]), (2.0, 1.0));
        assert_eq!(s.apply(&x).as_slice(), &[-1.0, 1.0]);
        assert_eq!(s.apply_row(&[5.0]), vec![3.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let x = DMatrix::from_column_slice(3, 1, &[5.0_f64, 5.0, 5.0]);
        let s = Standardizer::fit(&x);
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.apply(&x).as_slice(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn fitted_columns_are_centered_and_scaled() {
        let x = DMatrix::from_fn(50, 3, |i, j| {
            ((i * 7 + j * 13) % 11) as f64 * (j as f64 + 0.5)
        });
        let z = Standardizer::fit(&x).apply(&x);
        for col in z.column_iter() {
            let m = col.iter().sum::<f64>() / 50.0;
            let v = col.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
        }
    }
}

//! Feature matrices: rows are examples, columns are descriptor dimensions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// N×d matrix of example descriptors. All entries are finite; when built
/// through [`FeatureMatrix::l2_normalized`] every row has unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: DMatrix<f64>,
    normalized: bool,
}

impl FeatureMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        check_finite(&data)?;
        Ok(Self {
            data,
            normalized: false,
        })
    }

    /// Scales every row to unit Euclidean norm. Rows that are all zero
    /// cannot be normalized and are rejected.
    pub fn l2_normalized(mut data: DMatrix<f64>) -> Result<Self> {
        check_finite(&data)?;
        for i in 0..data.nrows() {
            let norm = data.row(i).norm();
            if norm == 0.0 {
                return Err(Error::ZeroRow(i));
            }
            data.row_mut(i).scale_mut(1.0 / norm);
        }
        Ok(Self {
            data,
            normalized: true,
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    /// Squared Euclidean distance between rows `i` and `j`.
    pub fn sq_dist(&self, i: usize, j: usize) -> f64 {
        (self.data.row(i) - self.data.row(j)).norm_squared()
    }
}

fn check_finite(data: &DMatrix<f64>) -> Result<()> {
    for i in 0..data.nrows() {
        for j in 0..data.ncols() {
            if !data[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

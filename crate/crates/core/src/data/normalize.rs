use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::DataError;

/// Per-column min-max scaling fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Column-wise minimum and maximum. `names` is only used for error messages.
pub fn minmax_fit(features: ArrayView2<'_, f64>, names: &[String]) -> Result<NormalizationParams, DataError> {
    if features.nrows() < 2 {
        return Err(DataError::InsufficientRows {
            rows: features.nrows(),
            needed: 2,
        });
    }
    let mut min = Vec::with_capacity(features.ncols());
    let mut max = Vec::with_capacity(features.ncols());
    for (j, col) in features.axis_iter(Axis(1)).enumerate() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
            return Err(DataError::ConstantColumn {
                column: j,
                name: names.get(j).cloned().unwrap_or_else(|| format!("f{j:02}")),
            });
        }
        min.push(lo);
        max.push(hi);
    }
    Ok(NormalizationParams { min, max })
}

impl NormalizationParams {
    pub fn width(&self) -> usize {
        self.min.len()
    }

    fn check_width(&self, found: usize) -> Result<(), DataError> {
        if found != self.width() {
            return Err(DataError::DimensionMismatch {
                expected: self.width(),
                found,
            });
        }
        Ok(())
    }

    /// `(x - min) / (max - min)`; values outside the fitted range are kept.
    pub fn apply(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>, DataError> {
        self.check_width(features.ncols())?;
        let mut out = features.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.min[j]) / (self.max[j] - self.min[j]);
            }
        }
        Ok(out)
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>, DataError> {
        self.check_width(row.len())?;
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, v)| (v - self.min[j]) / (self.max[j] - self.min[j]))
            .collect())
    }

    pub fn invert(&self, scaled: ArrayView2<'_, f64>) -> Result<Array2<f64>, DataError> {
        self.check_width(scaled.ncols())?;
        let mut out = scaled.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = *v * (self.max[j] - self.min[j]) + self.min[j];
            }
        }
        Ok(out)
    }

    /// Parameters restricted to the given columns, in order.
    pub fn select(&self, columns: &[usize]) -> Self {
        Self {
            min: columns.iter().map(|&c| self.min[c]).collect(),
            max: columns.iter().map(|&c| self.max[c]).collect(),
        }
    }
}

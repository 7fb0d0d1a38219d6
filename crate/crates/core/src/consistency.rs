//! Cronbach's alpha and average inter-item correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AttributeMatrix;
use crate::linalg::{correlation, standardize};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    /// Alpha on raw attribute scores.
    pub alpha: f64,
    /// Alpha on z-scored items, `k r̄ / (1 + (k − 1) r̄)`.
    pub standardized_alpha: f64,
    pub k: usize,
    pub n: usize,
    pub item_variances: Vec<f64>,
    pub total_variance: f64,
    pub avg_inter_item_r: f64,
    pub variance_denominator: String,
}

/// `α = k/(k−1) · (1 − Σσᵢ² / σ_T²)` with `σ_T²` the variance of row sums;
/// every variance uses `n − 1`.
pub fn cronbach_alpha(matrix: &AttributeMatrix) -> Result<AlphaReport> {
    let k = matrix.p();
    if k < 2 {
        return Err(Error::TooFewAttributes(k));
    }
    let (alpha, item_variances, total_variance) = raw_alpha(&matrix.values)?;

    let r = correlation(&standardize(matrix)?).values;
    let mut sum = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            sum += r[(i, j)];
        }
    }
    let avg_r = sum / (k * (k - 1) / 2) as f64;
    let kf = k as f64;
    Ok(AlphaReport {
        alpha,
        standardized_alpha: kf * avg_r / (1.0 + (kf - 1.0) * avg_r),
        k,
        n: matrix.n(),
        item_variances,
        total_variance,
        avg_inter_item_r: avg_r,
        variance_denominator: "n-1".into(),
    })
}

/// Alpha computed straight from item and total-score variances.
pub fn raw_alpha(values: &Matrix) -> Result<(f64, Vec<f64>, f64)> {
    let (n, k) = (values.rows(), values.cols());
    if k < 2 {
        return Err(Error::TooFewAttributes(k));
    }
    if n < 2 {
        return Err(Error::TooFewRows { n, p: k });
    }
    let item_variances: Vec<f64> = (0..k).map(|j| crate::stats::variance(&values.column(j), 1)).collect();
    let totals: Vec<f64> = values.row_iter().map(|r| r.iter().sum()).collect();
    let total_variance = crate::stats::variance(&totals, 1);
    if total_variance <= 0.0 {
        return Err(Error::ConstantColumn("total score".into()));
    }
    let kf = k as f64;
    let alpha = kf / (kf - 1.0) * (1.0 - item_variances.iter().sum::<f64>() / total_variance);
    Ok((alpha, item_variances, total_variance))
}

//! PCA on the attribute correlation matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AttributeMatrix;
use crate::linalg::{correlation, standardize, symmetric_eigen, CorrelationMatrix, EigenSystem, Scaler};
use crate::matrix::Matrix;

/// Fitted PCA. Loadings are the eigenvectors with the sign of each column
/// fixed so that its largest-magnitude entry is positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub attribute_names: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub variance_shares: Vec<f64>,
    /// `p × p`, column `k` is component `k`.
    pub loadings: Matrix,
    pub scaler: Scaler,
    pub correlation: CorrelationMatrix,
    pub sweeps: usize,
}

impl PcaModel {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn loading(&self, component: usize) -> Vec<f64> {
        self.loadings.column(component)
    }

    pub fn eigen(&self) -> EigenSystem {
        EigenSystem {
            values: self.eigenvalues.clone(),
            vectors: self.loadings.clone(),
            sweeps: self.sweeps,
        }
    }

    pub fn cumulative_shares(&self) -> Vec<f64> {
        self.variance_shares
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s;
                Some(*acc)
            })
            .collect()
    }
}

/// Player scores on every component.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub values: Matrix,
    pub labels: Vec<String>,
}

pub fn component_label(k: usize) -> String {
    format!("PC{}", k + 1)
}

/// standardize → correlation → eigen → sign fix.
pub fn pca_fit(matrix: &AttributeMatrix) -> Result<PcaModel> {
    let std = standardize(matrix)?;
    let corr = correlation(&std);
    let eigen = symmetric_eigen(&corr.values)?;
    let mut loadings = eigen.vectors;
    fix_signs(&mut loadings);
    let total: f64 = eigen.values.iter().sum();
    let variance_shares = eigen.values.iter().map(|l| l / total).collect();
    Ok(PcaModel {
        attribute_names: matrix.attribute_names.clone(),
        eigenvalues: eigen.values,
        variance_shares,
        loadings,
        scaler: std.scaler,
        correlation: corr,
        sweeps: eigen.sweeps,
    })
}

/// Flips each column so the entry of largest absolute value (first one on
/// ties) is positive.
pub fn fix_signs(vectors: &mut Matrix) {
    let (p, m) = (vectors.rows(), vectors.cols());
    for k in 0..m {
        let mut best = 0;
        for i in 1..p {
            if vectors[(i, k)].abs() > vectors[(best, k)].abs() {
                best = i;
            }
        }
        if vectors[(best, k)] < 0.0 {
            for i in 0..p {
                vectors[(i, k)] = -vectors[(i, k)];
            }
        }
    }
}

/// Projects rows onto the loadings after standardizing with the model's own
/// scaler; valid for held-out rows.
pub fn pca_scores(model: &PcaModel, matrix: &AttributeMatrix) -> Result<ScoreMatrix> {
    if matrix.attribute_names != model.attribute_names {
        return Err(Error::AttributeMismatch);
    }
    let z = model.scaler.transform(&matrix.values)?;
    Ok(ScoreMatrix {
        values: z.matmul(&model.loadings),
        labels: (0..model.p()).map(component_label).collect(),
    })
}

/// Scores on a single component.
pub fn component_scores(model: &PcaModel, values: &Matrix, component: usize) -> Vec<f64> {
    let v = model.loading(component);
    values
        .row_iter()
        .map(|r| {
            model
                .scaler
                .transform_row(r)
                .iter()
                .zip(&v)
                .map(|(a, b)| a * b)
                .sum()
        })
        .collect()
}

/// Attributes sorted by `|loading|` descending, ascending attribute index on
/// ties. Loadings keep their sign.
pub fn top_loadings(model: &PcaModel, component: usize, count: usize) -> Result<Vec<(String, f64)>> {
    if component >= model.p() {
        return Err(Error::invalid(format!(
            "component {component} out of range for p = {}",
            model.p()
        )));
    }
    let v = model.loading(component);
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));
    Ok(idx
        .into_iter()
        .take(count)
        .map(|i| (model.attribute_names[i].clone(), v[i]))
        .collect())
}

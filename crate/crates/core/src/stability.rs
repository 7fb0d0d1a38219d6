//! Bootstrap stability of the leading principal component.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AttributeMatrix;
use crate::matrix::{dot, norm};
use crate::pca::{pca_fit, PcaModel};
use crate::{seed, stats};

const MAX_ATTEMPTS: u64 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub iterations: usize,
    pub seed: u64,
    pub baseline_share: f64,
    pub pc1_share_mean: f64,
    pub pc1_share_ci: (f64, f64),
    pub pc1_shares: Vec<f64>,
    pub cosine_mean: f64,
    pub cosines: Vec<f64>,
    /// Resamples redrawn because a column came out constant.
    pub retries: usize,
}

/// `|a·b| / (‖a‖‖b‖)`: axis alignment, blind to eigenvector sign.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b).abs() / (na * nb)).min(1.0))
}

pub fn bootstrap_pca(matrix: &AttributeMatrix, iterations: usize, seed: u64) -> Result<BootstrapReport> {
    let baseline = pca_fit(matrix)?;
    bootstrap_against(matrix, &baseline, iterations, seed)
}

/// Resamples rows with replacement, refits, and records PC1 share and the
/// cosine against `baseline`'s PC1. The interval is the nearest-rank
/// (2.5%, 97.5%) percentile pair.
pub fn bootstrap_against(
    matrix: &AttributeMatrix,
    baseline: &PcaModel,
    iterations: usize,
    seed: u64,
) -> Result<BootstrapReport> {
    if iterations < 100 {
        return Err(Error::invalid(format!(
            "bootstrap needs at least 100 iterations, got {iterations}"
        )));
    }
    let base_pc1 = baseline.loading(0);
    let n = matrix.n();

    let draws: Vec<(f64, f64, usize)> = (0..iterations)
        .into_par_iter()
        .map(|it| {
            let it_seed = seed::derive(seed, it as u64);
            let mut last_err = None;
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = seed::rng_for(it_seed, attempt);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                match pca_fit(&matrix.select_rows(&idx)) {
                    Ok(model) => {
                        let cos = cosine_similarity(&model.loading(0), &base_pc1)?;
                        return Ok((model.variance_shares[0], cos, attempt as usize));
                    }
                    Err(e @ Error::ConstantColumn(_)) => last_err = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last_err.expect("at least one attempt"))
        })
        .collect::<Result<_>>()?;

    let pc1_shares: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let cosines: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let retries = draws.iter().map(|d| d.2).sum();
    let sorted = stats::sorted(&pc1_shares);
    Ok(BootstrapReport {
        iterations,
        seed,
        baseline_share: baseline.variance_shares[0],
        pc1_share_mean: stats::mean(&pc1_shares),
        pc1_share_ci: (
            stats::nearest_rank(&sorted, 0.025),
            stats::nearest_rank(&sorted, 0.975),
        ),
        pc1_shares,
        cosine_mean: stats::mean(&cosines),
        cosines,
        retries,
    })
}

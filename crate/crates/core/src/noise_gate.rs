//! Horn's parallel analysis.
//!
//! The observed correlation spectrum is compared rank by rank against the
//! percentile of spectra from standardized `n × p` Gaussian matrices. Each
//! null iteration owns a seed derived from `(seed, iteration)`; spectra are
//! merged by iteration index, so results do not depend on the worker count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AttributeMatrix;
use crate::linalg::{correlation, standardize, standardize_values, symmetric_eigen};
use crate::matrix::Matrix;
use crate::{seed, stats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionRule {
    /// Stop at the first rank that fails.
    ContiguousPrefix,
    /// Count every rank that exceeds its threshold.
    CountAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelConfig {
    pub iterations: usize,
    pub percentile: f64,
    pub seed: u64,
    pub rule: RetentionRule,
}

impl Default for ParallelConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            percentile: 0.95,
            seed: 0,
            rule: RetentionRule::ContiguousPrefix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelResult {
    pub observed: Vec<f64>,
    pub null_p95: Vec<f64>,
    pub retained: usize,
    pub iterations: usize,
    pub percentile: f64,
    pub seed: u64,
    pub rule: RetentionRule,
}

impl ParallelResult {
    pub fn exceeds(&self, k: usize) -> bool {
        self.observed[k] > self.null_p95[k]
    }
}

pub fn parallel_analysis(matrix: &AttributeMatrix, config: &ParallelConfig) -> Result<ParallelResult> {
    let observed = symmetric_eigen(&correlation(&standardize(matrix)?).values)?.values;
    parallel_against(observed, matrix.n(), config)
}

/// Runs the null simulation for an already-computed observed spectrum.
pub fn parallel_against(observed: Vec<f64>, n: usize, config: &ParallelConfig) -> Result<ParallelResult> {
    if config.iterations < 100 {
        return Err(Error::invalid(format!(
            "parallel analysis needs at least 100 iterations, got {}",
            config.iterations
        )));
    }
    if !(config.percentile > 0.0 && config.percentile < 1.0) {
        return Err(Error::invalid("percentile must lie in (0, 1)"));
    }
    let p = observed.len();
    let spectra = null_spectra(n, p, config.iterations, config.seed)?;
    let null_p95: Vec<f64> = (0..p)
        .map(|k| {
            let at_rank: Vec<f64> = spectra.iter().map(|s| s[k]).collect();
            stats::nearest_rank(&stats::sorted(&at_rank), config.percentile)
        })
        .collect();
    let retained = retained_count(&observed, &null_p95, config.rule);
    Ok(ParallelResult {
        observed,
        null_p95,
        retained,
        iterations: config.iterations,
        percentile: config.percentile,
        seed: config.seed,
        rule: config.rule,
    })
}

/// Strict `observed > threshold` per rank, combined by `rule`.
pub fn retained_count(observed: &[f64], thresholds: &[f64], rule: RetentionRule) -> usize {
    let hits = observed.iter().zip(thresholds).map(|(o, t)| o > t);
    match rule {
        RetentionRule::ContiguousPrefix => hits.take_while(|&h| h).count(),
        RetentionRule::CountAll => hits.filter(|&h| h).count(),
    }
}

/// Descending correlation spectra of `iterations` standardized Gaussian
/// `n × p` matrices, in iteration order.
pub fn null_spectra(n: usize, p: usize, iterations: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let names: Vec<String> = (0..p).map(|j| format!("noise{j}")).collect();
    (0..iterations)
        .into_par_iter()
        .map(|it| {
            let mut rng = seed::rng_for(seed, it as u64);
            let data: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
            let z = standardize_values(&Matrix::from_vec(n, p, data), &names)?;
            Ok(symmetric_eigen(&correlation(&z).values)?.values)
        })
        .collect()
}

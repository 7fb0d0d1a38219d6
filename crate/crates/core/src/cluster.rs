//! K-means on residual component scores, silhouette, adjusted Rand index,
//! bootstrap stability and per-cluster profiles.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AttributeMatrix;
use crate::linalg::{standardize_values, Scaler};
use crate::matrix::Matrix;
use crate::pca::{component_label, pca_scores, PcaModel, ScoreMatrix};
use crate::{seed, stats};

pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Columns `from..=to` (1-based component numbers) of the PCA scores, in raw
/// score units.
pub fn residual_scores(model: &PcaModel, matrix: &AttributeMatrix, from: usize, to: usize) -> Result<ScoreMatrix> {
    if from < 1 || from > to || to > model.p() {
        return Err(Error::invalid(format!(
            "component range {from}..={to} invalid for p = {}",
            model.p()
        )));
    }
    let all = pca_scores(model, matrix)?;
    let idx: Vec<usize> = (from - 1..to).collect();
    Ok(ScoreMatrix {
        values: all.values.select_cols(&idx),
        labels: idx.into_iter().map(component_label).collect(),
    })
}

/// Rescales every score column to unit variance.
pub fn standardized_scores(scores: &ScoreMatrix) -> Result<ScoreMatrix> {
    Ok(ScoreMatrix {
        values: standardize_values(&scores.values, &scores.labels)?.values,
        labels: scores.labels.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub assignments: Vec<usize>,
    /// `k × d`.
    pub centroids: Matrix,
    pub inertia: f64,
    pub silhouette: Option<f64>,
    pub seed: u64,
    /// Inertia after each Lloyd iteration of the winning restart.
    pub inertia_trace: Vec<f64>,
    /// Final inertia of every restart, in restart order.
    pub restart_inertias: Vec<f64>,
}

impl ClusterResult {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }

    /// Renames clusters so that old cluster `order[i]` becomes cluster `i`.
    pub fn relabel(&self, order: &[usize]) -> Result<ClusterResult> {
        let mut sorted = order.to_vec();
        sorted.sort_unstable();
        if sorted != (0..self.k).collect::<Vec<_>>() {
            return Err(Error::invalid("relabel order must be a permutation of 0..k"));
        }
        let mut new_of = vec![0; self.k];
        for (new, &old) in order.iter().enumerate() {
            new_of[old] = new;
        }
        Ok(ClusterResult {
            assignments: self.assignments.iter().map(|&a| new_of[a]).collect(),
            centroids: self.centroids.select_rows(order),
            ..self.clone()
        })
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.row_iter().enumerate() {
        let d = sq_dist(row, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Nearest-centroid labels for every row of `x`.
pub fn assign(x: &Matrix, centroids: &Matrix) -> Vec<usize> {
    x.row_iter().map(|r| nearest(r, centroids).0).collect()
}

fn inertia_of(x: &Matrix, centroids: &Matrix, labels: &[usize]) -> f64 {
    x.row_iter()
        .zip(labels)
        .map(|(r, &l)| sq_dist(r, centroids.row(l)))
        .sum()
}

/// Distance-weighted (k-means++) seeding.
fn seed_centroids(x: &Matrix, k: usize, rng: &mut impl Rng) -> Matrix {
    let n = x.rows();
    let mut centroids = Matrix::zeros(k, x.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(x.row(first));
    let mut d2: Vec<f64> = x.row_iter().map(|r| sq_dist(r, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).copy_from_slice(x.row(pick));
        for (i, r) in x.row_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, centroids.row(c)));
        }
    }
    centroids
}

fn update_centroids(x: &Matrix, labels: &[usize], centroids: &mut Matrix) -> Vec<usize> {
    let (k, d) = (centroids.rows(), centroids.cols());
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (r, &l) in x.row_iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(r) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s / counts[c] as f64;
            }
        }
    }
    counts
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(x: &Matrix, labels: &mut [usize], centroids: &mut Matrix, counts: &mut [usize]) {
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let mut far = None;
        let mut far_d = -1.0;
        for (i, r) in x.row_iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(r, centroids.row(labels[i]));
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { break };
        counts[labels[i]] -= 1;
        labels[i] = empty;
        counts[empty] = 1;
        centroids.row_mut(empty).copy_from_slice(x.row(i));
    }
    update_centroids(x, labels, centroids);
}

struct Run {
    labels: Vec<usize>,
    centroids: Matrix,
    inertia: f64,
    trace: Vec<f64>,
}

fn lloyd(x: &Matrix, k: usize, seed: u64) -> Run {
    let mut rng = seed::rng(seed);
    let mut centroids = seed_centroids(x, k, &mut rng);
    let mut labels = assign(x, &centroids);
    let mut trace = Vec::new();
    for iteration in 0..MAX_LLOYD_ITERATIONS {
        let mut counts = update_centroids(x, &labels, &mut centroids);
        if counts.contains(&0) {
            repair_empty(x, &mut labels, &mut centroids, &mut counts);
        }
        trace.push(inertia_of(x, &centroids, &labels));
        let next = assign(x, &centroids);
        // at the cap, keep the repaired labels rather than an unrepaired assignment
        if next == labels || iteration + 1 == MAX_LLOYD_ITERATIONS {
            break;
        }
        labels = next;
    }
    let inertia = inertia_of(x, &centroids, &labels);
    Run {
        labels,
        centroids,
        inertia,
        trace,
    }
}

/// Best-of-`restarts` k-means; restart `r` seeds from `(seed, r)`.
pub fn kmeans(scores: &Matrix, k: usize, restarts: usize, seed: u64) -> Result<ClusterResult> {
    let n = scores.rows();
    if k < 2 {
        return Err(Error::invalid(format!("k-means needs k >= 2, got {k}")));
    }
    if n <= k {
        return Err(Error::invalid(format!("k-means needs n > k, got n = {n}, k = {k}")));
    }
    if restarts == 0 {
        return Err(Error::invalid("at least one restart required"));
    }
    let runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(scores, k, seed::derive(seed, r as u64)))
        .collect();
    let restart_inertias: Vec<f64> = runs.iter().map(|r| r.inertia).collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.inertia < runs[best].inertia {
            best = i;
        }
    }
    let run = runs.into_iter().nth(best).expect("restarts > 0");
    Ok(ClusterResult {
        k,
        assignments: run.labels,
        centroids: run.centroids,
        inertia: run.inertia,
        silhouette: None,
        seed,
        inertia_trace: run.trace,
        restart_inertias,
    })
}

/// Mean silhouette with Euclidean distance. Points in singleton clusters
/// contribute 0.
pub fn silhouette(scores: &Matrix, labels: &[usize], k: usize) -> Result<f64> {
    let n = scores.rows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if k < 2 {
        return Err(Error::invalid("silhouette needs k >= 2"));
    }
    let mut sizes = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(Error::invalid(format!("label {l} out of range for k = {k}")));
        }
        sizes[l] += 1;
    }
    let per_point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if sizes[own] < 2 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            let ri = scores.row(i);
            for (j, rj) in scores.row_iter().enumerate() {
                if j != i {
                    sums[labels[j]] += sq_dist(ri, rj).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            if !b.is_finite() {
                return 0.0;
            }
            let m = a.max(b);
            if m > 0.0 {
                (b - a) / m
            } else {
                0.0
            }
        })
        .collect();
    Ok(per_point.iter().sum::<f64>() / n as f64)
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Pair-counting ARI with the expected-index correction. Two single-cluster
/// labelings of the same points agree perfectly (1.0).
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if max_index == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max_index - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AriReport {
    pub resamples: usize,
    pub seed: u64,
    pub ari_mean: f64,
    pub ari_sd: f64,
    pub values: Vec<f64>,
}

/// Per resample: draw rows with replacement, run k-means, label the full
/// sample by nearest resample centroid, and compare with `baseline`.
pub fn bootstrap_ari(
    scores: &Matrix,
    baseline: &ClusterResult,
    resamples: usize,
    restarts: usize,
    seed: u64,
) -> Result<AriReport> {
    if resamples < 10 {
        return Err(Error::invalid(format!("need at least 10 resamples, got {resamples}")));
    }
    let n = scores.rows();
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let r_seed = seed::derive(seed, r as u64);
            let mut rng = seed::rng(r_seed);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let fit = kmeans(&scores.select_rows(&idx), baseline.k, restarts, seed::derive(r_seed, 1))?;
            adjusted_rand_index(&baseline.assignments, &assign(scores, &fit.centroids))
        })
        .collect::<Result<_>>()?;
    Ok(AriReport {
        resamples,
        seed,
        ari_mean: stats::mean(&values),
        ari_sd: if values.len() > 1 { stats::sd(&values, 1) } else { 0.0 },
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster: usize,
    pub size: usize,
    pub overall_mean: f64,
    /// Sample (`n − 1`) sd; 0 for a singleton.
    pub overall_sd: f64,
    /// Mean z-score of each attribute, z-scores taken over the full sample.
    pub attribute_means: Vec<f64>,
}

pub fn cluster_profiles(labels: &[usize], k: usize, matrix: &AttributeMatrix) -> Result<Vec<ClusterProfile>> {
    if labels.len() != matrix.n() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n(),
            got: labels.len(),
        });
    }
    let scaler = Scaler::fit(&matrix.values, &matrix.attribute_names)?;
    let z = scaler.transform(&matrix.values)?;
    (0..k)
        .map(|c| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if rows.is_empty() {
                return Err(Error::invalid(format!("cluster {c} is empty")));
            }
            let y: Vec<f64> = rows.iter().map(|&i| matrix.overall[i]).collect();
            let zc = z.select_rows(&rows);
            Ok(ClusterProfile {
                cluster: c,
                size: rows.len(),
                overall_mean: stats::mean(&y),
                overall_sd: if y.len() > 1 { stats::sd(&y, 1) } else { 0.0 },
                attribute_means: (0..matrix.p()).map(|j| stats::mean(&zc.column(j))).collect(),
            })
        })
        .collect()
}

//! Cross-validated prediction of the overall rating: a PC1-only linear model
//! against ridge regression on every attribute.
//!
//! Standardization, PCA and lambda selection are all refit inside each
//! training fold; held-out rows only ever see the training fold's scaler.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AttributeMatrix;
use crate::linalg::{solve_spd, Scaler};
use crate::matrix::{dot, Matrix};
use crate::pca::{component_scores, pca_fit};
use crate::{seed, stats};

/// `{1e-3, …, 1e4}`, 15 log-spaced points.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(-3.0, 4.0, 15)
}

pub fn log_grid(lo_exp: f64, hi_exp: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![10f64.powf(lo_exp)];
    }
    (0..points)
        .map(|i| 10f64.powf(lo_exp + (hi_exp - lo_exp) * i as f64 / (points - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of_row: Vec<usize>,
    pub k: usize,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len()).filter(|&i| self.fold_of_row[i] != fold).collect()
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_row.len()).filter(|&i| self.fold_of_row[i] == fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of_row {
            s[f] += 1;
        }
        s
    }
}

/// Seeded shuffle of `0..n`, cut into `k` contiguous blocks whose sizes differ
/// by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!("cannot split {n} rows into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed));
    let (base, extra) = (n / k, n % k);
    let mut fold_of_row = vec![0; n];
    let mut pos = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        for &row in &order[pos..pos + size] {
            fold_of_row[row] = f;
        }
        pos += size;
    }
    Ok(FoldAssignment { fold_of_row, k, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// Present when the model standardizes raw inputs itself.
    pub scaler: Option<Scaler>,
}

impl RidgeModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.scaler {
            Some(s) => self.intercept + dot(&s.transform_row(row), &self.coefficients),
            None => self.intercept + dot(row, &self.coefficients),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.row_iter().map(|r| self.predict_row(r)).collect()
    }
}

/// Sufficient statistics of a centred least-squares problem; lets one fold
/// solve for a whole lambda grid with a single pass over the rows.
struct CenteredSystem {
    gram: Matrix,
    xty: Vec<f64>,
    x_mean: Vec<f64>,
    y_mean: f64,
}

impl CenteredSystem {
    fn new(x: &Matrix, y: &[f64]) -> Self {
        let (n, p) = (x.rows(), x.cols());
        let x_mean: Vec<f64> = (0..p).map(|j| stats::mean(&x.column(j))).collect();
        let y_mean = stats::mean(y);
        let xc = Matrix::from_fn(n, p, |i, j| x[(i, j)] - x_mean[j]);
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let gram = xc.gram();
        let mut xty = vec![0.0; p];
        for (r, yi) in xc.row_iter().zip(&yc) {
            for (acc, v) in xty.iter_mut().zip(r) {
                *acc += v * yi;
            }
        }
        Self {
            gram,
            xty,
            x_mean,
            y_mean,
        }
    }

    fn solve(&self, lambda: f64) -> Result<RidgeModel> {
        let mut a = self.gram.clone();
        for i in 0..a.rows() {
            a[(i, i)] += lambda;
        }
        let beta = solve_spd(&a, &self.xty)?;
        Ok(RidgeModel {
            intercept: self.y_mean - dot(&self.x_mean, &beta),
            coefficients: beta,
            lambda,
            scaler: None,
        })
    }
}

/// Solves `(XcᵀXc + λI) β = Xcᵀ(y − ȳ)` on column-centred `X`; the intercept is
/// unpenalised (`ȳ` when `X` is already centred).
pub fn ridge_fit(x: &Matrix, y: &[f64], lambda: f64) -> Result<RidgeModel> {
    check_xy(x, y)?;
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    CenteredSystem::new(x, y).solve(lambda)
}

/// Fits a scaler on `x`, then ridge on the z-scores.
pub fn ridge_fit_standardized(x: &Matrix, y: &[f64], lambda: f64, names: &[String]) -> Result<RidgeModel> {
    let scaler = Scaler::fit(x, names)?;
    let mut model = ridge_fit(&scaler.transform(x)?, y, lambda)?;
    model.scaler = Some(scaler);
    Ok(model)
}

fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("empty design"));
    }
    Ok(())
}

/// Which mean anchors the R² denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum R2Reference {
    /// The evaluation fold's own mean.
    EvaluationMean,
    /// The training fold's mean.
    TrainingMean,
}

/// `1 − Σ(y−ŷ)² / Σ(y−ȳ)²` with `ȳ` the mean of `y`.
pub fn r_squared(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    r_squared_about(y, yhat, stats::mean(y))
}

pub fn r_squared_about(y: &[f64], yhat: &[f64], reference: f64) -> Result<f64> {
    check_pair(y, yhat)?;
    let ss_tot: f64 = y.iter().map(|v| (v - reference) * (v - reference)).sum();
    if ss_tot <= 0.0 || y.iter().all(|v| *v == y[0]) {
        return Err(Error::ConstantTarget);
    }
    let ss_res: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check_pair(y, yhat)?;
    let mse = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64;
    Ok(mse.sqrt())
}

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            got: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::invalid("empty vectors"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub model_name: String,
    /// True for flexible benchmarks that are not structural models.
    pub benchmark: bool,
    pub per_fold_r2: Vec<f64>,
    pub per_fold_rmse: Vec<f64>,
    pub mean_r2: f64,
    pub mean_rmse: f64,
    /// Ridge only: lambda picked by inner CV in each outer fold.
    pub per_fold_lambda: Option<Vec<f64>>,
    /// Ridge only: the most frequently chosen lambda (smallest on ties).
    pub lambda_chosen: Option<f64>,
    pub observed: Vec<f64>,
    /// Out-of-fold predictions aligned with `observed`.
    pub predictions: Vec<f64>,
}

impl PredictionReport {
    pub(crate) fn from_folds(
        model_name: &str,
        benchmark: bool,
        observed: &[f64],
        folds: &FoldAssignment,
        per_fold: Vec<(Vec<f64>, f64, f64)>,
    ) -> Self {
        let mut predictions = vec![f64::NAN; observed.len()];
        let mut per_fold_r2 = Vec::with_capacity(folds.k);
        let mut per_fold_rmse = Vec::with_capacity(folds.k);
        for (f, (preds, r2, e)) in per_fold.into_iter().enumerate() {
            for (row, v) in folds.test_rows(f).into_iter().zip(preds) {
                predictions[row] = v;
            }
            per_fold_r2.push(r2);
            per_fold_rmse.push(e);
        }
        Self {
            model_name: model_name.to_string(),
            benchmark,
            mean_r2: stats::mean(&per_fold_r2),
            mean_rmse: stats::mean(&per_fold_rmse),
            per_fold_r2,
            per_fold_rmse,
            per_fold_lambda: None,
            lambda_chosen: None,
            observed: observed.to_vec(),
            predictions,
        }
    }
}

pub(crate) fn score_fold(y: &[f64], yhat: &[f64], train_mean: f64, reference: R2Reference) -> Result<(f64, f64)> {
    let r2 = match reference {
        R2Reference::EvaluationMean => r_squared(y, yhat)?,
        R2Reference::TrainingMean => r_squared_about(y, yhat, train_mean)?,
    };
    Ok((r2, rmse(y, yhat)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeCvConfig {
    pub lambda_grid: Vec<f64>,
    pub inner_folds: usize,
    pub r2_reference: R2Reference,
}

impl Default for RidgeCvConfig {
    fn default() -> Self {
        Self {
            lambda_grid: default_lambda_grid(),
            inner_folds: 5,
            r2_reference: R2Reference::EvaluationMean,
        }
    }
}

/// Mean inner-CV RMSE for every lambda in `grid`, fitting the scaler on each
/// inner training split.
pub fn lambda_path(x: &Matrix, y: &[f64], names: &[String], grid: &[f64], folds: usize, seed: u64) -> Result<Vec<f64>> {
    let inner = kfold_split(y.len(), folds, seed)?;
    let mut totals = vec![0.0; grid.len()];
    for f in 0..folds {
        let (tr, te) = (inner.train_rows(f), inner.test_rows(f));
        let scaler = Scaler::fit(&x.select_rows(&tr), names)?;
        let xtr = scaler.transform(&x.select_rows(&tr))?;
        let xte = scaler.transform(&x.select_rows(&te))?;
        let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
        let yte: Vec<f64> = te.iter().map(|&i| y[i]).collect();
        let system = CenteredSystem::new(&xtr, &ytr);
        for (total, &lambda) in totals.iter_mut().zip(grid) {
            let model = system.solve(lambda)?;
            *total += rmse(&yte, &model.predict(&xte))?;
        }
    }
    Ok(totals.into_iter().map(|t| t / folds as f64).collect())
}

/// Inner-CV lambda selection plus refit on one outer training fold.
pub fn fit_ridge_fold(
    matrix: &AttributeMatrix,
    folds: &FoldAssignment,
    fold: usize,
    config: &RidgeCvConfig,
) -> Result<RidgeModel> {
    if config.lambda_grid.is_empty() {
        return Err(Error::invalid("lambda grid is empty"));
    }
    let train = folds.train_rows(fold);
    let x = matrix.values.select_rows(&train);
    let y: Vec<f64> = train.iter().map(|&i| matrix.overall[i]).collect();
    let path = lambda_path(
        &x,
        &y,
        &matrix.attribute_names,
        &config.lambda_grid,
        config.inner_folds,
        seed::derive(folds.seed, fold as u64),
    )?;
    let best = argmin(&path);
    ridge_fit_standardized(&x, &y, config.lambda_grid[best], &matrix.attribute_names)
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}

pub fn cross_validate_ridge(
    matrix: &AttributeMatrix,
    folds: &FoldAssignment,
    config: &RidgeCvConfig,
) -> Result<PredictionReport> {
    check_folds(matrix, folds)?;
    let per_fold: Vec<(Vec<f64>, f64, f64, f64)> = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let model = fit_ridge_fold(matrix, folds, f, config)?;
            let test = folds.test_rows(f);
            let yte: Vec<f64> = test.iter().map(|&i| matrix.overall[i]).collect();
            let preds = model.predict(&matrix.values.select_rows(&test));
            let train_mean = stats::mean(&folds.train_rows(f).iter().map(|&i| matrix.overall[i]).collect::<Vec<_>>());
            let (r2, e) = score_fold(&yte, &preds, train_mean, config.r2_reference)?;
            Ok((preds, r2, e, model.lambda))
        })
        .collect::<Result<_>>()?;

    let lambdas: Vec<f64> = per_fold.iter().map(|f| f.3).collect();
    let mut report = PredictionReport::from_folds(
        "ridge_all_attributes",
        false,
        &matrix.overall,
        folds,
        per_fold.into_iter().map(|(p, r, e, _)| (p, r, e)).collect(),
    );
    report.lambda_chosen = Some(modal_lambda(&lambdas));
    report.per_fold_lambda = Some(lambdas);
    Ok(report)
}

fn modal_lambda(lambdas: &[f64]) -> f64 {
    let mut best = lambdas[0];
    let mut best_count = 0;
    for &l in lambdas {
        let c = lambdas.iter().filter(|&&x| x == l).count();
        if c > best_count || (c == best_count && l < best) {
            best = l;
            best_count = c;
        }
    }
    best
}

/// Simple linear regression `y ~ a + b·s`.
pub fn simple_regression(s: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let (ms, my) = (stats::mean(s), stats::mean(y));
    let sxx: f64 = s.iter().map(|v| (v - ms) * (v - ms)).sum();
    if sxx <= 0.0 {
        return Err(Error::Singular);
    }
    let sxy: f64 = s.iter().zip(y).map(|(a, b)| (a - ms) * (b - my)).sum();
    let slope = sxy / sxx;
    Ok((my - slope * ms, slope))
}

/// Per fold: PCA on the training rows, regression of the overall rating on the
/// PC1 score, evaluation on held-out PC1 scores.
pub fn cross_validate_pc1(
    matrix: &AttributeMatrix,
    folds: &FoldAssignment,
    reference: R2Reference,
) -> Result<PredictionReport> {
    check_folds(matrix, folds)?;
    let per_fold = (0..folds.k)
        .into_par_iter()
        .map(|f| {
            let (tr, te) = (folds.train_rows(f), folds.test_rows(f));
            let train = matrix.select_rows(&tr);
            let model = pca_fit(&train)?;
            let s_tr = component_scores(&model, &train.values, 0);
            let (a, b) = simple_regression(&s_tr, &train.overall)?;
            let s_te = component_scores(&model, &matrix.values.select_rows(&te), 0);
            let preds: Vec<f64> = s_te.iter().map(|s| a + b * s).collect();
            let yte: Vec<f64> = te.iter().map(|&i| matrix.overall[i]).collect();
            let (r2, e) = score_fold(&yte, &preds, stats::mean(&train.overall), reference)?;
            Ok((preds, r2, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PredictionReport::from_folds("linear_pc1_only", false, &matrix.overall, folds, per_fold))
}

pub(crate) fn check_folds(matrix: &AttributeMatrix, folds: &FoldAssignment) -> Result<()> {
    if folds.fold_of_row.len() != matrix.n() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n(),
            got: folds.fold_of_row.len(),
        });
    }
    Ok(())
}

//! Bagged CART regression trees with per-split feature subsampling, used as a
//! flexible upper-bound benchmark.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AttributeMatrix;
use crate::matrix::Matrix;
use crate::predict::{check_folds, score_fold, FoldAssignment, PredictionReport, R2Reference};
use crate::{seed, stats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub trees: usize,
    /// Features tried per split; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    /// `None` grows until `min_leaf` or purity stops it.
    pub max_depth: Option<usize>,
    /// Train each tree on a bootstrap sample (otherwise on every row).
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 200,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or_else(|| p.div_ceil(3)).clamp(1, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        feature: usize,
        /// Rows with `x <= threshold` go left.
        threshold: f64,
        /// Reduction in the node's sum of squared errors.
        gain: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    /// Root at index 0.
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, count } => Some((*value, *count)),
            Node::Split { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub n_features: usize,
    pub params: ForestParams,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
    split_at: usize,
}

struct Builder<'a> {
    /// Column-major copy of X.
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    mtry: usize,
    min_leaf: usize,
    max_depth: Option<usize>,
}

impl Builder<'_> {
    fn grow(&self, rows: Vec<usize>, rng: &mut impl Rng) -> RegressionTree {
        let mut nodes = Vec::new();
        // (slot, rows, depth)
        let mut stack = vec![(0usize, rows, 0usize)];
        nodes.push(Node::Leaf { value: 0.0, count: 0 });
        while let Some((slot, rows, depth)) = stack.pop() {
            let ys: Vec<f64> = rows.iter().map(|&i| self.y[i]).collect();
            let value = stats::mean(&ys);
            let leaf = Node::Leaf {
                value,
                count: rows.len(),
            };
            let depth_ok = self.max_depth.is_none_or(|d| depth < d);
            let pure = ys.iter().all(|&v| v == ys[0]);
            if !depth_ok || pure || rows.len() < 2 * self.min_leaf {
                nodes[slot] = leaf;
                continue;
            }
            let Some(best) = self.best_split(&rows, value, rng) else {
                nodes[slot] = leaf;
                continue;
            };
            let mut order = rows;
            let col = &self.cols[best.feature];
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let right_rows = order.split_off(best.split_at);
            let (left, right) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { value: 0.0, count: 0 });
            nodes.push(Node::Leaf { value: 0.0, count: 0 });
            nodes[slot] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                gain: best.gain,
                left,
                right,
            };
            stack.push((right, right_rows, depth + 1));
            stack.push((left, order, depth + 1));
        }
        RegressionTree { nodes }
    }

    /// Tries `mtry` random features; if none of them admits a valid split the
    /// search continues through the remaining features.
    fn best_split(&self, rows: &[usize], node_mean: f64, rng: &mut impl Rng) -> Option<Best> {
        let n = rows.len();
        let centred: Vec<f64> = rows.iter().map(|&i| self.y[i] - node_mean).collect();
        let sse: f64 = centred.iter().map(|v| v * v).sum();
        let total: f64 = centred.iter().sum();
        let mut features: Vec<usize> = (0..self.cols.len()).collect();
        features.shuffle(rng);

        let mut best: Option<Best> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for (tried, &f) in features.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            let col = &self.cols[f];
            pairs.clear();
            pairs.extend(rows.iter().zip(&centred).map(|(&i, &c)| (col[i], c)));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for i in 1..n {
                left_sum += pairs[i - 1].1;
                if i < self.min_leaf || n - i < self.min_leaf || pairs[i - 1].0 == pairs[i].0 {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64
                    - total * total / n as f64;
                if gain > 1e-9 * sse && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let (lo, hi) = (pairs[i - 1].0, pairs[i].0);
                    let mid = 0.5 * (lo + hi);
                    best = Some(Best {
                        feature: f,
                        threshold: if mid < hi { mid } else { lo },
                        gain,
                        split_at: i,
                    });
                }
            }
        }
        best
    }
}

pub fn forest_fit(x: &Matrix, y: &[f64], params: &ForestParams) -> Result<ForestModel> {
    let (n, p) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if params.trees == 0 || params.min_leaf == 0 {
        return Err(Error::invalid("forest needs trees >= 1 and min_leaf >= 1"));
    }
    if n < 2 * params.min_leaf {
        return Err(Error::invalid(format!(
            "forest needs n >= 2 * min_leaf, got n = {n}, min_leaf = {}",
            params.min_leaf
        )));
    }
    let cols: Vec<Vec<f64>> = (0..p).map(|j| x.column(j)).collect();
    let builder = Builder {
        cols: &cols,
        y,
        mtry: params.mtry_for(p),
        min_leaf: params.min_leaf,
        max_depth: params.max_depth,
    };
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng_for(params.seed, t as u64);
            let rows: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.grow(rows, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_features: p,
        params: params.clone(),
    })
}

/// Mean of the per-tree predictions.
pub fn forest_predict(model: &ForestModel, x: &Matrix) -> Result<Vec<f64>> {
    if x.cols() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            got: x.cols(),
        });
    }
    let t = model.trees.len() as f64;
    Ok(x.row_iter()
        .map(|r| model.trees.iter().map(|tree| tree.predict_row(r)).sum::<f64>() / t)
        .collect())
}

/// Same fold protocol as the linear models; tree seeds derive from
/// `(params.seed, fold)`.
pub fn forest_cv(
    matrix: &AttributeMatrix,
    folds: &FoldAssignment,
    params: &ForestParams,
    reference: R2Reference,
) -> Result<PredictionReport> {
    check_folds(matrix, folds)?;
    let mut per_fold = Vec::with_capacity(folds.k);
    for f in 0..folds.k {
        let (tr, te) = (folds.train_rows(f), folds.test_rows(f));
        let ytr: Vec<f64> = tr.iter().map(|&i| matrix.overall[i]).collect();
        let fold_params = ForestParams {
            seed: seed::derive(params.seed, f as u64),
            ..params.clone()
        };
        let model = forest_fit(&matrix.values.select_rows(&tr), &ytr, &fold_params)?;
        let preds = forest_predict(&model, &matrix.values.select_rows(&te))?;
        let yte: Vec<f64> = te.iter().map(|&i| matrix.overall[i]).collect();
        let (r2, e) = score_fold(&yte, &preds, stats::mean(&ytr), reference)?;
        per_fold.push((preds, r2, e));
    }
    Ok(PredictionReport::from_folds("random_forest", true, &matrix.overall, folds, per_fold))
}

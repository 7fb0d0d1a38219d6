//! Config-driven orchestration of every stage, in the fixed order
//! ingest, describe, alpha, pca, parallel, bootstrap, predict, cluster, forest.
//!
//! Stage seeds are `seed::derive_named(master_seed, stage)`, so any stage can
//! be re-run alone with the same numbers. The worker count only sizes the
//! thread pool; results never depend on it.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::cluster::{
    bootstrap_ari, cluster_profiles, kmeans, residual_scores, silhouette, standardized_scores, ClusterResult,
};
use crate::consistency::cronbach_alpha;
use crate::error::{Error, Result};
use crate::forest::{forest_cv, ForestParams};
use crate::ingest::{aggregate_players, describe, filter_complete, load_table, AttributeMatrix, Schema, DEFAULT_ATTRIBUTES};
use crate::noise_gate::{parallel_against, ParallelConfig, RetentionRule};
use crate::pca::{pca_fit, top_loadings, PcaModel};
use crate::predict::{cross_validate_pc1, cross_validate_ridge, default_lambda_grid, kfold_split, R2Reference, RidgeCvConfig};
use crate::report::{render_tables, AuditReport, BootstrapSection, ClusteringSection, Metadata, PcaSection, PredictionSection};
use crate::stability::bootstrap_against;
use crate::{seed, stats};

/// Input to k-means: residual PC scores as projected, or each rescaled to unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreScale {
    Raw,
    Standardized,
}

impl ScoreScale {
    fn as_str(self) -> &'static str {
        match self {
            ScoreScale::Raw => "raw",
            ScoreScale::Standardized => "standardized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub input: String,
    pub out: String,
    pub seed: u64,
    pub workers: usize,

    pub id_column: String,
    pub season_column: String,
    pub rating_column: String,
    pub attributes: Vec<String>,
    pub aggregate: bool,

    pub run_describe: bool,
    pub run_alpha: bool,
    pub run_pca: bool,
    pub run_parallel: bool,
    pub run_bootstrap: bool,
    pub run_predict: bool,
    pub run_cluster: bool,
    pub run_forest: bool,

    pub top_loadings: usize,
    pub parallel_iterations: usize,
    pub parallel_percentile: f64,
    pub parallel_rule: RetentionRule,
    pub bootstrap_iterations: usize,
    pub bootstrap_bins: usize,

    pub folds: usize,
    pub inner_folds: usize,
    pub lambda_grid: Vec<f64>,
    pub r2_reference: R2Reference,

    pub cluster_from: usize,
    pub cluster_to: usize,
    pub cluster_k: usize,
    pub cluster_k_max: usize,
    pub cluster_restarts: usize,
    pub cluster_scores: ScoreScale,
    pub ari_resamples: usize,

    pub forest_trees: usize,
    pub forest_mtry: usize,
    pub forest_min_leaf: usize,
    pub forest_max_depth: usize,
}

impl Default for Config {
    fn default() -> Self {
        let schema = Schema::default();
        Self {
            input: String::new(),
            out: "dimaudit-out".into(),
            seed: 20_240_601,
            workers: 0,
            id_column: schema.id_column,
            season_column: schema.season_column.unwrap_or_default(),
            rating_column: schema.rating_column,
            attributes: DEFAULT_ATTRIBUTES.iter().map(|s| s.to_string()).collect(),
            aggregate: true,
            run_describe: true,
            run_alpha: true,
            run_pca: true,
            run_parallel: true,
            run_bootstrap: true,
            run_predict: true,
            run_cluster: true,
            run_forest: true,
            top_loadings: 10,
            parallel_iterations: 500,
            parallel_percentile: 0.95,
            parallel_rule: RetentionRule::ContiguousPrefix,
            bootstrap_iterations: 1000,
            bootstrap_bins: 30,
            folds: 5,
            inner_folds: 5,
            lambda_grid: default_lambda_grid(),
            r2_reference: R2Reference::EvaluationMean,
            cluster_from: 2,
            cluster_to: 11,
            cluster_k: 2,
            cluster_k_max: 6,
            cluster_restarts: 10,
            cluster_scores: ScoreScale::Raw,
            ari_resamples: 100,
            forest_trees: 200,
            forest_mtry: 0,
            forest_min_leaf: 5,
            forest_max_depth: 0,
        }
    }
}

/// One line of help per config key.
pub const CONFIG_KEYS: &[(&str, &str)] = &[
    ("input", "CSV file to analyse; relative paths resolve against the config file"),
    ("out", "output directory for report.json and the table/figure CSVs"),
    ("seed", "master seed; every stage seed derives from it"),
    ("workers", "thread-pool size, 0 = one per core (never changes results)"),
    ("id_column", "player identifier column"),
    ("season_column", "season column, empty if absent"),
    ("rating_column", "overall rating column"),
    ("attributes", "attribute columns, in analysis order"),
    ("aggregate", "average repeated rows of a player before filtering"),
    ("run_describe", "descriptive statistics (Table I)"),
    ("run_alpha", "Cronbach's alpha (Table II)"),
    ("run_pca", "eigenvalues and PC1 loadings (Tables III, IV)"),
    ("run_parallel", "parallel analysis (Table V)"),
    ("run_bootstrap", "bootstrap stability of PC1"),
    ("run_predict", "PC1-only and ridge cross-validation (Table VI)"),
    ("run_cluster", "k-means on residual components (Table VII)"),
    ("run_forest", "random-forest benchmark"),
    ("top_loadings", "PC1 loadings listed in Table IV"),
    ("parallel_iterations", "null datasets drawn by parallel analysis"),
    ("parallel_percentile", "null-eigenvalue percentile used as threshold"),
    ("parallel_rule", "contiguous_prefix or count_all"),
    ("bootstrap_iterations", "bootstrap resamples of the PCA"),
    ("bootstrap_bins", "bins in the PC1-share histogram"),
    ("folds", "outer cross-validation folds"),
    ("inner_folds", "inner folds used to pick the ridge penalty"),
    ("lambda_grid", "candidate ridge penalties"),
    ("r2_reference", "evaluation_mean or training_mean as R^2 baseline"),
    ("cluster_from", "first residual component clustered (1-based)"),
    ("cluster_to", "last residual component clustered (inclusive)"),
    ("cluster_k", "number of clusters"),
    ("cluster_k_max", "largest K in the silhouette-by-K sweep (from 2)"),
    ("cluster_restarts", "k-means++ restarts, best inertia kept"),
    ("cluster_scores", "raw or standardized component scores"),
    ("ari_resamples", "bootstrap resamples for cluster ARI"),
    ("forest_trees", "trees in the forest"),
    ("forest_mtry", "features tried per split, 0 = ceil(p/3)"),
    ("forest_min_leaf", "minimum rows per leaf"),
    ("forest_max_depth", "maximum depth, 0 = unlimited"),
];

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Every key with its default value and meaning, for `--help`.
    pub fn defaults_help() -> String {
        let table: toml::Table = toml::from_str(&Config::default().to_toml().expect("default config serializes"))
            .expect("default config parses");
        let mut out = String::from("Config keys (TOML, flat) with defaults:\n");
        for (key, doc) in CONFIG_KEYS {
            let value = table.get(*key).map(|v| v.to_string()).unwrap_or_else(|| "\"\"".into());
            out.push_str(&format!("  {key} = {value}\n      {doc}\n"));
        }
        out
    }

    pub fn schema(&self) -> Schema {
        Schema {
            id_column: self.id_column.clone(),
            season_column: (!self.season_column.is_empty()).then(|| self.season_column.clone()),
            rating_column: self.rating_column.clone(),
            attributes: self.attributes.clone(),
        }
    }

    pub fn disable_all_stages(&mut self) {
        self.run_describe = false;
        self.run_alpha = false;
        self.run_pca = false;
        self.run_parallel = false;
        self.run_bootstrap = false;
        self.run_predict = false;
        self.run_cluster = false;
        self.run_forest = false;
    }

    /// Enables only the named stage; `None` if the name is unknown.
    pub fn only_stage(&mut self, stage: &str) -> Option<()> {
        self.disable_all_stages();
        let flag = match stage {
            "describe" => &mut self.run_describe,
            "alpha" => &mut self.run_alpha,
            "pca" => &mut self.run_pca,
            "parallel" => &mut self.run_parallel,
            "bootstrap" => &mut self.run_bootstrap,
            "predict" => &mut self.run_predict,
            "cluster" => &mut self.run_cluster,
            "forest" => &mut self.run_forest,
            _ => return None,
        };
        *flag = true;
        Some(())
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        seed::derive_named(self.seed, stage)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

/// Loads the CSV named by the config and applies aggregation and listwise deletion.
pub fn ingest(config: &Config, input: &Path) -> Result<AttributeMatrix> {
    stage("ingest", (|| {
        let table = load_table(input, &config.schema())?;
        let table = if config.aggregate { aggregate_players(&table) } else { table };
        filter_complete(&table, &config.attributes)
    })())
}

fn metadata(config: &Config, dataset: &str, matrix: &AttributeMatrix) -> Metadata {
    let mut seeds = std::collections::BTreeMap::new();
    if config.run_parallel {
        seeds.insert("parallel".into(), config.stage_seed("parallel"));
    }
    if config.run_bootstrap {
        seeds.insert("bootstrap".into(), config.stage_seed("bootstrap"));
    }
    if config.run_predict || config.run_forest {
        seeds.insert("folds".into(), config.stage_seed("folds"));
    }
    if config.run_cluster {
        seeds.insert("cluster".into(), config.stage_seed("cluster"));
        seeds.insert("ari".into(), config.stage_seed("ari"));
    }
    if config.run_forest {
        seeds.insert("forest".into(), config.stage_seed("forest"));
    }
    let conventions = [
        ("descriptive_sd_denominator", "n-1"),
        ("standardization_sd_denominator", "n"),
        ("alpha_variance_denominator", "n-1"),
        ("percentile_method", "nearest_rank"),
        ("loading_sign", "largest_magnitude_entry_positive"),
        ("cluster_labels", "ascending_mean_overall_rating"),
        ("r2_reference", match config.r2_reference {
            R2Reference::EvaluationMean => "evaluation_mean",
            R2Reference::TrainingMean => "training_mean",
        }),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    Metadata {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        dataset: dataset.into(),
        n: matrix.n(),
        p: matrix.p(),
        attributes: matrix.attribute_names.clone(),
        master_seed: config.seed,
        seeds,
        conventions,
        started_at: now(),
        finished_at: 0,
        failed_stage: None,
    }
}

/// Runs the enabled stages on an already-ingested matrix. On a stage failure
/// the report holds every section finished so far, `failed_stage` is set, and
/// the stage-tagged error is returned alongside.
pub fn run_stages(config: &Config, dataset: &str, matrix: &AttributeMatrix) -> (AuditReport, Option<Error>) {
    let mut report = AuditReport::new(metadata(config, dataset, matrix));
    let err = run_into(config, matrix, &mut report).err();
    if let Some(Error::Stage { stage, .. }) = &err {
        report.metadata.failed_stage = Some(stage.to_string());
    }
    report.metadata.finished_at = now();
    (report, err)
}

fn run_into(config: &Config, matrix: &AttributeMatrix, report: &mut AuditReport) -> Result<()> {
    let mut model: Option<PcaModel> = None;
    let needs_model = config.run_pca || config.run_parallel || config.run_bootstrap || config.run_cluster;

    if config.run_describe {
        report.descriptives = Some(describe(matrix));
    }
    if config.run_alpha {
        report.alpha = Some(stage("alpha", cronbach_alpha(matrix))?);
    }
    if needs_model {
        model = Some(stage("pca", pca_fit(matrix))?);
    }
    if config.run_pca {
        let m = model.as_ref().expect("model fitted");
        report.pca = Some(PcaSection {
            attribute_names: m.attribute_names.clone(),
            eigenvalues: m.eigenvalues.clone(),
            variance_shares: m.variance_shares.clone(),
            cumulative_shares: m.cumulative_shares(),
            loadings: m.loadings.clone(),
            top_pc1_loadings: stage("pca", top_loadings(m, 0, config.top_loadings))?,
            correlation: m.correlation.values.clone(),
        });
    }
    if config.run_parallel {
        let m = model.as_ref().expect("model fitted");
        let cfg = ParallelConfig {
            iterations: config.parallel_iterations,
            percentile: config.parallel_percentile,
            seed: config.stage_seed("parallel"),
            rule: config.parallel_rule,
        };
        report.parallel = Some(stage("parallel", parallel_against(m.eigenvalues.clone(), matrix.n(), &cfg))?);
    }
    if config.run_bootstrap {
        let m = model.as_ref().expect("model fitted");
        let boot = stage(
            "bootstrap",
            bootstrap_against(matrix, m, config.bootstrap_iterations, config.stage_seed("bootstrap")),
        )?;
        let histogram = stats::histogram(&boot.pc1_shares, config.bootstrap_bins.max(1));
        report.bootstrap = Some(BootstrapSection { report: boot, histogram });
    }

    let folds = if config.run_predict || config.run_forest {
        Some(stage("predict", kfold_split(matrix.n(), config.folds, config.stage_seed("folds")))?)
    } else {
        None
    };
    if config.run_predict {
        let folds = folds.as_ref().expect("folds drawn");
        let pc1 = stage("predict", cross_validate_pc1(matrix, folds, config.r2_reference))?;
        let ridge_cfg = RidgeCvConfig {
            lambda_grid: config.lambda_grid.clone(),
            inner_folds: config.inner_folds,
            r2_reference: config.r2_reference,
        };
        let ridge = stage("predict", cross_validate_ridge(matrix, folds, &ridge_cfg))?;
        report.prediction = Some(PredictionSection { pc1, ridge });
    }
    if config.run_cluster {
        let m = model.as_ref().expect("model fitted");
        report.clustering = Some(stage("cluster", clustering(config, m, matrix))?);
    }
    if config.run_forest {
        let folds = folds.as_ref().expect("folds drawn");
        let params = ForestParams {
            trees: config.forest_trees,
            mtry: (config.forest_mtry > 0).then_some(config.forest_mtry),
            min_leaf: config.forest_min_leaf,
            max_depth: (config.forest_max_depth > 0).then_some(config.forest_max_depth),
            bootstrap: true,
            seed: config.stage_seed("forest"),
        };
        report.forest = Some(stage("forest", forest_cv(matrix, folds, &params, config.r2_reference))?);
    }
    Ok(())
}

fn clustering(config: &Config, model: &PcaModel, matrix: &AttributeMatrix) -> Result<ClusteringSection> {
    let scores = residual_scores(model, matrix, config.cluster_from, config.cluster_to)?;
    let scores = match config.cluster_scores {
        ScoreScale::Raw => scores,
        ScoreScale::Standardized => standardized_scores(&scores)?,
    };
    let x = &scores.values;
    let seed = config.stage_seed("cluster");
    let fit = kmeans(x, config.cluster_k, config.cluster_restarts, seed)?;
    let baseline = canonical_order(&fit, matrix)?;
    let sil = silhouette(x, &baseline.assignments, baseline.k)?;

    let mut silhouette_by_k = Vec::new();
    for k in 2..=config.cluster_k_max {
        let s = if k == baseline.k {
            sil
        } else {
            let f = kmeans(x, k, config.cluster_restarts, seed::derive(seed, k as u64))?;
            silhouette(x, &f.assignments, k)?
        };
        silhouette_by_k.push((k, s));
    }

    let ari = bootstrap_ari(
        x,
        &baseline,
        config.ari_resamples,
        config.cluster_restarts,
        config.stage_seed("ari"),
    )?;
    let profiles = cluster_profiles(&baseline.assignments, baseline.k, matrix)?;
    Ok(ClusteringSection {
        components_from: config.cluster_from,
        components_to: config.cluster_to,
        score_scale: config.cluster_scores.as_str().into(),
        k: baseline.k,
        sizes: baseline.sizes(),
        inertia: baseline.inertia,
        silhouette: sil,
        silhouette_by_k,
        ari,
        profiles,
    })
}

/// Orders clusters by ascending mean overall rating (ties by original label)
/// so that reported labels do not depend on k-means internals.
fn canonical_order(fit: &ClusterResult, matrix: &AttributeMatrix) -> Result<ClusterResult> {
    let mut sums = vec![(0.0, 0usize); fit.k];
    for (i, &a) in fit.assignments.iter().enumerate() {
        sums[a].0 += matrix.overall[i];
        sums[a].1 += 1;
    }
    let means: Vec<f64> = sums.iter().map(|(s, c)| s / (*c).max(1) as f64).collect();
    let mut order: Vec<usize> = (0..fit.k).collect();
    order.sort_by(|&a, &b| means[a].total_cmp(&means[b]).then(a.cmp(&b)));
    fit.relabel(&order)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = PathBuf::from(p);
    if path.is_absolute() {
        path
    } else {
        base.join(path)
    }
}

/// Runs the whole configuration: ingest, stages, and output files under
/// `out`. Relative `input` and `out` resolve against `base_dir`. On a stage
/// failure the partial report and its tables are still written.
pub fn run_config(config: &Config, base_dir: &Path) -> Result<AuditReport> {
    if config.input.is_empty() {
        return Err(Error::Config("no input file given".into()));
    }
    let input = resolve(base_dir, &config.input);
    let out = resolve(base_dir, &config.out);
    let body = || -> Result<AuditReport> {
        let matrix = ingest(config, &input)?;
        let (report, err) = run_stages(config, &config.input, &matrix);
        stage("report", report.write(&out))?;
        stage("report", render_tables(&report, &out))?;
        match err {
            Some(e) => Err(e),
            None => Ok(report),
        }
    };
    if config.workers == 0 {
        body()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(body)
    }
}

/// Loads the config file and runs it; paths in the file are relative to it.
pub fn run_pipeline(config_path: &Path) -> Result<AuditReport> {
    let config = Config::load(config_path)?;
    let base = config_path.parent().unwrap_or_else(|| Path::new("."));
    run_config(&config, base)
}

//! Audit report model and per-table / figure-data CSV rendering.
//!
//! `report.json` carries every section that ran. [`render_tables`] turns it
//! into one CSV per table (`table1_…` to `table7_…`) and six figure-data files
//! (`fig1_…` to `fig6_…`). A file is written only when its section is present.
//! Floats are written with Rust's shortest round-trip formatting, so parsing a
//! CSV cell reproduces the report value bit for bit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{AriReport, ClusterProfile};
use crate::consistency::AlphaReport;
use crate::error::{Error, Result};
use crate::ingest::{display_name, write_descriptives, DescriptiveStats};
use crate::matrix::Matrix;
use crate::noise_gate::ParallelResult;
use crate::predict::PredictionReport;
use crate::stability::BootstrapReport;
use crate::stats::Histogram;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

pub const TABLE_FILES: [&str; 7] = [
    "table1_descriptives.csv",
    "table2_consistency.csv",
    "table3_variance_explained.csv",
    "table4_pc1_loadings.csv",
    "table5_parallel_analysis.csv",
    "table6_prediction.csv",
    "table7_clusters.csv",
];

pub const FIGURE_FILES: [&str; 6] = [
    "fig1_scree.csv",
    "fig2_bootstrap_histogram.csv",
    "fig3_correlation_matrix.csv",
    "fig4_holdout_scatter.csv",
    "fig5_silhouette_by_k.csv",
    "fig6_cluster_profiles.csv",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub dataset: String,
    pub n: usize,
    pub p: usize,
    pub attributes: Vec<String>,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    /// Variance denominators and other conventions that affect the numbers.
    pub conventions: BTreeMap<String, String>,
    pub started_at: u64,
    pub finished_at: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSection {
    pub attribute_names: Vec<String>,
    pub eigenvalues: Vec<f64>,
    pub variance_shares: Vec<f64>,
    pub cumulative_shares: Vec<f64>,
    pub loadings: Matrix,
    pub top_pc1_loadings: Vec<(String, f64)>,
    pub correlation: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSection {
    #[serde(flatten)]
    pub report: BootstrapReport,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSection {
    pub pc1: PredictionReport,
    pub ridge: PredictionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringSection {
    pub components_from: usize,
    pub components_to: usize,
    pub score_scale: String,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub inertia: f64,
    pub silhouette: f64,
    pub silhouette_by_k: Vec<(usize, f64)>,
    pub ari: AriReport,
    pub profiles: Vec<ClusterProfile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema_version: u32,
    pub metadata: Metadata,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub descriptives: Option<DescriptiveStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parallel: Option<ParallelResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<PredictionSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub forest: Option<PredictionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering: Option<ClusteringSection>,
}

impl AuditReport {
    pub fn new(metadata: Metadata) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            metadata,
            descriptives: None,
            alpha: None,
            pca: None,
            parallel: None,
            bootstrap: None,
            prediction: None,
            forest: None,
            clustering: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("report serialization: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("report parse: {e}")))
    }

    /// JSON with both timestamps zeroed; equal inputs give equal bytes.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.metadata.started_at = 0;
        copy.metadata.finished_at = 0;
        copy.to_json()
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join(REPORT_FILE);
        std::fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes every table and figure-data file the report supports; returns the
/// paths written.
pub fn render_tables(report: &AuditReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, write: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = out_dir.join(name);
        write(&path)?;
        written.push(path);
        Ok(())
    };

    if let Some(d) = &report.descriptives {
        emit(TABLE_FILES[0], &|path| {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            write_descriptives(d, file)
        })?;
    }

    if let Some(a) = &report.alpha {
        emit(TABLE_FILES[1], &|path| {
            write_rows(
                path,
                &["Metric", "Value"],
                [
                    vec![format!("Cronbach's Alpha ({} Attributes)", a.k), f(a.alpha)],
                    vec!["Standardized Alpha".into(), f(a.standardized_alpha)],
                    vec!["Average Inter-Item Correlation".into(), f(a.avg_inter_item_r)],
                    vec!["Number of Players".into(), a.n.to_string()],
                ],
            )
        })?;
    }

    if let Some(pca) = &report.pca {
        emit(TABLE_FILES[2], &|path| {
            write_rows(
                path,
                &["Component", "Eigenvalue", "Variance Explained", "Cumulative"],
                (0..pca.eigenvalues.len()).map(|k| {
                    vec![
                        format!("PC{}", k + 1),
                        f(pca.eigenvalues[k]),
                        f(pca.variance_shares[k]),
                        f(pca.cumulative_shares[k]),
                    ]
                }),
            )
        })?;
        emit(TABLE_FILES[3], &|path| {
            write_rows(
                path,
                &["Attribute", "PC1 Loading"],
                pca.top_pc1_loadings.iter().map(|(a, l)| vec![display_name(a), f(*l)]),
            )
        })?;
    }

    if let Some(par) = &report.parallel {
        emit(TABLE_FILES[4], &|path| {
            write_rows(
                path,
                &["Component", "Observed", "Random 95%", "Retain"],
                (0..par.observed.len()).map(|k| {
                    vec![
                        format!("PC{}", k + 1),
                        f(par.observed[k]),
                        f(par.null_p95[k]),
                        if k < par.retained { "Yes" } else { "No" }.into(),
                    ]
                }),
            )
        })?;
    }

    if report.prediction.is_some() || report.forest.is_some() {
        let mut models: Vec<&PredictionReport> = Vec::new();
        if let Some(p) = &report.prediction {
            models.push(&p.pc1);
            models.push(&p.ridge);
        }
        if let Some(fr) = &report.forest {
            models.push(fr);
        }
        emit(TABLE_FILES[5], &|path| {
            write_rows(
                path,
                &["Model", "Role", "R Squared (CV Mean)", "R Squared (Fold Min)", "R Squared (Fold Max)", "RMSE (CV Mean)"],
                models.iter().map(|m| {
                    let lo = m.per_fold_r2.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = m.per_fold_r2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    vec![
                        m.model_name.clone(),
                        if m.benchmark { "benchmark" } else { "model" }.into(),
                        f(m.mean_r2),
                        f(lo),
                        f(hi),
                        f(m.mean_rmse),
                    ]
                }),
            )
        })?;
    }

    if let Some(c) = &report.clustering {
        emit(TABLE_FILES[6], &|path| {
            write_rows(
                path,
                &["Cluster", "N", "Mean Overall Rating", "Std Dev"],
                c.profiles.iter().map(|p| {
                    vec![p.cluster.to_string(), p.size.to_string(), f(p.overall_mean), f(p.overall_sd)]
                }),
            )
        })?;
    }

    if let Some(par) = &report.parallel {
        emit(FIGURE_FILES[0], &|path| {
            write_rows(
                path,
                &["rank", "observed", "threshold"],
                (0..par.observed.len()).map(|k| vec![(k + 1).to_string(), f(par.observed[k]), f(par.null_p95[k])]),
            )
        })?;
    }

    if let Some(b) = &report.bootstrap {
        emit(FIGURE_FILES[1], &|path| {
            let h = &b.histogram;
            write_rows(
                path,
                &["bin_low", "bin_high", "count"],
                (0..h.counts.len()).map(|i| vec![f(h.edges[i]), f(h.edges[i + 1]), h.counts[i].to_string()]),
            )
        })?;
    }

    if let Some(pca) = &report.pca {
        emit(FIGURE_FILES[2], &|path| {
            let mut header = vec![""];
            header.extend(pca.attribute_names.iter().map(String::as_str));
            write_rows(
                path,
                &header,
                (0..pca.correlation.rows()).map(|i| {
                    let mut row = vec![pca.attribute_names[i].clone()];
                    row.extend(pca.correlation.row(i).iter().map(|v| f(*v)));
                    row
                }),
            )
        })?;
    }

    if let Some(p) = &report.prediction {
        emit(FIGURE_FILES[3], &|path| {
            write_rows(
                path,
                &["observed", "predicted"],
                p.ridge
                    .observed
                    .iter()
                    .zip(&p.ridge.predictions)
                    .map(|(o, y)| vec![f(*o), f(*y)]),
            )
        })?;
    }

    if let Some(c) = &report.clustering {
        emit(FIGURE_FILES[4], &|path| {
            write_rows(
                path,
                &["k", "silhouette"],
                c.silhouette_by_k.iter().map(|(k, s)| vec![k.to_string(), f(*s)]),
            )
        })?;
        emit(FIGURE_FILES[5], &|path| {
            let labels: Vec<String> = c.profiles.iter().map(|p| format!("cluster_{}", p.cluster)).collect();
            let mut header = vec!["attribute"];
            header.extend(labels.iter().map(String::as_str));
            write_rows(
                path,
                &header,
                report.metadata.attributes.iter().enumerate().map(|(j, a)| {
                    let mut row = vec![a.clone()];
                    row.extend(c.profiles.iter().map(|p| f(p.attribute_means[j])));
                    row
                }),
            )
        })?;
    }

    Ok(written)
}

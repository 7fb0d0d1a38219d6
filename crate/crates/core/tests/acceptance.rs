//! Acceptance gate. Criteria 1-7 use only generated data and gate the build.
//! Criteria 8-14 need the European Soccer Database player-attribute table as
//! CSV: set `DIMAUDIT_FIXTURE=/path/to/player_attributes.csv`. Without it they
//! print `[SKIP]`. Fixture mismatches print `[FAIL]` with the config flag that
//! governs them and fail the run only when `DIMAUDIT_FIXTURE_STRICT=1`.
//!
//! Run with `cargo test -p dimaudit --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use dimaudit::cluster::{adjusted_rand_index, kmeans, silhouette};
use dimaudit::consistency::cronbach_alpha;
use dimaudit::linalg::{correlation, standardize_values, symmetric_eigen};
use dimaudit::noise_gate::{parallel_analysis, retained_count, ParallelConfig};
use dimaudit::pca::pca_fit;
use dimaudit::pipeline::{run_config, Config};
use dimaudit::predict::ridge_fit;
use dimaudit::report::AuditReport;
use dimaudit::stability::bootstrap_pca;
use dimaudit::synth::{self, attribute_names, exactly_correlated, gaussian_matrix, PlantedSpec};
use dimaudit::{seed, AttributeMatrix, Matrix};
use rand::Rng;
use rand_distr::StandardNormal;

fn verdict(criterion: u32, name: &str, ok: bool, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {criterion:>2}: {name}: {detail}");
    assert!(ok, "criterion {criterion} ({name}) failed: {detail}");
}

fn matrix_with_target(values: Matrix) -> AttributeMatrix {
    let p = values.cols();
    let overall = values.row_iter().map(|r| r.iter().sum()).collect();
    AttributeMatrix::from_values(values, attribute_names(p), overall).unwrap()
}

fn equicorrelation(p: usize, r: f64) -> Matrix {
    Matrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { r })
}

#[test]
fn criterion_01_equicorrelation() {
    let mut worst_eig: f64 = 0.0;
    let mut worst_alpha: f64 = 0.0;
    for (case, p) in [3usize, 5, 10].into_iter().enumerate() {
        for (rc, r) in [0.2, 0.5, 0.8].into_iter().enumerate() {
            let x = exactly_correlated(300, &equicorrelation(p, r), (case * 3 + rc) as u64).unwrap();
            let m = matrix_with_target(x);
            let model = pca_fit(&m).unwrap();
            let mut expected = vec![1.0 - r; p];
            expected[0] = 1.0 + (p as f64 - 1.0) * r;
            for (got, want) in model.eigenvalues.iter().zip(&expected) {
                worst_eig = worst_eig.max((got - want).abs());
            }
            let k = p as f64;
            let alpha_true = k * r / (1.0 + (k - 1.0) * r);
            let a = cronbach_alpha(&m).unwrap();
            worst_alpha = worst_alpha
                .max((a.alpha - alpha_true).abs())
                .max((a.standardized_alpha - alpha_true).abs());
        }
    }
    verdict(
        1,
        "equicorrelation eigenvalues and alpha",
        worst_eig <= 1e-8 && worst_alpha <= 1e-9,
        format!("max eigen error {worst_eig:.2e} (tol 1e-8), max alpha error {worst_alpha:.2e} (tol 1e-9)"),
    );
}

#[test]
fn criterion_02_eigensolver_contract() {
    let p = 28;
    let (mut res, mut orth, mut trace): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for s in 0..100u64 {
        let mut rng = seed::rng_for(0xE16E, s);
        // random mixing gives correlation matrices with varied structure
        let g = gaussian_matrix(80, p, seed::derive(0xE16E, s + 1000));
        let mix = Matrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else {
                rng.sample::<f64, _>(StandardNormal) * 0.4
            }
        });
        let x = g.matmul(&mix);
        let z = standardize_values(&x, &attribute_names(p)).unwrap();
        let r = correlation(&z).values;
        let eig = symmetric_eigen(&r).unwrap();
        res = res.max(eig.residual(&r));
        orth = orth.max(eig.orthonormality_error());
        trace = trace.max((eig.values.iter().sum::<f64>() - p as f64).abs());
    }
    verdict(
        2,
        "eigensolver contract on 100 random correlation matrices",
        res <= 1e-8 && orth <= 1e-8 && trace <= 1e-8,
        format!("residual {res:.2e}, orthonormality {orth:.2e}, trace {trace:.2e} (tol 1e-8 each)"),
    );
}

/// Least squares with an intercept via the normal equations, solved by
/// Gauss-Jordan elimination with partial pivoting.
fn normal_equation_ols(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let (n, p) = (x.rows(), x.cols());
    let q = p + 1;
    let design = |i: usize, j: usize| if j == 0 { 1.0 } else { x[(i, j - 1)] };
    let mut a = vec![vec![0.0; q + 1]; q];
    for r in 0..q {
        for c in 0..q {
            a[r][c] = (0..n).map(|i| design(i, r) * design(i, c)).sum();
        }
        a[r][q] = (0..n).map(|i| design(i, r) * y[i]).sum();
    }
    for col in 0..q {
        let piv = (col..q).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for r in 0..q {
            if r != col {
                let f = a[r][col];
                for c in 0..=q {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    a.iter().map(|row| row[q]).collect()
}

#[test]
fn criterion_03_ridge_limits() {
    let x = gaussian_matrix(60, 5, 31);
    let mut rng = seed::rng(32);
    let y: Vec<f64> = x
        .row_iter()
        .map(|r| 2.0 + r[0] - 0.5 * r[2] + 0.3 * r[4] + 0.2 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let ols = normal_equation_ols(&x, &y);
    let fit = ridge_fit(&x, &y, 0.0).unwrap();
    let mut ols_err = (fit.intercept - ols[0]).abs();
    for (b, o) in fit.coefficients.iter().zip(&ols[1..]) {
        ols_err = ols_err.max((b - o).abs());
    }

    let heavy = ridge_fit(&x, &y, 1e12).unwrap();
    let heavy_norm = heavy.coefficients.iter().map(|b| b * b).sum::<f64>().sqrt();

    // one predictor: beta = Sxy / (Sxx + lambda) on centred data
    let xs = Matrix::from_vec(4, 1, vec![1.0, 2.0, 3.0, 6.0]);
    let ys = [2.0, 1.0, 4.0, 5.0];
    // x mean 3, y mean 3: Sxx = 4+1+0+9 = 14, Sxy = 2+2+0+6 = 10
    let scalar = ridge_fit(&xs, &ys, 6.0).unwrap();
    let scalar_err = (scalar.coefficients[0] - 0.5)
        .abs()
        .max((scalar.intercept - (3.0 - 0.5 * 3.0)).abs());

    verdict(
        3,
        "ridge limits",
        ols_err <= 1e-8 && heavy_norm < 1e-6 && scalar_err <= 1e-10,
        format!(
            "lambda=0 vs OLS {ols_err:.2e} (tol 1e-8), |beta| at 1e12 {heavy_norm:.2e} (< 1e-6), scalar case {scalar_err:.2e} (tol 1e-10)"
        ),
    );
}

#[test]
fn criterion_04_planted_recovery() {
    let (n, p) = (2000, 28);
    let mut planted_hits = 0;
    let mut noise_hits = 0;
    let mut planted_counts = Vec::new();
    let mut noise_counts = Vec::new();
    for master in 0..20u64 {
        let data = PlantedSpec::blocks(n, p, 4, 0.8, 0.6, seed::derive_named(master, "planted"))
            .generate()
            .unwrap();
        let cfg = ParallelConfig {
            seed: seed::derive_named(master, "parallel"),
            ..ParallelConfig::default()
        };
        let planted = parallel_analysis(&data.matrix, &cfg).unwrap();
        // the noise matrix has the same (n, p), so the same null thresholds apply
        let noise = matrix_with_target(gaussian_matrix(n, p, seed::derive_named(master, "noise")));
        let noise_eigs = pca_fit(&noise).unwrap().eigenvalues;
        let noise_kept = retained_count(&noise_eigs, &planted.null_p95, cfg.rule);
        planted_hits += usize::from(planted.retained == 4);
        noise_hits += usize::from(noise_kept == 0);
        planted_counts.push(planted.retained);
        noise_counts.push(noise_kept);
    }
    verdict(
        4,
        "planted 4-factor recovery by parallel analysis",
        planted_hits >= 18 && noise_hits >= 15,
        format!(
            "retained 4 in {planted_hits}/20 (need 18), noise retained 0 in {noise_hits}/20 (need 15); planted {planted_counts:?}, noise {noise_counts:?}"
        ),
    );
}

#[test]
fn criterion_05_bootstrap_stability() {
    let mut min_cosine = f64::INFINITY;
    let mut covered = 0;
    for master in 0..20u64 {
        let data = PlantedSpec::one_factor(500, 10, 0.9, 0.3, seed::derive_named(master, "one_factor"))
            .generate()
            .unwrap();
        let b = bootstrap_pca(&data.matrix, 1000, seed::derive_named(master, "bootstrap")).unwrap();
        min_cosine = min_cosine.min(b.cosine_mean);
        let (lo, hi) = b.pc1_share_ci;
        covered += usize::from(lo <= b.baseline_share && b.baseline_share <= hi);
    }
    verdict(
        5,
        "bootstrap stability on a strong single factor",
        min_cosine >= 0.999 && covered >= 18,
        format!("min cosine mean {min_cosine:.6} (>= 0.999), CI covers full-sample share in {covered}/20 (need 18)"),
    );
}

#[test]
fn criterion_06_clustering() {
    let mut rng = seed::rng(66);
    let n = 200;
    let truth: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let x = Matrix::from_fn(n, 2, |i, j| {
        let centre = if j == 0 { if truth[i] == 0 { -10.0 } else { 10.0 } } else { 0.0 };
        centre + rng.sample::<f64, _>(StandardNormal)
    });
    let fit = kmeans(&x, 2, 10, 67).unwrap();
    let ari = adjusted_rand_index(&truth, &fit.assignments).unwrap();
    let sil = silhouette(&x, &fit.assignments, 2).unwrap();
    // 2x2 table of ones: sum C(n_ij,2) = 0, row and column sums C(2,2)*2 = 2,
    // expected 2*2/C(4,2) = 2/3, max 2: ARI = (0 - 2/3) / (2 - 2/3) = -0.5
    let hand = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
    verdict(
        6,
        "two-blob clustering and hand-counted ARI",
        ari == 1.0 && sil > 0.9 && (hand + 0.5).abs() <= 1e-12,
        format!("two-blob ARI {ari} (== 1), silhouette {sil:.4} (> 0.9), hand ARI {hand} (-0.5)"),
    );
}

fn small_pipeline_config(dir: &Path, workers: usize) -> Config {
    let schema = synth::csv_schema(12);
    Config {
        input: "planted.csv".into(),
        out: dir.join(format!("out_w{workers}")).to_string_lossy().into_owned(),
        seed: 2024,
        workers,
        id_column: schema.id_column,
        season_column: schema.season_column.unwrap(),
        rating_column: schema.rating_column,
        attributes: schema.attributes,
        parallel_iterations: 100,
        bootstrap_iterations: 200,
        cluster_to: 6,
        cluster_k_max: 4,
        cluster_restarts: 3,
        ari_resamples: 20,
        forest_trees: 20,
        ..Config::default()
    }
}

#[test]
fn criterion_07_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = PlantedSpec::blocks(400, 12, 3, 0.8, 0.6, 77).generate().unwrap();
    synth::write_csv(&data.matrix, &dir.path().join("planted.csv")).unwrap();

    let runs: Vec<(usize, AuditReport)> = [1usize, 3, 1]
        .into_iter()
        .map(|w| {
            let cfg = small_pipeline_config(dir.path(), w);
            (w, run_config(&cfg, dir.path()).unwrap())
        })
        .collect();
    let canon: Vec<String> = runs.iter().map(|(_, r)| r.canonical_json().unwrap()).collect();
    let json_equal = canon.windows(2).all(|w| w[0] == w[1]);

    let mut tables_equal = true;
    for name in dimaudit::report::TABLE_FILES.iter().chain(&dimaudit::report::FIGURE_FILES) {
        let a = std::fs::read(dir.path().join("out_w1").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("out_w3").join(name)).unwrap();
        tables_equal &= a == b;
    }
    verdict(
        7,
        "pipeline determinism across runs and worker counts",
        json_equal && tables_equal,
        format!(
            "reports identical modulo timestamps: {json_equal}; all 13 table/figure files identical: {tables_equal} (workers 1, 3, 1)"
        ),
    );
}

// ----- dataset fixture -----

fn fixture_path() -> Option<PathBuf> {
    std::env::var_os("DIMAUDIT_FIXTURE").map(PathBuf::from).filter(|p| p.is_file())
}

fn fixture_report() -> Option<&'static AuditReport> {
    static REPORT: OnceLock<Option<AuditReport>> = OnceLock::new();
    REPORT
        .get_or_init(|| {
            let path = fixture_path()?;
            let out = tempfile::tempdir().unwrap().keep();
            let config = Config {
                input: std::path::absolute(&path).unwrap().to_string_lossy().into_owned(),
                out: out.to_string_lossy().into_owned(),
                ..Config::default()
            };
            Some(run_config(&config, Path::new(".")).expect("pipeline on fixture"))
        })
        .as_ref()
}

/// Prints the verdict for a fixture criterion; `flag` names the config
/// setting or convention most likely responsible for a mismatch.
fn fixture_verdict(criterion: u32, name: &str, ok: bool, detail: String, flag: &str) {
    if ok {
        println!("[PASS] criterion {criterion:>2}: {name}: {detail}");
        return;
    }
    println!("[FAIL] criterion {criterion:>2}: {name}: {detail}; governing setting: {flag}");
    if std::env::var("DIMAUDIT_FIXTURE_STRICT").is_ok_and(|v| v == "1") {
        panic!("fixture criterion {criterion} failed");
    }
}

fn with_fixture(criterion: u32, name: &str, check: impl FnOnce(&AuditReport)) {
    match fixture_report() {
        Some(r) => check(r),
        None => println!(
            "[SKIP] criterion {criterion:>2}: {name}: fixture absent (set DIMAUDIT_FIXTURE to the player-attribute CSV)"
        ),
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

#[test]
fn criterion_08_fixture_consistency() {
    with_fixture(8, "alpha and inter-item correlation", |r| {
        let a = r.alpha.as_ref().unwrap();
        let ok = (within(a.alpha, 0.879, 0.005) || within(a.standardized_alpha, 0.879, 0.005))
            && within(a.avg_inter_item_r, 0.244, 0.005)
            && a.n == 9669;
        fixture_verdict(
            8,
            "alpha and inter-item correlation",
            ok,
            format!(
                "alpha {:.4}, standardized {:.4}, avg r {:.4}, n {}",
                a.alpha, a.standardized_alpha, a.avg_inter_item_r, a.n
            ),
            "attributes / aggregate",
        );
    });
}

#[test]
fn criterion_09_fixture_variance_explained() {
    with_fixture(9, "eigenvalues and variance shares", |r| {
        let p = r.pca.as_ref().unwrap();
        let ok = within(p.eigenvalues[0], 11.37, 0.05)
            && within(p.variance_shares[0], 0.406, 0.005)
            && within(p.cumulative_shares[3], 0.775, 0.01);
        fixture_verdict(
            9,
            "eigenvalues and variance shares",
            ok,
            format!(
                "lambda1 {:.4}, PC1 share {:.4}, PC1-4 cumulative {:.4}",
                p.eigenvalues[0], p.variance_shares[0], p.cumulative_shares[3]
            ),
            "attributes",
        );
    });
}

#[test]
fn criterion_10_fixture_parallel_analysis() {
    with_fixture(10, "parallel analysis", |r| {
        let par = r.parallel.as_ref().unwrap();
        let targets = [1.11, 1.10, 1.08, 1.07, 1.07];
        let ok = par.retained == 4 && targets.iter().zip(&par.null_p95).all(|(t, g)| within(*g, *t, 0.02));
        fixture_verdict(
            10,
            "parallel analysis",
            ok,
            format!("retained {}, thresholds {:?}", par.retained, &par.null_p95[..5]),
            "parallel_rule / parallel_percentile",
        );
    });
}

#[test]
fn criterion_11_fixture_bootstrap() {
    with_fixture(11, "bootstrap stability", |r| {
        let b = &r.bootstrap.as_ref().unwrap().report;
        let (lo, hi) = b.pc1_share_ci;
        let ok = lo >= 0.395 && hi <= 0.416 && b.cosine_mean >= 0.995;
        fixture_verdict(
            11,
            "bootstrap stability",
            ok,
            format!("PC1 share CI [{lo:.4}, {hi:.4}], cosine mean {:.5}", b.cosine_mean),
            "bootstrap_iterations",
        );
    });
}

#[test]
fn criterion_12_fixture_prediction() {
    with_fixture(12, "cross-validated prediction", |r| {
        let p = r.prediction.as_ref().unwrap();
        let ok = within(p.ridge.mean_r2, 0.814, 0.02)
            && within(p.ridge.mean_rmse, 2.83, 0.1)
            && p.pc1.per_fold_r2.iter().all(|v| (0.22..=0.34).contains(v))
            && within(p.pc1.mean_rmse, 5.9, 0.3);
        fixture_verdict(
            12,
            "cross-validated prediction",
            ok,
            format!(
                "ridge R2 {:.4}, RMSE {:.4}; PC1 fold R2 {:?}, RMSE {:.4}",
                p.ridge.mean_r2, p.ridge.mean_rmse, p.pc1.per_fold_r2, p.pc1.mean_rmse
            ),
            "r2_reference / lambda_grid",
        );
    });
}

#[test]
fn criterion_13_fixture_clusters() {
    with_fixture(13, "residual-component clusters", |r| {
        let c = r.clustering.as_ref().unwrap();
        let mut sizes = c.sizes.clone();
        sizes.sort_unstable();
        let size_ok = sizes.len() == 2
            && [4335.0, 5334.0].iter().zip(&sizes).all(|(t, s)| (*s as f64 - t).abs() <= 0.05 * t);
        let means: Vec<f64> = c.profiles.iter().map(|p| p.overall_mean).collect();
        let means_ok = means.len() == 2 && within(means[0], 64.3, 0.5) && within(means[1], 69.0, 0.5);
        let ok = within(c.silhouette, 0.25, 0.05) && c.ari.ari_mean >= 0.90 && size_ok && means_ok;
        fixture_verdict(
            13,
            "residual-component clusters",
            ok,
            format!(
                "silhouette {:.4}, ARI mean {:.4}, sizes {:?}, overall means {:?}",
                c.silhouette, c.ari.ari_mean, c.sizes, means
            ),
            "cluster_scores",
        );
    });
}

#[test]
fn criterion_14_fixture_forest() {
    with_fixture(14, "random-forest benchmark", |r| {
        let f = r.forest.as_ref().unwrap();
        fixture_verdict(
            14,
            "random-forest benchmark",
            within(f.mean_r2, 0.947, 0.02),
            format!("forest R2 {:.4}", f.mean_r2),
            "forest_trees / forest_mtry / forest_min_leaf",
        );
    });
}

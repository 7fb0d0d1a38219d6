use std::path::Path;
use std::process::Command;

use dimaudit::pipeline::{run_config, run_stages, Config};
use dimaudit::report::{render_tables, AuditReport, FIGURE_FILES, REPORT_FILE, TABLE_FILES};
use dimaudit::synth::{self, PlantedSpec};
use dimaudit::Error;

fn quick_config(p: usize) -> Config {
    let schema = synth::csv_schema(p);
    Config {
        input: "data.csv".into(),
        out: "out".into(),
        seed: 11,
        id_column: schema.id_column,
        season_column: schema.season_column.unwrap(),
        rating_column: schema.rating_column,
        attributes: schema.attributes,
        parallel_iterations: 100,
        bootstrap_iterations: 100,
        cluster_to: 5,
        cluster_k_max: 3,
        cluster_restarts: 2,
        ari_resamples: 10,
        forest_trees: 10,
        ..Config::default()
    }
}

fn write_planted(dir: &Path, p: usize, m: usize) {
    let data = PlantedSpec::blocks(300, p, m, 0.8, 0.6, 21).generate().unwrap();
    synth::write_csv(&data.matrix, &dir.join("data.csv")).unwrap();
}

fn full_report(dir: &Path) -> AuditReport {
    write_planted(dir, 10, 3);
    run_config(&quick_config(10), dir).unwrap()
}

#[test]
fn full_run_writes_every_table_and_figure() {
    let dir = tempfile::tempdir().unwrap();
    let report = full_report(dir.path());
    let out = dir.path().join("out");
    for name in TABLE_FILES.iter().chain(&FIGURE_FILES) {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let mut entries: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    entries.sort();
    assert_eq!(entries.len(), 7 + 6 + 1);
    let parsed = AuditReport::from_json(&std::fs::read_to_string(out.join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(parsed, report);
    assert_eq!(report.schema_version, 1);
    assert_eq!(report.parallel.as_ref().unwrap().retained, 3);
}

#[test]
fn planted_four_factor_file_retains_four() {
    let dir = tempfile::tempdir().unwrap();
    let data = PlantedSpec::blocks(1000, 28, 4, 0.8, 0.6, 22).generate().unwrap();
    synth::write_csv(&data.matrix, &dir.path().join("data.csv")).unwrap();
    let mut cfg = quick_config(28);
    cfg.disable_all_stages();
    cfg.run_parallel = true;
    let report = run_config(&cfg, dir.path()).unwrap();
    assert_eq!(report.parallel.unwrap().retained, 4);
}

#[test]
fn table_three_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let report = full_report(dir.path());
    let pca = report.pca.as_ref().unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("out").join(TABLE_FILES[2])).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), pca.eigenvalues.len());
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(&row[0], format!("PC{}", k + 1));
        assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), pca.eigenvalues[k].to_bits());
        assert_eq!(row[2].parse::<f64>().unwrap().to_bits(), pca.variance_shares[k].to_bits());
        assert_eq!(row[3].parse::<f64>().unwrap().to_bits(), pca.cumulative_shares[k].to_bits());
    }
}

#[test]
fn missing_cluster_section_omits_its_files_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut report = full_report(dir.path());
    report.clustering = None;
    let out = dir.path().join("rerender");
    let written = render_tables(&report, &out).unwrap();
    assert_eq!(written.len(), 7 + 6 - 3);
    for gone in [TABLE_FILES[6], FIGURE_FILES[4], FIGURE_FILES[5]] {
        assert!(!out.join(gone).exists(), "{gone} should be absent");
    }
}

#[test]
fn all_toggles_off_gives_metadata_only() {
    let dir = tempfile::tempdir().unwrap();
    write_planted(dir.path(), 10, 3);
    let mut cfg = quick_config(10);
    cfg.disable_all_stages();
    let report = run_config(&cfg, dir.path()).unwrap();
    assert_eq!(report.metadata.n, 300);
    assert_eq!(report.metadata.p, 10);
    assert!(report.metadata.seeds.is_empty());
    let json = report.to_json().unwrap();
    for key in ["descriptives", "alpha", "pca", "parallel", "bootstrap", "prediction", "forest", "clustering"] {
        assert!(!json.contains(&format!("\"{key}\"")), "{key} present");
    }
    let files: Vec<_> = std::fs::read_dir(dir.path().join("out")).unwrap().collect();
    assert_eq!(files.len(), 1);
}

#[test]
fn stage_failure_keeps_earlier_sections() {
    let dir = tempfile::tempdir().unwrap();
    write_planted(dir.path(), 10, 3);
    let mut cfg = quick_config(10);
    cfg.cluster_to = 40;
    cfg.run_forest = false;
    let err = run_config(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "cluster", .. }), "{err}");
    assert!(err.to_string().starts_with("stage `cluster` failed"));

    let saved = std::fs::read_to_string(dir.path().join("out").join(REPORT_FILE)).unwrap();
    let partial = AuditReport::from_json(&saved).unwrap();
    assert_eq!(partial.metadata.failed_stage.as_deref(), Some("cluster"));
    assert!(partial.pca.is_some() && partial.prediction.is_some());
    assert!(partial.clustering.is_none());
    assert!(dir.path().join("out").join(TABLE_FILES[2]).is_file());
}

#[test]
fn stages_rerun_alone_reproduce_the_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let full = full_report(dir.path());
    let matrix = {
        let cfg = quick_config(10);
        dimaudit::pipeline::ingest(&cfg, &dir.path().join("data.csv")).unwrap()
    };
    for stage in ["parallel", "bootstrap", "cluster", "forest", "predict"] {
        let mut cfg = quick_config(10);
        cfg.only_stage(stage).unwrap();
        let (alone, err) = run_stages(&cfg, "data.csv", &matrix);
        assert!(err.is_none());
        match stage {
            "parallel" => assert_eq!(alone.parallel, full.parallel),
            "bootstrap" => assert_eq!(alone.bootstrap, full.bootstrap),
            "cluster" => assert_eq!(alone.clustering, full.clustering),
            "forest" => assert_eq!(alone.forest, full.forest),
            _ => assert_eq!(alone.prediction, full.prediction),
        }
    }
}

#[test]
fn ingest_errors_are_stage_tagged() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("data.csv"), "player_id,season,overall_rating,attr01\n1,a,60,50\n").unwrap();
    let err = run_config(&quick_config(10), dir.path()).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "ingest", .. }), "{err}");
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dimaudit"))
}

#[test]
fn cli_help_lists_defaults() {
    let out = cli().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for needle in ["bootstrap_iterations = 1000", "parallel_iterations = 500", "cluster_scores = \"raw\"", "synth"] {
        assert!(text.contains(needle), "help lacks {needle}");
    }
}

#[test]
fn cli_synth_then_stage_run() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    let status = cli()
        .args(["synth", "--n", "300", "--p", "10", "--factors", "2", "--seed", "5", "--output"])
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let config = dir.path().join("toy.toml");
    assert!(Config::load(&config).unwrap().attributes.len() == 10);

    let out = dir.path().join("alpha_out");
    let run = cli().arg("alpha").arg("--config").arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(out.join(TABLE_FILES[1]).is_file());
    assert!(!out.join(TABLE_FILES[2]).exists());
}

#[test]
fn cli_failure_exits_nonzero_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli()
        .arg("run")
        .arg("--input")
        .arg(dir.path().join("absent.csv"))
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `ingest` failed"));
}

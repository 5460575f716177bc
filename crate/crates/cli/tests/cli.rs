use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use geocurr_cli::commands::{audit_command, heatmap_command};
use geocurr_cli::{run_experiment, CliError, ExperimentConfig};
use geocurr_core::io::{read_curve, write_distribution, WALL_GRAY};
use geocurr_core::ot::{Categorical, TaskDistribution};
use tempfile::TempDir;

fn layout() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../layouts/maze11.txt")
}

fn maze_json(out: &Path, extra: &str) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "environment": {{ "kind": "maze", "layout": {layout:?} }},
  "source": {{ "kind": "shells", "min": 1, "max": 3 }},
  "target": {{ "kind": "shells", "min": 12, "max": 14 }},
  "methods": ["gradient", "linear"],
  "learner": {{ "budget": 30000 }},
  "seeds": [0, 1],
  "output_dir": {out:?}{extra}
}}"#,
        layout = layout(),
        out = out,
    )
}

fn config(out: &Path, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&maze_json(out, extra)).unwrap()
}

fn stage_files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("stage_") && n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}

fn read_pgm(path: &Path) -> (usize, usize, Vec<u8>) {
    let bytes = fs::read(path).unwrap();
    let text_end = bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').nth(2).unwrap().0 + 1;
    let header = String::from_utf8_lossy(&bytes[..text_end]).into_owned();
    let mut it = header.split_whitespace();
    assert_eq!(it.next(), Some("P5"));
    let w: usize = it.next().unwrap().parse().unwrap();
    let h: usize = it.next().unwrap().parse().unwrap();
    assert_eq!(it.next(), Some("255"));
    (w, h, bytes[text_end..].to_vec())
}

#[test]
fn duplicate_seeds_are_rejected() {
    let dir = TempDir::new().unwrap();
    let json = maze_json(dir.path(), "").replace("[0, 1]", "[3, 3]");
    match ExperimentConfig::from_json(&json) {
        Err(CliError::Config(msg)) => assert!(msg.contains("seeds"), "{msg}"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let json = maze_json(dir.path(), r#", "colour": "blue""#);
    assert!(matches!(ExperimentConfig::from_json(&json), Err(CliError::Config(_))));
}

#[test]
fn embedded_method_needs_continuous_contexts() {
    let dir = TempDir::new().unwrap();
    let json = maze_json(dir.path(), "").replace(r#"["gradient", "linear"]"#, r#"["gradient_embedded"]"#);
    assert!(matches!(ExperimentConfig::from_json(&json), Err(CliError::Config(_))));
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, maze_json(dir.path(), "").replace("[0, 1]", "[]")).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_geocurr")).arg("run").arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(1));
    assert_eq!(CliError::Partial { failed: 1, total: 2 }.exit_code(), 2);
}

#[test]
fn half_step_writes_three_stage_files() {
    let dir = TempDir::new().unwrap();
    let json = maze_json(dir.path(), r#", "curriculum": { "delta_alpha": 0.5 }"#)
        .replace(r#"["gradient", "linear"]"#, r#"["gradient"]"#)
        .replace("30000", "100000");
    let cfg = ExperimentConfig::from_json(&json).unwrap();
    let report = run_experiment(&cfg).unwrap();
    assert!(report.runs.iter().all(|r| r.completed));
    for seed in [0, 1] {
        assert_eq!(
            stage_files(&dir.path().join("gradient").join(seed.to_string())),
            ["stage_00.csv", "stage_01.csv", "stage_02.csv"]
        );
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    run_experiment(&config(a.path(), "")).unwrap();
    run_experiment(&config(b.path(), "")).unwrap();
    let manifest = fs::read_to_string(a.path().join("manifest.csv")).unwrap();
    assert_eq!(manifest, fs::read_to_string(b.path().join("manifest.csv")).unwrap());
    let mut n = 0;
    for line in manifest.lines().skip(1) {
        let rel = line.split(',').next().unwrap();
        assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
        n += 1;
    }
    assert!(n > 10);
}

#[test]
fn aggregate_matches_per_seed_files() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "");
    run_experiment(&cfg).unwrap();
    let mut expected = Vec::new();
    for m in ["gradient", "linear"] {
        let mut by_step: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for seed in &cfg.seeds {
            let f = fs::File::open(dir.path().join(m).join(seed.to_string()).join("curve.csv")).unwrap();
            for p in read_curve(f).unwrap() {
                by_step.entry(p.env_steps).or_default().push(p.mean_return);
            }
        }
        for (s, xs) in by_step {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = if xs.len() < 2 {
                0.0
            } else {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            expected.push(format!("{m},{s},{},{mean},{std}", xs.len()));
        }
    }
    let agg = fs::read_to_string(dir.path().join("aggregate_curves.csv")).unwrap();
    let got: Vec<&str> = agg.lines().skip(1).collect();
    assert_eq!(got, expected);

    let ttt = fs::read_to_string(dir.path().join("time_to_threshold.csv")).unwrap();
    assert_eq!(ttt.lines().count(), 1 + 2 * cfg.seeds.len());
}

#[test]
fn identical_endpoints_audit_to_zero() {
    let dir = TempDir::new().unwrap();
    let json = maze_json(dir.path(), "").replace(r#""min": 12, "max": 14"#, r#""min": 1, "max": 3"#);
    let cfg = ExperimentConfig::from_json(&json).unwrap();
    let runs = audit_command(&cfg).unwrap();
    assert_eq!(runs.len(), 3);
    for r in runs {
        assert!(!r.audit.rows.is_empty());
        for row in &r.audit.rows {
            assert!(row.gap.abs() < 1e-9, "gap {}", row.gap);
            assert!(row.w.abs() < 1e-6, "w {}", row.w);
        }
    }
    assert!(dir.path().join("audit").join("audit_summary.csv").exists());
}

#[test]
fn single_stage_audit_has_one_row() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), r#", "audit": { "delta_alphas": [1.0] }"#);
    let runs = audit_command(&cfg).unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].audit.rows.len(), 1);
    let csv = fs::read_to_string(dir.path().join("audit").join("audit_delta_1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

fn heatmap_of(dist: Categorical) -> (usize, usize, Vec<u8>) {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("d.csv");
    write_distribution(&TaskDistribution::from(dist), fs::File::create(&csv).unwrap()).unwrap();
    let pgm = dir.path().join("d.pgm");
    heatmap_command(&csv, &layout(), &pgm, Some(1)).unwrap();
    read_pgm(&pgm)
}

#[test]
fn point_mass_heatmap_has_one_dark_cell() {
    let (w, h, px) = heatmap_of(Categorical::dirac(51, 7).unwrap());
    assert_eq!((w, h), (11, 11));
    assert_eq!(px.iter().filter(|&&g| g == 0).count(), 1);
    assert_eq!(px.iter().filter(|&&g| g != 0 && g != 255 && g != WALL_GRAY).count(), 0);
}

#[test]
fn uniform_heatmap_has_equal_cells() {
    let (_, _, px) = heatmap_of(Categorical::uniform(51).unwrap());
    assert_eq!(px.iter().filter(|&&g| g == 0).count(), 51);
    assert_eq!(px.iter().filter(|&&g| g == 255).count(), 1);
}

#[test]
fn heatmap_rejects_wrong_size() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("d.csv");
    write_distribution(&Categorical::uniform(5).unwrap().into(), fs::File::create(&csv).unwrap()).unwrap();
    assert!(heatmap_command(&csv, &layout(), &dir.path().join("d.pgm"), None).is_err());
}

use std::path::Path;
use std::process::{Command, Output};

use rigidfd::calibration::{MlpPredictor, ThresholdRecord};
use rigidfd::constellation::ConstellationFile;
use tempfile::TempDir;

fn rigidfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rigidfd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = rigidfd(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn out_dir(dir: &TempDir) -> &str {
    dir.path().to_str().unwrap()
}

#[test]
fn propagate_single_epoch_has_one_row_per_satellite() {
    let dir = TempDir::new().unwrap();
    ok(&["propagate", "--out", out_dir(&dir)]);
    let text = read(dir.path().join("positions.csv"));
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "t,sat_id,x_m,y_m,z_m");
    assert_eq!(lines.len(), 13);
}

#[test]
fn step_longer_than_span_gives_one_epoch() {
    let dir = TempDir::new().unwrap();
    ok(&["propagate", "--start", "0", "--end", "30", "--step", "60", "--out", out_dir(&dir)]);
    assert_eq!(read(dir.path().join("positions.csv")).lines().count(), 13);
}

#[test]
fn emitted_elfo_config_matches_orbit_table() {
    let dir = TempDir::new().unwrap();
    ok(&["propagate", "--out", out_dir(&dir)]);
    let file = ConstellationFile::read(dir.path().join("constellation.json")).unwrap();
    let raan = [-90.0, 0.0, 90.0, 180.0];
    let m0 = [[0.0, 120.0, 240.0], [30.0, 150.0, 270.0], [60.0, 180.0, 300.0], [90.0, 210.0, 330.0]];
    let same_angle = |a: f64, b: f64| ((a - b).rem_euclid(360.0)).min((b - a).rem_euclid(360.0)) < 1e-9;
    assert_eq!(file.satellites.len(), 12);
    for (idx, s) in file.satellites.iter().enumerate() {
        let (plane, slot) = (idx / 3, idx % 3);
        assert!((s.a_km - 6142.4).abs() < 1e-9);
        assert!((s.e - 0.6).abs() < 1e-12);
        assert!(same_angle(s.i_deg, 57.7));
        assert!(same_angle(s.raan_deg, raan[plane]), "raan {}", s.raan_deg);
        assert!(same_angle(s.argp_deg, 90.0));
        assert!(same_angle(s.M0_deg, m0[plane][slot]), "M0 {}", s.M0_deg);
    }
    // and it loads back as a constellation
    let reloaded = dir.path().join("constellation.json");
    ok(&["propagate", "--config", reloaded.to_str().unwrap(), "--out", out_dir(&dir)]);
}

#[test]
fn perilune_satellite_has_fewest_cliques() {
    let dir = TempDir::new().unwrap();
    ok(&["propagate", "--out", out_dir(&dir)]);
    let positions = read(dir.path().join("positions.csv"));
    let lowest = positions
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            (f[1] as usize, (f[2] * f[2] + f[3] * f[3] + f[4] * f[4]).sqrt())
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    ok(&["cliques", "--out", out_dir(&dir)]);
    let counts: Vec<usize> = read(dir.path().join("clique_counts.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts[lowest], *counts.iter().min().unwrap());
}

#[test]
fn clique_size_above_constellation_size_is_empty() {
    let dir = TempDir::new().unwrap();
    ok(&["cliques", "--k", "13", "--out", out_dir(&dir)]);
    assert_eq!(read(dir.path().join("cliques.csv")).lines().count(), 1);
}

#[test]
fn mutually_visible_constellation_lists_all_subsets() {
    let dir = TempDir::new().unwrap();
    let sats: Vec<String> = (0..8)
        .map(|s| format!(r#"{{"a_km":30000,"e":0,"i_deg":0,"raan_deg":0,"argp_deg":0,"M0_deg":{}}}"#, s * 2))
        .collect();
    let cfg = format!(
        r#"{{"name":"cluster","body":{{"name":"moon","mu_km3_s2":4902.8,"radius_km":1737.4}},"satellites":[{}]}}"#,
        sats.join(",")
    );
    let path = dir.path().join("cluster.json");
    std::fs::write(&path, cfg).unwrap();
    ok(&["cliques", "--config", path.to_str().unwrap(), "--out", out_dir(&dir)]);
    assert_eq!(read(dir.path().join("cliques.csv")).lines().count(), 1 + 28);
}

#[test]
fn graph_writes_edge_list() {
    let dir = TempDir::new().unwrap();
    ok(&["graph", "--end", "120", "--out", out_dir(&dir)]);
    let text = read(dir.path().join("edges.csv"));
    assert!(text.starts_with("t,i,j\n"));
    assert!(text.lines().any(|l| l.starts_with("120,")));
}

#[test]
fn noiseless_calibration_gives_vanishing_thresholds() {
    let dir = TempDir::new().unwrap();
    ok(&["calibrate", "--sigma-w", "0", "--duration", "600", "--out", out_dir(&dir)]);
    let recs = ThresholdRecord::read_all(dir.path().join("thresholds.json")).unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r.value <= 1e-10));
}

#[test]
fn missing_config_fails() {
    let dir = TempDir::new().unwrap();
    let out = rigidfd(&["calibrate", "--config", "/nonexistent/constellation.json", "--out", out_dir(&dir)]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn detect_reports_fault_list() {
    let dir = TempDir::new().unwrap();
    ok(&[
        "detect", "--t0", "1800", "--faults", "4", "--magnitude", "50", "--threshold", "4.57e-7", "--out",
        out_dir(&dir),
    ]);
    let report: serde_json::Value = serde_json::from_str(&read(dir.path().join("detection.json"))).unwrap();
    assert_eq!(report["fault_set"], serde_json::json!([4]));
    assert!(report["rounds"].as_u64().unwrap() >= 1);
}

fn experiment_file(dir: &TempDir, body: &str) -> String {
    let path = dir.path().join("experiment.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_EXPERIMENT: &str = r#"{
    "constellation": "elfo",
    "sigma_w_m": 1.0,
    "fault_counts": [1, 2],
    "magnitudes_m": [5, 20],
    "thresholds": [{"label": "t99", "value": 4.57e-7}, {"label": "t999", "value": 5.86e-7}],
    "dl": [1, 2],
    "n_trials": 8,
    "seed": 3
}"#;

#[test]
fn montecarlo_is_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = experiment_file(&dir, SMALL_EXPERIMENT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["montecarlo", "--config", &cfg, "--threads", "1", "--out", a.to_str().unwrap()]);
    ok(&["montecarlo", "--config", &cfg, "--threads", "3", "--out", b.to_str().unwrap()]);
    let ra = std::fs::read(a.join("results.csv")).unwrap();
    let rb = std::fs::read(b.join("results.csv")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(String::from_utf8(ra).unwrap().lines().count(), 1 + 16);
}

#[test]
fn montecarlo_rejects_empty_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = experiment_file(&dir, &SMALL_EXPERIMENT.replace("\"dl\": [1, 2]", "\"dl\": []"));
    assert!(!rigidfd(&["montecarlo", "--config", &cfg, "--out", out_dir(&dir)]).status.success());
}

#[test]
fn default_experiment_round_trips() {
    let out = ok(&["montecarlo", "--print-config"]);
    let dir = TempDir::new().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    let cfg = experiment_file(&dir, &text);
    let out = ok(&["montecarlo", "--print-config", "--config", &cfg]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn report_echoes_single_row() {
    let dir = TempDir::new().unwrap();
    let csv = "faults,magnitude_m,threshold_label,threshold_value,dl,trials,tp,fn,fp,tn,tpr,fpr,ppv,f1,p4\n\
               1,20,p99,4.57e-7,1,100,90,10,7,1093,0.9,0.0063636363636363636,0.9278350515463918,0.9137055837563453,0.951\n";
    let path = dir.path().join("results.csv");
    std::fs::write(&path, csv).unwrap();
    let out = ok(&["report", "--results", path.to_str().unwrap(), "--out", out_dir(&dir)]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("p99"));
    assert!(stdout.contains("0.900"));
    let series = read(dir.path().join("series_p99_dl1.csv"));
    assert_eq!(series.lines().count(), 2);
}

#[test]
fn report_rejects_missing_columns() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("results.csv");
    std::fs::write(&path, "faults,magnitude_m\n1,20\n").unwrap();
    assert!(!rigidfd(&["report", "--results", path.to_str().unwrap(), "--out", out_dir(&dir)]).status.success());
}

#[test]
fn report_emits_one_series_per_threshold_and_length() {
    let dir = TempDir::new().unwrap();
    let cfg = experiment_file(&dir, SMALL_EXPERIMENT);
    ok(&["montecarlo", "--config", &cfg, "--trials", "2", "--out", out_dir(&dir)]);
    let results = dir.path().join("results.csv");
    let rep = dir.path().join("report");
    ok(&["report", "--results", results.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    let series: Vec<_> = std::fs::read_dir(&rep)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("series_"))
        .collect();
    assert_eq!(series.len(), 4);
    // two fault counts x two magnitudes per series
    assert_eq!(read(rep.join("series_t99_dl2.csv")).lines().count(), 5);
}

#[test]
fn predictor_training_is_reproducible_and_round_trips() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = ["train-predictor", "--geometries", "20", "--noise-draws", "300", "--epochs", "3", "--seed", "5"];
    ok(&[&args[..], &["--out", a.to_str().unwrap()]].concat());
    ok(&[&args[..], &["--out", b.to_str().unwrap()]].concat());
    let text = read(a.join("model.json"));
    assert_eq!(text, read(b.join("model.json")));
    let model = MlpPredictor::load(a.join("model.json")).unwrap();
    assert_eq!(model.to_json().unwrap(), text);
    assert_eq!(MlpPredictor::from_json(&text).unwrap(), model);
}

#[test]
fn predicted_threshold_campaign_runs() {
    let dir = TempDir::new().unwrap();
    ok(&["train-predictor", "--geometries", "20", "--noise-draws", "300", "--epochs", "2", "--out", out_dir(&dir)]);
    let model = dir.path().join("model.json");
    let body = format!(
        r#"{{"constellation":"elfo","sigma_w_m":1,"fault_counts":[1],"magnitudes_m":[5],
            "thresholds":[{{"label":"nn","model":{:?}}}],"dl":[1],"n_trials":3,"seed":1}}"#,
        model.to_str().unwrap()
    );
    let cfg = experiment_file(&dir, &body);
    ok(&["montecarlo", "--config", &cfg, "--out", out_dir(&dir)]);
    let text = read(dir.path().join("results.csv"));
    assert!(text.lines().nth(1).unwrap().starts_with("1,5.0,nn,NaN,1,3,"));
}

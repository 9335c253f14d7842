use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_rydpump");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn rydpump(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn data_rows(p: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(p).unwrap();
    r.records().map(|row| row.unwrap().iter().map(String::from).collect()).collect()
}

const SHORT_BELL: &str = r#"{"protocol": {"name": "bell", "cycles": 3}}"#;

#[test]
fn zero_cycles_writes_only_the_initial_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"protocol": {"name": "bell", "cycles": 0}}"#);
    let out = rydpump(&["run", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = data_rows(&dir.path().join("bell.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], "start");
    // Fully mixed over {g,e}²: every Bell population is 1/4.
    for v in &rows[0][3..7] {
        assert!((v.parse::<f64>().unwrap() - 0.25).abs() < 1e-12);
    }
}

#[test]
fn csv_floats_are_plain_scientific() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SHORT_BELL);
    assert!(rydpump(&["run", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]).status.success());
    let rows = data_rows(&dir.path().join("bell.csv"));
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let t: f64 = row[0].parse().unwrap();
        assert!(t.is_finite() && row[0].contains('e'));
    }
}

#[test]
fn segment_records_include_every_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SHORT_BELL);
    let d = dir.path().to_str().unwrap();
    assert!(rydpump(&["run", "--config", &cfg, "--out-dir", d, "--record", "segment"]).status.success());
    let rows = data_rows(&dir.path().join("bell.csv"));
    assert!(rows.len() > 4 * 3);
    let times: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert!(times.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn identical_seeds_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let body = r#"{
        "protocol": {"name": "bell", "cycles": 2},
        "noise": {"temperatures_uk": [20.0], "trajectories": 3},
        "seed": 11
    }"#;
    let cfg = write_config(a.path(), "c.json", body);
    for d in [&a, &b] {
        let out = rydpump(&["mc", "--config", &cfg, "--out-dir", d.path().to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["bell_mc_trajectories.csv", "bell_mc_mean.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    // The embedded config differs only in the output directory.
    let (ja, jb) = (read_json(&a.path().join("bell_mc.json")), read_json(&b.path().join("bell_mc.json")));
    assert_eq!(ja["temperatures"], jb["temperatures"]);
    let out = rydpump(&["mc", "--config", &cfg, "--out-dir", b.path().to_str().unwrap(), "--seed", "12"]);
    assert!(out.status.success());
    assert_ne!(
        fs::read(a.path().join("bell_mc_trajectories.csv")).unwrap(),
        fs::read(b.path().join("bell_mc_trajectories.csv")).unwrap()
    );
}

#[test]
fn bad_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cases = [
        r#"{"protocol": {"name": "bell", "cycles": 2, "omega_a_mhz": -1.0}}"#,
        r#"{"protocol": {"name": "bell", "cycles": 2, "bogus": 1}}"#,
        r#"{"protocol": {"name": "ghz", "n_atoms": 9, "cycles": 2}}"#,
        r#"{"protocol": {"name": "bell", "cycles": 2, "observables": ["nope"]}}"#,
        r#"{"protocol": {"name": "bell", "cycles": 2,"#,
    ];
    for (i, body) in cases.iter().enumerate() {
        let cfg = write_config(dir.path(), &format!("bad{i}.json"), body);
        let out = rydpump(&["run", "--config", &cfg, "--out-dir", d]);
        assert_eq!(out.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn parse_errors_point_at_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{\n  \"protocol\": {\n    \"name\": \"bell\",\n    \"cycles\": \"x\"\n  }\n}\n");
    let out = rydpump(&["run", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn integrator_breakdown_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"protocol": {"name": "bell", "cycles": 1},
            "integrator": {"method": "rk45", "rel_tol": 1e-300, "abs_tol": 1e-300}}"#,
    );
    let out = rydpump(&["run", "--config", &cfg, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_rejects_unknown_params_and_empty_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), "c.json", SHORT_BELL);
    let out = rydpump(&["sweep", "--config", &cfg, "--out-dir", d, "--param", "protocol.nope", "--values", "1,2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = rydpump(&["sweep", "--config", &cfg, "--out-dir", d, "--param", "protocol.u_mhz", "--values", ""]);
    assert_ne!(out.status.code(), Some(0));
    let out = rydpump(&["sweep", "--config", &cfg, "--out-dir", d]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_tags_rows_with_the_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), "c.json", SHORT_BELL);
    let out = rydpump(&["sweep", "--config", &cfg, "--out-dir", d, "--param", "protocol.u_mhz", "--values", "8,400"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("bell_sweep.csv");
    let header = csv::Reader::from_path(&csv).unwrap().headers().unwrap().clone();
    assert_eq!(&header[0], "param:protocol.u_mhz");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 2 * 4);
    let doc = read_json(&dir.path().join("bell_sweep.json"));
    let pts = doc["points"].as_array().unwrap();
    let weak = pts[0]["final"]["phi_plus"].as_f64().unwrap();
    let strong = pts[1]["final"]["phi_plus"].as_f64().unwrap();
    assert!(weak < strong);
}

#[test]
fn solve_timing_reports_the_first_solution() {
    let out = rydpump(&["solve-timing", "--omega", "2"]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    // δ = Ω_a/√6 for (k, l, j) = (1, 5, 7).
    assert!((v["delta_mhz"].as_f64().unwrap() - 2.0 / 6f64.sqrt()).abs() < 1e-9);
    assert_eq!((v["k"].as_u64(), v["l"].as_u64(), v["j"].as_u64()), (Some(1), Some(5), Some(7)));
    for r in v["residuals"].as_array().unwrap() {
        assert!(r.as_f64().unwrap().abs() < 1e-9);
    }
    let t2 = v["t_us"].as_f64().unwrap();
    let out = rydpump(&["solve-timing", "--omega", "4"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["t_us"].as_f64().unwrap() - t2 / 2.0).abs() < 1e-12);
    assert_eq!(rydpump(&["solve-timing", "--omega", "-1"]).status.code(), Some(2));
}

#[test]
fn plot_writes_valid_svg_with_one_curve_per_observable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), "c.json", SHORT_BELL);
    assert!(rydpump(&["run", "--config", &cfg, "--out-dir", d]).status.success());
    let svg = dir.path().join("bell.svg");
    let out = rydpump(&["plot", "--in", dir.path().join("bell.csv").to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&svg).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    for label in ["phi_plus", "phi_minus", "psi_plus", "psi_minus"] {
        assert!(doc.descendants().any(|n| n.text().map(str::trim) == Some(label)), "legend lacks {label}");
    }
    let curves = rydpump_cli::plot::read_curves(&dir.path().join("bell.csv"), rydpump_cli::plot::Panel::Cycle).unwrap();
    assert_eq!(curves.len(), 4);
}

#[test]
fn plot_rejects_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    fs::write(&csv, "time_us,cycle,segment,phi_plus,trace_error,hermiticity_error\n").unwrap();
    let out = rydpump(&["plot", "--in", csv.to_str().unwrap(), "--out", dir.path().join("e.svg").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_cold_trajectory_matches_the_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"protocol": {"name": "bell", "cycles": 4}, "noise": {"temperatures_uk": [0.0], "trajectories": 1}}"#,
    );
    assert!(rydpump(&["run", "--config", &cfg, "--out-dir", d]).status.success());
    assert!(rydpump(&["mc", "--config", &cfg, "--out-dir", d]).status.success());
    let run = read_json(&dir.path().join("bell.json"))["summary"]["final"]["phi_plus"].as_f64().unwrap();
    let mc = &read_json(&dir.path().join("bell_mc.json"))["temperatures"][0];
    assert!((mc["mean"].as_f64().unwrap() - run).abs() < 1e-9);
    assert_eq!(mc["std"].as_f64(), Some(0.0));
}

#[test]
fn embedded_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("ghz3_fig2c.json");
    let out = rydpump(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", a.path().to_str().unwrap()]);
    assert!(out.status.success());
    let meta = &read_json(&a.path().join("ghz3_fig2c.json"))["metadata"];
    assert_eq!(meta["command"], "run");
    assert_eq!(meta["config_sha256"].as_str().unwrap().len(), 64);
    let again = b.path().join("again.json");
    fs::write(&again, serde_json::to_string_pretty(&meta["config"]).unwrap()).unwrap();
    let out = rydpump(&["run", "--config", again.to_str().unwrap(), "--out-dir", b.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(
        fs::read(a.path().join("ghz3_fig2c.csv")).unwrap(),
        fs::read(b.path().join("ghz3_fig2c.csv")).unwrap()
    );
}

#[test]
fn bundled_configs_all_parse() {
    let mut n = 0;
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = rydpump_cli::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.prepare().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        for axis in &cfg.sweep {
            for &v in &axis.values {
                cfg.with_param(&axis.param, v).unwrap().prepare().unwrap();
            }
        }
        n += 1;
    }
    assert!(n >= 10);
}

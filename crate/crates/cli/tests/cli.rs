use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn emskin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emskin"))
        .args(args)
        .output()
        .expect("spawn emskin")
}

fn path_arg(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn pencil_config(p: usize, theta_count: usize, phi_count: usize) -> Value {
    json!({
        "version": 1,
        "scenario": {
            "grid": {"p": p, "q": p, "center_height_m": 0.0},
            "observation": {"kind": "angular_grid", "theta_min_deg": 0, "theta_max_deg": 90, "theta_count": theta_count,
                            "phi_min_deg": -90, "phi_max_deg": 0, "phi_count": phi_count}
        },
        "atoms": {"substrate": "paper"},
        "target": {"kind": "pencil_beam", "theta_refl_deg": 30, "phi_refl_deg": -45},
        "synthesis": {"max_outer": 100, "seed": 1}
    })
}

fn write_config(dir: &TempDir, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

/// Minimum 20 log10 |gamma_te| read straight from a database CSV.
fn min_te_db(csv: &Path) -> f64 {
    let text = std::fs::read_to_string(csv).unwrap();
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            10.0 * (f[1] * f[1] + f[2] * f[2]).log10()
        })
        .fold(f64::INFINITY, f64::min)
}

fn summary_rows(dir: &Path) -> Vec<(f64, f64, String)> {
    let text = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("value,P_max,phi_final,delta_e_db,status"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[4].to_string())
        })
        .collect()
}

#[test]
fn generate_paper_database_reaches_the_dip() {
    let dir = TempDir::new().unwrap();
    let out = emskin(&[
        "atomdb",
        "generate",
        "--substrate",
        "paper",
        "--cell",
        "0.02725",
        "--step",
        "1e-4",
        "--out",
        path_arg(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("atomdb.csv");
    let dip = min_te_db(&csv);
    assert!((dip + 23.5).abs() <= 0.05, "dip {dip} dB");
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("atomdb.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["entries"], 273);
}

#[test]
fn generate_isola_database_stays_above_floor() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("isola.csv");
    let out = emskin(&[
        "atomdb",
        "generate",
        "--substrate",
        "isola",
        "--cell",
        "0.02725",
        "--out",
        path_arg(&csv),
    ]);
    assert!(out.status.success());
    assert!(min_te_db(&csv) >= -11.7);
}

#[test]
fn validate_flags_descending_descriptors() {
    let dir = TempDir::new().unwrap();
    let good = dir.path().join("db.csv");
    assert!(emskin(&["atomdb", "generate", "--substrate", "paper", "--out", path_arg(&good)])
        .status
        .success());
    assert_eq!(emskin(&["atomdb", "validate", path_arg(&good)]).status.code(), Some(0));

    let text = std::fs::read_to_string(&good).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, format!("{}\n{}\n{}\n", lines[0], lines[5], lines[4])).unwrap();
    let out = emskin(&["atomdb", "validate", path_arg(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&out.stderr).contains(":3:"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_preset_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let out = emskin(&["atomdb", "generate", "--substrate", "gold", "--out", path_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let mut cfg = pencil_config(4, 10, 8);
    cfg["synthesis"]["eta_svd"] = json!(0.0);
    let eta0 = write_config(&dir, "eta0.json", &cfg);
    let out = emskin(&["synthesize", "--config", path_arg(&eta0), "--out", path_arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eta_svd"));

    let mut cfg = pencil_config(4, 10, 8);
    cfg["colour"] = json!("red");
    let extra = write_config(&dir, "extra.json", &cfg);
    assert_eq!(emskin(&["synthesize", "--config", path_arg(&extra)]).status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    assert_eq!(emskin(&["synthesize", "--config", path_arg(&missing)]).status.code(), Some(2));
}

#[test]
fn synthesize_writes_every_artefact_and_is_thread_independent() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.json", &pencil_config(6, 19, 10));
    let mut results = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = emskin(&[
            "--threads",
            threads,
            "synthesize",
            "--config",
            path_arg(&cfg),
            "--seed",
            "5",
            "--out",
            path_arg(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert!(stdout.contains("P_max") && stdout.contains("Phi_final"));
        for f in [
            "result.json",
            "pi_result.json",
            "spectrum.csv",
            "spectrum.meta.json",
            "layout_opt.csv",
            "layout_pi.csv",
            "field_opt.csv",
            "field_pi.csv",
            "power_improvement.csv",
            "power_improvement.meta.json",
            "cut_opt.csv",
        ] {
            assert!(out.join(f).exists(), "missing {f}");
        }
        results.push(std::fs::read(out.join("result.json")).unwrap());
    }
    assert_eq!(results[0], results[1]);
    let result: Value = serde_json::from_slice(&results[0]).unwrap();
    assert_eq!(result["seed"], 5);
    assert_eq!(result["config_hash"].as_str().unwrap().len(), 64);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("t1/power_improvement.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_hash"], result["config_hash"]);
}

#[test]
fn analyze_reproduces_the_maps() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.json", &pencil_config(6, 19, 10));
    let run = dir.path().join("run");
    assert!(emskin(&["synthesize", "--config", path_arg(&cfg), "--out", path_arg(&run)])
        .status
        .success());
    let again = dir.path().join("again");
    let o = emskin(&[
        "analyze",
        "--config",
        path_arg(&cfg),
        "--result",
        path_arg(&run.join("result.json")),
        "--out",
        path_arg(&again),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "field_opt.csv",
        "field_pi.csv",
        "power_improvement.csv",
        "power_improvement.meta.json",
        "cut_pi.csv",
    ] {
        assert_eq!(std::fs::read(run.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn spectrum_of_the_35_aperture_truncates_in_band() {
    let dir = TempDir::new().unwrap();
    let mut cfg = pencil_config(35, 46, 37);
    cfg["synthesis"]["max_outer"] = json!(1);
    let path = write_config(&dir, "p35.json", &cfg);
    let out = dir.path().join("out");
    assert!(emskin(&["synthesize", "--config", path_arg(&path), "--out", path_arg(&out)])
        .status
        .success());
    let text = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    let s_th = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap())
        .take_while(|&v| v >= 0.1)
        .count();
    assert!((250..=450).contains(&s_th), "s_th = {s_th}");
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("spectrum.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["s_th"], s_th);
}

#[test]
fn empty_sweep_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.json", &pencil_config(4, 10, 8));
    let out = emskin(&[
        "sweep",
        "aperture",
        "--config",
        path_arg(&cfg),
        "--values",
        "--out",
        path_arg(&dir.path().join("s")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = emskin(&[
        "sweep",
        "angle",
        "--config",
        path_arg(&cfg),
        "--out",
        path_arg(&dir.path().join("s")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn angle_sweep_on_a_contour_target_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut cfg = pencil_config(4, 10, 8);
    cfg["scenario"]["grid"]["center_height_m"] = json!(5.0);
    cfg["scenario"]["observation"] =
        json!({"kind": "floor_plane", "x_min_m": -3, "x_max_m": 3, "x_count": 7, "y_min_m": -3, "y_max_m": 3, "y_count": 7});
    cfg["target"] = json!({"kind": "contour", "polygons": [[[0, 0], [2, 0], [2, 2]]]});
    let path = write_config(&dir, "contour.json", &cfg);
    let out = emskin(&[
        "sweep",
        "angle",
        "--config",
        path_arg(&path),
        "--values",
        "20",
        "--out",
        path_arg(&dir.path().join("s")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_runs_are_seeded_per_index() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.json", &pencil_config(6, 19, 10));
    let out = dir.path().join("s");
    let o = emskin(&[
        "sweep",
        "angle",
        "--config",
        path_arg(&cfg),
        "--values",
        "30,30",
        "--out",
        path_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let seed = |i: usize| {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(out.join(format!("run_{i:03}_30/result.json"))).unwrap()).unwrap();
        v["seed"].as_u64().unwrap()
    };
    assert_ne!(seed(0), seed(1));
    assert_eq!(seed(0), emskin::synthesis::derive_seed(1, 0));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn angle_sweep_improves_at_both_elevations() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "p35.json", &pencil_config(35, 46, 37));
    let out = dir.path().join("angle");
    let o = emskin(&[
        "sweep",
        "angle",
        "--config",
        path_arg(&cfg),
        "--values",
        "20,50",
        "--out",
        path_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = summary_rows(&out);
    assert_eq!(rows.len(), 2);
    for (value, p_max, status) in rows {
        assert_eq!(status, "ok");
        assert!(p_max > 0.0, "theta {value}: P_max {p_max}");
    }
}

#[test]
fn aperture_sweep_favours_the_smaller_skin() {
    let dir = TempDir::new().unwrap();
    let mut cfg = pencil_config(15, 46, 37);
    cfg["synthesis"]["restarts"] = json!(16);
    let path = write_config(&dir, "sweep.json", &cfg);
    let out = dir.path().join("aperture");
    let o = emskin(&[
        "sweep",
        "aperture",
        "--config",
        path_arg(&path),
        "--values",
        "15,35",
        "--out",
        path_arg(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = summary_rows(&out);
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![15.0, 35.0]);
    assert!(rows.iter().all(|r| r.2 == "ok"));
    let (p15, p35) = (rows[0].1, rows[1].1);
    assert!(p15 > p35 && p35 > 0.0, "P_max(15) = {p15}, P_max(35) = {p35}");
    assert!(out.join("run_000_15/result.json").exists() && out.join("run_001_35/power_improvement.csv").exists());
}

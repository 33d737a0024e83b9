use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn nfield(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nfield"))
        .args(args)
        .current_dir(dir)
        .env_remove("NFIELD_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn certify_config(alpha: f64) -> Value {
    json!({
        "space": {"bounds": [[0.0, 1.0]], "points": [65]},
        "kernel": {"profile": {"kind": "constant", "value": 1.0}},
        "activation": {"kind": "logistic"},
        "noise": {"kind": "pointwise", "map": {"kind": "tanh"}, "scale": 0.1},
        "dynamics": {"alpha": alpha, "horizon": 1.0, "dt": 0.01},
        "experiment": {"kind": "certify"}
    })
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn rank_one_logistic_certificate_passes_at_unit_decay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &certify_config(1.0));
    let o = nfield(&["run", cfg.to_str().unwrap(), "--output-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cert = read_json(&dir.path().join("out/certificate.json"));
    let erg = &cert["certificates"]["ergodicity"];
    let lambda_tilde = 2.0 * 2f64.sqrt() * 0.25 + 0.1;
    assert!((erg["constants"]["lambda_tilde"].as_f64().unwrap() - lambda_tilde).abs() < 1e-9);
    assert!((erg["margin"].as_f64().unwrap() - (2.0 - lambda_tilde)).abs() < 1e-9);
    assert_eq!(cert["passed"], json!(true));
    let manifest = read_json(&dir.path().join("out/manifest.json"));
    assert_eq!(manifest["experiment"], json!("certify"));
    assert_eq!(manifest["artifacts"], json!(["certificate.json"]));
}

#[test]
fn slow_decay_fails_with_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &certify_config(0.3));
    let o = nfield(&["run", cfg.to_str().unwrap(), "--output-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let cert = read_json(&dir.path().join("out/certificate.json"));
    assert!(cert["certificates"]["ergodicity"]["margin"].as_f64().unwrap() < 0.0);
}

#[test]
fn unknown_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = certify_config(1.0);
    v["dynamics"]["alpah"] = json!(1.0);
    let cfg = write(dir.path(), "c.json", &v);
    let o = nfield(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpah"), "{}", stderr(&o));
}

#[test]
fn mexican_hat2_width_constraint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = certify_config(1.0);
    v["kernel"] = json!({"profile": {"kind": "mexican_hat2", "amplitude": 0.5, "width": 1.0}});
    let cfg = write(dir.path(), "c.json", &v);
    let o = nfield(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("√2 ≤ s ≤ √2/A"), "{}", stderr(&o));
}

#[test]
fn discontinuous_rate_cannot_be_certified() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = certify_config(1.0);
    v["activation"] = json!({"kind": "heaviside"});
    let cfg = write(dir.path(), "c.json", &v);
    let o = nfield(&["validate", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not Lipschitz"), "{}", stderr(&o));
}

#[test]
fn validate_summarizes_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &certify_config(1.0));
    let o = nfield(&["validate", cfg.to_str().unwrap(), "--output-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("ok"));
    assert!(text.contains("preview Ergodicity"));
    assert!(!dir.path().join("out").exists());
}

fn simulate_config() -> Value {
    json!({
        "space": {"bounds": [[-1.0, 1.0]], "points": [17]},
        "kernel": {"profile": {"kind": "gaussian", "metric": [1.0]}, "norm": 0.5},
        "activation": {"kind": "logistic"},
        "noise": {"kind": "additive", "sigma": [0.3, 0.2], "basis": "cosine"},
        "dynamics": {"alpha": 1.0, "horizon": 1.0, "dt": 0.05, "n_paths": 8, "record_stride": 4},
        "experiment": {"kind": "simulate", "initial": {"kind": "cosine", "mode": 1, "amplitude": 0.5}},
        "seed": 11
    })
}

#[test]
fn manifest_replay_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", &simulate_config());
    let o = nfield(
        &["run", cfg.to_str().unwrap(), "--output-dir", "a", "--threads", "3"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let manifest = dir.path().join("a/manifest.json");
    let o = nfield(&["run", manifest.to_str().unwrap(), "--output-dir", "b"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let listed = read_json(&manifest)["artifacts"].clone();
    assert_eq!(listed, json!(["trajectory.csv", "ensemble.csv", "trajectory.json"]));
    for name in listed.as_array().unwrap() {
        let name = name.as_str().unwrap();
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs on replay");
    }
    let header = std::fs::read_to_string(dir.path().join("a/trajectory.csv")).unwrap();
    assert!(header.starts_with("time,node_0,"));
}

#[test]
fn seed_override_changes_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", &simulate_config());
    for (seed, out) in [("1", "x"), ("2", "y")] {
        let o = nfield(
            &["run", cfg.to_str().unwrap(), "--seed", seed, "--output-dir", out],
            dir.path(),
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("x/trajectory.csv")).unwrap();
    let b = std::fs::read(dir.path().join("y/trajectory.csv")).unwrap();
    assert_ne!(a, b);
    assert_eq!(read_json(&dir.path().join("y/manifest.json"))["seed"], json!(2));
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &certify_config(1.0));
    let o = Command::new(env!("CARGO_BIN_EXE_nfield"))
        .args(["run", cfg.to_str().unwrap()])
        .current_dir(dir.path())
        .env("NFIELD_OUTPUT_DIR", dir.path().join("env"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("env/certify/certificate.json").exists());
}

#[test]
fn spectrum_exports_sorted_eigenvalues_and_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({
        "space": {"bounds": [[-2.0, 2.0]], "points": [33]},
        "kernel": {"profile": {"kind": "gaussian", "metric": [1.0]}},
        "experiment": {"kind": "spectrum", "eigenvectors": true}
    });
    let cfg = write(dir.path(), "k.json", &v);
    let o = nfield(&["run", cfg.to_str().unwrap(), "--output-dir", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/spectrum.csv")).unwrap();
    let eig: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(eig.len(), 33);
    assert!(eig.windows(2).all(|w| w[0] >= w[1]));
    let (rows, cols, _) = nfield_cli::io::read_dense_binary(&dir.path().join("out/eigenvectors.bin")).unwrap();
    assert_eq!((rows, cols), (33, 33));
    assert_eq!(
        read_json(&dir.path().join("out/spectrum.json"))["definiteness"]["verdict"],
        json!("non_negative")
    );
}

#[test]
fn coupling_and_invariant_measure_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = simulate_config();
    v["experiment"] = json!({
        "kind": "couple",
        "v": {"kind": "constant", "value": 1.0},
        "z": {"kind": "constant", "value": -1.0}
    });
    let cfg = write(dir.path(), "c.json", &v);
    let o = nfield(&["run", cfg.to_str().unwrap(), "--output-dir", "c"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = read_json(&dir.path().join("c/coupling.json"));
    assert!(report["bound_rate"].as_f64().is_some(), "{report}");

    v["experiment"] = json!({
        "kind": "invariant",
        "initial": {"kind": "constant", "value": 0.0},
        "horizons": [2.0, 4.0]
    });
    let cfg = write(dir.path(), "i.json", &v);
    let o = nfield(&["run", cfg.to_str().unwrap(), "--output-dir", "i"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let kb = read_json(&dir.path().join("i/kb.json"));
    assert!(kb["second_moment"].is_object(), "{kb}");
    let lines = std::fs::read_to_string(dir.path().join("i/kb.csv")).unwrap();
    assert_eq!(lines.lines().count(), 3);
}

fn particle_section() -> Value {
    json!({
        "populations": [40, 40],
        "w_tilde": [[0.5, -0.2], [0.3, 0.1]],
        "alpha": 1.0,
        "rate": {"kind": "logistic"},
        "horizon": 2.0,
        "dt_report": 0.5,
        "initial": [{"law": "constant", "value": 0.0}, {"law": "uniform", "low": -1.0, "high": 1.0}]
    })
}

#[test]
fn particle_and_meanfield_comparison_run() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({"experiment": {"kind": "particle", "particle": particle_section()}, "seed": 3});
    let cfg = write(dir.path(), "p.json", &v);
    let o = nfield(&["run", cfg.to_str().unwrap(), "--output-dir", "p"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = std::fs::read_to_string(dir.path().join("p/population.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 5 * 2);

    let v = json!({"experiment": {"kind": "compare", "particle": particle_section(), "n_runs": 6, "dt": 0.05, "bootstrap": 50}});
    let cfg = write(dir.path(), "m.json", &v);
    let o = nfield(&["run", cfg.to_str().unwrap(), "--output-dir", "m"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = read_json(&dir.path().join("m/meanfield.json"));
    assert!(r["max_discrepancy"].as_f64().unwrap().is_finite());
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let o = nfield(&["validate", path.to_str().unwrap()], root.as_path());
            assert_eq!(o.status.code(), Some(0), "{}: {}", path.display(), stderr(&o));
            seen += 1;
        }
    }
    assert!(seen >= 8);
}

#[test]
fn monotone_coupling_in_the_nonlocal_norm() {
    let dir = tempfile::tempdir().unwrap();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/monotone.json");
    let o = nfield(&["run", root.to_str().unwrap(), "--output-dir", "m"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = read_json(&dir.path().join("m/coupling.json"));
    assert_eq!(r["norm"], json!("h1"));
    assert!((r["bound_rate"].as_f64().unwrap() + 1.4).abs() < 1e-9);
    assert_eq!(r["rate_within_bound"], json!(true));
}

use std::path::Path;
use std::process::{Command, Output};

use nlc2d::series::read_energy_csv;
use nlc2d::{read_snapshot, write_snapshot, Snapshot};
use nlc2d_core::diagnostics::total_energy;
use nlc2d_core::experiments::{make_bubble, BubbleSpec};
use nlc2d_core::{Grid2D, State};

const BASE: &str = r#"
[domain]
type = "torus"
nx = 32

[manifold]
kind = "sphere"

[scheme]
variant = "gl"
eps = 0.2
t_end = 0.05

[initial]
director = "smooth"
"#;

fn nlc2d(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlc2d")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn out_override(dir: &Path, name: &str) -> String {
    format!("output.directory={:?}", dir.join(name).display().to_string())
}

#[test]
fn validate_config_echoes_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), BASE);
    let out = nlc2d(&["validate-config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("cfl_safety = 0.5") && text.contains("delta0_sq = 1.0"), "{text}");
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &BASE.replace("eps = 0.2", "eps = 0.2\nepsilon = 0.1"));
    let out = nlc2d(&["validate-config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("epsilon") && err.contains("line 12"), "{err}");
    let cfg = write_config(dir.path(), BASE);
    let out = nlc2d(&["validate-config", &cfg, "--set", "scheme.cfl_safety=2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("scheme"));
    let out = nlc2d(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn constant_run_writes_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("director = \"smooth\"", "director = \"constant\"\nvalue = [0.0, 0.6, 0.8]");
    let cfg = write_config(dir.path(), &text);
    let out = nlc2d(&["run", &cfg, "-s", &out_override(dir.path(), "out"), "-s", "scheme.t_end=0.05", "-s", "scheme.dt=0.005", "-s", "output.snapshot_every=5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_energy_csv(&dir.path().join("out/energy.csv")).unwrap();
    assert_eq!(rows.len(), 11);
    for r in &rows {
        let first = &rows[0];
        for (a, b) in [(r.kinetic, first.kinetic), (r.dirichlet, first.dirichlet), (r.total, first.total), (r.dist_max, first.dist_max)] {
            assert!((a - b).abs() <= 1e-12);
        }
    }
    for f in ["final.snap", "energy.gp", "config.toml", "snapshots/step_000000.snap", "snapshots/step_000010.snap"] {
        assert!(dir.path().join("out").join(f).exists(), "{f}");
    }
    let snap = read_snapshot(&dir.path().join("out/final.snap")).unwrap();
    assert!((snap.state.t - 0.05).abs() <= 1e-12);
}

#[test]
fn numerical_failure_exits_three_with_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("director = \"smooth\"", "director = \"smooth\"\nvelocity = \"taylor-green\"\nvelocity_amplitude = 1000.0");
    let cfg = write_config(dir.path(), &text);
    let out = nlc2d(&["run", &cfg, "-s", &out_override(dir.path(), "out")]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("step 1") && err.contains("courant"), "{err}");
}

#[test]
fn diagnose_matches_the_in_memory_energy() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid2D::torus(64).unwrap();
    let v = make_bubble(&BubbleSpec::new((0.5, 0.5), 0.1), &grid).unwrap();
    let state = State::at_rest(&grid, v);
    let expected = total_energy(&grid, &state, None, None).dirichlet;
    let path = dir.path().join("bubble.snap");
    write_snapshot(&path, &Snapshot::new(grid, state)).unwrap();
    let out = nlc2d(&["diagnose", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["schema"], "nlc2d.diagnostics/1");
    assert_eq!(json["energy"]["dirichlet"].as_f64().unwrap().to_bits(), expected.to_bits());
    assert!(!json["concentration"]["flagged"].as_array().unwrap().is_empty());
    let garbage = dir.path().join("garbage.snap");
    std::fs::write(&garbage, b"not a snapshot").unwrap();
    assert_eq!(nlc2d(&["diagnose", garbage.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn compare_reports_distances() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid2D::torus(32).unwrap();
    let a = State::at_rest(&grid, make_bubble(&BubbleSpec::new((0.5, 0.5), 0.2), &grid).unwrap());
    let b = State::at_rest(&grid, make_bubble(&BubbleSpec::new((0.5, 0.5), 0.25), &grid).unwrap());
    let (pa, pb) = (dir.path().join("a.snap"), dir.path().join("b.snap"));
    write_snapshot(&pa, &Snapshot::new(grid, a)).unwrap();
    write_snapshot(&pb, &Snapshot::new(grid, b)).unwrap();
    let same = nlc2d(&["compare", pa.to_str().unwrap(), pa.to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(json["v_l2"].as_f64(), Some(0.0));
    let diff = nlc2d(&["compare", pa.to_str().unwrap(), pb.to_str().unwrap()]);
    let json: serde_json::Value = serde_json::from_slice(&diff.stdout).unwrap();
    assert!(json["v_l2"].as_f64().unwrap() > 0.01 && json["v_h1_seminorm"].as_f64().unwrap() > 0.1);
    assert_eq!(json["u_l2"].as_f64(), Some(0.0));
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{BASE}\n[diagnostics.test_function]\ncenter = [0.5, 0.5]\ninner = 0.1\nouter = 0.3\n\n[sweep]\neps = [0.4, 0.3, 0.2]\n"
    );
    let cfg = write_config(dir.path(), &text);
    let mut reports = Vec::new();
    for (threads, name) in [(1, "one"), (3, "three")] {
        let out = nlc2d(&["sweep", &cfg, "-s", &out_override(dir.path(), name), "-s", &format!("sweep.threads={threads}"), "-s", "scheme.t_end=0.01"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read_to_string(dir.path().join(name).join("sweep.json")).unwrap());
        for m in ["member_00_eps_0.4", "member_01_eps_0.3", "member_02_eps_0.2"] {
            assert!(dir.path().join(name).join(m).join("energy.csv").exists());
            assert!(dir.path().join(name).join(m).join("final.snap").exists());
        }
        assert!(dir.path().join(name).join("defects.gp").exists());
    }
    assert_eq!(reports[0], reports[1]);
    let json: serde_json::Value = serde_json::from_str(&reports[0]).unwrap();
    assert_eq!(json["l2_differences"].as_array().unwrap().len(), 2);
}

#[test]
fn demos_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("c");
    let out = nlc2d(&["demo-compactness", "--nx", "128", "--eps", "0.08,0.06,0.04", "--out", c.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["defects"]["gamma"].as_f64().unwrap() > 10.0);
    for f in ["compactness.json", "defects.csv", "hopf.csv", "defects.gp", "hopf.gp"] {
        assert!(c.join(f).exists(), "{f}");
    }
    let b = dir.path().join("b");
    let out = nlc2d(&["demo-biaxial", "--nx", "16", "--t-end", "0.002", "--out", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["projected"]["max_orthogonality"].as_f64().unwrap() <= 1e-12);
    assert!(b.join("energy_gl.csv").exists() && b.join("energy_projected.gp").exists());
}

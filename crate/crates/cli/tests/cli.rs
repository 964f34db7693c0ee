use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use saddlepath_cli::config::ExperimentConfig;
use saddlepath_cli::BUNDLED;

fn saddlepath(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saddlepath"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn bundled_configs_round_trip() {
    for (name, text) in BUNDLED {
        let cfg = ExperimentConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let normal = cfg.to_toml();
        let again = ExperimentConfig::parse(&normal).unwrap();
        assert_eq!(again, cfg, "{name}");
        assert_eq!(again.to_toml(), normal, "{name}");
        assert_eq!(again.hash(), cfg.hash());
        cfg.validate(Path::new("/nonexistent")).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn empty_task_list_succeeds_with_empty_tree() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "empty.toml", "name = \"empty\"\nmodel = \"eckart-1dof\"\ntasks = []\n");
    let out = saddlepath(&["run", &cfg, "--out", "out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(files(&tmp.path().join("out")).is_empty());
}

#[test]
fn schema_errors_exit_2_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("name = \"x\"\nmodel = \"eckart-1dof\"\ntasks = []\n[grid]\nt = 10.0\nm = 401\n", "grid"),
        ("name = \"x\"\nmodel = \"eckart-1dof\"\ntasks = [\"hyp-traj\"]\n[grid]\nt = 10.0\nn = \"many\"\n", "grid.n"),
        ("name = \"x\"\nmodel = \"eckart-1dof\"\ntasks = [\"classify\"]\n", "tasks[0]"),
        ("name = \"x\"\nmodel = \"roll-heave-2dof\"\ntasks = [\"fit-graphs\"]\n", "tasks[0]"),
        ("name = \"x\"\nmodel = \"eckart-1dof\"\ntasks = []\n[forcing]\nkind = \"ou\"\n", "forcing.kind"),
        ("name = \"x\"\nmodel = \"roll-heave-2dof\"\ntasks = []\n[parameters]\nk = 1.0\n", "parameters.k"),
    ];
    for (i, (text, path)) in cases.iter().enumerate() {
        let cfg = write_config(tmp.path(), &format!("bad{i}.toml"), text);
        let out = saddlepath(&["run", &cfg, "--out", "out"], tmp.path());
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(2), "case {i}: {err}");
        assert!(err.contains(path), "case {i}: {err}");
    }
    let out = saddlepath(&["run", "no-such-config"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn prerequisites_on_disk_are_loaded() {
    let tmp = tempfile::tempdir().unwrap();
    let base = "name = \"p\"\nmodel = \"eckart-1dof\"\n[parameters]\nk = 0.0\n[sampling]\nbound = 0.5\ncount = 5\n";
    let later = write_config(tmp.path(), "later.toml", &format!("tasks = [\"manifold-sample\"]\n{base}"));
    assert_eq!(saddlepath(&["run", &later, "--out", "out"], tmp.path()).status.code(), Some(2));
    let first = write_config(tmp.path(), "first.toml", &format!("tasks = [\"hyp-traj\"]\n{base}"));
    assert!(saddlepath(&["run", &first, "--out", "out"], tmp.path()).status.success());
    let out = saddlepath(&["run", &later, "--out", "out"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("out/manifold-samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn curve_explosion_exits_3_and_keeps_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "name = \"boom\"\nmodel = \"eckart-1dof\"\ntasks = [\"hyp-traj\", \"advect-check\"]\n[forcing]\nkind = \"quasi\"\n[advect]\nmax_points = 110\nt_stable = 4.25\nt_unstable = -6.0\n";
    let cfg = write_config(tmp.path(), "boom.toml", text);
    let out = saddlepath(&["run", &cfg, "--out", "out"], tmp.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let kept = files(&tmp.path().join("out"));
    assert!(kept.contains(&"hyp-traj.csv".to_string()));
    assert!(kept.contains(&"advect-summary.json".to_string()));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "name = \"det\"\nmodel = \"roll-heave-2dof\"\nseed = 4\ntasks = [\"hyp-traj\", \"manifold-sample\", \"fit-graphs\", \"classify\", \"integrity\"]\n[forcing]\nkind = \"ou\"\n[sampling]\ncount = 3\n[classify]\nsamples = 200\n[integrity]\nsamples = 400\n";
    let cfg = write_config(tmp.path(), "det.toml", text);
    for dir in ["a", "b"] {
        let out = saddlepath(&["run", &cfg, "--out", dir, "--threads", "2"], tmp.path());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let names = files(&a);
    assert_eq!(names, files(&b));
    assert!(names.contains(&"classify.csv".to_string()));
    for f in &names {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_config_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "name = \"s\"\nmodel = \"roll-heave-2dof\"\nseed = 1\ntasks = [\"hyp-traj\"]\n[forcing]\nkind = \"ou\"\n";
    let cfg = write_config(tmp.path(), "s.toml", text);
    assert!(saddlepath(&["run", &cfg, "--out", "one"], tmp.path()).status.success());
    assert!(saddlepath(&["run", &cfg, "--out", "two", "--seed", "2"], tmp.path()).status.success());
    let read = |d: &str, f: &str| fs::read_to_string(tmp.path().join(d).join(f)).unwrap();
    assert_ne!(read("one", "forcing.csv"), read("two", "forcing.csv"));
    let meta: serde_json::Value = serde_json::from_str(&read("two", "hyp-traj-plus.csv.meta.json")).unwrap();
    assert_eq!(meta["seed"], 2);
    assert_eq!(meta["file"], "hyp-traj-plus.csv");
    assert_eq!(meta["details"]["newton"]["converged"], true);
    let one: serde_json::Value = serde_json::from_str(&read("one", "forcing.csv.meta.json")).unwrap();
    assert_ne!(one["config_hash"], meta["config_hash"]);
}

#[test]
fn subcommand_writes_trajectory_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = saddlepath(&["hyp-traj", "--model", "eckart", "--k", "1", "--forcing", "quasi", "--out", "h"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("h/hyp-traj.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2"));
    assert_eq!(lines.count(), 401);
}

#[test]
fn tube_section_area_matches_period_times_energy_excess() {
    let tmp = tempfile::tempdir().unwrap();
    let out = saddlepath(&["auto-flux", "--out", "f"], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let flux: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("f/flux.json")).unwrap()).unwrap();
    let (e, period) = (flux["energy"].as_f64().unwrap(), flux["period"].as_f64().unwrap());
    // The saddle (1, 1) of the h = 1 model has energy 1/4; near it the orbit's action is T * dE.
    let expected = period * (e - 0.25);
    for branch in ["stable", "unstable"] {
        let area = flux[branch]["section_area"].as_f64().unwrap();
        assert!((area - expected).abs() < 0.01 * expected, "{branch}: {area} vs {expected}");
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn golden_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn cbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbc"))
        .args(args)
        .output()
        .expect("running cbc")
}

fn run(cmd: &str, scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, scenario.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cbc(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn write_scenario(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Compare `files` under `out` with the checked-in copies; `UPDATE_GOLDEN=1`
/// rewrites them instead.
fn check_golden(case: &str, out: &Path, files: &[&str]) {
    let dir = golden_root().join(case);
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for f in files {
        let got = fs::read_to_string(out.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        let want_path = dir.join(f);
        if update {
            fs::create_dir_all(want_path.parent().unwrap()).unwrap();
            fs::write(&want_path, &got).unwrap();
            continue;
        }
        let want = fs::read_to_string(&want_path)
            .unwrap_or_else(|e| panic!("{}: {e} (run with UPDATE_GOLDEN=1)", want_path.display()));
        assert_eq!(got, want, "{case}/{f} differs from the golden copy");
    }
}

#[test]
fn corridor_unicycle_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("corridor", &scenarios().join("corridor_unicycle.toml"), tmp.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    check_golden(
        "corridor_unicycle",
        tmp.path(),
        &[
            "grid/p2_ar1.poly",
            "grid/p2_ar1.log",
            "grid/p2_ar1_uni.poly",
            "grid.csv",
            "obstacles.csv",
            "summary.json",
        ],
    );
}

#[test]
fn softmin_sweep_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("corridor", &scenarios().join("softmin_pair.toml"), tmp.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    check_golden(
        "softmin_pair",
        tmp.path(),
        &["softmin.csv", "softmin/exact.poly", "softmin/l2.poly", "summary.json"],
    );
    let s = summary(tmp.path());
    let first = &s["softmin"][0];
    assert_eq!(first["lambda"], 2.0);
    assert!(first["witness"]["true_min"].as_f64().unwrap() < 0.0);
}

#[test]
fn unicycle_follow_matches_golden() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("follow", &scenarios().join("follow_unicycle.toml"), tmp.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    check_golden(
        "follow_unicycle",
        tmp.path(),
        &["summary.json", "path.txt", "obstacles.csv"],
    );
    let s = summary(tmp.path());
    assert_eq!(s["reached"], true);
    assert_eq!(s["s_star_monotone"], true);
}

#[test]
fn corridor_grid_writes_every_panel() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("corridor", &scenarios().join("corridor_grid.toml"), tmp.path(), &[]);
    assert_eq!(code(&o), 0);
    for p in ["0.5", "1", "2"] {
        for a in ["0.5", "1", "2"] {
            let f = tmp.path().join(format!("grid/p{p}_ar{a}.poly"));
            assert!(f.is_file(), "{}", f.display());
        }
    }
    assert_eq!(summary(tmp.path())["panels"], 9);
}

#[test]
fn sweep_makes_one_directory_per_combination() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        "corridor",
        &scenarios().join("corridor_unicycle.toml"),
        tmp.path(),
        &["--sweep", "control.kappa=1,2", "--sweep", "barrier.r=0.3,0.4"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut names: Vec<String> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "control.kappa=1_barrier.r=0.3",
            "control.kappa=1_barrier.r=0.4",
            "control.kappa=2_barrier.r=0.3",
            "control.kappa=2_barrier.r=0.4",
        ]
    );
    for n in &names {
        assert!(tmp.path().join(n).join("summary.json").is_file());
    }
    // the un-swept run and the matching sweep cell agree
    let single = tempfile::tempdir().unwrap();
    run(
        "corridor",
        &scenarios().join("corridor_unicycle.toml"),
        single.path(),
        &[],
    );
    assert_eq!(
        fs::read_to_string(single.path().join("grid/p2_ar1.poly")).unwrap(),
        fs::read_to_string(tmp.path().join("control.kappa=1_barrier.r=0.4/grid/p2_ar1.poly")).unwrap()
    );
}

#[test]
fn invalid_inputs_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let missing = run("corridor", &tmp.path().join("nope.toml"), &out, &[]);
    assert_eq!(code(&missing), 2);

    let bad = write_scenario(
        tmp.path(),
        "bad.toml",
        "name = \"x\"\n[system]\nkind = \"fully_actuated\"\nstate = [0.0, 0.0]\n[control]\nkappa = -1.0\n",
    );
    assert_eq!(code(&run("corridor", &bad, &out, &[])), 2);

    let unknown = write_scenario(
        tmp.path(),
        "unknown.toml",
        "name = \"x\"\ncolour = 3\n[system]\nkind = \"fully_actuated\"\nstate = [0.0, 0.0]\n",
    );
    let o = run("corridor", &unknown, &out, &[]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));

    // no [follow] table
    assert_eq!(
        code(&run("follow", &scenarios().join("corridor_grid.toml"), &out, &[])),
        2
    );
    // malformed sweep
    assert_eq!(
        code(&run(
            "corridor",
            &scenarios().join("corridor_grid.toml"),
            &out,
            &["--sweep", "control.kappa"]
        )),
        2
    );
}

#[test]
fn unsafe_path_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let s = write_scenario(
        tmp.path(),
        "s.toml",
        r#"
name = "through"
[system]
kind = "fully_actuated"
state = [0.0, 0.0]
[barrier]
r = 0.5
[[obstacles]]
q = [2.0, 0.0]
[follow]
path = [[0.0, 0.0], [4.0, 0.0]]
"#,
    );
    let o = run("follow", &s, &tmp.path().join("out"), &[]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exploration_cycle_limit_exits_with_3_and_logs_the_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        "explore",
        &scenarios().join("maze.toml"),
        tmp.path(),
        &["--sweep", "explore.max_cycles=1"],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&tmp.path().join("explore.max_cycles=1"));
    assert!(s["failure"].as_str().unwrap().contains("cycle limit"));
}

#[test]
fn exploration_of_a_room_with_a_sealed_pocket() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("explore", &scenarios().join("sealed_pocket.toml"), tmp.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(tmp.path());
    assert!(s["coverage"].as_f64().unwrap() >= 0.95);
    assert!(s["min_barrier"].as_f64().unwrap() >= -1e-6);
    let cycles = s["cycles"].as_u64().unwrap() as usize;
    for i in 0..cycles {
        for f in ["map.world", "path.txt", "corridors.poly", "trajectory.csv"] {
            assert!(tmp.path().join(format!("cycle_{i:03}/{f}")).is_file());
        }
    }
    assert!(tmp.path().join("final_map.world").is_file());
}

#[test]
fn output_regulation_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run("lor", &scenarios().join("lor.toml"), tmp.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(tmp.path());
    assert!((s["closed_loop_norm"].as_f64().unwrap() - (1.0 + 2f64.sqrt())).abs() < 1e-9);
    assert!(s["regulation_residual"].as_f64().unwrap() <= 1e-10);
    assert!(s["min_barrier"].as_f64().unwrap() >= -1e-6);
    let rows = fs::read_to_string(tmp.path().join("candidates.csv")).unwrap();
    assert_eq!(rows.lines().count(), 101);
}

#[test]
fn every_scenario_file_parses() {
    let tmp = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(scenarios()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let text = fs::read_to_string(&p).unwrap();
        let cmd = ["explore", "follow", "lor", "corridor"]
            .into_iter()
            .find(|c| text.contains(&format!("[{c}]")))
            .unwrap_or_else(|| panic!("{} has no command table", p.display()));
        // an invalid sweep value on a valid file fails validation, not parsing
        let o = run(cmd, &p, &tmp.path().join("x"), &["--sweep", "control.kappa=-1"]);
        assert_eq!(code(&o), 2, "{}", p.display());
        assert!(String::from_utf8_lossy(&o.stderr).contains("kappa"), "{}", p.display());
    }
}

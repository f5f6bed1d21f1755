use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ridematch");

fn ridematch(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("RIDEMATCH_OUT_DIR")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("scenario.cfg");
    std::fs::write(
        &path,
        format!(
            "# small test city\ngrid_rows = 4\ngrid_cols = 4\nblock_m = 120\nrequest_count = 25\n\
             loading_period_s = 240\nfleet_size = 5\nct_source = work\n{extra}"
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn amdahl_prints_speedup() {
    let o = ridematch(&["amdahl", "--beta", "0.25", "--k", "4"]);
    assert!(o.status.success());
    let v: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert!((v - 2.285).abs() < 1e-3);
    let o = ridematch(&["amdahl", "--beta", "1.5", "--k", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("beta"));
}

#[test]
fn validate_names_the_bad_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tick_s = 4\ndelta_s = 30\n");
    let o = ridematch(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta_s"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "");
    let o = ridematch(&["validate", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    let o = ridematch(&["run", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).to_lowercase().contains("usage"));
    let o = ridematch(&["validate", "--config", "/definitely/not/here.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    let o = ridematch(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = ridematch(&[
            "run",
            "--config",
            &cfg,
            "--search-level",
            "2",
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "events.csv",
        "messages.csv",
        "rounds.csv",
        "requests.csv",
        "vehicles.csv",
        "report.json",
        "report.csv",
        "scenario.txt",
    ] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert!(!x.is_empty(), "{f} empty");
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let scenario = std::fs::read_to_string(a.join("scenario.txt")).unwrap();
    assert!(scenario.contains("search_level = 2"));
    assert!(scenario.contains("seed = 9"));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("env-out");
    let o = Command::new(BIN)
        .args(["run", "--config", &cfg, "--mode", "centralized"])
        .env("RIDEMATCH_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("report.json").exists());

    let o = ridematch(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_dedupes_levels_for_centralized() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("sweep");
    let o = ridematch(&[
        "sweep",
        "--config",
        &cfg,
        "--axes",
        "mode=centralized,distributed;search_level=0,3",
        "--out",
        out.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(out.join("aggregate.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let header = rdr.headers().unwrap().clone();
    let err = header.iter().position(|h| h == "error").unwrap();
    assert!(rows.iter().all(|r| r[err].is_empty()));
}

#[test]
fn json_config_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    std::fs::write(
        &path,
        r#"{"grid_rows": 3, "grid_cols": 3, "request_count": 5, "fleet_size": 2, "mode": "centralized"}"#,
    )
    .unwrap();
    let o = ridematch(&["validate", "--config", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

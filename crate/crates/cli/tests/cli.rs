use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str =
    "seed = 3\n[mesh]\nn_cells = 32\n[time]\nn_steps = 32\n[sweep]\nn_queries = 25\n";

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adaptive-hierarchy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let res = bin(&["run", &cfg, "--out-dir", out.to_str().unwrap()]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    for f in ["queries.csv", "summary.txt", "timings.svg", "model.bin"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(out.join("queries.csv")).unwrap();
    assert_eq!(csv.lines().count(), 26);
    assert!(csv.starts_with(
        "index,da,pe,model_used,wall_time,delta_rb,ml_certificate,rb_dim_after,train_size_after"
    ));
}

#[test]
fn validate_writes_a_report_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("v");
    let res = bin(&[
        "validate",
        &cfg,
        "--n",
        "5",
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        res.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let report = fs::read_to_string(out.join("validation.csv")).unwrap();
    assert_eq!(report.lines().count(), 6);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let da_column = |seed: &str| {
        let out = dir.path().join(format!("s{seed}"));
        let res = bin(&[
            "run",
            &cfg,
            "--seed",
            seed,
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert_eq!(res.status.code(), Some(0));
        let csv = fs::read_to_string(out.join("queries.csv")).unwrap();
        csv.lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().to_string())
            .collect::<Vec<_>>()
    };
    assert_eq!(da_column("3"), da_column("3"));
    assert_ne!(da_column("3"), da_column("4"));

    // a random sweep without any seed is a configuration error
    let unseeded = write_config(dir.path(), &SMALL.replace("seed = 3\n", ""));
    let res = bin(&[
        "run",
        &unseeded,
        "--out-dir",
        dir.path().join("u").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let res = bin(&[
        "run",
        &unseeded,
        "--seed",
        "1",
        "--out-dir",
        dir.path().join("u").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(0));
}

#[test]
fn config_errors_exit_2_with_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("n_cells = 32", "n_cells = 0"));
    let res = bin(&["run", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));

    let cfg = write_config(dir.path(), "seed = 1\n[mesh]\ncells = 4\n");
    let res = bin(&["run", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 3"));
}

#[test]
fn io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let res = bin(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(4));

    let cfg = write_config(dir.path(), SMALL);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let res = bin(&[
        "run",
        &cfg,
        "--out-dir",
        blocker.join("x").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(4));
}

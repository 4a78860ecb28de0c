use std::path::Path;
use std::process::{Command, Output};

fn adbo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adbo")).args(args).output().expect("spawn adbo")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_into(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--workers", "3", "--t-wall", "300", "--out", out];
    args.extend_from_slice(extra);
    adbo(&args)
}

#[test]
fn run_writes_a_report_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_into(dir.path(), &["--method", "acbo-qucb", "--benchmark", "griewank", "--dim", "2", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("method=acbo-qucb"));
    assert!(text.contains("benchmark=griewank"));
    for f in ["report.csv", "events.csv", "history.csv", "summary.txt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn repeats_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_into(&a, &["--method", "adbo-qucb", "--repeats", "2"]).status.success());
    assert!(run_into(&b, &["--method", "rd-acbo"]).status.success());
    assert!(a.join("seed-0").join("summary.txt").is_file());
    assert!(a.join("seed-1").join("summary.txt").is_file());

    let o = adbo(&["compare", dir.path().to_str().unwrap(), "--csv", "--threshold", "20"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = stdout(&o);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().any(|r| r.starts_with("ackley,adbo-qucb,3,2,")));
    assert!(rows.iter().any(|r| r.starts_with("ackley,rd-acbo,3,1,")));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "method = \"sdbo-bucb\"\nworkers = 2\nt_wall = 200.0\nseed = 3\n").unwrap();
    let o = adbo(&["run", "--config", cfg.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("method=sdbo-bucb"));
    assert!(text.contains("n_worker=2"));
    assert!(text.contains("seed=9"));
}

#[test]
fn prob_prints_the_success_probability() {
    let o =
        adbo(&["prob", "--low", "-32.768", "--high", "32.768", "--epsilon", "0.32", "--dim", "5", "--draws", "3048"]);
    assert!(o.status.success());
    let p: f64 = stdout(&o).trim().parse().unwrap();
    assert!((1e-7..=5e-7).contains(&p), "{p}");
}

#[test]
fn invalid_input_fails_cleanly() {
    let o = adbo(&["run", "--method", "seq-1", "--workers", "4"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seq-1"));
    let o = adbo(&["run", "--method", "nope"]);
    assert!(!o.status.success());
    let o = adbo(&["prob", "--low", "1", "--high", "0", "--epsilon", "0.1", "--dim", "1", "--draws", "1"]);
    assert!(!o.status.success());
}

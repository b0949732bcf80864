use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_charged-polymer"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn passing_run_exits_zero_and_summarizes() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("oracle.toml"),
        "experiment = \"oracle_check\"\nd = 3\nmax_m = 800\n",
    )
    .unwrap();
    let o = cli(
        &[
            "run",
            "oracle.toml",
            "--out",
            "results/oracle",
            "--seed",
            "42",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("chi_identity"));
    let json = std::fs::read_to_string(dir.path().join("results/oracle/results.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["master_seed"], 42);
    assert_eq!(v["verdict"], "pass");

    let o = cli(&["summarize", "results"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("oracle_check"));
}

#[test]
fn failed_gate_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "experiment = \"annealed_clt\"\nd = 3\nn = 200\nreplicas = 100\n[tolerance]\nse_gate = 1e-9\n";
    std::fs::write(dir.path().join("strict.toml"), cfg).unwrap();
    let o = cli(&["run", "strict.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL"));
    assert!(dir.path().join("out/results.json").is_file());
}

#[test]
fn invalid_config_exits_one_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "experiment = \"truncation_drift\"\nd = 2\nwalk = \"lazy_srw\"\ncharges = \"student_like:3\"\nbeta = 0.3\nalpha = 0.75\n";
    std::fs::write(dir.path().join("bad.toml"), cfg).unwrap();
    let o = cli(&["run", "bad.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(
        stderr(&o).contains("beta=0.3 outside (0, 0.25)"),
        "{}",
        stderr(&o)
    );
    assert!(!dir.path().join("results").exists());

    let o = cli(&["run", "missing.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn heavy_tail_warning_in_d1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "experiment = \"d1_annealed\"\nn = 100\nreplicas = 50\ncharges = \"student_like:5\"\nsampler_m = 100\nsamples_csv = false\n";
    std::fs::write(dir.path().join("d1.toml"), cfg).unwrap();
    let o = cli(&["run", "d1.toml", "--out", "out"], dir.path());
    assert_ne!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    assert!(!dir.path().join("out/samples.csv").exists());
}

#[test]
fn summarize_empty_directory_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["summarize", "."], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(
        &["oracle", "lazy_srw:2", "--max-m", "64", "--out", "o"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["dim"], 2);
    assert!(dir.path().join("o/oracle.csv").is_file());

    let o = cli(&["oracle", "srw", "--max-m", "10"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("walk spec"));
}

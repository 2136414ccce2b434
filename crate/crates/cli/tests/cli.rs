use std::process::Command;

use rkan::read_csv;

fn rkan() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rkan"));
    c.env_remove("RKAN_SEED");
    c
}

const SMALL: &str = r#"
[experiment]
kind = "regression"
target = "F2"

[network]
K = 2
architecture = [1, 3, 1]

[optimizer]
epochs = 5

[run]
seeds = [0, 1, 2]
"#;

#[test]
fn run_writes_one_row_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("r.csv");
    let o = rkan().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(
        stdout.lines().any(|l| l.starts_with("config ") && l.len() == 7 + 16),
        "{stdout}"
    );
    assert_eq!(stdout.lines().filter(|l| l.contains("median test_mse")).count(), 1);
    let rows = read_csv(&out).unwrap();
    assert_eq!(rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(rows.iter().all(|r| r.test_mse.is_some() && r.is_ok()));
}

#[test]
fn seeds_can_be_overridden() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = dir.path().join("r.csv");
    let o = rkan()
        .env("RKAN_SEED", "9")
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        read_csv(&out).unwrap().iter().map(|r| r.seed).collect::<Vec<_>>(),
        vec![9]
    );

    let o = rkan()
        .env("RKAN_SEED", "9")
        .args(["run", "--seeds", "4,5", "--parallel", "2"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(
        read_csv(&out).unwrap().iter().map(|r| r.seed).collect::<Vec<_>>(),
        vec![4, 5]
    );
}

#[test]
fn failures_set_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    // a two-input network cannot fit a scalar regression
    std::fs::write(&cfg, SMALL.replace("[1, 3, 1]", "[2, 3, 1]")).unwrap();
    let out = dir.path().join("r.csv");
    let o = rkan().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(!o.status.success());
    assert!(read_csv(&out).unwrap().iter().all(|r| r.status == "failed"));

    std::fs::write(&cfg, "[experiment]\nkind = \"regression\"\ntarget = \"F1\"\ntypo = 1\n").unwrap();
    let o = rkan().arg("run").arg(&cfg).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo"));
}

#[test]
fn gradcheck_command() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.csv");
    let o = rkan().arg("gradcheck").arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    let rows = read_csv(&out).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.max_abs_err.unwrap() < 1e-5));
}

#[test]
fn unknown_replication() {
    let o = rkan().args(["replicate", "table4"]).output().unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("table5"));
}

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_arz-etc"))
}

#[test]
fn run_writes_outputs_and_table_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args([
            "run",
            "ci-coarse",
            "--horizon",
            "0.01",
            "--controller",
            "P-CETC",
            "--c",
            "1",
        ])
        .env("ARZ_ETC_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("ci-coarse").join("P-CETC_c1");
    for f in ["trace.csv", "events.csv", "summary.csv", "report.toml"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let report = std::fs::read_to_string(run_dir.join("report.toml")).unwrap();
    assert!(report.contains("theta_m"));

    let table = bin().arg("table").arg(dir.path()).output().unwrap();
    assert!(table.status.success());
    let text = String::from_utf8(table.stdout).unwrap();
    assert!(text.lines().any(|l| l.contains("P-CETC")), "{text}");
}

#[test]
fn bad_input_exits_with_failure() {
    let out = bin().args(["run", "definitely-not-a-preset.toml"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let out = bin()
        .args(["run", "ci-coarse", "--controller", "Q-CETC"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

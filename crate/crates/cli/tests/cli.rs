use std::process::Command;

fn optionkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optionkit"))
}

#[test]
fn run_writes_seed_and_aggregate_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = optionkit()
        .args(["run", "--algo", "a2c", "--env", "chain", "--steps", "1000", "--seed", "2", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("a2c_chain_o4_seed2.csv").exists());
    assert!(dir.path().join("a2c_chain_o4_aggregate.csv").exists());
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "algorithm = \"oc\"\nenv = \"four_rooms\"\ntotal_steps = 500\nseeds = [0, 1]\nn_options = 2\ntrace = true\n")
        .unwrap();
    let out = optionkit()
        .args(["trace", "--n-options", "3", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("option 2"), "{stdout}");
    for seed in 0..2 {
        assert!(dir.path().join(format!("oc_four_rooms_o3_seed{seed}_trace.csv")).exists());
    }
}

#[test]
fn quick_verify_passes_and_writes_residuals() {
    let dir = tempfile::tempdir().unwrap();
    let out = optionkit().args(["verify", "--quick", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("critic_identity_residual") && !table.contains("FAIL"), "{table}");
    assert!(dir.path().join("residuals.csv").exists());
}

#[test]
fn bad_input_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = optionkit().args(["ablate", "--steps", "100", "--out"]).arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("transfer_env"));
    let out = optionkit().args(["run", "--algo", "sarsa"]).output().unwrap();
    assert!(!out.status.success());
}

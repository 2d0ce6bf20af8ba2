use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_safe-explore"));
    c.env_remove("SAFE_EXPLORE_OUTPUT_DIR");
    c
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_run(dir: &Path, seed: u64) -> Output {
    bin()
        .args(["run", "--runs", "1", "--episodes", "1", "--steps", "100", "--seed"])
        .arg(seed.to_string())
        .arg("--output")
        .arg(dir)
        .output()
        .unwrap()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
    assert_eq!(code(&bin().output().unwrap()), 1);
    assert_eq!(code(&bin().args(["verify", "lemma9"]).output().unwrap()), 1);
    assert_eq!(code(&bin().args(["run", "--env", "cartpole"]).output().unwrap()), 1);
}

#[test]
fn print_config_applies_overrides_and_round_trips() {
    let o = bin().args(["print-config", "--env", "manipulator", "--seed", "7", "--eta", "0.9"]).output().unwrap();
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("environment = \"manipulator\""));
    assert!(text.contains("seed = 7"));

    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.toml");
    fs::write(&path, &text).unwrap();
    let again = bin().arg("print-config").arg("--config").arg(&path).output().unwrap();
    assert_eq!(stdout(&again), text);

    // flags override the file
    let o = bin().arg("print-config").arg("--config").arg(&path).args(["--seed", "9"]).output().unwrap();
    assert!(stdout(&o).contains("seed = 9"));
}

#[test]
fn output_dir_from_environment_variable() {
    let o = bin().arg("print-config").env("SAFE_EXPLORE_OUTPUT_DIR", "/tmp/somewhere").output().unwrap();
    assert!(stdout(&o).contains("output_dir = \"/tmp/somewhere\""));
    let o = bin()
        .args(["print-config", "--output", "/tmp/flag"])
        .env("SAFE_EXPLORE_OUTPUT_DIR", "/tmp/somewhere")
        .output()
        .unwrap();
    assert!(stdout(&o).contains("output_dir = \"/tmp/flag\""));
}

#[test]
fn invalid_config_lists_every_problem() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "runs = 0\nepisodes = 0\n[safety]\neta = 1.5\n").unwrap();
    let o = bin().arg("run").arg("--config").arg(&path).output().unwrap();
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("runs") && err.contains("episodes") && err.contains("eta"), "{err}");

    fs::write(&path, "no_such_key = 1\n").unwrap();
    assert_eq!(code(&bin().arg("run").arg("--config").arg(&path).output().unwrap()), 2);
}

#[test]
fn run_writes_identical_artifacts_for_the_same_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&small_run(&a, 3)), 0);
    assert_eq!(code(&small_run(&b, 3)), 0);
    for f in ["steps.csv", "episodes.csv", "aggregate.csv", "config.toml"] {
        let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
        assert!(!x.is_empty());
        if f != "config.toml" {
            assert_eq!(x, y, "{f} differs");
        }
    }
    let steps = fs::read_to_string(a.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 101);
    assert!(steps.starts_with("run,episode,step,x0,x1,u0,case,safe,next_safe,cost"));
}

#[test]
fn plot_renders_svgs_with_eta_line() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    assert_eq!(code(&small_run(&run_dir, 1)), 0);
    let o = bin().arg("plot").arg(&run_dir).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let freq = fs::read_to_string(run_dir.join("frequency.svg")).unwrap();
    assert!(freq.contains(r#"data-value="0.95""#));
    assert!(fs::read_to_string(run_dir.join("cost.svg")).unwrap().contains("<polyline"));

    // regenerable from the CSVs alone
    let copy = tmp.path().join("copy");
    fs::create_dir_all(&copy).unwrap();
    for f in ["episodes.csv", "aggregate.csv"] {
        fs::copy(run_dir.join(f), copy.join(f)).unwrap();
    }
    assert_eq!(code(&bin().arg("plot").arg(&copy).output().unwrap()), 0);
    assert_eq!(fs::read_to_string(copy.join("frequency.svg")).unwrap(), freq);
}

#[test]
fn plot_rejects_empty_csv() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("episodes.csv"), "run,episode,cumulative_cost\n").unwrap();
    fs::write(tmp.path().join("aggregate.csv"), "step,trials,safe,frequency,wilson_lower,wilson_upper,eta\n").unwrap();
    let o = bin().arg("plot").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no data rows"));
}

#[test]
fn verify_lemma2_passes_and_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["verify", "lemma2", "--specs", "50", "--samples", "20000", "--output"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let csv = fs::read_to_string(tmp.path().join("verify-lemma2.csv")).unwrap();
    assert!(csv.starts_with("suite,check,pass,detail"));
    // seeded: a second run gives the same report
    let again = bin().args(["verify", "lemma2", "--specs", "50", "--samples", "20000"]).output().unwrap();
    assert_eq!(stdout(&again).lines().next(), stdout(&o).lines().next());
}

#[test]
fn verify_failure_exits_with_four() {
    // the baseline ignores a drift three times the one it was tuned for
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("drift.toml");
    fs::write(&path, "method = \"baseline\"\n[pendulum]\nmu_w = [0.0, 1.5]\n").unwrap();
    let o = bin()
        .args(["verify", "theorem2", "--runs", "1", "--episodes", "5", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(code(&o), 4, "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("[FAIL]"));
}

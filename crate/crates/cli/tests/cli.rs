use std::path::Path;
use std::process::{Command, Output};

fn fpacoh(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpacoh"))
        .args(args)
        .env("FPACOH_OUT", out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_envs_shows_every_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpacoh(&["list-envs"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["mixture_1d", "random_branin", "glmnet", "xgboost"] {
        assert!(text.contains(name), "{text}");
    }
}

#[test]
fn dry_run_layers_flags_over_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpacoh(
        &[
            "run", "--dry-run", "--preset", "desk", "--kind", "offline_bo", "--env", "random_branin",
            "--learner", "fpacoh", "--seeds", "4..6", "--set", "meta.kl_weight=0.25",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("seeds = [4, 5]"), "{text}");
    assert!(text.contains("kl_weight = 0.25"), "{text}");
}

#[test]
fn run_then_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpacoh(
        &[
            "run", "--kind", "offline_bo", "--env", "mixture_1d", "--learner", "vanilla", "--n", "4", "--t", "5",
            "--seeds", "0,1",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cell = dir.path().join("offline_bo/mixture_1d/vanilla");
    assert!(cell.join("seed1/trace.csv").exists());
    let o = fpacoh(&["aggregate", cell.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert!(cell.join("summary.csv").exists() && cell.join("series.csv").exists());
    assert!(stdout(&o).contains("final_simple_regret"));
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = fpacoh(
        &["run", "--kind", "offline_bo", "--env", "mixture_1d", "--learner", "magic"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("learner"));
    let o = fpacoh(
        &["run", "--kind", "lifelong_bo", "--env", "mixture_1d", "--learner", "random_search"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

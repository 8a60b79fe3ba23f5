use std::fs;

use fpacoh::bo::{lifelong_bo, AcqOptimizer};
use fpacoh::env::{by_name, write_synthetic_fixture};
use fpacoh::learner::Learner;
use fpacoh::rng::{stream, Stream};
use fpacoh::runner::{aggregate, run_experiment, seed_dir, ExperimentConfig};
use fpacoh::{Error, TaskDataset};

fn config(text: &str, out: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!("{text}\nout_dir = {:?}\n", out.display().to_string())).unwrap()
}

#[test]
fn offline_vanilla_writes_one_trace_of_t_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"kind = "offline_bo"
env = "mixture_1d"
learner = "vanilla"
n = 4
t = 5"#,
        dir.path(),
    );
    let manifest = run_experiment(&cfg).unwrap();
    assert!(manifest.all_succeeded());
    let sd = seed_dir(&cfg, 0);
    let trace = fs::read_to_string(sd.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert!(lines.next().unwrap().starts_with("run,t,x0,y,simple_regret"));
    assert_eq!(lines.count(), 5);
    for f in ["metrics.json", "manifest.json"] {
        assert!(sd.join(f).exists(), "{f}");
    }
    assert!(sd.parent().unwrap().join("manifest.json").exists());
}

#[test]
fn unknown_learner_is_a_config_error() {
    let err = ExperimentConfig::from_toml_str(
        r#"kind = "offline_bo"
env = "mixture_1d"
learner = "magic""#,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config { ref field, .. } if field == "learner"), "{err}");
}

#[test]
fn unknown_field_names_its_path() {
    let err = ExperimentConfig::from_toml_str(
        r#"kind = "offline_bo"
env = "mixture_1d"
learner = "fpacoh"
[meta]
learning_rate = 0.1"#,
    )
    .unwrap_err();
    assert!(err.to_string().contains("meta"), "{err}");
}

#[test]
fn vanilla_lifelong_ignores_the_bank() {
    let env = by_name("random_branin", None).unwrap();
    let acq = AcqOptimizer::default();
    let run = |bank: Vec<TaskDataset>| {
        lifelong_bo(
            env.as_ref(),
            &Learner::Vanilla,
            3,
            6,
            &acq,
            bank,
            1,
            &mut stream(9, Stream::TestTasks),
            &mut stream(9, Stream::Bo),
        )
        .unwrap()
    };
    let empty = run(Vec::new());
    let mut rng = stream(2, Stream::DataCollection);
    let task = env.meta_train_task(0, &mut rng).unwrap();
    let x = task.domain().sample_uniform(&mut rng, 5);
    let y = x.row_iter().map(|r| task.evaluate(r).unwrap()).collect();
    let filled = run(vec![TaskDataset::new(x, y).unwrap()]);
    assert_eq!(empty.final_simple_regret, filled.final_simple_regret);
    assert_eq!(empty.cumulative_inference_regret, filled.cumulative_inference_regret);
}

#[test]
fn reruns_are_byte_identical_and_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"kind = "offline_bo"
env = "random_branin"
learner = "random_search"
seeds = [0, 1]
n = 3
t = 8
test_tasks = 2"#;
    let a = config(text, &dir.path().join("a"));
    let b = config(text, &dir.path().join("b"));
    run_experiment(&a).unwrap();
    run_experiment(&b).unwrap();
    for s in [0, 1] {
        let ta = fs::read(seed_dir(&a, s).join("trace.csv")).unwrap();
        let tb = fs::read(seed_dir(&b, s).join("trace.csv")).unwrap();
        assert_eq!(ta, tb);
    }
    let agg = aggregate(&[dir.path().join("a")]).unwrap();
    let row = agg
        .summary
        .iter()
        .find(|r| r.metric == "final_simple_regret")
        .expect("summary row");
    assert_eq!(row.stat.n, 2);
    assert!(agg.series.iter().any(|r| r.metric == "simple_regret" && r.t == 8));
}

#[test]
fn hpo_fixture_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let hpo = dir.path().join("hpo");
    write_synthetic_fixture(&hpo, 6, 40, 3).unwrap();
    for alg in ["glmnet", "rpart", "xgboost"] {
        let env = by_name(alg, Some(&hpo)).unwrap();
        assert_eq!(env.domain().dim(), fpacoh::env::HpoAlgorithm::from_name(alg).unwrap().dim());
    }
    let cfg = config(
        &format!(
            r#"kind = "offline_bo"
env = "glmnet"
learner = "vanilla"
n = 3
t = 6
hpo_dir = {:?}"#,
            hpo.display().to_string()
        ),
        &dir.path().join("out"),
    );
    let m = run_experiment(&cfg).unwrap();
    assert!(m.all_succeeded(), "{:?}", m.seeds[0].error);
    let trace = fs::read_to_string(seed_dir(&cfg, 0).join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 7);
}

#[test]
fn missing_hpo_dir_is_reported() {
    assert!(matches!(by_name("xgboost", None), Err(Error::Config { .. })));
}
